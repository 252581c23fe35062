#include "aligner.hpp"

#include <cmath>
#include <sstream>

namespace xmbt {

WindowAssignment partition_windows(int64_t n_in, int64_t n_out) {
    if (n_in < 1) throw std::invalid_argument("partition_windows: n_in must be positive");
    if (n_out < 1) throw std::invalid_argument("partition_windows: n_out must be positive");
    WindowAssignment wa;
    wa.n_in = n_in;
    wa.n_out = n_out;
    int64_t longer = std::max(n_in, n_out), shorter = std::min(n_in, n_out);
    wa.window_size = (longer + shorter - 1) / shorter;
    wa.labels.assign(static_cast<size_t>(n_in * n_out), WindowLabel::Other);

    if (n_in >= n_out) {
        // windows of size w tile the input; trailing outputs share the last
        // window so every row has a non-empty current window
        int64_t w = wa.window_size;
        int64_t n_windows = (n_in + w - 1) / w;
        for (int64_t i = 0; i < n_out; ++i) {
            int64_t b = std::min(i, n_windows - 1);
            auto mark = [&](int64_t win, WindowLabel l) {
                if (win < 0 || win >= n_windows) return;
                int64_t lo = win * w, hi = std::min((win + 1) * w, n_in);
                for (int64_t j = lo; j < hi; ++j) {
                    WindowLabel& slot = wa.labels[static_cast<size_t>(i * n_in + j)];
                    if (l == WindowLabel::Current || slot == WindowLabel::Other) slot = l;
                }
            };
            mark(b - 1, WindowLabel::Adjacent);
            mark(b + 1, WindowLabel::Adjacent);
            mark(b, WindowLabel::Current);
        }
    } else {
        // upsampling: each output owns a single input position, neighbours
        // are adjacent
        for (int64_t i = 0; i < n_out; ++i) {
            int64_t c = (i * n_in) / n_out;
            for (int64_t dj = -1; dj <= 1; ++dj) {
                int64_t j = c + dj;
                if (j < 0 || j >= n_in) continue;
                wa.labels[static_cast<size_t>(i * n_in + j)] = dj == 0 ? WindowLabel::Current : WindowLabel::Adjacent;
            }
        }
    }
    return wa;
}

double gaussian_density(double x, double mu, double sigma) {
    double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

Tensor beta_scores(const WindowAssignment& wa, double mu, double sigma) {
    if (sigma <= 0) throw std::invalid_argument("beta_scores: sigma must be positive");
    double bc = gaussian_density(mu, mu, sigma);
    double ba = gaussian_density(mu + sigma, mu, sigma);
    double bo = gaussian_density(mu + 2 * sigma, mu, sigma);
    Tensor beta({wa.n_out, wa.n_in});
    for (int64_t i = 0; i < wa.n_out; ++i)
        for (int64_t j = 0; j < wa.n_in; ++j) {
            switch (wa.label(i, j)) {
                case WindowLabel::Current: beta.at2(i, j) = bc; break;
                case WindowLabel::Adjacent: beta.at2(i, j) = ba; break;
                case WindowLabel::Other: beta.at2(i, j) = bo; break;
            }
        }
    return beta;
}

AlignmentMatrix soft_alignment(int64_t n_in, int64_t n_out, double mu, double sigma) {
    AlignmentMatrix am;
    am.assignment = partition_windows(n_in, n_out);
    am.beta = beta_scores(am.assignment, mu, sigma);
    am.weights = Tensor({n_out, n_in});
    for (int64_t i = 0; i < n_out; ++i) {
        double mx = -1e300;
        for (int64_t j = 0; j < n_in; ++j) mx = std::max(mx, am.beta.at2(i, j));
        double z = 0;
        for (int64_t j = 0; j < n_in; ++j) {
            double e = std::exp(am.beta.at2(i, j) - mx);
            am.weights.at2(i, j) = e;
            z += e;
        }
        for (int64_t j = 0; j < n_in; ++j) am.weights.at2(i, j) /= z;
    }
    return am;
}

AlignmentMatrix hard_alignment(int64_t n_in, int64_t n_out) {
    AlignmentMatrix am;
    am.assignment = partition_windows(n_in, n_out);
    am.weights = Tensor({n_out, n_in});
    for (int64_t i = 0; i < n_out; ++i) {
        int64_t count = 0;
        for (int64_t j = 0; j < n_in; ++j)
            if (am.assignment.label(i, j) == WindowLabel::Current) ++count;
        for (int64_t j = 0; j < n_in; ++j)
            am.weights.at2(i, j) =
                am.assignment.label(i, j) == WindowLabel::Current ? 1.0 / static_cast<double>(count) : 0.0;
    }
    return am;
}

std::string alignment_to_csv(const AlignmentMatrix& am) {
    std::ostringstream os;
    os.precision(12);
    for (int64_t i = 0; i < am.weights.rows(); ++i) {
        for (int64_t j = 0; j < am.weights.cols(); ++j) {
            if (j) os << ",";
            os << am.weights.at2(i, j);
        }
        os << "\n";
    }
    return os.str();
}

SlidingWindowAligner::SlidingWindowAligner(const ModelConfig& cfg, ParamGroup& mapper, Rng& rng) : cfg_(&cfg) {
    dim_t2v_ = LinearLayer::create(mapper, "dim_t2v", cfg.d_text, cfg.d_video, rng);
    dim_v2t_ = LinearLayer::create(mapper, "dim_v2t", cfg.d_code, cfg.d_text, rng);
    Scalar sd_t2v = 1.0 / std::sqrt(static_cast<Scalar>(cfg.pooling_max_text));
    Scalar sd_v2t = 1.0 / std::sqrt(static_cast<Scalar>(cfg.pooling_max_video));
    pool_t2v_ = mapper.add("pool_t2v", randn({cfg.pooling_max_video, cfg.pooling_max_text}, rng, sd_t2v));
    pool_v2t_ = mapper.add("pool_v2t", randn({cfg.pooling_max_text, cfg.pooling_max_video}, rng, sd_v2t));
}

AlignmentMatrix SlidingWindowAligner::alignment_for(int64_t n_in, int64_t n_out, AlignerMode mode) const {
    if (mode == AlignerMode::Hard) return hard_alignment(n_in, n_out);
    return soft_alignment(n_in, n_out, cfg_->gaussian_mu, cfg_->gaussian_sigma);
}

Var SlidingWindowAligner::length_map(const Var& src, int64_t n_out, AlignerMode mode, bool to_video) const {
    if (src->val.ndim() != 2 || src->val.rows() < 1)
        throw std::invalid_argument("length_map: source must be a non-empty n x d matrix");
    if (n_out < 1) throw std::invalid_argument("length_map: n_out must be positive");
    int64_t n_in = src->val.rows();
    if (mode == AlignerMode::Pooling) {
        const Var& pool = to_video ? pool_t2v_ : pool_v2t_;
        int64_t max_in = pool->val.cols(), max_out = pool->val.rows();
        if (n_in > max_in)
            throw std::invalid_argument("length_map: pooling input length " + std::to_string(n_in) +
                                        " exceeds configured maximum " + std::to_string(max_in));
        if (n_out > max_out)
            throw std::invalid_argument("length_map: pooling output length " + std::to_string(n_out) +
                                        " exceeds configured maximum " + std::to_string(max_out));
        Var padded = src;
        if (n_in < max_in)
            padded = concat_rows({src, constant(Tensor::zeros({max_in - n_in, src->val.cols()}))});
        return matmul(slice_rows(pool, 0, n_out), padded);
    }
    AlignmentMatrix am = alignment_for(n_in, n_out, mode);
    return matmul(constant(am.weights), src);
}

Var SlidingWindowAligner::map_text_to_video(const Var& text_enc, int64_t n_out, AlignerMode mode) const {
    if (text_enc->val.cols() != cfg_->d_text)
        throw std::invalid_argument("map_text_to_video: expected width d_text=" + std::to_string(cfg_->d_text));
    return length_map(dim_t2v_.apply(text_enc), n_out, mode, /*to_video=*/true);
}

Var SlidingWindowAligner::map_text_to_video(const Var& text_enc, int64_t n_out) const {
    return map_text_to_video(text_enc, n_out, cfg_->aligner_mode);
}

Var SlidingWindowAligner::map_video_to_text(const Var& video_emb, int64_t n_out, AlignerMode mode) const {
    if (video_emb->val.cols() != cfg_->d_code)
        throw std::invalid_argument("map_video_to_text: expected width d_code=" + std::to_string(cfg_->d_code));
    return length_map(dim_v2t_.apply(video_emb), n_out, mode, /*to_video=*/false);
}

Var SlidingWindowAligner::map_video_to_text(const Var& video_emb, int64_t n_out) const {
    return map_video_to_text(video_emb, n_out, cfg_->aligner_mode);
}

}  // namespace xmbt

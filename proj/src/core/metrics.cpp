#include "metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>

namespace xmbt {

namespace {

using NGram = std::vector<int>;

void count_ngrams(const std::vector<int>& toks, int n, std::map<NGram, int64_t>& out) {
    if (static_cast<int>(toks.size()) < n) return;
    for (size_t i = 0; i + n <= toks.size(); ++i)
        ++out[NGram(toks.begin() + i, toks.begin() + i + n)];
}

struct NgramTallies {
    std::array<int64_t, 4> matched{};
    std::array<int64_t, 4> total{};
    int64_t hyp_len = 0, ref_len = 0;
};

NgramTallies tally(const std::vector<TextSequence>& hyp, const std::vector<TextSequence>& ref) {
    if (hyp.size() != ref.size()) throw std::invalid_argument("bleu: hypothesis/reference count mismatch");
    if (hyp.empty()) throw std::invalid_argument("bleu: empty corpus");
    NgramTallies t;
    for (size_t s = 0; s < hyp.size(); ++s) {
        t.hyp_len += static_cast<int64_t>(hyp[s].tokens.size());
        t.ref_len += static_cast<int64_t>(ref[s].tokens.size());
        for (int n = 1; n <= 4; ++n) {
            std::map<NGram, int64_t> hc, rc;
            count_ngrams(hyp[s].tokens, n, hc);
            count_ngrams(ref[s].tokens, n, rc);
            for (const auto& [g, c] : hc) {
                t.total[static_cast<size_t>(n - 1)] += c;
                auto it = rc.find(g);
                if (it != rc.end()) t.matched[static_cast<size_t>(n - 1)] += std::min(c, it->second);
            }
        }
    }
    return t;
}

BleuReport report_from(const NgramTallies& t) {
    BleuReport r;
    r.hyp_len = t.hyp_len;
    r.ref_len = t.ref_len;
    if (t.hyp_len == 0) {
        r.brevity_penalty = 0.0;
        return r;  // empty hypotheses score zero, not an error
    }
    r.brevity_penalty = t.hyp_len >= t.ref_len
                            ? 1.0
                            : std::exp(1.0 - static_cast<double>(t.ref_len) / static_cast<double>(t.hyp_len));
    r.precisions[0] = t.total[0] > 0 ? static_cast<double>(t.matched[0]) / static_cast<double>(t.total[0]) : 0.0;
    for (size_t n = 1; n < 4; ++n)
        r.precisions[n] = static_cast<double>(t.matched[n] + 1) / static_cast<double>(t.total[n] + 1);
    r.bleu1 = 100.0 * r.brevity_penalty * r.precisions[0];
    double log_sum = 0;
    bool zero = false;
    for (size_t n = 0; n < 4; ++n) {
        if (r.precisions[n] <= 0) zero = true;
        else log_sum += std::log(r.precisions[n]);
    }
    r.bleu4 = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
    return r;
}

}  // namespace

BleuReport bleu(const std::vector<TextSequence>& hypotheses, const std::vector<TextSequence>& references) {
    return report_from(tally(hypotheses, references));
}

double sentence_bleu1(const std::vector<int>& hypothesis, const std::vector<int>& reference) {
    return bleu({TextSequence{hypothesis}}, {TextSequence{reference}}).bleu1;
}

BleuReport back_translation_bleu(const std::vector<TextSequence>& texts, const RoundTripFn& roundtrip) {
    if (texts.empty()) throw std::invalid_argument("back_translation_bleu: empty text list");
    std::vector<TextSequence> hyps;
    hyps.reserve(texts.size());
    for (const auto& t : texts) hyps.push_back(TextSequence{roundtrip(t.tokens)});
    return bleu(hyps, texts);
}

FvdProxyReport frechet_feature_distance(const Tensor& real_features, const Tensor& generated_features) {
    if (real_features.ndim() != 2 || generated_features.ndim() != 2 ||
        real_features.cols() != generated_features.cols())
        throw std::invalid_argument("frechet: feature matrices must share their width");
    int64_t d = real_features.cols();
    int64_t nr = real_features.rows(), ng = generated_features.rows();
    if (nr < d + 1 || ng < d + 1)
        throw std::invalid_argument("frechet: need at least feature_dim+1 samples per side, got " +
                                    std::to_string(nr) + " and " + std::to_string(ng) + " for dim " +
                                    std::to_string(d));

    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    auto stats = [d](const Tensor& f, Vec& mu, Mat& cov) {
        int64_t n = f.rows();
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(f.data(), n, d);
        mu = X.colwise().mean();
        Mat centered = X.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(n - 1);
    };
    Vec mu_r, mu_g;
    Mat cov_r, cov_g;
    stats(real_features, mu_r, cov_r);
    stats(generated_features, mu_g, cov_g);

    double mean_term = (mu_r - mu_g).squaredNorm();

    Eigen::SelfAdjointEigenSolver<Mat> eg(cov_g);
    Vec ev = eg.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Mat sqrt_g = eg.eigenvectors() * ev.asDiagonal() * eg.eigenvectors().transpose();
    Mat inner = sqrt_g * cov_r * sqrt_g;
    Eigen::SelfAdjointEigenSolver<Mat> ei(0.5 * (inner + inner.transpose()));
    double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double dist = mean_term + cov_r.trace() + cov_g.trace() - 2.0 * tr_sqrt;
    FvdProxyReport r;
    r.distance = std::max(dist, 0.0);
    r.feature_dim = d;
    r.n_real = nr;
    r.n_generated = ng;
    return r;
}

FvdProxyReport frechet_feature_distance(const std::vector<VideoClip>& real, const std::vector<VideoClip>& generated,
                                        const VideoTokenizer& tokenizer) {
    auto build = [&](const std::vector<VideoClip>& clips) {
        if (clips.empty()) throw std::invalid_argument("frechet: empty clip set");
        Tensor first = tokenizer.pooled_feature(clips[0]);
        Tensor out({static_cast<int64_t>(clips.size()), first.numel()});
        for (size_t i = 0; i < clips.size(); ++i) {
            Tensor f = i == 0 ? first : tokenizer.pooled_feature(clips[i]);
            std::copy(f.data(), f.data() + f.numel(), out.data() + static_cast<int64_t>(i) * f.numel());
        }
        return out;
    };
    return frechet_feature_distance(build(real), build(generated));
}

}  // namespace xmbt

#include "video_model.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace xmbt {

namespace {

using RM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RM>;
using CMapRM = Eigen::Map<const RM>;
using VecRM = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

// {T,H,W,C} -> {C,T,H,W}, optionally recentering pixel values
Tensor to_channel_first(const Tensor& frames, Scalar shift = 0.0) {
    int64_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
    Tensor out({c, t, h, w});
    for (int64_t ti = 0; ti < t; ++ti)
        for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t wi = 0; wi < w; ++wi)
                for (int64_t ci = 0; ci < c; ++ci)
                    out.at(((ci * t + ti) * h + hi) * w + wi) = frames.at(((ti * h + hi) * w + wi) * c + ci) + shift;
    return out;
}

Conv3dSpec spec3(int64_t st, int64_t ss) {
    Conv3dSpec s;
    s.stride[0] = st;
    s.stride[1] = ss;
    s.stride[2] = ss;
    s.pad[0] = 1;
    s.pad[1] = 1;
    s.pad[2] = 1;
    return s;
}

// kernel that divides exactly under pad=1: extent stride+2
int64_t kernel_for(int64_t stride) { return stride + 2; }

}  // namespace

VideoTokenizer::VideoTokenizer(const ModelConfig& cfg, ParamGroup& enc, ParamGroup& dec, Rng& rng) : cfg_(&cfg) {
    s1_ = cfg.downsample_s > 1 ? 2 : 1;
    s2_ = cfg.downsample_s / s1_;
    if (s1_ * s2_ != cfg.downsample_s)
        throw UsageError("downsample_s: must be 1 or even, got " + std::to_string(cfg.downsample_s));

    auto conv_w = [&](int64_t cout, int64_t cin, int64_t kt, int64_t kh, int64_t kw, Scalar gain) {
        Scalar fan = static_cast<Scalar>(cin * kt * kh * kw);
        return randn({cout, cin, kt, kh, kw}, rng, std::sqrt(gain / fan));
    };
    auto convt_w = [&](int64_t cin, int64_t cout, int64_t kt, int64_t kh, int64_t kw, Scalar gain) {
        Scalar fan = static_cast<Scalar>(cin * kt * kh * kw);
        return randn({cin, cout, kt, kh, kw}, rng, std::sqrt(gain / fan));
    };

    int64_t k1 = kernel_for(s1_), k2 = kernel_for(s2_), kt2 = kernel_for(cfg.downsample_t);
    e1w_ = enc.add("conv1.w", conv_w(cfg.conv_c1, cfg.clip_c, 3, k1, k1, 2.0));
    e1b_ = enc.add("conv1.b", Tensor::zeros({cfg.conv_c1}));
    e2w_ = enc.add("conv2.w", conv_w(cfg.conv_c2, cfg.conv_c1, kt2, k2, k2, 2.0));
    e2b_ = enc.add("conv2.b", Tensor::zeros({cfg.conv_c2}));
    e3w_ = enc.add("proj.w", conv_w(cfg.d_code, cfg.conv_c2, 1, 1, 1, 1.0));
    e3b_ = enc.add("proj.b", Tensor::zeros({cfg.d_code}));
    codebook_ = enc.add("codebook", randn({cfg.codebook_size, cfg.d_code}, rng, 1.0 / std::sqrt(static_cast<Scalar>(cfg.d_code))));

    d1w_ = dec.add("proj.w", convt_w(cfg.d_code, cfg.conv_c2, 1, 1, 1, 2.0));
    d1b_ = dec.add("proj.b", Tensor::zeros({cfg.conv_c2}));
    d2w_ = dec.add("deconv2.w", convt_w(cfg.conv_c2, cfg.conv_c1, kt2, k2, k2, 2.0));
    d2b_ = dec.add("deconv2.b", Tensor::zeros({cfg.conv_c1}));
    d3w_ = dec.add("deconv1.w", convt_w(cfg.conv_c1, cfg.clip_c, 3, k1, k1, 1.0));
    d3b_ = dec.add("deconv1.b", Tensor::zeros({cfg.clip_c}));

    usage_.assign(static_cast<size_t>(cfg.codebook_size), 0);
}

void VideoTokenizer::check_divisible(const VideoClip& clip) const {
    if (clip.t() % cfg_->downsample_t != 0)
        throw std::invalid_argument("encode_video: temporal extent " + std::to_string(clip.t()) +
                                    " not divisible by downsample_t=" + std::to_string(cfg_->downsample_t));
    if (clip.h() % cfg_->downsample_s != 0)
        throw std::invalid_argument("encode_video: height " + std::to_string(clip.h()) +
                                    " not divisible by downsample_s=" + std::to_string(cfg_->downsample_s));
    if (clip.w() % cfg_->downsample_s != 0)
        throw std::invalid_argument("encode_video: width " + std::to_string(clip.w()) +
                                    " not divisible by downsample_s=" + std::to_string(cfg_->downsample_s));
    if (clip.c() != cfg_->clip_c)
        throw std::invalid_argument("encode_video: channel count " + std::to_string(clip.c()) +
                                    " does not match clip_c=" + std::to_string(cfg_->clip_c));
}

Var VideoTokenizer::encode_var(const Tensor& frames) const {
    Var x = constant(to_channel_first(frames, -0.5));
    x = relu(conv3d(x, e1w_, e1b_, spec3(1, s1_)));
    x = relu(conv3d(x, e2w_, e2b_, spec3(cfg_->downsample_t, s2_)));
    Conv3dSpec unit;
    x = conv3d(x, e3w_, e3b_, unit);  // {d_code, t', h', w'}
    int64_t l = x->val.dim(1) * x->val.dim(2) * x->val.dim(3);
    return transpose2d(reshape(x, {cfg_->d_code, l}));  // L x d_code
}

LatentGrid VideoTokenizer::encode(const VideoClip& clip) const {
    check_divisible(clip);
    LatentGrid g;
    g.grid_t = clip.t() / cfg_->downsample_t;
    g.grid_h = clip.h() / cfg_->downsample_s;
    g.grid_w = clip.w() / cfg_->downsample_s;
    g.embeddings = encode_var(clip.frames)->val;
    return g;
}

std::vector<int> VideoTokenizer::nearest_codes(const Tensor& rows) const {
    const Tensor& codes = codebook_->val;
    if (rows.cols() != codes.cols())
        throw std::invalid_argument("quantize: embedding width " + std::to_string(rows.cols()) +
                                    " does not match d_code=" + std::to_string(codes.cols()));
    int64_t n = rows.rows(), k = codes.rows(), d = codes.cols();
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int best = 0;
        Scalar bd = 0;
        for (int64_t j = 0; j < k; ++j) {
            Scalar s = 0;
            for (int64_t c = 0; c < d; ++c) {
                Scalar t = rows.at2(i, c) - codes.at2(j, c);
                s += t * t;
            }
            if (j == 0 || s < bd) {  // strict: ties keep the lowest index
                bd = s;
                best = static_cast<int>(j);
            }
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

std::pair<VideoTokenSequence, LatentGrid> VideoTokenizer::quantize(const LatentGrid& grid) const {
    VideoTokenSequence tok;
    tok.grid_t = grid.grid_t;
    tok.grid_h = grid.grid_h;
    tok.grid_w = grid.grid_w;
    tok.indices = nearest_codes(grid.embeddings);
    LatentGrid q = grid;
    int64_t d = cfg_->d_code;
    for (int64_t i = 0; i < grid.embeddings.rows(); ++i) {
        int idx = tok.indices[static_cast<size_t>(i)];
        for (int64_t c = 0; c < d; ++c) q.embeddings.at2(i, c) = codebook_->val.at2(idx, c);
    }
    return {tok, q};
}

double VideoTokenizer::codebook_distance(const Tensor& grid, const Tensor& quantized) {
    if (!grid.same_shape(quantized)) throw std::invalid_argument("codebook_loss: shape mismatch");
    int64_t n = grid.rows(), d = grid.cols();
    double s = 0;
    for (int64_t i = 0; i < n; ++i) {
        double q = 0;
        for (int64_t c = 0; c < d; ++c) {
            double t = grid.at2(i, c) - quantized.at2(i, c);
            q += t * t;
        }
        s += std::sqrt(q);
    }
    return s / static_cast<double>(n);
}

Var VideoTokenizer::decode_var(const Var& latent, int64_t grid_t, int64_t grid_h, int64_t grid_w) const {
    if (latent->val.ndim() != 2 || latent->val.cols() != cfg_->d_code)
        throw std::invalid_argument("decode_video: latent must be L x d_code");
    if (latent->val.rows() != grid_t * grid_h * grid_w)
        throw std::invalid_argument("decode_video: grid shape " + std::to_string(grid_t) + "x" + std::to_string(grid_h) +
                                    "x" + std::to_string(grid_w) + " does not match " + std::to_string(latent->val.rows()) +
                                    " sites");
    Var x = reshape(transpose2d(latent), {cfg_->d_code, grid_t, grid_h, grid_w});
    Conv3dSpec unit;
    x = relu(conv_transpose3d(x, d1w_, d1b_, unit));
    x = relu(conv_transpose3d(x, d2w_, d2b_, spec3(cfg_->downsample_t, s2_)));
    x = conv_transpose3d(x, d3w_, d3b_, spec3(1, s1_));  // {C, T, H, W}
    x = add(x, constant(Tensor::full(x->val.shape(), 0.5)));
    // back to {T,H,W,C}: C is small (usually 1), reshape via transpose
    int64_t c = x->val.dim(0), t = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    return reshape(transpose2d(reshape(x, {c, t * h * w})), {t, h, w, c});
}

VideoClip VideoTokenizer::decode(const LatentGrid& quantized) const {
    VideoClip clip;
    clip.frames = decode_var(constant(quantized.embeddings), quantized.grid_t, quantized.grid_h, quantized.grid_w)->val;
    return clip;
}

double VideoTokenizer::reconstruction_error(const Tensor& recon, const Tensor& original) {
    if (!recon.same_shape(original)) throw std::invalid_argument("video_reconstruction_loss: shape mismatch");
    double s = 0;
    for (int64_t i = 0; i < recon.numel(); ++i) {
        double d = recon.at(i) - original.at(i);
        s += d * d;
    }
    return s / static_cast<double>(recon.numel());
}

Tensor VideoTokenizer::pooled_feature(const VideoClip& clip) const {
    LatentGrid g = encode(clip);
    Tensor f({cfg_->d_code});
    for (int64_t i = 0; i < g.embeddings.rows(); ++i)
        for (int64_t c = 0; c < cfg_->d_code; ++c) f.at(c) += g.embeddings.at2(i, c);
    for (int64_t c = 0; c < cfg_->d_code; ++c) f.at(c) /= static_cast<double>(g.embeddings.rows());
    return f;
}

void VideoTokenizer::reseed_dead_codes(const Tensor& encoder_rows, Rng& rng) {
    int64_t n = encoder_rows.rows();
    if (n == 0) return;
    for (int64_t j = 0; j < cfg_->codebook_size; ++j) {
        if (usage_[static_cast<size_t>(j)] > 0) continue;
        int64_t src = rng.uniform_int(0, n - 1);
        for (int64_t c = 0; c < cfg_->d_code; ++c) codebook_->val.at2(j, c) = encoder_rows.at2(src, c);
    }
}

// ------------------------------------------------------------------- prior

VideoPrior::VideoPrior(const ModelConfig& cfg, ParamGroup& dec, Rng& rng) : cfg_(&cfg) {
    int64_t d = cfg.d_video;
    tok_emb_ = dec.add("prior.tok_emb", randn({cfg.codebook_size, d}, rng, 0.02));
    start_emb_ = dec.add("prior.start", randn({1, d}, rng, 0.02));
    pos_emb_ = dec.add("prior.pos_emb", randn({cfg.max_video_sites() + 1, d}, rng, 0.02));
    for (int64_t l = 0; l < cfg.prior_layers; ++l)
        blocks_.push_back(EncoderBlock::create(dec, "prior.block" + std::to_string(l), d, static_cast<int>(cfg.prior_heads), rng));
    ln_f_ = LayerNormLayer::create(dec, "prior.ln_f", d);
    head_ = LinearLayer::create(dec, "prior.head", d, cfg.codebook_size, rng, 0.02);
}

Var VideoPrior::logits_var(const std::vector<int>& tokens_in, int64_t n_slots, const Tensor* logit_bias) const {
    if (n_slots < 1) throw std::invalid_argument("prior: need at least one slot");
    if (n_slots > pos_emb_->val.rows())
        throw std::invalid_argument("prior: sequence length " + std::to_string(n_slots) + " exceeds position table");
    for (int t : tokens_in)
        if (t < 0 || t >= cfg_->codebook_size)
            throw std::out_of_range("prior: code index " + std::to_string(t) + " out of range");
    std::vector<int> pos(static_cast<size_t>(n_slots));
    for (int64_t i = 0; i < n_slots; ++i) pos[static_cast<size_t>(i)] = static_cast<int>(i);
    Var x;
    if (tokens_in.empty()) {
        x = slice_rows(start_emb_, 0, 1);
    } else {
        x = concat_rows({slice_rows(start_emb_, 0, 1), embedding(tok_emb_, tokens_in)});
    }
    x = add(x, embedding(pos_emb_, pos));
    for (const auto& b : blocks_) x = b.apply(x, /*causal=*/true);
    Var logits = head_.apply(ln_f_.apply(x));
    if (logit_bias) {
        if (logit_bias->rows() < n_slots || logit_bias->cols() != cfg_->codebook_size)
            throw std::invalid_argument("prior: logit bias must be at least n_slots x codebook_size");
        Tensor b({n_slots, cfg_->codebook_size});
        std::copy(logit_bias->data(), logit_bias->data() + n_slots * cfg_->codebook_size, b.data());
        logits = add(logits, constant(std::move(b)));
    }
    return logits;
}

Var VideoPrior::nll(const std::vector<int>& tokens, const Tensor* logit_bias) const {
    if (tokens.empty()) throw std::invalid_argument("prior nll: empty token sequence");
    std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
    Var logits = logits_var(inputs, static_cast<int64_t>(tokens.size()), logit_bias);
    return cross_entropy_rows(logits, tokens, /*ignore_id=*/-1);
}

Tensor VideoPrior::next_distribution(const std::vector<int>& prefix, const Tensor* logit_bias) const {
    Var logits = logits_var(prefix, static_cast<int64_t>(prefix.size()) + 1, logit_bias);
    int64_t last = logits->val.rows() - 1, k = logits->val.cols();
    Tensor p({k});
    Scalar mx = -1e300;
    for (int64_t c = 0; c < k; ++c) mx = std::max(mx, logits->val.at2(last, c));
    Scalar z = 0;
    for (int64_t c = 0; c < k; ++c) {
        p.at(c) = std::exp(logits->val.at2(last, c) - mx);
        z += p.at(c);
    }
    for (int64_t c = 0; c < k; ++c) p.at(c) /= z;
    return p;
}

std::vector<int> VideoPrior::generate_greedy(int64_t length, const Tensor* logit_bias) const {
    if (length < 1) throw std::invalid_argument("prior generate: length must be positive");
    if (logit_bias && (logit_bias->rows() < length || logit_bias->cols() != cfg_->codebook_size))
        throw std::invalid_argument("prior generate: logit bias must be length x codebook_size");
    int64_t d = cfg_->d_video;
    int heads = static_cast<int>(cfg_->prior_heads);
    int64_t dh = d / heads;
    Scalar alpha = 1.0 / std::sqrt(static_cast<Scalar>(dh));
    size_t nl = blocks_.size();
    std::vector<RM> kcache(nl), vcache(nl);
    for (size_t l = 0; l < nl; ++l) {
        kcache[l].resize(length, d);
        vcache[l].resize(length, d);
    }

    auto ln_vec = [&](const VecRM& x, const Var& gain, const Var& bias) {
        Scalar mu = x.mean();
        Scalar var = (x.array() - mu).square().mean();
        Scalar isd = 1.0 / std::sqrt(var + 1e-5);
        VecRM y(d);
        for (int64_t c = 0; c < d; ++c) y(c) = (x(c) - mu) * isd * gain->val.at(c) + bias->val.at(c);
        return y;
    };
    auto linear_vec = [](const VecRM& x, const Var& w, const Var& b) {
        VecRM y = x * CMapRM(w->val.data(), w->val.rows(), w->val.cols());
        for (int64_t c = 0; c < y.cols(); ++c) y(c) += b->val.at(c);
        return y;
    };

    std::vector<int> out;
    out.reserve(static_cast<size_t>(length));
    int prev = -1;
    for (int64_t t = 0; t < length; ++t) {
        VecRM x(d);
        if (t == 0)
            for (int64_t c = 0; c < d; ++c) x(c) = start_emb_->val.at2(0, c);
        else
            for (int64_t c = 0; c < d; ++c) x(c) = tok_emb_->val.at2(prev, c);
        for (int64_t c = 0; c < d; ++c) x(c) += pos_emb_->val.at2(t, c);
        for (size_t l = 0; l < nl; ++l) {
            const EncoderBlock& b = blocks_[l];
            VecRM nx = ln_vec(x, b.ln1.gain, b.ln1.bias);
            VecRM q = linear_vec(nx, b.attn.wq.w, b.attn.wq.b);
            kcache[l].row(t) = linear_vec(nx, b.attn.wk.w, b.attn.wk.b);
            vcache[l].row(t) = linear_vec(nx, b.attn.wv.w, b.attn.wv.b);
            VecRM merged(d);
            for (int h = 0; h < heads; ++h) {
                Eigen::VectorXd scores = alpha * (kcache[l].middleCols(h * dh, dh).topRows(t + 1) *
                                                  q.middleCols(h * dh, dh).transpose());
                Scalar mx = scores.maxCoeff();
                Eigen::VectorXd p = (scores.array() - mx).exp().matrix();
                p /= p.sum();
                merged.middleCols(h * dh, dh) = p.transpose() * vcache[l].middleCols(h * dh, dh).topRows(t + 1);
            }
            x += linear_vec(merged, b.attn.wo.w, b.attn.wo.b);
            VecRM f = ln_vec(x, b.ln2.gain, b.ln2.bias);
            VecRM h1 = linear_vec(f, b.ffn.fc1.w, b.ffn.fc1.b);
            for (int64_t c = 0; c < h1.cols(); ++c)
                if (h1(c) < 0) h1(c) = 0;
            x += linear_vec(h1, b.ffn.fc2.w, b.ffn.fc2.b);
        }
        VecRM fin = ln_vec(x, ln_f_.gain, ln_f_.bias);
        VecRM logits = linear_vec(fin, head_.w, head_.b);
        if (logit_bias)
            for (int64_t c = 0; c < logits.cols(); ++c) logits(c) += logit_bias->at2(t, c);
        int best = 0;
        Scalar bv = logits(0);
        for (int64_t c = 1; c < logits.cols(); ++c)
            if (logits(c) > bv) {
                bv = logits(c);
                best = static_cast<int>(c);
            }
        out.push_back(best);
        prev = best;
    }
    return out;
}

}  // namespace xmbt

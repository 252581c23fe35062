#pragma once

#include "config.hpp"
#include "nn.hpp"

namespace xmbt {

struct VideoClip {
    Tensor frames;  // {T, H, W, C}, values in [0,1] for real footage
    double frame_rate = 25.0;

    int64_t t() const { return frames.dim(0); }
    int64_t h() const { return frames.dim(1); }
    int64_t w() const { return frames.dim(2); }
    int64_t c() const { return frames.dim(3); }
};

struct LatentGrid {
    Tensor embeddings;  // L x d_code, L = grid_t * grid_h * grid_w
    int64_t grid_t = 0, grid_h = 0, grid_w = 0;

    int64_t sites() const { return grid_t * grid_h * grid_w; }
};

struct VideoTokenSequence {
    std::vector<int> indices;
    int64_t grid_t = 0, grid_h = 0, grid_w = 0;
};

// VQ autoencoder: strided 3-d conv encoder, nearest-neighbour codebook
// lookup, transposed-conv decoder.
class VideoTokenizer {
public:
    VideoTokenizer(const ModelConfig& cfg, ParamGroup& encoder_params, ParamGroup& decoder_params, Rng& rng);

    Var encode_var(const Tensor& frames) const;  // L x d_code
    LatentGrid encode(const VideoClip& clip) const;

    // nearest code per row, ties to the lowest index
    std::pair<VideoTokenSequence, LatentGrid> quantize(const LatentGrid& grid) const;
    std::vector<int> nearest_codes(const Tensor& rows) const;

    static double codebook_distance(const Tensor& grid, const Tensor& quantized);  // mean row L2

    Var decode_var(const Var& latent, int64_t grid_t, int64_t grid_h, int64_t grid_w) const;  // {T,H,W,C}
    VideoClip decode(const LatentGrid& quantized) const;

    static double reconstruction_error(const Tensor& recon, const Tensor& original);  // mean squared

    Tensor pooled_feature(const VideoClip& clip) const;  // mean latent, length d_code

    const Var& codebook() const { return codebook_; }
    Var code_rows(const std::vector<int>& indices) const { return embedding(codebook_, indices); }

    // diagnostic usage counts for dead-code reseeding
    void reset_usage() { usage_.assign(static_cast<size_t>(cfg_->codebook_size), 0); }
    void note_usage(const std::vector<int>& indices) {
        for (int i : indices) ++usage_[static_cast<size_t>(i)];
    }
    const std::vector<int64_t>& usage() const { return usage_; }
    void reseed_dead_codes(const Tensor& encoder_rows, Rng& rng);

    void check_divisible(const VideoClip& clip) const;

private:
    const ModelConfig* cfg_;
    // encoder
    Var e1w_, e1b_, e2w_, e2b_, e3w_, e3b_;
    // decoder
    Var d1w_, d1b_, d2w_, d2b_, d3w_, d3b_;
    Var codebook_;  // codebook_size x d_code
    int64_t s1_ = 2, s2_ = 2;  // spatial stride split across the two levels
    std::vector<int64_t> usage_;
};

// Autoregressive prior over code indices. Conditioning enters as an optional
// per-position additive bias over the code logits (rows: slot, cols: code).
class VideoPrior {
public:
    VideoPrior(const ModelConfig& cfg, ParamGroup& decoder_params, Rng& rng);

    // teacher-forced mean NLL of `tokens`; logit_bias (if given) is L x K
    Var nll(const std::vector<int>& tokens, const Tensor* logit_bias) const;

    // distribution over the next code given a prefix (possibly empty)
    Tensor next_distribution(const std::vector<int>& prefix, const Tensor* logit_bias) const;

    // greedy argmax chain of `length` tokens, incremental KV cache
    std::vector<int> generate_greedy(int64_t length, const Tensor* logit_bias) const;

private:
    Var logits_var(const std::vector<int>& tokens_in, int64_t n_slots, const Tensor* logit_bias) const;

    const ModelConfig* cfg_;
    Var tok_emb_, start_emb_, pos_emb_;
    std::vector<EncoderBlock> blocks_;  // applied with causal self-attention
    LayerNormLayer ln_f_;
    LinearLayer head_;
};

}  // namespace xmbt

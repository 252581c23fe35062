#pragma once

#include <cstdint>
#include <string>

#include "errors.hpp"

namespace xmbt {

enum class AlignerMode { Soft, Hard, Pooling };

std::string to_string(AlignerMode m);
AlignerMode aligner_mode_from_string(const std::string& s);

struct LossWeights {
    double text = 1.0;
    double codebook = 1.0;
    double video = 1.0;
    double t2v2t = 1.0;
    double v2t2v = 1.0;
};

// Flat key=value configuration shared by every stage. Unknown keys are
// rejected; every invariant violation names the offending key.
struct ModelConfig {
    // vocabulary / text model
    int64_t vocab_size = 64;
    int64_t d_text = 128;
    int64_t text_layers = 2;
    int64_t text_heads = 4;
    int64_t max_text_len = 32;
    double mask_ratio = 0.5;

    // video model
    int64_t d_video = 96;
    int64_t prior_layers = 2;
    int64_t prior_heads = 4;
    int64_t codebook_size = 128;
    int64_t d_code = 32;
    int64_t downsample_t = 2;
    int64_t downsample_s = 4;
    int64_t conv_c1 = 16;
    int64_t conv_c2 = 32;
    int64_t clip_t = 8;
    int64_t clip_h = 16;
    int64_t clip_w = 16;
    int64_t clip_c = 1;

    // aligner
    double gaussian_mu = 0.0;
    double gaussian_sigma = 1.0;
    AlignerMode aligner_mode = AlignerMode::Soft;
    bool aligner_beta_stochastic = false;  // reserved; only the deterministic rule is implemented
    int64_t pooling_max_text = 32;
    int64_t pooling_max_video = 1024;
    double cond_scale = 1.0;

    // corpus / rendering
    int64_t frames_per_token = 4;
    int64_t transition_frames = 0;
    double noise_amplitude = 0.05;
    int64_t grammar_min_len = 3;
    int64_t grammar_max_len = 10;
    int64_t corpus_texts = 500;
    int64_t corpus_videos = 500;
    int64_t corpus_dev = 48;

    // training
    LossWeights w;
    bool freeze_video_encoder = false;
    bool freeze_video_decoder = false;
    bool freeze_text_encoder = false;
    bool freeze_text_decoder = false;
    double lr = 1e-3;
    double commitment_weight = 0.25;
    int64_t batch_text = 8;
    int64_t batch_video = 2;
    int64_t batch_bt = 4;
    int64_t pretrain_text_steps = 1500;
    int64_t pretrain_video_steps = 900;
    int64_t joint_steps = 1200;
    int64_t eval_interval = 200;
    int64_t eval_texts = 32;

    static ModelConfig defaults() { return ModelConfig{}; }
    void validate() const;  // throws UsageError naming the bad key

    std::string serialize() const;  // canonical key order
    static ModelConfig parse_text(const std::string& text);
    static ModelConfig load(const std::string& path);
    void save(const std::string& path) const;

    // Typed assignment from strings; used for file parsing and CLI overrides.
    void set_key(const std::string& key, const std::string& value);

    uint64_t hash() const;  // FNV-1a over the canonical serialization
    std::string hash_hex() const;

    // derived quantities
    int64_t spatial_sites() const { return (clip_h / downsample_s) * (clip_w / downsample_s); }
    int64_t latent_sites_for_frames(int64_t t_frames) const { return (t_frames / downsample_t) * spatial_sites(); }
    int64_t pseudo_video_frames(int64_t n_tokens) const;        // text length -> generated clip length
    int64_t pseudo_text_len(int64_t t_frames) const;            // clip length -> decoder input length
    int64_t max_video_sites() const { return latent_sites_for_frames(pseudo_video_frames(max_text_len)); }
};

}  // namespace xmbt

#pragma once

#include "aligner.hpp"
#include "corpus.hpp"
#include "metrics.hpp"
#include "text_model.hpp"
#include "video_model.hpp"

namespace xmbt {

struct FreezePlan {
    bool video_encoder = false;
    bool video_decoder = false;
    bool text_encoder = false;
    bool text_decoder = false;

    static FreezePlan from_config(const ModelConfig& cfg) {
        return {cfg.freeze_video_encoder, cfg.freeze_video_decoder, cfg.freeze_text_encoder,
                cfg.freeze_text_decoder};
    }
    bool all_frozen() const { return video_encoder && video_decoder && text_encoder && text_decoder; }
    bool frozen(const std::string& group) const {
        if (group == "video_encoder") return video_encoder;
        if (group == "video_decoder") return video_decoder;
        if (group == "text_encoder") return text_encoder;
        if (group == "text_decoder") return text_decoder;
        return false;  // the cross-modal mapper always trains
    }
};

// The composed model: text denoiser, VQ tokenizer, autoregressive prior and
// the sliding-window aligner, with parameters grouped for freezing and
// checkpointing.
class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    ModelConfig cfg;
    ParamGroup text_encoder{"text_encoder"};
    ParamGroup text_decoder{"text_decoder"};
    ParamGroup video_encoder{"video_encoder"};
    ParamGroup video_decoder{"video_decoder"};
    ParamGroup mapper{"mapper"};

private:
    Rng init_rng_;  // member order matters: consumed by the submodules below

public:
    TextDenoiser text;
    VideoTokenizer vq;
    VideoPrior prior;
    SlidingWindowAligner aligner;
    LinearLayer bridge;  // video-space conditioning -> code space for direct decoding

    std::vector<ParamGroup*> groups() { return {&text_encoder, &text_decoder, &video_encoder, &video_decoder, &mapper}; }

    // ---- generation-direction pipelines (no gradients flow) ----
    VideoTokenSequence generate_video_tokens(const std::vector<int>& text_tokens, AlignerMode mode) const;
    std::vector<int> decode_tokens_to_text(const VideoTokenSequence& tokens, AlignerMode mode) const;
    std::vector<int> translate_clip(const VideoClip& clip, AlignerMode mode) const;
    std::vector<int> roundtrip_text(const std::vector<int>& text_tokens, AlignerMode mode) const;
    VideoClip decode_tokens_to_clip(const VideoTokenSequence& tokens) const;

    // ---- training losses ----
    Var text_reconstruction_term(const std::vector<const TextSequence*>& batch, uint64_t seed) const;
    struct VideoTerms {
        Var codebook;  // nearest-code distance plus weighted commitment
        Var video;     // reconstruction error plus prior next-token NLL
        double recon_mse = 0;
        double codebook_distance = 0;
        std::vector<int> tokens;
        Tensor encoder_rows;
    };
    VideoTerms video_reconstruction_terms(const std::vector<const VideoClip*>& batch) const;
    Var t2v2t_term(const std::vector<const TextSequence*>& batch, AlignerMode mode) const;
    Var v2t2v_term(const std::vector<const VideoClip*>& batch, AlignerMode mode) const;

    struct JointBreakdown {
        Var total;
        double text = 0, codebook = 0, video = 0, t2v2t = 0, v2t2v = 0;
        double weighted_total = 0;
    };
    JointBreakdown joint_loss(const std::vector<const TextSequence*>& text_batch,
                              const std::vector<const VideoClip*>& video_batch, const LossWeights& weights,
                              uint64_t seed) const;
};

struct MetricsRow {
    int64_t step = 0;
    double loss_text = 0, loss_codebook = 0, loss_video = 0, loss_t2v2t = 0, loss_v2t2v = 0;
    double bt_bleu1 = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

class Trainer {
public:
    Trainer(Model& model, const ModelConfig& cfg);

    std::vector<MetricsRow> pretrain_text(const std::vector<TextSequence>& texts, int64_t steps, uint64_t seed);
    std::vector<MetricsRow> pretrain_video(const std::vector<VideoClip>& videos, int64_t steps, uint64_t seed);

    // round-robin over the four tasks; metrics sampled every eval_interval
    std::vector<MetricsRow> train_joint(const Corpus& corpus, const FreezePlan& plan, int64_t steps, uint64_t seed,
                                        const std::vector<TextSequence>* dev_texts);

    double dev_bt_bleu1(const std::vector<TextSequence>& texts) const;

private:
    Model* m_;
    ModelConfig cfg_;
    Adam opt_;
};

}  // namespace xmbt

#pragma once

#include "aligner.hpp"
#include "config.hpp"
#include "nn.hpp"

namespace xmbt {

// Reserved token ids; corpus text never contains them except MASK emitted by
// corruption.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kMaskId = 3;
constexpr int kNumReservedIds = 4;

struct TextSequence {
    std::vector<int> tokens;

    int64_t length() const { return static_cast<int64_t>(tokens.size()); }
    bool operator==(const TextSequence&) const = default;
};

struct CorruptedText {
    std::vector<int> masked_tokens;  // original with [span_begin, span_end) replaced by MASK
    int64_t span_begin = 0;          // strictly interior: 0 < begin < end < n
    int64_t span_end = 0;
    std::vector<int> fragment;       // the original tokens under the mask
};

// Masked sequence-to-sequence text model: encoder over the corrupted input,
// decoder predicting the hidden fragment; the same decoder handles full
// sentence generation against any cross-attention memory.
class TextDenoiser {
public:
    TextDenoiser(const ModelConfig& cfg, ParamGroup& encoder_params, ParamGroup& decoder_params, Rng& rng);

    static CorruptedText corrupt(const TextSequence& text, double mask_ratio, uint64_t seed);

    Var encode(const std::vector<int>& tokens) const;   // n x d_text
    Tensor encode_eval(const std::vector<int>& tokens) const;

    // mean per-token NLL of the masked fragment given the corrupted context
    Var reconstruction_loss(const CorruptedText& corrupted) const;
    double masked_token_accuracy(const CorruptedText& corrupted) const;

    // mean per-token NLL of [t..., EOS] given decoder memory; PAD targets are
    // ignored
    Var sentence_nll(const Var& memory, const std::vector<int>& target_tokens) const;

    std::vector<int> decode_greedy(const Tensor& memory, int64_t max_len) const;

private:
    Var decoder_logits(const Var& memory, const std::vector<int>& input_tokens, int64_t pos_offset) const;
    void check_ids(const std::vector<int>& tokens) const;

    const ModelConfig* cfg_;
    Var enc_tok_emb_, enc_pos_emb_;
    std::vector<EncoderBlock> enc_blocks_;
    LayerNormLayer enc_ln_;
    Var dec_tok_emb_, dec_pos_emb_;
    std::vector<DecoderBlock> dec_blocks_;
    LayerNormLayer dec_ln_;
    LinearLayer head_;
};

}  // namespace xmbt

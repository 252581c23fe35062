#include "text_model.hpp"

#include <cmath>

namespace xmbt {

TextDenoiser::TextDenoiser(const ModelConfig& cfg, ParamGroup& enc, ParamGroup& dec, Rng& rng) : cfg_(&cfg) {
    int64_t d = cfg.d_text;
    int64_t max_pos = cfg.max_text_len + 2;
    enc_tok_emb_ = enc.add("tok_emb", randn({cfg.vocab_size, d}, rng, 0.02));
    enc_pos_emb_ = enc.add("pos_emb", randn({max_pos, d}, rng, 0.02));
    for (int64_t l = 0; l < cfg.text_layers; ++l)
        enc_blocks_.push_back(EncoderBlock::create(enc, "block" + std::to_string(l), d, static_cast<int>(cfg.text_heads), rng));
    enc_ln_ = LayerNormLayer::create(enc, "ln_f", d);

    dec_tok_emb_ = dec.add("tok_emb", randn({cfg.vocab_size, d}, rng, 0.02));
    dec_pos_emb_ = dec.add("pos_emb", randn({max_pos, d}, rng, 0.02));
    for (int64_t l = 0; l < cfg.text_layers; ++l)
        dec_blocks_.push_back(DecoderBlock::create(dec, "block" + std::to_string(l), d, static_cast<int>(cfg.text_heads), rng));
    dec_ln_ = LayerNormLayer::create(dec, "ln_f", d);
    head_ = LinearLayer::create(dec, "head", d, cfg.vocab_size, rng, 0.02);
}

void TextDenoiser::check_ids(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw std::invalid_argument("text: empty token sequence");
    if (static_cast<int64_t>(tokens.size()) > cfg_->max_text_len + 2)
        throw std::invalid_argument("text: length " + std::to_string(tokens.size()) + " exceeds max_text_len");
    for (int t : tokens)
        if (t < 0 || t >= cfg_->vocab_size)
            throw std::invalid_argument("text: token id " + std::to_string(t) + " outside vocabulary of size " +
                                        std::to_string(cfg_->vocab_size));
}

CorruptedText TextDenoiser::corrupt(const TextSequence& text, double mask_ratio, uint64_t seed) {
    int64_t n = text.length();
    if (n < 4) throw std::invalid_argument("corrupt: need at least 4 tokens for an interior span, got " + std::to_string(n));
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw std::invalid_argument("corrupt: mask_ratio must lie in (0,1)");
    int64_t len = static_cast<int64_t>(std::llround(mask_ratio * static_cast<double>(n)));
    len = std::clamp<int64_t>(len, 1, n - 2);
    Rng rng(seed);
    int64_t begin = rng.uniform_int(1, n - 1 - len);
    CorruptedText out;
    out.span_begin = begin;
    out.span_end = begin + len;
    out.masked_tokens = text.tokens;
    for (int64_t i = begin; i < out.span_end; ++i) {
        out.fragment.push_back(text.tokens[static_cast<size_t>(i)]);
        out.masked_tokens[static_cast<size_t>(i)] = kMaskId;
    }
    return out;
}

Var TextDenoiser::encode(const std::vector<int>& tokens) const {
    check_ids(tokens);
    std::vector<int> pos(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) pos[i] = static_cast<int>(i);
    Var x = add(embedding(enc_tok_emb_, tokens), embedding(enc_pos_emb_, pos));
    for (const auto& b : enc_blocks_) x = b.apply(x);
    return enc_ln_.apply(x);
}

Tensor TextDenoiser::encode_eval(const std::vector<int>& tokens) const { return encode(tokens)->val; }

Var TextDenoiser::decoder_logits(const Var& memory, const std::vector<int>& input_tokens, int64_t pos_offset) const {
    check_ids(input_tokens);
    std::vector<int> pos(input_tokens.size());
    int64_t max_pos = dec_pos_emb_->val.rows();
    for (size_t i = 0; i < input_tokens.size(); ++i)
        pos[i] = static_cast<int>(std::min<int64_t>(pos_offset + static_cast<int64_t>(i), max_pos - 1));
    Var x = add(embedding(dec_tok_emb_, input_tokens), embedding(dec_pos_emb_, pos));
    for (const auto& b : dec_blocks_) x = b.apply(x, memory);
    return head_.apply(dec_ln_.apply(x));
}

Var TextDenoiser::reconstruction_loss(const CorruptedText& corrupted) const {
    if (corrupted.fragment.empty() || corrupted.span_begin <= 0 ||
        corrupted.span_end <= corrupted.span_begin ||
        corrupted.span_end >= static_cast<int64_t>(corrupted.masked_tokens.size()))
        throw std::invalid_argument("reconstruction_loss: invalid corruption span");
    Var memory = encode(corrupted.masked_tokens);
    // decoder input: MASK then the fragment shifted right, at the fragment's
    // original positions
    std::vector<int> dec_in{kMaskId};
    dec_in.insert(dec_in.end(), corrupted.fragment.begin(), corrupted.fragment.end() - 1);
    Var logits = decoder_logits(memory, dec_in, corrupted.span_begin);
    return cross_entropy_rows(logits, corrupted.fragment, kPadId);
}

double TextDenoiser::masked_token_accuracy(const CorruptedText& corrupted) const {
    Var memory = encode(corrupted.masked_tokens);
    std::vector<int> dec_in{kMaskId};
    dec_in.insert(dec_in.end(), corrupted.fragment.begin(), corrupted.fragment.end() - 1);
    Var logits = decoder_logits(memory, dec_in, corrupted.span_begin);
    int64_t hit = 0;
    for (int64_t r = 0; r < logits->val.rows(); ++r) {
        int best = 0;
        Scalar bv = logits->val.at2(r, 0);
        for (int64_t c = 1; c < logits->val.cols(); ++c)
            if (logits->val.at2(r, c) > bv) {
                bv = logits->val.at2(r, c);
                best = static_cast<int>(c);
            }
        if (best == corrupted.fragment[static_cast<size_t>(r)]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(logits->val.rows());
}

Var TextDenoiser::sentence_nll(const Var& memory, const std::vector<int>& target_tokens) const {
    if (target_tokens.empty()) throw std::invalid_argument("sentence_nll: empty target");
    // normalize: everything from the first EOS/PAD on is padding and does not
    // shift the loss
    std::vector<int> clean;
    for (int t : target_tokens) {
        if (t == kEosId || t == kPadId) break;
        clean.push_back(t);
    }
    std::vector<int> dec_in{kBosId};
    std::vector<int> targets;
    for (int t : clean) {
        dec_in.push_back(t);
        targets.push_back(t);
    }
    targets.push_back(kEosId);
    Var logits = decoder_logits(memory, dec_in, 0);
    return cross_entropy_rows(logits, targets, kPadId);
}

std::vector<int> TextDenoiser::decode_greedy(const Tensor& memory, int64_t max_len) const {
    if (max_len < 1) throw std::invalid_argument("decode_greedy: max_len must be at least 1");
    Var mem = constant(memory);
    std::vector<int> out;
    std::vector<int> dec_in{kBosId};
    while (true) {
        Var logits = decoder_logits(mem, dec_in, 0);
        int64_t last = logits->val.rows() - 1;
        int best = 0;
        Scalar bv = logits->val.at2(last, 0);
        for (int64_t c = 1; c < logits->val.cols(); ++c)
            if (logits->val.at2(last, c) > bv) {  // strict: ties go to the lowest id
                bv = logits->val.at2(last, c);
                best = static_cast<int>(c);
            }
        if (best == kEosId) {
            if (out.empty()) out.push_back(kEosId);
            break;
        }
        out.push_back(best);
        if (static_cast<int64_t>(out.size()) >= max_len) break;
        if (static_cast<int64_t>(dec_in.size()) >= cfg_->max_text_len + 1) break;
        dec_in.push_back(best);
    }
    return out;
}

}  // namespace xmbt

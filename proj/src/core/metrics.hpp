#pragma once

#include <array>
#include <functional>

#include "text_model.hpp"
#include "video_model.hpp"

namespace xmbt {

struct BleuReport {
    double bleu1 = 0, bleu4 = 0;  // percentages in [0,100]
    double brevity_penalty = 1.0;
    std::array<double, 4> precisions{};  // p1 raw, p2..p4 add-one smoothed
    int64_t hyp_len = 0, ref_len = 0;
};

// Corpus-level BLEU with the standard brevity penalty; add-one smoothing on
// the n>1 precisions, none on unigrams.
BleuReport bleu(const std::vector<TextSequence>& hypotheses, const std::vector<TextSequence>& references);

double sentence_bleu1(const std::vector<int>& hypothesis, const std::vector<int>& reference);

// text -> video tokens -> text, injected so tests can swap in an oracle
using RoundTripFn = std::function<std::vector<int>(const std::vector<int>&)>;
BleuReport back_translation_bleu(const std::vector<TextSequence>& texts, const RoundTripFn& roundtrip);

struct FvdProxyReport {
    double distance = 0;
    int64_t feature_dim = 0;
    int64_t n_real = 0, n_generated = 0;
};

// Frechet distance between Gaussian fits of two feature samples (rows =
// samples). Needs at least dim+1 samples per side.
FvdProxyReport frechet_feature_distance(const Tensor& real_features, const Tensor& generated_features);

FvdProxyReport frechet_feature_distance(const std::vector<VideoClip>& real, const std::vector<VideoClip>& generated,
                                        const VideoTokenizer& tokenizer);

}  // namespace xmbt

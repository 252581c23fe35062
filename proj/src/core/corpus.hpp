#pragma once

#include <map>
#include <string>

#include "config.hpp"
#include "text_model.hpp"
#include "video_model.hpp"

namespace xmbt {

// Word list with the four reserved ids up front. Line number = id in the
// on-disk format.
struct Vocabulary {
    std::vector<std::string> words;

    int64_t size() const { return static_cast<int64_t>(words.size()); }
    int id_of(const std::string& w) const;
    std::vector<int> tokenize(const std::string& sentence) const;  // throws naming unknown words
    std::string detokenize(const std::vector<int>& tokens) const;

    static Vocabulary built_in(int64_t vocab_size);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
};

// Deterministic blocky glyph per token id; one stencil per vocabulary entry.
struct GlyphRenderSpec {
    int64_t frames_per_token = 4;
    int64_t height = 16, width = 16;
    int64_t transition_frames = 0;
    double noise_amplitude = 0.05;
    uint64_t noise_seed = 0;
    std::vector<Tensor> atlas;  // H x W stencils, one per token id

    static GlyphRenderSpec for_config(const ModelConfig& cfg, uint64_t atlas_seed);
};

VideoClip render_video(const std::vector<int>& tokens, const GlyphRenderSpec& spec);

// nearest-stencil readout of the per-token frame blocks; the inverse of
// render_video up to noise
std::vector<int> recover_tokens(const VideoClip& clip, const GlyphRenderSpec& spec);

struct Corpus {
    std::vector<TextSequence> texts;
    std::vector<VideoClip> videos;
    // only populated by the optional paired-data hook; empty in unsupervised mode
    std::vector<std::pair<TextSequence, VideoClip>> paired;
};

class SentenceGrammar {
public:
    SentenceGrammar(const Vocabulary& vocab, int64_t min_len, int64_t max_len);
    TextSequence sample(Rng& rng) const;

private:
    int64_t min_len_, max_len_;
    std::vector<int> nouns_, verbs_, adjectives_, adverbs_, determiners_;
};

Corpus build_unpaired_corpus(const ModelConfig& cfg, const Vocabulary& vocab, const GlyphRenderSpec& spec,
                             uint64_t grammar_seed, int64_t n_texts, int64_t n_videos);

// evaluation pairs, disjoint from a set of existing sentences
std::vector<std::pair<TextSequence, VideoClip>> build_dev_pairs(const ModelConfig& cfg, const Vocabulary& vocab,
                                                                const GlyphRenderSpec& spec, uint64_t seed,
                                                                int64_t count,
                                                                const std::vector<TextSequence>& avoid);

// ---- gloss annotations and order consistency ----

struct GlossEntry {
    std::string video_name;
    double global_time = 0;
    std::string gloss;
    std::string source;
    double confidence = 1.0;
};

struct GlossAnnotation {
    std::vector<GlossEntry> entries;
};

GlossAnnotation parse_gloss_csv(const std::string& text);

// grouped by video name (first-appearance order), time-sorted with stable
// ties, confidence-filtered first
std::vector<std::pair<std::string, std::vector<std::string>>> sentence_level_glosses(
    const GlossAnnotation& ann, double min_confidence = 0.0);

struct OrderFlags {
    bool strict = false;
    bool within2 = false;  // strictly increasing after deleting at most 2 matches
    bool within3 = false;
    int64_t matched = 0;
    int64_t unmatched = 0;
};

OrderFlags order_consistency(const std::vector<int>& gloss_tokens, const TextSequence& text);

struct OrderConsistencyReport {
    double strict = 0, disorder2 = 0, disorder3 = 0;
    int64_t sentence_count = 0;
};

OrderConsistencyReport order_report(const std::vector<std::pair<std::vector<int>, TextSequence>>& cases);

int64_t longest_increasing_subsequence(const std::vector<int64_t>& xs);  // strictly increasing

}  // namespace xmbt

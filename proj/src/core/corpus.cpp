#include "corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace xmbt {

namespace {

const char* kReserved[] = {"<pad>", "<bos>", "<eos>", "<mask>"};

const char* kNouns[] = {"fox",  "wolf", "bird",  "fish", "crab", "bear",  "deer", "hawk",  "mouse",
                        "otter", "toad", "swan",  "snail", "heron", "lynx", "mole", "crow",  "seal"};
const char* kVerbs[] = {"sees",    "finds",  "chases", "greets", "follows", "lifts",
                        "carries", "drops",  "watches", "calls",  "draws",   "feeds"};
const char* kAdjectives[] = {"red",  "blue", "green", "tall", "small", "quick", "slow",
                             "bright", "dark", "soft",  "loud", "calm",  "tiny",  "bold"};
const char* kAdverbs[] = {"today", "slowly", "quickly", "gently", "quietly", "boldly", "twice", "nearby"};
const char* kDeterminers[] = {"the", "a", "one", "this", "that", "each", "some", "every"};

std::string word_for_extra(int64_t i) { return "w" + std::to_string(i); }

}  // namespace

int Vocabulary::id_of(const std::string& w) const {
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == w) return static_cast<int>(i);
    return -1;
}

std::vector<int> Vocabulary::tokenize(const std::string& sentence) const {
    std::vector<int> out;
    std::istringstream is(sentence);
    std::string w;
    while (is >> w) {
        int id = id_of(w);
        if (id < 0) throw std::invalid_argument("unknown word '" + w + "'");
        out.push_back(id);
    }
    return out;
}

std::string Vocabulary::detokenize(const std::vector<int>& tokens) const {
    std::string out;
    for (int t : tokens) {
        if (t < 0 || t >= size()) throw std::invalid_argument("token id " + std::to_string(t) + " outside vocabulary");
        if (!out.empty()) out += " ";
        out += words[static_cast<size_t>(t)];
    }
    return out;
}

Vocabulary Vocabulary::built_in(int64_t vocab_size) {
    if (vocab_size <= kNumReservedIds) throw UsageError("vocab_size: too small for the reserved ids");
    Vocabulary v;
    for (const char* r : kReserved) v.words.push_back(r);
    auto push_all = [&](const char* const* arr, size_t n) {
        for (size_t i = 0; i < n && v.size() < vocab_size; ++i) v.words.push_back(arr[i]);
    };
    push_all(kNouns, std::size(kNouns));
    push_all(kVerbs, std::size(kVerbs));
    push_all(kAdjectives, std::size(kAdjectives));
    push_all(kAdverbs, std::size(kAdverbs));
    push_all(kDeterminers, std::size(kDeterminers));
    int64_t extra = 0;
    while (v.size() < vocab_size) v.words.push_back(word_for_extra(extra++));
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write vocabulary: " + path);
    for (const auto& w : words) out << w << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("vocabulary file not found: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) v.words.push_back(line);
    }
    for (int i = 0; i < kNumReservedIds; ++i)
        if (v.size() <= i || v.words[static_cast<size_t>(i)] != kReserved[i])
            throw UsageError("vocabulary file must start with <pad> <bos> <eos> <mask>");
    return v;
}

GlyphRenderSpec GlyphRenderSpec::for_config(const ModelConfig& cfg, uint64_t atlas_seed) {
    GlyphRenderSpec spec;
    spec.frames_per_token = cfg.frames_per_token;
    spec.height = cfg.clip_h;
    spec.width = cfg.clip_w;
    spec.transition_frames = cfg.transition_frames;
    spec.noise_amplitude = cfg.noise_amplitude;
    spec.noise_seed = atlas_seed ^ 0x5eedf00dull;
    Rng rng(atlas_seed);
    std::set<std::vector<int>> seen;
    int64_t coarse = 4;
    for (int64_t id = 0; id < cfg.vocab_size; ++id) {
        std::vector<int> bits;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            bits.clear();
            int on = 0;
            for (int64_t i = 0; i < coarse * coarse; ++i) {
                int b = rng.uniform_int(0, 1);
                bits.push_back(b);
                on += b;
            }
            if (on >= 4 && on <= 12 && !seen.count(bits)) break;
        }
        seen.insert(bits);
        Tensor stencil({spec.height, spec.width});
        for (int64_t r = 0; r < spec.height; ++r)
            for (int64_t c = 0; c < spec.width; ++c) {
                int64_t cr = r * coarse / spec.height, cc = c * coarse / spec.width;
                stencil.at2(r, c) = bits[static_cast<size_t>(cr * coarse + cc)];
            }
        spec.atlas.push_back(std::move(stencil));
    }
    return spec;
}

VideoClip render_video(const std::vector<int>& tokens, const GlyphRenderSpec& spec) {
    if (tokens.empty()) throw std::invalid_argument("render_video: empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= static_cast<int>(spec.atlas.size()))
            throw std::invalid_argument("render_video: no stencil for token " + std::to_string(t));
    int64_t n = static_cast<int64_t>(tokens.size());
    int64_t frames = n * spec.frames_per_token + spec.transition_frames * (n - 1);
    VideoClip clip;
    clip.frames = Tensor({frames, spec.height, spec.width, 1});
    uint64_t clip_seed = spec.noise_seed;
    for (int t : tokens) clip_seed = clip_seed * 1099511628211ull + static_cast<uint64_t>(t) + 1;
    Rng noise(clip_seed);
    int64_t f = 0;
    for (int64_t i = 0; i < n; ++i) {
        const Tensor& cur = spec.atlas[static_cast<size_t>(tokens[static_cast<size_t>(i)])];
        for (int64_t k = 0; k < spec.frames_per_token; ++k, ++f)
            for (int64_t r = 0; r < spec.height; ++r)
                for (int64_t c = 0; c < spec.width; ++c) {
                    double v = cur.at2(r, c);
                    if (spec.noise_amplitude > 0) v += spec.noise_amplitude * (2.0 * noise.uniform() - 1.0);
                    clip.frames.at(((f * spec.height + r) * spec.width + c)) = std::clamp(v, 0.0, 1.0);
                }
        if (spec.transition_frames > 0 && i + 1 < n) {
            const Tensor& nxt = spec.atlas[static_cast<size_t>(tokens[static_cast<size_t>(i + 1)])];
            for (int64_t k = 0; k < spec.transition_frames; ++k, ++f) {
                double a = static_cast<double>(k + 1) / static_cast<double>(spec.transition_frames + 1);
                for (int64_t r = 0; r < spec.height; ++r)
                    for (int64_t c = 0; c < spec.width; ++c) {
                        double v = (1.0 - a) * cur.at2(r, c) + a * nxt.at2(r, c);
                        if (spec.noise_amplitude > 0) v += spec.noise_amplitude * (2.0 * noise.uniform() - 1.0);
                        clip.frames.at(((f * spec.height + r) * spec.width + c)) = std::clamp(v, 0.0, 1.0);
                    }
            }
        }
    }
    return clip;
}

std::vector<int> recover_tokens(const VideoClip& clip, const GlyphRenderSpec& spec) {
    int64_t block = spec.frames_per_token + spec.transition_frames;
    int64_t n = (clip.t() + spec.transition_frames) / block;
    std::vector<int> out;
    for (int64_t i = 0; i < n; ++i) {
        Tensor mean({spec.height, spec.width});
        int64_t f0 = i * block;
        for (int64_t k = 0; k < spec.frames_per_token; ++k)
            for (int64_t r = 0; r < spec.height; ++r)
                for (int64_t c = 0; c < spec.width; ++c)
                    mean.at2(r, c) += clip.frames.at((((f0 + k) * spec.height + r) * spec.width + c));
        for (int64_t i2 = 0; i2 < mean.numel(); ++i2) mean.at(i2) /= static_cast<double>(spec.frames_per_token);
        int best = 0;
        double bd = 1e300;
        for (size_t a = 0; a < spec.atlas.size(); ++a) {
            double d = 0;
            for (int64_t p = 0; p < mean.numel(); ++p) {
                double t = mean.at(p) - spec.atlas[a].at(p);
                d += t * t;
            }
            if (d < bd) {
                bd = d;
                best = static_cast<int>(a);
            }
        }
        out.push_back(best);
    }
    return out;
}

SentenceGrammar::SentenceGrammar(const Vocabulary& vocab, int64_t min_len, int64_t max_len)
    : min_len_(min_len), max_len_(max_len) {
    auto collect = [&](const char* const* arr, size_t n, std::vector<int>& out) {
        for (size_t i = 0; i < n; ++i) {
            int id = vocab.id_of(arr[i]);
            if (id >= 0) out.push_back(id);
        }
    };
    collect(kNouns, std::size(kNouns), nouns_);
    collect(kVerbs, std::size(kVerbs), verbs_);
    collect(kAdjectives, std::size(kAdjectives), adjectives_);
    collect(kAdverbs, std::size(kAdverbs), adverbs_);
    collect(kDeterminers, std::size(kDeterminers), determiners_);
    // fall back to generic ids so tiny vocabularies still work
    for (int64_t id = kNumReservedIds; id < vocab.size(); ++id) {
        if (nouns_.size() < 2) nouns_.push_back(static_cast<int>(id));
        else if (verbs_.empty()) verbs_.push_back(static_cast<int>(id));
    }
    if (nouns_.size() < 2 || verbs_.empty())
        throw UsageError("vocab_size: too small to build the sentence grammar");
}

TextSequence SentenceGrammar::sample(Rng& rng) const {
    auto pick = [&](const std::vector<int>& pool) { return pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))]; };
    for (int attempt = 0; attempt < 256; ++attempt) {
        std::vector<int> t;
        auto noun_phrase = [&] {
            if (!determiners_.empty() && rng.uniform() < 0.5) t.push_back(pick(determiners_));
            if (!adjectives_.empty()) {
                int64_t n_adj = rng.uniform_int(0, 2);
                for (int64_t i = 0; i < n_adj; ++i) t.push_back(pick(adjectives_));
            }
            t.push_back(pick(nouns_));
        };
        noun_phrase();
        t.push_back(pick(verbs_));
        noun_phrase();
        if (!adverbs_.empty() && rng.uniform() < 0.4) t.push_back(pick(adverbs_));
        if (static_cast<int64_t>(t.size()) >= min_len_ && static_cast<int64_t>(t.size()) <= max_len_)
            return TextSequence{std::move(t)};
    }
    throw RuntimeFailure("grammar: could not sample a sentence within the configured length bounds");
}

Corpus build_unpaired_corpus(const ModelConfig& cfg, const Vocabulary& vocab, const GlyphRenderSpec& spec,
                             uint64_t grammar_seed, int64_t n_texts, int64_t n_videos) {
    SentenceGrammar grammar(vocab, cfg.grammar_min_len, cfg.grammar_max_len);
    Rng rng(grammar_seed);
    std::set<std::vector<int>> text_side;
    Corpus corpus;
    while (static_cast<int64_t>(corpus.texts.size()) < n_texts) {
        TextSequence t = grammar.sample(rng);
        if (text_side.insert(t.tokens).second) corpus.texts.push_back(std::move(t));
    }
    std::set<std::vector<int>> video_side;
    while (static_cast<int64_t>(corpus.videos.size()) < n_videos) {
        TextSequence t = grammar.sample(rng);
        if (text_side.count(t.tokens) || !video_side.insert(t.tokens).second) continue;
        // the source sentence is dropped; only its rendering enters the corpus
        corpus.videos.push_back(render_video(t.tokens, spec));
    }
    return corpus;
}

std::vector<std::pair<TextSequence, VideoClip>> build_dev_pairs(const ModelConfig& cfg, const Vocabulary& vocab,
                                                                const GlyphRenderSpec& spec, uint64_t seed,
                                                                int64_t count,
                                                                const std::vector<TextSequence>& avoid) {
    SentenceGrammar grammar(vocab, cfg.grammar_min_len, cfg.grammar_max_len);
    Rng rng(seed);
    std::set<std::vector<int>> taken;
    for (const auto& t : avoid) taken.insert(t.tokens);
    std::vector<std::pair<TextSequence, VideoClip>> out;
    while (static_cast<int64_t>(out.size()) < count) {
        TextSequence t = grammar.sample(rng);
        if (!taken.insert(t.tokens).second) continue;
        VideoClip clip = render_video(t.tokens, spec);
        out.emplace_back(std::move(t), std::move(clip));
    }
    return out;
}

GlossAnnotation parse_gloss_csv(const std::string& text) {
    GlossAnnotation ann;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cols.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        cols.push_back(cur);
        if (lineno == 1 && !cols.empty() && cols[0] == "video_name") continue;  // header
        if (cols.size() != 5)
            throw UsageError("gloss csv line " + std::to_string(lineno) + ": expected 5 columns, got " +
                             std::to_string(cols.size()));
        GlossEntry e;
        e.video_name = cols[0];
        try {
            e.global_time = std::stod(cols[1]);
            e.confidence = std::stod(cols[4]);
        } catch (...) {
            throw UsageError("gloss csv line " + std::to_string(lineno) + ": bad number");
        }
        if (e.global_time < 0) throw UsageError("gloss csv line " + std::to_string(lineno) + ": negative time");
        e.gloss = cols[2];
        e.source = cols[3];
        ann.entries.push_back(std::move(e));
    }
    return ann;
}

std::vector<std::pair<std::string, std::vector<std::string>>> sentence_level_glosses(const GlossAnnotation& ann,
                                                                                     double min_confidence) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<double, std::string>>> grouped;
    for (const auto& e : ann.entries) {
        if (e.confidence < min_confidence) continue;
        if (!grouped.count(e.video_name)) order.push_back(e.video_name);
        grouped[e.video_name].emplace_back(e.global_time, e.gloss);
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    for (const auto& name : order) {
        auto& items = grouped[name];
        std::stable_sort(items.begin(), items.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::string> glosses;
        for (auto& [t, g] : items) glosses.push_back(g);
        out.emplace_back(name, std::move(glosses));
    }
    return out;
}

int64_t longest_increasing_subsequence(const std::vector<int64_t>& xs) {
    std::vector<int64_t> tails;
    for (int64_t x : xs) {
        auto it = std::lower_bound(tails.begin(), tails.end(), x);
        if (it == tails.end()) tails.push_back(x);
        else *it = x;
    }
    return static_cast<int64_t>(tails.size());
}

OrderFlags order_consistency(const std::vector<int>& gloss_tokens, const TextSequence& text) {
    if (gloss_tokens.empty() || text.tokens.empty())
        throw std::invalid_argument("order_consistency: empty input");
    std::vector<bool> used(text.tokens.size(), false);
    OrderFlags f;
    std::vector<int64_t> positions;
    for (int g : gloss_tokens) {
        int64_t found = -1;
        for (size_t p = 0; p < text.tokens.size(); ++p) {
            if (!used[p] && text.tokens[p] == g) {
                found = static_cast<int64_t>(p);
                break;
            }
        }
        if (found < 0) {
            ++f.unmatched;
            continue;
        }
        used[static_cast<size_t>(found)] = true;
        positions.push_back(found);
    }
    f.matched = static_cast<int64_t>(positions.size());
    int64_t lis = longest_increasing_subsequence(positions);
    int64_t deficit = f.matched - lis;
    f.strict = deficit == 0;
    f.within2 = deficit <= 2;
    f.within3 = deficit <= 3;
    return f;
}

OrderConsistencyReport order_report(const std::vector<std::pair<std::vector<int>, TextSequence>>& cases) {
    OrderConsistencyReport r;
    r.sentence_count = static_cast<int64_t>(cases.size());
    if (!r.sentence_count) return r;
    for (const auto& [g, t] : cases) {
        OrderFlags f = order_consistency(g, t);
        r.strict += f.strict ? 1 : 0;
        r.disorder2 += f.within2 ? 1 : 0;
        r.disorder3 += f.within3 ? 1 : 0;
    }
    r.strict /= static_cast<double>(r.sentence_count);
    r.disorder2 /= static_cast<double>(r.sentence_count);
    r.disorder3 /= static_cast<double>(r.sentence_count);
    return r;
}

}  // namespace xmbt

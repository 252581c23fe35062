#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace xmbt {

std::string to_string(AlignerMode m) {
    switch (m) {
        case AlignerMode::Soft: return "soft";
        case AlignerMode::Hard: return "hard";
        case AlignerMode::Pooling: return "pooling";
    }
    return "soft";
}

AlignerMode aligner_mode_from_string(const std::string& s) {
    if (s == "soft") return AlignerMode::Soft;
    if (s == "hard") return AlignerMode::Hard;
    if (s == "pooling") return AlignerMode::Pooling;
    throw UsageError("aligner_mode: expected one of soft|hard|pooling, got '" + s + "'");
}

namespace {

struct Field {
    const char* name;
    enum Kind { Int, Real, Bool, Mode } kind;
    std::function<void(ModelConfig&, const std::string&)> set;
    std::function<std::string(const ModelConfig&)> get;
};

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw UsageError(key + ": expected an integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw UsageError(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError(key + ": expected true|false, got '" + v + "'");
}

std::string fmt_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

#define INT_FIELD(f)                                                                               \
    Field{#f, Field::Int, [](ModelConfig& c, const std::string& v) { c.f = parse_int(#f, v); },    \
          [](const ModelConfig& c) { return std::to_string(c.f); }}
#define REAL_FIELD(f)                                                                              \
    Field{#f, Field::Real, [](ModelConfig& c, const std::string& v) { c.f = parse_real(#f, v); },  \
          [](const ModelConfig& c) { return fmt_real(c.f); }}
#define BOOL_FIELD(f)                                                                              \
    Field{#f, Field::Bool, [](ModelConfig& c, const std::string& v) { c.f = parse_bool(#f, v); },  \
          [](const ModelConfig& c) { return c.f ? std::string("true") : std::string("false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> fs = {
        INT_FIELD(vocab_size),
        INT_FIELD(d_text),
        INT_FIELD(text_layers),
        INT_FIELD(text_heads),
        INT_FIELD(max_text_len),
        REAL_FIELD(mask_ratio),
        INT_FIELD(d_video),
        INT_FIELD(prior_layers),
        INT_FIELD(prior_heads),
        INT_FIELD(codebook_size),
        INT_FIELD(d_code),
        INT_FIELD(downsample_t),
        INT_FIELD(downsample_s),
        INT_FIELD(conv_c1),
        INT_FIELD(conv_c2),
        INT_FIELD(clip_t),
        INT_FIELD(clip_h),
        INT_FIELD(clip_w),
        INT_FIELD(clip_c),
        REAL_FIELD(gaussian_mu),
        REAL_FIELD(gaussian_sigma),
        Field{"aligner_mode", Field::Mode,
              [](ModelConfig& c, const std::string& v) { c.aligner_mode = aligner_mode_from_string(v); },
              [](const ModelConfig& c) { return to_string(c.aligner_mode); }},
        BOOL_FIELD(aligner_beta_stochastic),
        INT_FIELD(pooling_max_text),
        INT_FIELD(pooling_max_video),
        REAL_FIELD(cond_scale),
        INT_FIELD(frames_per_token),
        INT_FIELD(transition_frames),
        REAL_FIELD(noise_amplitude),
        INT_FIELD(grammar_min_len),
        INT_FIELD(grammar_max_len),
        INT_FIELD(corpus_texts),
        INT_FIELD(corpus_videos),
        INT_FIELD(corpus_dev),
        REAL_FIELD(w.text),
        REAL_FIELD(w.codebook),
        REAL_FIELD(w.video),
        REAL_FIELD(w.t2v2t),
        REAL_FIELD(w.v2t2v),
        BOOL_FIELD(freeze_video_encoder),
        BOOL_FIELD(freeze_video_decoder),
        BOOL_FIELD(freeze_text_encoder),
        BOOL_FIELD(freeze_text_decoder),
        REAL_FIELD(lr),
        REAL_FIELD(commitment_weight),
        INT_FIELD(batch_text),
        INT_FIELD(batch_video),
        INT_FIELD(batch_bt),
        INT_FIELD(pretrain_text_steps),
        INT_FIELD(pretrain_video_steps),
        INT_FIELD(joint_steps),
        INT_FIELD(eval_interval),
        INT_FIELD(eval_texts),
    };
    return fs;
}

// struct-member names like "w.text" serialize as w_text
std::string field_key(const Field& f) {
    std::string k = f.name;
    if (k.rfind("w.", 0) == 0) k = "w_" + k.substr(2);
    return k;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
}

}  // namespace

void ModelConfig::set_key(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (field_key(f) == key) {
            f.set(*this, value);
            return;
        }
    }
    throw UsageError("unknown config key '" + key + "'");
}

void ModelConfig::validate() const {
    auto positive = [](int64_t v, const char* key) {
        require(v > 0, std::string(key) + ": must be positive, got " + std::to_string(v));
    };
    positive(vocab_size, "vocab_size");
    require(vocab_size > 4, "vocab_size: must exceed the 4 reserved ids, got " + std::to_string(vocab_size));
    positive(d_text, "d_text");
    positive(text_layers, "text_layers");
    positive(text_heads, "text_heads");
    positive(max_text_len, "max_text_len");
    positive(d_video, "d_video");
    positive(prior_layers, "prior_layers");
    positive(prior_heads, "prior_heads");
    positive(codebook_size, "codebook_size");
    positive(d_code, "d_code");
    positive(downsample_t, "downsample_t");
    positive(downsample_s, "downsample_s");
    positive(conv_c1, "conv_c1");
    positive(conv_c2, "conv_c2");
    positive(clip_t, "clip_t");
    positive(clip_h, "clip_h");
    positive(clip_w, "clip_w");
    positive(clip_c, "clip_c");
    positive(frames_per_token, "frames_per_token");
    positive(grammar_min_len, "grammar_min_len");
    positive(grammar_max_len, "grammar_max_len");
    positive(corpus_texts, "corpus_texts");
    positive(corpus_videos, "corpus_videos");
    positive(corpus_dev, "corpus_dev");
    positive(pooling_max_text, "pooling_max_text");
    positive(pooling_max_video, "pooling_max_video");
    positive(batch_text, "batch_text");
    positive(batch_video, "batch_video");
    positive(batch_bt, "batch_bt");
    positive(eval_interval, "eval_interval");
    positive(eval_texts, "eval_texts");
    require(pretrain_text_steps >= 0, "pretrain_text_steps: must be nonnegative");
    require(pretrain_video_steps >= 0, "pretrain_video_steps: must be nonnegative");
    require(joint_steps >= 0, "joint_steps: must be nonnegative");
    require(transition_frames >= 0, "transition_frames: must be nonnegative");

    require(d_text % text_heads == 0, "text_heads: must divide d_text");
    require(d_video % prior_heads == 0, "prior_heads: must divide d_video");
    require(clip_t % downsample_t == 0, "clip_t: must be divisible by downsample_t");
    require(clip_h % downsample_s == 0, "clip_h: must be divisible by downsample_s");
    require(clip_w % downsample_s == 0, "clip_w: must be divisible by downsample_s");
    require(grammar_min_len <= grammar_max_len, "grammar_min_len: exceeds grammar_max_len");
    require(grammar_max_len <= max_text_len, "grammar_max_len: exceeds max_text_len");

    require(mask_ratio > 0.0 && mask_ratio < 1.0, "mask_ratio: must lie in (0,1)");
    require(gaussian_sigma > 0.0, "gaussian_sigma: must be positive");
    require(noise_amplitude >= 0.0, "noise_amplitude: must be nonnegative");
    require(lr > 0.0, "lr: must be positive");
    require(commitment_weight >= 0.0, "commitment_weight: must be nonnegative");
    require(cond_scale >= 0.0, "cond_scale: must be nonnegative");

    require(w.text >= 0.0, "w_text: must be nonnegative");
    require(w.codebook >= 0.0, "w_codebook: must be nonnegative");
    require(w.video >= 0.0, "w_video: must be nonnegative");
    require(w.t2v2t >= 0.0, "w_t2v2t: must be nonnegative");
    require(w.v2t2v >= 0.0, "w_v2t2v: must be nonnegative");
    require(w.text + w.codebook + w.video + w.t2v2t + w.v2t2v > 0.0,
            "w_text..w_v2t2v: at least one loss weight must be positive");

    require(!aligner_beta_stochastic,
            "aligner_beta_stochastic: stochastic scores are reserved and not implemented; set false");
}

std::string ModelConfig::serialize() const {
    std::ostringstream os;
    for (const auto& f : fields()) os << field_key(f) << " = " << f.get(*this) << "\n";
    return os.str();
}

ModelConfig ModelConfig::parse_text(const std::string& text) {
    ModelConfig c = defaults();
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        c.set_key(key, val);
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

void ModelConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write config: " + path);
    out << serialize();
}

uint64_t ModelConfig::hash() const {
    std::string s = serialize();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string ModelConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return std::string(buf);
}

int64_t ModelConfig::pseudo_video_frames(int64_t n_tokens) const {
    int64_t t = n_tokens * frames_per_token;
    int64_t r = t % downsample_t;
    if (r) t += downsample_t - r;
    return std::max<int64_t>(t, downsample_t);
}

int64_t ModelConfig::pseudo_text_len(int64_t t_frames) const {
    int64_t n = static_cast<int64_t>(std::llround(static_cast<double>(t_frames) / static_cast<double>(frames_per_token)));
    return std::clamp<int64_t>(n, 1, max_text_len);
}

}  // namespace xmbt

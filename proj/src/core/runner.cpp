#include "runner.hpp"

#include <json.hpp>

#include <atomic>
#include <memory>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "backtranslation.hpp"
#include "io.hpp"

namespace xmbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workspace {
    std::string root;
    std::string corpus() const { return root + "/corpus"; }
    std::string videos() const { return corpus() + "/videos"; }
    std::string dev() const { return corpus() + "/dev"; }
    std::string checkpoints(const std::string& name) const { return root + "/checkpoints/" + name; }
    std::string metrics() const { return root + "/metrics"; }
    std::string reports() const { return root + "/reports"; }
    std::string plots() const { return root + "/plots"; }
    std::string manifests() const { return root + "/manifests"; }
    std::string generated() const { return root + "/generated"; }
};

int64_t num_workers() {
    const char* env = std::getenv("XMBT_NUM_WORKERS");
    int64_t hw = static_cast<int64_t>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (!env || !*env) return 1;
    int64_t v = std::atoll(env);
    if (v < 1) v = 1;
    return std::min(v, hw);
}

template <typename Fn>
void parallel_for(int64_t count, Fn&& fn) {
    int64_t workers = std::min<int64_t>(num_workers(), count);
    if (workers <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> threads;
    for (int64_t w = 0; w < workers; ++w)
        threads.emplace_back([&] {
            for (int64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : threads) t.join();
}

std::string clip_base(const std::string& dir, int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05lld", static_cast<long long>(index));
    return dir + "/" + buf;
}

void write_manifest(const Workspace& ws, const RunOptions& opts, const ModelConfig& cfg) {
    io::ensure_dir(ws.manifests());
    json m;
    m["stage"] = opts.stage;
    m["seed"] = opts.seed;
    m["out_dir"] = opts.out_dir;
    m["force"] = opts.force;
    m["from_scratch"] = opts.from_scratch;
    m["config_hash"] = cfg.hash_hex();
    m["config"] = cfg.serialize();
    if (!opts.checkpoint.empty()) m["checkpoint"] = opts.checkpoint;
    if (!opts.input_path.empty()) m["input"] = opts.input_path;
    if (!opts.matrix.empty()) m["matrix"] = opts.matrix;
    if (!opts.text.empty()) m["text"] = opts.text;
    io::write_text_file(ws.manifests() + "/" + opts.stage + ".json", m.dump(2) + "\n");
}

void guard_overwrite(const std::string& marker, bool force, const std::string& stage) {
    if (io::exists(marker) && !force)
        throw UsageError(stage + ": output already exists at " + marker + "; rerun with --force to overwrite");
}

// ---- corpus on disk ----

struct CorpusMeta {
    uint64_t grammar_seed = 0;
    uint64_t atlas_seed = 0;
    int64_t n_texts = 0, n_videos = 0, n_dev = 0;
};

void save_corpus_meta(const Workspace& ws, const CorpusMeta& meta, const ModelConfig& cfg) {
    json j;
    j["grammar_seed"] = meta.grammar_seed;
    j["atlas_seed"] = meta.atlas_seed;
    j["n_texts"] = meta.n_texts;
    j["n_videos"] = meta.n_videos;
    j["n_dev"] = meta.n_dev;
    j["config_hash"] = cfg.hash_hex();
    io::write_text_file(ws.corpus() + "/meta.json", j.dump(2) + "\n");
}

CorpusMeta load_corpus_meta(const Workspace& ws) {
    if (!io::exists(ws.corpus() + "/meta.json"))
        throw DependencyError("corpus not found under " + ws.corpus() + "; run gen-corpus first");
    json j = json::parse(io::read_text_file(ws.corpus() + "/meta.json"));
    CorpusMeta m;
    m.grammar_seed = j.at("grammar_seed").get<uint64_t>();
    m.atlas_seed = j.at("atlas_seed").get<uint64_t>();
    m.n_texts = j.at("n_texts").get<int64_t>();
    m.n_videos = j.at("n_videos").get<int64_t>();
    m.n_dev = j.at("n_dev").get<int64_t>();
    return m;
}

std::vector<TextSequence> load_text_file_tokens(const std::string& path, const Vocabulary& vocab) {
    std::istringstream is(io::read_text_file(path));
    std::vector<TextSequence> out;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        out.push_back(TextSequence{vocab.tokenize(line)});
    }
    return out;
}

struct LoadedCorpus {
    Vocabulary vocab;
    GlyphRenderSpec spec;
    Corpus corpus;
    std::vector<TextSequence> dev_texts;
    std::vector<VideoClip> dev_clips;
};

LoadedCorpus load_corpus(const Workspace& ws, const ModelConfig& cfg, bool with_videos = true) {
    CorpusMeta meta = load_corpus_meta(ws);
    LoadedCorpus lc;
    lc.vocab = Vocabulary::load(ws.corpus() + "/vocab.txt");
    lc.spec = GlyphRenderSpec::for_config(cfg, meta.atlas_seed);
    for (auto& t : load_text_file_tokens(ws.corpus() + "/texts.txt", lc.vocab)) lc.corpus.texts.push_back(std::move(t));
    if (with_videos)
        for (int64_t i = 0; i < meta.n_videos; ++i) lc.corpus.videos.push_back(io::load_clip(clip_base(ws.videos(), i)));
    lc.dev_texts = load_text_file_tokens(ws.dev() + "/texts.txt", lc.vocab);
    for (int64_t i = 0; i < meta.n_dev; ++i) lc.dev_clips.push_back(io::load_clip(clip_base(ws.dev(), i)));
    return lc;
}

// ---- model/checkpoint plumbing ----

void save_checkpoint(const std::string& dir, Model& model, const Workspace& ws, uint64_t rng_state) {
    io::ensure_dir(dir);
    io::save_groups(dir, model.groups());
    model.cfg.save(dir + "/config.snapshot");
    if (io::exists(ws.corpus() + "/vocab.txt"))
        io::write_text_file(dir + "/vocab.txt", io::read_text_file(ws.corpus() + "/vocab.txt"));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "rng_state %016llx\n", static_cast<unsigned long long>(rng_state));
    io::write_text_file(dir + "/rng_state.txt", buf);
}

std::vector<double> column(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.*field);
    return out;
}

void write_metrics_artifacts(const Workspace& ws, const std::string& name, const std::vector<MetricsRow>& rows) {
    io::ensure_dir(ws.metrics());
    io::ensure_dir(ws.plots());
    io::write_text_file(ws.metrics() + "/" + name + ".csv", metrics_csv(rows));
    io::write_series_ppm(ws.plots() + "/" + name + ".ppm",
                         {column(rows, &MetricsRow::loss_text), column(rows, &MetricsRow::loss_codebook),
                          column(rows, &MetricsRow::loss_video),
                          [&] {
                              std::vector<double> bt;
                              for (const auto& r : rows) bt.push_back(r.bt_bleu1);
                              return bt;
                          }()});
}

// ---- stages ----

StageResult stage_gen_corpus(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    guard_overwrite(ws.corpus() + "/meta.json", opts.force, "gen-corpus");
    io::ensure_dir(ws.videos());
    io::ensure_dir(ws.dev());

    Vocabulary vocab = Vocabulary::built_in(cfg.vocab_size);
    GlyphRenderSpec spec = GlyphRenderSpec::for_config(cfg, opts.seed);
    Corpus corpus = build_unpaired_corpus(cfg, vocab, spec, opts.seed, cfg.corpus_texts, cfg.corpus_videos);
    auto dev = build_dev_pairs(cfg, vocab, spec, opts.seed ^ 0xdeu, cfg.corpus_dev, corpus.texts);

    vocab.save(ws.corpus() + "/vocab.txt");
    std::ostringstream texts;
    for (const auto& t : corpus.texts) texts << vocab.detokenize(t.tokens) << "\n";
    io::write_text_file(ws.corpus() + "/texts.txt", texts.str());

    parallel_for(static_cast<int64_t>(corpus.videos.size()),
                 [&](int64_t i) { io::save_clip(clip_base(ws.videos(), i), corpus.videos[static_cast<size_t>(i)]); });
    json manifest = json::array();
    for (size_t i = 0; i < corpus.videos.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%05lld", static_cast<long long>(i));
        manifest.push_back({{"clip", name}, {"frames", corpus.videos[i].t()}});
    }
    io::write_text_file(ws.videos() + "/manifest.json", manifest.dump(2) + "\n");

    std::ostringstream dev_texts;
    for (size_t i = 0; i < dev.size(); ++i) {
        dev_texts << vocab.detokenize(dev[i].first.tokens) << "\n";
        io::save_clip(clip_base(ws.dev(), static_cast<int64_t>(i)), dev[i].second);
    }
    io::write_text_file(ws.dev() + "/texts.txt", dev_texts.str());

    CorpusMeta meta;
    meta.grammar_seed = opts.seed;
    meta.atlas_seed = opts.seed;
    meta.n_texts = static_cast<int64_t>(corpus.texts.size());
    meta.n_videos = static_cast<int64_t>(corpus.videos.size());
    meta.n_dev = static_cast<int64_t>(dev.size());
    save_corpus_meta(ws, meta, cfg);
    write_manifest(ws, opts, cfg);
    StageResult r;
    r.stdout_text = "corpus: " + std::to_string(meta.n_texts) + " texts, " + std::to_string(meta.n_videos) +
                    " videos, " + std::to_string(meta.n_dev) + " dev pairs -> " + ws.corpus() + "\n";
    return r;
}

StageResult stage_pretrain_text(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    guard_overwrite(ws.metrics() + "/pretrain_text.csv", opts.force, "pretrain-text");
    LoadedCorpus lc = load_corpus(ws, cfg, /*with_videos=*/false);
    Model model(cfg, opts.seed);
    Trainer trainer(model, cfg);
    Rng rng(opts.seed ^ 0x7e57ull);
    auto rows = trainer.pretrain_text(lc.corpus.texts, cfg.pretrain_text_steps, rng.next_u64());
    write_metrics_artifacts(ws, "pretrain_text", rows);
    save_checkpoint(ws.checkpoints("text"), model, ws, rng.raw_state());
    write_manifest(ws, opts, cfg);
    StageResult r;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "pretrain-text: %lld steps, final loss %.4f\n",
                  static_cast<long long>(cfg.pretrain_text_steps), rows.empty() ? 0.0 : rows.back().loss_text);
    r.stdout_text = buf;
    return r;
}

StageResult stage_pretrain_video(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    guard_overwrite(ws.metrics() + "/pretrain_video.csv", opts.force, "pretrain-video");
    LoadedCorpus lc = load_corpus(ws, cfg);
    Model model(cfg, opts.seed);
    Trainer trainer(model, cfg);
    Rng rng(opts.seed ^ 0x71de0ull);
    auto rows = trainer.pretrain_video(lc.corpus.videos, cfg.pretrain_video_steps, rng.next_u64());
    write_metrics_artifacts(ws, "pretrain_video", rows);
    save_checkpoint(ws.checkpoints("video"), model, ws, rng.raw_state());
    write_manifest(ws, opts, cfg);
    StageResult r;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "pretrain-video: %lld steps, final recon+prior loss %.4f\n",
                  static_cast<long long>(cfg.pretrain_video_steps), rows.empty() ? 0.0 : rows.back().loss_video);
    r.stdout_text = buf;
    return r;
}

void load_pretrained(Model& model, const Workspace& ws, bool from_scratch) {
    if (from_scratch) return;
    std::vector<ParamGroup*> text_groups{&model.text_encoder, &model.text_decoder};
    std::vector<ParamGroup*> video_groups{&model.video_encoder, &model.video_decoder};
    if (!io::groups_present(ws.checkpoints("text"), text_groups))
        throw DependencyError("joint-train: text pretraining checkpoint missing under " + ws.checkpoints("text") +
                              "; run pretrain-text or pass --from-scratch");
    if (!io::groups_present(ws.checkpoints("video"), video_groups))
        throw DependencyError("joint-train: video pretraining checkpoint missing under " + ws.checkpoints("video") +
                              "; run pretrain-video or pass --from-scratch");
    io::load_groups(ws.checkpoints("text"), text_groups);
    io::load_groups(ws.checkpoints("video"), video_groups);
}

void dump_alignment_heatmaps(const Workspace& ws, const Model& model) {
    io::ensure_dir(ws.plots() + "/heatmaps");
    int64_t n = 6;
    int64_t sites = model.cfg.latent_sites_for_frames(model.cfg.pseudo_video_frames(n));
    io::write_text_file(ws.plots() + "/heatmaps/text_to_video_soft.csv",
                        alignment_to_csv(soft_alignment(n, sites, model.cfg.gaussian_mu, model.cfg.gaussian_sigma)));
    io::write_text_file(ws.plots() + "/heatmaps/video_to_text_soft.csv",
                        alignment_to_csv(soft_alignment(sites, n, model.cfg.gaussian_mu, model.cfg.gaussian_sigma)));
    io::write_text_file(ws.plots() + "/heatmaps/text_to_video_hard.csv", alignment_to_csv(hard_alignment(n, sites)));
}

StageResult stage_joint_train(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    guard_overwrite(ws.metrics() + "/joint.csv", opts.force, "joint-train");
    LoadedCorpus lc = load_corpus(ws, cfg);
    Model model(cfg, opts.seed);
    load_pretrained(model, ws, opts.from_scratch);
    Trainer trainer(model, cfg);
    Rng rng(opts.seed ^ 0x70177ull);
    auto rows = trainer.train_joint(lc.corpus, FreezePlan::from_config(cfg), cfg.joint_steps, rng.next_u64(),
                                    &lc.dev_texts);
    write_metrics_artifacts(ws, "joint", rows);
    save_checkpoint(ws.checkpoints("joint"), model, ws, rng.raw_state());
    dump_alignment_heatmaps(ws, model);
    write_manifest(ws, opts, cfg);
    StageResult r;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "joint-train: %lld steps, dev back-translation BLEU-1 %.2f\n",
                  static_cast<long long>(cfg.joint_steps), rows.empty() ? 0.0 : rows.back().bt_bleu1);
    r.stdout_text = buf;
    return r;
}

// loads a model from a checkpoint directory (config snapshot + vocab + params)
struct OpenedModel {
    ModelConfig cfg;
    Vocabulary vocab;
    std::unique_ptr<Model> model;
};

OpenedModel open_checkpoint(const std::string& dir) {
    if (!io::exists(dir + "/config.snapshot"))
        throw DependencyError("checkpoint not found at " + dir + " (missing config.snapshot)");
    OpenedModel om;
    om.cfg = ModelConfig::load(dir + "/config.snapshot");
    om.vocab = Vocabulary::load(dir + "/vocab.txt");
    om.model = std::make_unique<Model>(om.cfg, 0);
    io::load_groups(dir, om.model->groups());
    return om;
}

std::string default_checkpoint(const RunOptions& opts) {
    if (!opts.checkpoint.empty()) return opts.checkpoint;
    if (opts.out_dir.empty()) throw UsageError("translate/generate/evaluate: pass --checkpoint or --out");
    return Workspace{opts.out_dir}.checkpoints("joint");
}

StageResult stage_translate(const RunOptions& opts, const ModelConfig&) {
    if (opts.input_path.empty()) throw UsageError("translate: pass --input <clip base path (without .bin)>");
    OpenedModel om = open_checkpoint(default_checkpoint(opts));
    VideoClip clip = io::load_clip(opts.input_path);
    std::vector<int> tokens = om.model->translate_clip(clip, om.cfg.aligner_mode);
    std::string sentence = om.vocab.detokenize(tokens);

    json sidecar;
    sidecar["input"] = opts.input_path;
    sidecar["text"] = sentence;
    sidecar["token_ids"] = tokens;
    sidecar["config_hash"] = om.cfg.hash_hex();
    std::string side_path = opts.output_path;
    if (side_path.empty()) {
        if (opts.out_dir.empty()) {
            side_path = opts.input_path + ".translation.json";
        } else {
            Workspace ws{opts.out_dir};
            io::ensure_dir(ws.reports());
            side_path = ws.reports() + "/" + fs::path(opts.input_path).filename().string() + ".translation.json";
        }
    }
    io::write_text_file(side_path, sidecar.dump(2) + "\n");
    StageResult r;
    r.stdout_text = sentence + "\n";
    return r;
}

StageResult stage_generate(const RunOptions& opts, const ModelConfig&) {
    if (opts.text.empty()) throw UsageError("generate: pass --text \"<sentence>\"");
    OpenedModel om = open_checkpoint(default_checkpoint(opts));
    std::vector<int> tokens;
    try {
        tokens = om.vocab.tokenize(opts.text);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("generate: ") + e.what());
    }
    if (tokens.empty()) throw UsageError("generate: empty sentence");

    VideoTokenSequence vt = om.model->generate_video_tokens(tokens, om.cfg.aligner_mode);
    VideoClip clip = om.model->decode_tokens_to_clip(vt);
    std::vector<int> roundtrip = om.model->decode_tokens_to_text(vt, om.cfg.aligner_mode);
    double bleu1 = sentence_bleu1(roundtrip, tokens);

    std::string base = opts.output_path;
    if (base.empty()) {
        if (opts.out_dir.empty()) throw UsageError("generate: pass --output <clip base path> or --out <dir>");
        Workspace ws{opts.out_dir};
        io::ensure_dir(ws.generated());
        base = ws.generated() + "/gen_" + std::to_string(std::hash<std::string>{}(opts.text) % 1000000);
    }
    io::save_clip(base, clip);
    json sidecar;
    sidecar["text"] = opts.text;
    sidecar["clip"] = base + ".bin";
    sidecar["frames"] = clip.t();
    sidecar["video_tokens"] = vt.indices;
    sidecar["roundtrip_text"] = om.vocab.detokenize(roundtrip);
    sidecar["roundtrip_bleu1"] = bleu1;
    sidecar["config_hash"] = om.cfg.hash_hex();
    io::write_text_file(base + ".meta.json", sidecar.dump(2) + "\n");
    StageResult r;
    r.stdout_text = base + ".bin\n";
    return r;
}

StageResult stage_evaluate(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    guard_overwrite(ws.reports() + "/evaluate.json", opts.force, "evaluate");
    OpenedModel om = open_checkpoint(default_checkpoint(opts));
    LoadedCorpus lc = load_corpus(ws, om.cfg, /*with_videos=*/false);
    (void)cfg;

    std::vector<TextSequence> refs, hyps;
    for (size_t i = 0; i < lc.dev_texts.size() && i < lc.dev_clips.size(); ++i) {
        refs.push_back(lc.dev_texts[i]);
        hyps.push_back(TextSequence{om.model->translate_clip(lc.dev_clips[i], om.cfg.aligner_mode)});
    }
    BleuReport slt = bleu(hyps, refs);

    BleuReport bt = back_translation_bleu(
        lc.dev_texts, [&](const std::vector<int>& t) { return om.model->roundtrip_text(t, om.cfg.aligner_mode); });

    std::vector<VideoClip> generated;
    for (const auto& t : lc.dev_texts)
        generated.push_back(om.model->decode_tokens_to_clip(om.model->generate_video_tokens(t.tokens, om.cfg.aligner_mode)));
    // mean-pooled encoder features over equal-length groups are comparable;
    // the proxy pools over sites so variable lengths are fine
    FvdProxyReport fvd = frechet_feature_distance(lc.dev_clips, generated, om.model->vq);

    json report;
    report["bleu1"] = slt.bleu1;
    report["bleu4"] = slt.bleu4;
    report["bt_bleu1"] = bt.bleu1;
    report["bt_bleu4"] = bt.bleu4;
    report["fvd_proxy"] = fvd.distance;
    report["config_hash"] = om.cfg.hash_hex();
    report["seed"] = opts.seed;
    io::ensure_dir(ws.reports());
    io::write_text_file(ws.reports() + "/evaluate.json", report.dump(2) + "\n");
    write_manifest(ws, opts, om.cfg);
    StageResult r;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "evaluate: translation B@1 %.2f B@4 %.2f | back-translation B@1 %.2f B@4 %.2f | fvd-proxy %.4f\n",
                  slt.bleu1, slt.bleu4, bt.bleu1, bt.bleu4, fvd.distance);
    r.stdout_text = buf;
    return r;
}

StageResult stage_check_order(const RunOptions& opts, const ModelConfig& cfg) {
    if (opts.input_path.empty()) throw UsageError("check-order: pass --input <gloss csv>");
    if (opts.texts_path.empty()) throw UsageError("check-order: pass --texts <sentences file>");
    Workspace ws{opts.out_dir};
    Vocabulary vocab = io::exists(ws.corpus() + "/vocab.txt") ? Vocabulary::load(ws.corpus() + "/vocab.txt")
                                                              : Vocabulary::built_in(cfg.vocab_size);
    GlossAnnotation ann = parse_gloss_csv(io::read_text_file(opts.input_path));
    auto grouped = sentence_level_glosses(ann);
    std::vector<TextSequence> texts = load_text_file_tokens(opts.texts_path, vocab);
    if (grouped.size() != texts.size())
        throw UsageError("check-order: " + std::to_string(grouped.size()) + " annotated videos vs " +
                         std::to_string(texts.size()) + " reference sentences");
    std::vector<std::pair<std::vector<int>, TextSequence>> cases;
    for (size_t i = 0; i < grouped.size(); ++i) {
        std::vector<int> gloss_tokens;
        for (const auto& g : grouped[i].second) {
            int id = vocab.id_of(g);
            if (id >= 0) gloss_tokens.push_back(id);
        }
        if (gloss_tokens.empty()) continue;
        cases.emplace_back(std::move(gloss_tokens), texts[i]);
    }
    OrderConsistencyReport rep = order_report(cases);
    json j;
    j["strict"] = rep.strict;
    j["disorder2"] = rep.disorder2;
    j["disorder3"] = rep.disorder3;
    j["sentence_count"] = rep.sentence_count;
    if (!opts.out_dir.empty()) {
        io::ensure_dir(ws.reports());
        io::write_text_file(ws.reports() + "/order_report.json", j.dump(2) + "\n");
        write_manifest(ws, opts, cfg);
    }
    StageResult r;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "order consistency over %lld sentences: strict %.4f | <=2 disorder %.4f | <=3 disorder %.4f\n",
                  static_cast<long long>(rep.sentence_count), rep.strict, rep.disorder2, rep.disorder3);
    r.stdout_text = buf;
    return r;
}

StageResult stage_ablate(const RunOptions& opts, const ModelConfig& cfg) {
    Workspace ws{opts.out_dir};
    if (opts.matrix != "aligner" && opts.matrix != "freezing" && opts.matrix != "multitask")
        throw UsageError("ablate: pass --matrix aligner|freezing|multitask");
    std::string csv_path = ws.metrics() + "/ablate_" + opts.matrix + ".csv";
    guard_overwrite(csv_path, opts.force, "ablate");
    LoadedCorpus lc = load_corpus(ws, cfg);

    struct Variant {
        std::string name;
        ModelConfig cfg;
    };
    std::vector<Variant> variants;
    if (opts.matrix == "aligner") {
        for (AlignerMode m : {AlignerMode::Pooling, AlignerMode::Hard, AlignerMode::Soft}) {
            Variant v{to_string(m), cfg};
            v.cfg.aligner_mode = m;
            variants.push_back(std::move(v));
        }
    } else if (opts.matrix == "freezing") {
        for (const char* name : {"video_encoder", "video_decoder", "text_encoder", "text_decoder"}) {
            Variant v{std::string("freeze_") + name, cfg};
            v.cfg.set_key(std::string("freeze_") + name, "true");
            variants.push_back(std::move(v));
        }
    } else {
        for (const char* name : {"w_text", "w_codebook", "w_video", "w_t2v2t", "w_v2t2v"}) {
            Variant v{std::string("zero_") + name, cfg};
            v.cfg.set_key(name, "0");
            variants.push_back(std::move(v));
        }
    }

    std::ostringstream csv;
    csv << "variant,bt_bleu1,loss_text,loss_codebook,loss_video,loss_t2v2t,loss_v2t2v\n";
    std::string summary;
    for (const auto& variant : variants) {
        Model model(variant.cfg, opts.seed);
        load_pretrained(model, ws, opts.from_scratch);
        Trainer trainer(model, variant.cfg);
        auto rows = trainer.train_joint(lc.corpus, FreezePlan::from_config(variant.cfg), variant.cfg.joint_steps,
                                        opts.seed ^ 0xab1a7eull, &lc.dev_texts);
        const MetricsRow& last = rows.back();
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", variant.name.c_str(), last.bt_bleu1,
                      last.loss_text, last.loss_codebook, last.loss_video, last.loss_t2v2t, last.loss_v2t2v);
        csv << buf;
        summary += variant.name + ": bt_bleu1 " + std::to_string(last.bt_bleu1) + "\n";
        save_checkpoint(ws.checkpoints("joint_" + variant.name), model, ws, opts.seed);
    }
    io::ensure_dir(ws.metrics());
    io::write_text_file(csv_path, csv.str());
    write_manifest(ws, opts, cfg);
    StageResult r;
    r.stdout_text = summary;
    return r;
}

}  // namespace

ModelConfig resolve_config(const RunOptions& opts) {
    ModelConfig cfg = opts.config_path.empty() ? ModelConfig::defaults() : ModelConfig::load(opts.config_path);
    for (const auto& [k, v] : opts.overrides) cfg.set_key(k, v);
    cfg.validate();
    return cfg;
}

StageResult run_stage(const RunOptions& opts) {
    static const std::set<std::string> known{"gen-corpus", "pretrain-text", "pretrain-video", "joint-train",
                                             "translate",  "generate",      "evaluate",      "check-order",
                                             "ablate"};
    if (!known.count(opts.stage)) throw UsageError("unknown stage '" + opts.stage + "'");
    bool needs_out = opts.stage != "translate" && opts.stage != "generate" && opts.stage != "check-order";
    if (needs_out && opts.out_dir.empty()) throw UsageError(opts.stage + ": pass --out <workspace dir>");
    ModelConfig cfg = resolve_config(opts);

    if (opts.stage == "gen-corpus") return stage_gen_corpus(opts, cfg);
    if (opts.stage == "pretrain-text") return stage_pretrain_text(opts, cfg);
    if (opts.stage == "pretrain-video") return stage_pretrain_video(opts, cfg);
    if (opts.stage == "joint-train") return stage_joint_train(opts, cfg);
    if (opts.stage == "translate") return stage_translate(opts, cfg);
    if (opts.stage == "generate") return stage_generate(opts, cfg);
    if (opts.stage == "evaluate") return stage_evaluate(opts, cfg);
    if (opts.stage == "check-order") return stage_check_order(opts, cfg);
    return stage_ablate(opts, cfg);
}

}  // namespace xmbt

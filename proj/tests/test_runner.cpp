#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "core/io.hpp"
#include "core/runner.hpp"

using namespace xmbt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) : path((fs::temp_directory_path() / name).string()) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunOptions tiny(const std::string& stage, const std::string& out, uint64_t seed) {
    RunOptions o;
    o.stage = stage;
    o.out_dir = out;
    o.seed = seed;
    o.overrides = {{"corpus_texts", "12"}, {"corpus_videos", "8"},  {"corpus_dev", "6"},
                   {"pretrain_text_steps", "8"}, {"pretrain_video_steps", "4"}, {"joint_steps", "4"},
                   {"eval_interval", "4"},       {"batch_video", "1"},          {"clip_h", "8"},
                   {"clip_w", "8"},              {"d_code", "8"},               {"codebook_size", "16"},
                   {"conv_c1", "6"},             {"conv_c2", "8"},              {"d_text", "32"},
                   {"text_layers", "1"},         {"text_heads", "2"},           {"d_video", "24"},
                   {"prior_layers", "1"},        {"prior_heads", "2"}};
    return o;
}

}  // namespace

TEST_CASE("stage dependencies fail with actionable errors") {
    TempDir tmp("xmbt_runner_dep");
    CHECK_THROWS_AS(run_stage(tiny("pretrain-text", tmp.path, 1)), DependencyError);
    run_stage(tiny("gen-corpus", tmp.path, 1));
    try {
        run_stage(tiny("joint-train", tmp.path, 1));
        FAIL("expected DependencyError");
    } catch (const DependencyError& e) {
        CHECK(std::string(e.what()).find("pretrain") != std::string::npos);
    }
}

TEST_CASE("gen-corpus reruns are byte-identical; overwrite needs --force") {
    TempDir a("xmbt_runner_det_a"), b("xmbt_runner_det_b");
    run_stage(tiny("gen-corpus", a.path, 3));
    run_stage(tiny("gen-corpus", b.path, 3));
    auto bytes = [](const std::string& p) { return io::read_text_file(p); };
    CHECK(bytes(a.path + "/corpus/texts.txt") == bytes(b.path + "/corpus/texts.txt"));
    CHECK(bytes(a.path + "/corpus/videos/clip_00003.bin") == bytes(b.path + "/corpus/videos/clip_00003.bin"));
    CHECK(bytes(a.path + "/corpus/dev/texts.txt") == bytes(b.path + "/corpus/dev/texts.txt"));

    CHECK_THROWS_AS(run_stage(tiny("gen-corpus", a.path, 3)), UsageError);  // no --force
    RunOptions forced = tiny("gen-corpus", a.path, 4);
    forced.force = true;
    run_stage(forced);  // allowed
    CHECK(bytes(a.path + "/corpus/texts.txt") != bytes(b.path + "/corpus/texts.txt"));
}

TEST_CASE("manifest records stage, seed and config hash") {
    TempDir tmp("xmbt_runner_manifest");
    run_stage(tiny("gen-corpus", tmp.path, 9));
    std::string manifest = io::read_text_file(tmp.path + "/manifests/gen-corpus.json");
    CHECK(manifest.find("\"stage\": \"gen-corpus\"") != std::string::npos);
    CHECK(manifest.find("\"seed\": 9") != std::string::npos);
    CHECK(manifest.find("config_hash") != std::string::npos);
}

TEST_CASE("full tiny workspace: stages chain and artifacts land") {
    TempDir tmp("xmbt_runner_chain");
    run_stage(tiny("gen-corpus", tmp.path, 5));
    run_stage(tiny("pretrain-text", tmp.path, 5));
    run_stage(tiny("pretrain-video", tmp.path, 5));
    run_stage(tiny("joint-train", tmp.path, 5));
    CHECK(io::exists(tmp.path + "/metrics/joint.csv"));
    CHECK(io::exists(tmp.path + "/plots/joint.ppm"));
    CHECK(io::exists(tmp.path + "/plots/heatmaps/text_to_video_soft.csv"));
    CHECK(io::exists(tmp.path + "/checkpoints/joint/mapper.params"));
    CHECK(io::exists(tmp.path + "/checkpoints/joint/config.snapshot"));
    CHECK(io::exists(tmp.path + "/checkpoints/joint/rng_state.txt"));

    RunOptions ev = tiny("evaluate", tmp.path, 5);
    ev.overrides.push_back({"corpus_dev", "6"});
    // feature dim 8 needs 9+ samples; the tiny dev set of 6 must fail loudly
    CHECK_THROWS(run_stage(ev));

    RunOptions tr = tiny("translate", tmp.path, 5);
    tr.input_path = tmp.path + "/corpus/dev/clip_00000";
    StageResult res = run_stage(tr);
    CHECK(!res.stdout_text.empty());
    CHECK(io::exists(tmp.path + "/reports/clip_00000.translation.json"));

    RunOptions bad = tiny("translate", tmp.path, 5);
    bad.input_path = tmp.path + "/corpus/dev/clip_00000";
    // corrupt sidecar: truncate the data file
    io::write_text_file(tmp.path + "/corpus/dev/clip_00000.bin", "xx");
    CHECK_THROWS_AS(run_stage(bad), UsageError);
}

TEST_CASE("ablate rejects unknown matrices") {
    TempDir tmp("xmbt_runner_ablate");
    run_stage(tiny("gen-corpus", tmp.path, 2));
    RunOptions o = tiny("ablate", tmp.path, 2);
    o.matrix = "everything";
    CHECK_THROWS_AS(run_stage(o), UsageError);
}

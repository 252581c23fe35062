// xmbt command-line front end. Links the C API only.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "xmbt.h"

namespace {

struct StageSpec {
    const char* name;
    const char* help;
};

constexpr StageSpec kStages[] = {
    {"gen-corpus", "Generate the synthetic glyph corpus (texts, videos, dev pairs)"},
    {"pretrain-text", "Train the masked text reconstruction model on the corpus texts"},
    {"pretrain-video", "Train the VQ tokenizer and autoregressive prior on the corpus videos"},
    {"joint-train", "Unsupervised joint training over all objectives"},
    {"translate", "Translate a video clip file into text"},
    {"generate", "Generate a video clip from text"},
    {"evaluate", "Compute BLEU, back-translation BLEU and the feature-distance proxy"},
    {"check-order", "Check gloss/text order consistency from a gloss CSV"},
    {"ablate", "Run an ablation matrix (aligner | freezing | multitask)"},
};

int fail(xmbt_status status, const std::string& stage) {
    std::fprintf(stderr, "xmbt %s: %s\n", stage.c_str(), xmbt_last_error());
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xmbt — unsupervised text/video translation on synthetic corpora"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(xmbt_version()));

    std::string config_path, out_dir, checkpoint, input, text, texts_path, matrix, output;
    uint64_t seed = 0;
    bool force = false, from_scratch = false;

    std::vector<CLI::App*> subs;
    for (const auto& s : kStages) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->allow_extras();  // leftover --key value pairs become config overrides
        sub->add_option("--config", config_path, "Config file (key = value lines)");
        sub->add_option("--seed", seed, "Seed controlling every random choice of the stage");
        sub->add_option("--out", out_dir, "Workspace directory for artifacts");
        sub->add_flag("--force", force, "Overwrite artifacts this stage already wrote");
        std::string name = s.name;
        if (name == "joint-train" || name == "ablate")
            sub->add_flag("--from-scratch", from_scratch, "Skip the pretraining checkpoints");
        if (name == "translate" || name == "generate" || name == "evaluate")
            sub->add_option("--checkpoint", checkpoint, "Checkpoint directory (default <out>/checkpoints/joint)");
        if (name == "translate")
            sub->add_option("--input", input, "Clip base path (without .bin/.json)");
        if (name == "check-order") {
            sub->add_option("--input", input, "Gloss annotation CSV");
            sub->add_option("--texts", texts_path, "Reference sentences, one per line");
        }
        if (name == "generate") sub->add_option("--text", text, "Sentence to render");
        if (name == "translate" || name == "generate")
            sub->add_option("--output", output, "Artifact path override");
        if (name == "ablate") sub->add_option("--matrix", matrix, "aligner | freezing | multitask");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = app.get_subcommands().front();
    std::vector<std::string> extras = active->remaining();
    std::vector<std::string> override_storage;
    for (size_t i = 0; i < extras.size(); ++i) {
        std::string key = extras[i];
        if (key.rfind("--", 0) != 0 || i + 1 >= extras.size()) {
            std::fprintf(stderr, "xmbt: expected config override pairs '--key value', got '%s'\n", key.c_str());
            return static_cast<int>(XMBT_USAGE_ERROR);
        }
        override_storage.push_back(key.substr(2) + "=" + extras[++i]);
    }
    std::vector<const char*> overrides;
    for (const auto& s : override_storage) overrides.push_back(s.c_str());

    xmbt_run_options opts{};
    opts.stage = active->get_name().c_str();
    opts.config_path = config_path.empty() ? nullptr : config_path.c_str();
    opts.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    opts.seed = seed;
    opts.force = force ? 1 : 0;
    opts.from_scratch = from_scratch ? 1 : 0;
    opts.checkpoint = checkpoint.empty() ? nullptr : checkpoint.c_str();
    opts.input_path = input.empty() ? nullptr : input.c_str();
    opts.text = text.empty() ? nullptr : text.c_str();
    opts.texts_path = texts_path.empty() ? nullptr : texts_path.c_str();
    opts.matrix = matrix.empty() ? nullptr : matrix.c_str();
    opts.output_path = output.empty() ? nullptr : output.c_str();
    opts.overrides = overrides.data();
    opts.n_overrides = overrides.size();

    char* stdout_text = nullptr;
    xmbt_status status = xmbt_run(&opts, &stdout_text);
    if (status != XMBT_OK) return fail(status, active->get_name());
    if (stdout_text && *stdout_text) std::fputs(stdout_text, stdout);
    xmbt_string_free(stdout_text);
    return 0;
}

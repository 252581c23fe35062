#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace xmbt {

// One CLI invocation. Stages: gen-corpus, pretrain-text, pretrain-video,
// joint-train, translate, generate, evaluate, check-order, ablate.
struct RunOptions {
    std::string stage;
    std::string config_path;                                        // empty -> defaults
    std::vector<std::pair<std::string, std::string>> overrides;     // --key value pairs
    std::string out_dir;
    uint64_t seed = 0;
    bool force = false;
    bool from_scratch = false;
    std::string checkpoint;   // translate/generate/evaluate; default <out>/checkpoints/joint
    std::string input_path;   // translate: clip base path; check-order: gloss csv
    std::string text;         // generate: input sentence
    std::string texts_path;   // check-order: reference sentences, one per line
    std::string matrix;       // ablate: aligner | freezing | multitask
    std::string output_path;  // translate/generate artifact override
};

struct StageResult {
    std::string stdout_text;  // printed by the CLI when non-empty
};

StageResult run_stage(const RunOptions& opts);

ModelConfig resolve_config(const RunOptions& opts);

}  // namespace xmbt

#include "xmbt.h"

#include <json.hpp>

#include <cstring>
#include <memory>
#include <string>

#include "core/backtranslation.hpp"
#include "core/io.hpp"
#include "core/metrics.hpp"
#include "core/runner.hpp"

namespace {

thread_local std::string g_last_error = "";

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
xmbt_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return XMBT_OK;
    } catch (const xmbt::UsageError& e) {
        g_last_error = e.what();
        return XMBT_USAGE_ERROR;
    } catch (const xmbt::DependencyError& e) {
        g_last_error = e.what();
        return XMBT_DEPENDENCY_ERROR;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return XMBT_USAGE_ERROR;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return XMBT_RUNTIME_ERROR;
    } catch (...) {
        g_last_error = "unknown error";
        return XMBT_RUNTIME_ERROR;
    }
}

}  // namespace

struct xmbt_config {
    xmbt::ModelConfig cfg;
};

struct xmbt_model {
    xmbt::ModelConfig cfg;
    xmbt::Vocabulary vocab;
    std::unique_ptr<xmbt::Model> model;
};

extern "C" {

const char* xmbt_version(void) { return "0.1.0"; }

const char* xmbt_last_error(void) { return g_last_error.c_str(); }

void xmbt_string_free(char* s) { std::free(s); }

xmbt_status xmbt_config_create(xmbt_config** out) {
    if (!out) return XMBT_USAGE_ERROR;
    return guarded([&] { *out = new xmbt_config{xmbt::ModelConfig::defaults()}; });
}

xmbt_status xmbt_config_load(const char* path, xmbt_config** out) {
    if (!out || !path) {
        g_last_error = "xmbt_config_load: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] { *out = new xmbt_config{xmbt::ModelConfig::load(path)}; });
}

xmbt_status xmbt_config_set(xmbt_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) {
        g_last_error = "xmbt_config_set: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] {
        cfg->cfg.set_key(key, value);
        cfg->cfg.validate();
    });
}

xmbt_status xmbt_config_serialize(const xmbt_config* cfg, char** out) {
    if (!cfg || !out) {
        g_last_error = "xmbt_config_serialize: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] { *out = dup_string(cfg->cfg.serialize()); });
}

xmbt_status xmbt_config_save(const xmbt_config* cfg, const char* path) {
    if (!cfg || !path) {
        g_last_error = "xmbt_config_save: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] { cfg->cfg.save(path); });
}

void xmbt_config_free(xmbt_config* cfg) { delete cfg; }

xmbt_status xmbt_run(const xmbt_run_options* options, char** stdout_text) {
    if (!options || !options->stage) {
        g_last_error = "xmbt_run: null options or stage";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] {
        xmbt::RunOptions opts;
        opts.stage = options->stage;
        if (options->config_path) opts.config_path = options->config_path;
        if (options->out_dir) opts.out_dir = options->out_dir;
        opts.seed = options->seed;
        opts.force = options->force != 0;
        opts.from_scratch = options->from_scratch != 0;
        if (options->checkpoint) opts.checkpoint = options->checkpoint;
        if (options->input_path) opts.input_path = options->input_path;
        if (options->text) opts.text = options->text;
        if (options->texts_path) opts.texts_path = options->texts_path;
        if (options->matrix) opts.matrix = options->matrix;
        if (options->output_path) opts.output_path = options->output_path;
        for (size_t i = 0; i < options->n_overrides; ++i) {
            const char* kv = options->overrides[i];
            const char* eq = kv ? std::strchr(kv, '=') : nullptr;
            if (!eq) throw xmbt::UsageError("override must be key=value, got '" + std::string(kv ? kv : "") + "'");
            opts.overrides.emplace_back(std::string(kv, eq), std::string(eq + 1));
        }
        xmbt::StageResult res = xmbt::run_stage(opts);
        if (stdout_text) *stdout_text = dup_string(res.stdout_text);
    });
}

xmbt_status xmbt_model_open(const char* checkpoint_dir, xmbt_model** out) {
    if (!checkpoint_dir || !out) {
        g_last_error = "xmbt_model_open: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] {
        std::string dir = checkpoint_dir;
        if (!xmbt::io::exists(dir + "/config.snapshot"))
            throw xmbt::DependencyError("checkpoint not found at " + dir);
        auto handle = std::make_unique<xmbt_model>();
        handle->cfg = xmbt::ModelConfig::load(dir + "/config.snapshot");
        handle->vocab = xmbt::Vocabulary::load(dir + "/vocab.txt");
        handle->model = std::make_unique<xmbt::Model>(handle->cfg, 0);
        xmbt::io::load_groups(dir, handle->model->groups());
        *out = handle.release();
    });
}

void xmbt_model_free(xmbt_model* model) { delete model; }

xmbt_status xmbt_model_translate(xmbt_model* model, const char* clip_base_path, char** text_out) {
    if (!model || !clip_base_path || !text_out) {
        g_last_error = "xmbt_model_translate: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] {
        xmbt::VideoClip clip = xmbt::io::load_clip(clip_base_path);
        std::vector<int> tokens = model->model->translate_clip(clip, model->cfg.aligner_mode);
        *text_out = dup_string(model->vocab.detokenize(tokens));
    });
}

xmbt_status xmbt_model_generate(xmbt_model* model, const char* text, const char* out_clip_base,
                                char** sidecar_json_out) {
    if (!model || !text || !out_clip_base) {
        g_last_error = "xmbt_model_generate: null argument";
        return XMBT_USAGE_ERROR;
    }
    return guarded([&] {
        std::vector<int> tokens = model->vocab.tokenize(text);
        if (tokens.empty()) throw xmbt::UsageError("generate: empty sentence");
        xmbt::VideoTokenSequence vt = model->model->generate_video_tokens(tokens, model->cfg.aligner_mode);
        xmbt::VideoClip clip = model->model->decode_tokens_to_clip(vt);
        xmbt::io::save_clip(out_clip_base, clip);
        std::vector<int> rt = model->model->decode_tokens_to_text(vt, model->cfg.aligner_mode);
        nlohmann::json sidecar;
        sidecar["text"] = text;
        sidecar["clip"] = std::string(out_clip_base) + ".bin";
        sidecar["roundtrip_text"] = model->vocab.detokenize(rt);
        sidecar["roundtrip_bleu1"] = xmbt::sentence_bleu1(rt, tokens);
        std::string dump = sidecar.dump(2) + "\n";
        xmbt::io::write_text_file(std::string(out_clip_base) + ".meta.json", dump);
        if (sidecar_json_out) *sidecar_json_out = dup_string(dump);
    });
}

}  // extern "C"

#include "backtranslation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace xmbt {

namespace {
Rng make_model_rng(uint64_t seed) { return Rng(seed ^ 0xab5c4d3e2f1a0908ull); }
}  // namespace

Model::Model(const ModelConfig& config, uint64_t seed)
    : cfg(config),
      init_rng_(make_model_rng(seed)),
      text(cfg, text_encoder, text_decoder, init_rng_),
      vq(cfg, video_encoder, video_decoder, init_rng_),
      prior(cfg, video_decoder, init_rng_),
      aligner(cfg, mapper, init_rng_) {
    bridge = LinearLayer::create(mapper, "bridge", cfg.d_video, cfg.d_code, init_rng_);
}

VideoTokenSequence Model::generate_video_tokens(const std::vector<int>& text_tokens, AlignerMode mode) const {
    if (text_tokens.empty()) throw std::invalid_argument("generate: empty text");
    int64_t frames = cfg.pseudo_video_frames(static_cast<int64_t>(text_tokens.size()));
    VideoTokenSequence out;
    out.grid_t = frames / cfg.downsample_t;
    out.grid_h = cfg.clip_h / cfg.downsample_s;
    out.grid_w = cfg.clip_w / cfg.downsample_s;
    int64_t sites = out.grid_t * out.grid_h * out.grid_w;
    Var et = text.encode(text_tokens);
    Var dv = aligner.map_text_to_video(et, sites, mode);
    Var proposal = bridge.apply(dv);  // where the generation side expects each site to land in code space
    const Tensor& codes = vq.codebook()->val;
    Tensor bias({sites, cfg.codebook_size});
    for (int64_t i = 0; i < sites; ++i)
        for (int64_t k = 0; k < cfg.codebook_size; ++k) {
            Scalar d2 = 0;
            for (int64_t c = 0; c < cfg.d_code; ++c) {
                Scalar t = proposal->val.at2(i, c) - codes.at2(k, c);
                d2 += t * t;
            }
            bias.at2(i, k) = -cfg.cond_scale * d2;
        }
    out.indices = prior.generate_greedy(sites, &bias);
    return out;
}

std::vector<int> Model::decode_tokens_to_text(const VideoTokenSequence& tokens, AlignerMode mode) const {
    if (tokens.indices.empty()) throw std::invalid_argument("translate: empty token sequence");
    int64_t frames = tokens.grid_t * cfg.downsample_t;
    int64_t n_out = cfg.pseudo_text_len(frames);
    Var emb = vq.code_rows(tokens.indices);
    Var dt = aligner.map_video_to_text(emb, n_out, mode);
    return text.decode_greedy(dt->val, cfg.max_text_len);
}

std::vector<int> Model::translate_clip(const VideoClip& clip, AlignerMode mode) const {
    LatentGrid grid = vq.encode(clip);
    auto [tokens, q] = vq.quantize(grid);
    return decode_tokens_to_text(tokens, mode);
}

std::vector<int> Model::roundtrip_text(const std::vector<int>& text_tokens, AlignerMode mode) const {
    return decode_tokens_to_text(generate_video_tokens(text_tokens, mode), mode);
}

VideoClip Model::decode_tokens_to_clip(const VideoTokenSequence& tokens) const {
    LatentGrid grid;
    grid.grid_t = tokens.grid_t;
    grid.grid_h = tokens.grid_h;
    grid.grid_w = tokens.grid_w;
    grid.embeddings = vq.code_rows(tokens.indices)->val;
    return vq.decode(grid);
}

Var Model::text_reconstruction_term(const std::vector<const TextSequence*>& batch, uint64_t seed) const {
    std::vector<std::pair<Var, Scalar>> terms;
    uint64_t salt = seed;
    for (const TextSequence* t : batch) {
        if (t->length() < 4) continue;  // no interior span to mask
        CorruptedText c = TextDenoiser::corrupt(*t, cfg.mask_ratio, salt++);
        terms.push_back({text.reconstruction_loss(c), 0.0});
    }
    if (terms.empty()) return constant(Tensor::scalar(0.0));
    for (auto& [v, w] : terms) w = 1.0 / static_cast<Scalar>(terms.size());
    return add_scalars(terms);
}

Model::VideoTerms Model::video_reconstruction_terms(const std::vector<const VideoClip*>& batch) const {
    if (batch.empty()) throw std::invalid_argument("video_reconstruction: empty batch");
    std::vector<std::pair<Var, Scalar>> cb_terms, video_terms;
    VideoTerms out;
    Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
    for (const VideoClip* clip : batch) {
        vq.check_divisible(*clip);
        Var z = vq.encode_var(clip->frames);
        std::vector<int> tokens = vq.nearest_codes(z->val);
        Var e = vq.code_rows(tokens);
        Tensor gap = e->val;
        for (int64_t i = 0; i < gap.numel(); ++i) gap.at(i) -= z->val.at(i);
        Var st = add(z, constant(gap));  // straight-through: value of e, gradient of z
        int64_t gt = clip->t() / cfg.downsample_t;
        int64_t gh = clip->h() / cfg.downsample_s;
        int64_t gw = clip->w() / cfg.downsample_s;
        Var recon = vq.decode_var(st, gt, gh, gw);
        Var mse = mse_loss(recon, constant(clip->frames));
        Var prior_nll = prior.nll(tokens, nullptr);
        cb_terms.push_back({row_l2_mean(detach(z), e), inv});
        cb_terms.push_back({row_l2_mean(z, constant(e->val)), inv * cfg.commitment_weight});
        video_terms.push_back({mse, inv});
        video_terms.push_back({prior_nll, inv});
        out.recon_mse += mse->val.item() * inv;
        out.codebook_distance += VideoTokenizer::codebook_distance(z->val, e->val) * inv;
        out.tokens = tokens;
        out.encoder_rows = z->val;
    }
    out.codebook = add_scalars(cb_terms);
    out.video = add_scalars(video_terms);
    return out;
}

Var Model::t2v2t_term(const std::vector<const TextSequence*>& batch, AlignerMode mode) const {
    if (batch.empty()) throw std::invalid_argument("t2v2t: empty batch");
    std::vector<std::pair<Var, Scalar>> terms;
    Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
    for (const TextSequence* t : batch) {
        if (t->tokens.empty()) throw std::invalid_argument("t2v2t: empty text");
        // forward generation is detached; only the video->text half trains here
        VideoTokenSequence tokens = generate_video_tokens(t->tokens, mode);
        Var emb = vq.code_rows(tokens.indices);
        Var dt = aligner.map_video_to_text(detach(emb), static_cast<int64_t>(t->tokens.size()), mode);
        terms.push_back({text.sentence_nll(dt, t->tokens), inv});
    }
    return add_scalars(terms);
}

Var Model::v2t2v_term(const std::vector<const VideoClip*>& batch, AlignerMode mode) const {
    if (batch.empty()) throw std::invalid_argument("v2t2v: empty batch");
    std::vector<std::pair<Var, Scalar>> terms;
    Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
    for (const VideoClip* clip : batch) {
        // translation direction is detached
        std::vector<int> pseudo = translate_clip(*clip, mode);
        // generation direction trains: text encoder, mappers, bridge, decoder
        Var et = text.encode(pseudo);
        int64_t gt = clip->t() / cfg.downsample_t;
        int64_t gh = clip->h() / cfg.downsample_s;
        int64_t gw = clip->w() / cfg.downsample_s;
        Var dv = aligner.map_text_to_video(et, gt * gh * gw, mode);
        Var latent = bridge.apply(dv);
        Var recon = vq.decode_var(latent, gt, gh, gw);
        terms.push_back({mse_loss(recon, constant(clip->frames)), inv});
    }
    return add_scalars(terms);
}

Model::JointBreakdown Model::joint_loss(const std::vector<const TextSequence*>& text_batch,
                                        const std::vector<const VideoClip*>& video_batch,
                                        const LossWeights& weights, uint64_t seed) const {
    if (text_batch.empty() && video_batch.empty())
        throw std::invalid_argument("joint_loss: both batches empty");
    JointBreakdown out;
    std::vector<std::pair<Var, Scalar>> total_terms;
    auto add_term = [&](Var term, double weight, double& slot) {
        slot = term->val.item();
        if (weight != 0.0) total_terms.push_back({term, weight});
    };
    if (!text_batch.empty()) {
        add_term(text_reconstruction_term(text_batch, seed), weights.text, out.text);
        add_term(t2v2t_term(text_batch, cfg.aligner_mode), weights.t2v2t, out.t2v2t);
    }
    if (!video_batch.empty()) {
        VideoTerms vt = video_reconstruction_terms(video_batch);
        add_term(vt.codebook, weights.codebook, out.codebook);
        add_term(vt.video, weights.video, out.video);
        add_term(v2t2v_term(video_batch, cfg.aligner_mode), weights.v2t2v, out.v2t2v);
    }
    out.weighted_total = weights.text * out.text + weights.codebook * out.codebook + weights.video * out.video +
                         weights.t2v2t * out.t2v2t + weights.v2t2v * out.v2t2v;
    out.total = total_terms.empty() ? constant(Tensor::scalar(0.0)) : add_scalars(total_terms);
    return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    os << "step,loss_text,loss_codebook,loss_video,loss_t2v2t,loss_v2t2v,bt_bleu1\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      static_cast<long long>(r.step), r.loss_text, r.loss_codebook, r.loss_video, r.loss_t2v2t,
                      r.loss_v2t2v, r.bt_bleu1);
        os << buf;
    }
    return os.str();
}

Trainer::Trainer(Model& model, const ModelConfig& cfg)
    : m_(&model), cfg_(cfg), opt_(cfg.lr, 0.9, 0.999, 1e-5) {
    for (ParamGroup* g : model.groups()) opt_.attach(g);
}

std::vector<MetricsRow> Trainer::pretrain_text(const std::vector<TextSequence>& texts, int64_t steps, uint64_t seed) {
    if (texts.empty()) throw std::invalid_argument("pretrain_text: empty corpus");
    Rng rng(seed);
    std::vector<MetricsRow> rows;
    double acc = 0;
    int64_t acc_n = 0;
    for (int64_t step = 0; step < steps; ++step) {
        std::vector<const TextSequence*> batch;
        for (int64_t b = 0; b < cfg_.batch_text; ++b)
            batch.push_back(&texts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(texts.size()) - 1))]);
        opt_.zero_grads();
        Var loss = m_->text_reconstruction_term(batch, rng.next_u64());
        if (loss->needs_grad) {
            backward(loss);
            opt_.step();
        }
        acc += loss->val.item();
        ++acc_n;
        if ((step + 1) % cfg_.eval_interval == 0 || step + 1 == steps) {
            MetricsRow r;
            r.step = step + 1;
            r.loss_text = acc / static_cast<double>(acc_n);
            rows.push_back(r);
            acc = 0;
            acc_n = 0;
        }
    }
    return rows;
}

std::vector<MetricsRow> Trainer::pretrain_video(const std::vector<VideoClip>& videos, int64_t steps, uint64_t seed) {
    if (videos.empty()) throw std::invalid_argument("pretrain_video: empty corpus");
    Rng rng(seed);
    std::vector<MetricsRow> rows;
    double acc_cb = 0, acc_v = 0;
    int64_t acc_n = 0;
    m_->vq.reset_usage();
    for (int64_t step = 0; step < steps; ++step) {
        std::vector<const VideoClip*> batch;
        for (int64_t b = 0; b < cfg_.batch_video; ++b)
            batch.push_back(&videos[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(videos.size()) - 1))]);
        opt_.zero_grads();
        Model::VideoTerms vt = m_->video_reconstruction_terms(batch);
        m_->vq.note_usage(vt.tokens);
        backward(add_scalars({{vt.codebook, 1.0}, {vt.video, 1.0}}));
        opt_.step();
        acc_cb += vt.codebook->val.item();
        acc_v += vt.video->val.item();
        ++acc_n;
        if ((step + 1) % 100 == 0) {
            Rng reseed(seed ^ (0x9e37ull * static_cast<uint64_t>(step + 1)));
            m_->vq.reseed_dead_codes(vt.encoder_rows, reseed);
            m_->vq.reset_usage();
        }
        if ((step + 1) % cfg_.eval_interval == 0 || step + 1 == steps) {
            MetricsRow r;
            r.step = step + 1;
            r.loss_codebook = acc_cb / static_cast<double>(acc_n);
            r.loss_video = acc_v / static_cast<double>(acc_n);
            rows.push_back(r);
            acc_cb = acc_v = 0;
            acc_n = 0;
        }
    }
    return rows;
}

double Trainer::dev_bt_bleu1(const std::vector<TextSequence>& texts) const {
    AlignerMode mode = cfg_.aligner_mode;
    return back_translation_bleu(texts, [&](const std::vector<int>& toks) { return m_->roundtrip_text(toks, mode); })
        .bleu1;
}

std::vector<MetricsRow> Trainer::train_joint(const Corpus& corpus, const FreezePlan& plan, int64_t steps,
                                             uint64_t seed, const std::vector<TextSequence>* dev_texts) {
    if (plan.all_frozen()) throw UsageError("freeze plan: at least one module must stay unfrozen");
    if (corpus.texts.empty() || corpus.videos.empty())
        throw std::invalid_argument("train_joint: corpus must contain both texts and videos");
    Rng rng(seed);
    auto frozen = [&](const std::string& g) { return plan.frozen(g); };
    std::vector<MetricsRow> rows;
    MetricsRow acc;
    std::array<int64_t, 5> counts{};
    const LossWeights& w = cfg_.w;
    m_->vq.reset_usage();
    Tensor last_encoder_rows;
    int64_t video_steps = 0;
    for (int64_t step = 0; step < steps; ++step) {
        int task = static_cast<int>(step % 4);
        opt_.zero_grads();
        if (task == 0) {
            std::vector<const TextSequence*> batch;
            for (int64_t b = 0; b < cfg_.batch_text; ++b)
                batch.push_back(
                    &corpus.texts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(corpus.texts.size()) - 1))]);
            Var loss = m_->text_reconstruction_term(batch, rng.next_u64());
            acc.loss_text += loss->val.item();
            ++counts[0];
            if (w.text != 0.0 && loss->needs_grad) {
                backward(scale(loss, w.text));
                opt_.step(frozen);
            }
        } else if (task == 1) {
            std::vector<const VideoClip*> batch;
            for (int64_t b = 0; b < cfg_.batch_video; ++b)
                batch.push_back(
                    &corpus.videos[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(corpus.videos.size()) - 1))]);
            Model::VideoTerms vt = m_->video_reconstruction_terms(batch);
            m_->vq.note_usage(vt.tokens);
            last_encoder_rows = vt.encoder_rows;
            acc.loss_codebook += vt.codebook->val.item();
            acc.loss_video += vt.video->val.item();
            ++counts[1];
            ++counts[2];
            if (w.codebook != 0.0 || w.video != 0.0) {
                std::vector<std::pair<Var, Scalar>> terms;
                if (w.codebook != 0.0) terms.push_back({vt.codebook, w.codebook});
                if (w.video != 0.0) terms.push_back({vt.video, w.video});
                backward(add_scalars(terms));
                opt_.step(frozen);
            }
            ++video_steps;
            if (!plan.video_encoder && video_steps % 25 == 0) {
                Rng reseed(seed ^ (0x517cc1ull * static_cast<uint64_t>(step + 1)));
                m_->vq.reseed_dead_codes(last_encoder_rows, reseed);
                m_->vq.reset_usage();
            }
        } else if (task == 2) {
            std::vector<const TextSequence*> batch;
            for (int64_t b = 0; b < cfg_.batch_bt; ++b)
                batch.push_back(
                    &corpus.texts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(corpus.texts.size()) - 1))]);
            Var loss = m_->t2v2t_term(batch, cfg_.aligner_mode);
            acc.loss_t2v2t += loss->val.item();
            ++counts[3];
            if (w.t2v2t != 0.0) {
                backward(scale(loss, w.t2v2t));
                opt_.step(frozen);
            }
        } else {
            std::vector<const VideoClip*> batch;
            for (int64_t b = 0; b < cfg_.batch_bt; ++b)
                batch.push_back(
                    &corpus.videos[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(corpus.videos.size()) - 1))]);
            Var loss = m_->v2t2v_term(batch, cfg_.aligner_mode);
            acc.loss_v2t2v += loss->val.item();
            ++counts[4];
            if (w.v2t2v != 0.0) {
                backward(scale(loss, w.v2t2v));
                opt_.step(frozen);
            }
        }
        if ((step + 1) % cfg_.eval_interval == 0 || step + 1 == steps) {
            MetricsRow r;
            r.step = step + 1;
            r.loss_text = counts[0] ? acc.loss_text / static_cast<double>(counts[0]) : 0;
            r.loss_codebook = counts[1] ? acc.loss_codebook / static_cast<double>(counts[1]) : 0;
            r.loss_video = counts[2] ? acc.loss_video / static_cast<double>(counts[2]) : 0;
            r.loss_t2v2t = counts[3] ? acc.loss_t2v2t / static_cast<double>(counts[3]) : 0;
            r.loss_v2t2v = counts[4] ? acc.loss_v2t2v / static_cast<double>(counts[4]) : 0;
            r.bt_bleu1 = dev_texts ? dev_bt_bleu1(*dev_texts) : 0;
            rows.push_back(r);
            acc = MetricsRow{};
            counts = {};
        }
    }
    return rows;
}

}  // namespace xmbt

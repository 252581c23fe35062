#pragma once

#include <functional>
#include <string>

#include "graph.hpp"

namespace xmbt {

// Named parameters, grouped so training can freeze or checkpoint a whole
// module (text encoder, video decoder, ...) at once.
struct ParamGroup {
    std::string name;
    std::vector<std::string> names;
    std::vector<Var> vars;

    Var add(const std::string& param_name, Tensor init) {
        Var v = parameter(std::move(init));
        names.push_back(param_name);
        vars.push_back(v);
        return v;
    }
    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& v : vars) n += v->val.numel();
        return n;
    }
    void zero_grads() {
        for (auto& v : vars) v->zero_grad();
    }
};

inline Tensor xavier(int64_t fan_in, int64_t fan_out, Shape shape, Rng& rng) {
    Scalar sd = std::sqrt(2.0 / static_cast<Scalar>(fan_in + fan_out));
    return randn(std::move(shape), rng, sd);
}

struct LinearLayer {
    Var w, b;
    static LinearLayer create(ParamGroup& g, const std::string& name, int64_t din, int64_t dout, Rng& rng,
                              Scalar w_sd = -1.0) {
        LinearLayer l;
        Tensor wt = (w_sd < 0) ? xavier(din, dout, {din, dout}, rng) : randn({din, dout}, rng, w_sd);
        l.w = g.add(name + ".w", std::move(wt));
        l.b = g.add(name + ".b", Tensor::zeros({dout}));
        return l;
    }
    Var apply(const Var& x) const { return linear(x, w, b); }
};

struct LayerNormLayer {
    Var gain, bias;
    static LayerNormLayer create(ParamGroup& g, const std::string& name, int64_t d) {
        LayerNormLayer l;
        l.gain = g.add(name + ".g", Tensor::full({d}, 1.0));
        l.bias = g.add(name + ".b", Tensor::zeros({d}));
        return l;
    }
    Var apply(const Var& x) const { return layer_norm(x, gain, bias); }
};

struct MhaLayer {
    LinearLayer wq, wk, wv, wo;
    int heads = 1;
    static MhaLayer create(ParamGroup& g, const std::string& name, int64_t d, int heads, Rng& rng) {
        MhaLayer l;
        l.heads = heads;
        l.wq = LinearLayer::create(g, name + ".q", d, d, rng);
        l.wk = LinearLayer::create(g, name + ".k", d, d, rng);
        l.wv = LinearLayer::create(g, name + ".v", d, d, rng);
        l.wo = LinearLayer::create(g, name + ".o", d, d, rng);
        return l;
    }
    Var apply(const Var& xq, const Var& xkv, bool causal) const {
        return wo.apply(attention(wq.apply(xq), wk.apply(xkv), wv.apply(xkv), heads, causal));
    }
};

struct FfnLayer {
    LinearLayer fc1, fc2;
    static FfnLayer create(ParamGroup& g, const std::string& name, int64_t d, int64_t hidden, Rng& rng) {
        FfnLayer l;
        l.fc1 = LinearLayer::create(g, name + ".fc1", d, hidden, rng);
        l.fc2 = LinearLayer::create(g, name + ".fc2", hidden, d, rng);
        return l;
    }
    Var apply(const Var& x) const { return fc2.apply(relu(fc1.apply(x))); }
};

// Pre-norm transformer blocks.
struct EncoderBlock {
    LayerNormLayer ln1, ln2;
    MhaLayer attn;
    FfnLayer ffn;
    static EncoderBlock create(ParamGroup& g, const std::string& name, int64_t d, int heads, Rng& rng) {
        EncoderBlock b;
        b.ln1 = LayerNormLayer::create(g, name + ".ln1", d);
        b.ln2 = LayerNormLayer::create(g, name + ".ln2", d);
        b.attn = MhaLayer::create(g, name + ".attn", d, heads, rng);
        b.ffn = FfnLayer::create(g, name + ".ffn", d, 4 * d, rng);
        return b;
    }
    Var apply(const Var& x, bool causal = false) const {
        Var nx = ln1.apply(x);
        Var h = add(x, attn.apply(nx, nx, causal));
        return add(h, ffn.apply(ln2.apply(h)));
    }
};

struct DecoderBlock {
    LayerNormLayer ln1, ln2, ln3;
    MhaLayer self_attn, cross_attn;
    FfnLayer ffn;
    static DecoderBlock create(ParamGroup& g, const std::string& name, int64_t d, int heads, Rng& rng) {
        DecoderBlock b;
        b.ln1 = LayerNormLayer::create(g, name + ".ln1", d);
        b.ln2 = LayerNormLayer::create(g, name + ".ln2", d);
        b.ln3 = LayerNormLayer::create(g, name + ".ln3", d);
        b.self_attn = MhaLayer::create(g, name + ".self", d, heads, rng);
        b.cross_attn = MhaLayer::create(g, name + ".cross", d, heads, rng);
        b.ffn = FfnLayer::create(g, name + ".ffn", d, 4 * d, rng);
        return b;
    }
    Var apply(const Var& x, const Var& memory) const {
        Var nx = ln1.apply(x);
        Var h = add(x, self_attn.apply(nx, nx, true));
        h = add(h, cross_attn.apply(ln2.apply(h), memory, false));
        return add(h, ffn.apply(ln3.apply(h)));
    }
};

class Adam {
public:
    explicit Adam(Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999, Scalar eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void attach(ParamGroup* g) { groups_.push_back(g); }

    void zero_grads() {
        for (auto* g : groups_) g->zero_grads();
    }

    // One update over all attached groups; `frozen(group_name)` skips a group
    // (its moments do not advance either, so it stays bit-identical).
    void step(const std::function<bool(const std::string&)>& frozen = nullptr);

    void set_lr(Scalar lr) { lr_ = lr; }
    Scalar lr() const { return lr_; }

private:
    Scalar lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<ParamGroup*> groups_;
    std::vector<std::vector<Tensor>> m_, v_;  // per group, per param
};

}  // namespace xmbt

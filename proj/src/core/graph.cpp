#include "graph.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace xmbt {

namespace {

std::atomic<uint64_t> g_next_id{1};

using RM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RM>;
using CMapRM = Eigen::Map<const RM>;

CMapRM cmap(const Tensor& t, int64_t r, int64_t c) { return CMapRM(t.data(), r, c); }
MapRM mmap(Tensor& t, int64_t r, int64_t c) { return MapRM(t.data(), r, c); }

void check_2d(const Var& x, const char* who) {
    if (x->val.ndim() != 2) throw std::invalid_argument(std::string(who) + ": expected 2-d tensor, got " + shape_str(x->val.shape()));
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    n->inputs = std::move(inputs);
    n->id = g_next_id.fetch_add(1);
    for (const auto& in : n->inputs)
        if (in->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->backward_fn = std::move(bw);
    return n;
}

}  // namespace

Var make_var(Tensor value, bool needs_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    n->needs_grad = needs_grad;
    n->id = g_next_id.fetch_add(1);
    return n;
}

void backward(const Var& root) {
    if (root->val.numel() != 1) throw std::logic_error("backward: root must be a scalar");
    // Collect reachable nodes, then sweep in descending creation order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& in : n->inputs) {
            if (in->needs_grad && seen.insert(in.get()).second) stack.push_back(in.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    root->grad_ref();
    root->grad.at(0) += 1.0;
    for (Node* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("add: shape mismatch " + shape_str(a->val.shape()) + " vs " + shape_str(b->val.shape()));
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& in = n.inputs[k];
            if (!in->needs_grad) continue;
            Scalar* g = in->grad_data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) -= b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.inputs[0]->needs_grad) {
            Scalar* g = n.inputs[0]->grad_data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i);
        }
        if (n.inputs[1]->needs_grad) {
            Scalar* g = n.inputs[1]->grad_data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] -= n.grad.at(i);
        }
    });
}

Var cmul(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("cmul: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.inputs[0]->needs_grad) {
            Scalar* g = n.inputs[0]->grad_data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i) * n.inputs[1]->val.at(i);
        }
        if (n.inputs[1]->needs_grad) {
            Scalar* g = n.inputs[1]->grad_data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i) * n.inputs[0]->val.at(i);
        }
    });
}

Var scale(const Var& a, Scalar s) {
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        Scalar* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += s * n.grad.at(i);
    });
}

Var add_rowvec(const Var& x, const Var& b) {
    check_2d(x, "add_rowvec");
    int64_t n = x->val.rows(), d = x->val.cols();
    if (b->val.numel() != d) throw std::invalid_argument("add_rowvec: bias length mismatch");
    Tensor out = x->val;
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < d; ++c) out.at2(r, c) += b->val.at(c);
    return make_op(std::move(out), {x, b}, [n, d](Node& nn) {
        if (nn.inputs[0]->needs_grad) {
            Scalar* g = nn.inputs[0]->grad_data();
            for (int64_t i = 0; i < nn.grad.numel(); ++i) g[i] += nn.grad.at(i);
        }
        if (nn.inputs[1]->needs_grad) {
            Scalar* g = nn.inputs[1]->grad_data();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < d; ++c) g[c] += nn.grad.at2(r, c);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    int64_t n = a->val.rows(), k = a->val.cols(), m = b->val.cols();
    if (b->val.rows() != k) throw std::invalid_argument("matmul: inner dims " + shape_str(a->val.shape()) + " x " + shape_str(b->val.shape()));
    Tensor out({n, m});
    mmap(out, n, m).noalias() = cmap(a->val, n, k) * cmap(b->val, k, m);
    return make_op(std::move(out), {a, b}, [n, k, m](Node& nn) {
        CMapRM g(nn.grad.data(), n, m);
        if (nn.inputs[0]->needs_grad) {
            MapRM ga(nn.inputs[0]->grad_data(), n, k);
            ga.noalias() += g * cmap(nn.inputs[1]->val, k, m).transpose();
        }
        if (nn.inputs[1]->needs_grad) {
            MapRM gb(nn.inputs[1]->grad_data(), k, m);
            gb.noalias() += cmap(nn.inputs[0]->val, n, k).transpose() * g;
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_rowvec(matmul(x, w), b); }

Var relu(const Var& x) {
    Tensor out = x->val;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out.at(i) < 0) out.at(i) = 0;
    return make_op(std::move(out), {x}, [](Node& n) {
        Scalar* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (n.val.at(i) > 0) g[i] += n.grad.at(i);
    });
}

Var detach(const Var& x) { return make_var(x->val, false); }

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
    int64_t d = xs[0]->val.cols(), total = 0;
    for (const auto& x : xs) {
        check_2d(x, "concat_rows");
        if (x->val.cols() != d) throw std::invalid_argument("concat_rows: column mismatch");
        total += x->val.rows();
    }
    Tensor out({total, d});
    int64_t r0 = 0;
    for (const auto& x : xs) {
        std::copy(x->val.data(), x->val.data() + x->val.numel(), out.data() + r0 * d);
        r0 += x->val.rows();
    }
    return make_op(std::move(out), xs, [d](Node& n) {
        int64_t r0 = 0;
        for (auto& in : n.inputs) {
            int64_t rows = in->val.rows();
            if (in->needs_grad) {
                Scalar* g = in->grad_data();
                const Scalar* src = n.grad.data() + r0 * d;
                for (int64_t i = 0; i < rows * d; ++i) g[i] += src[i];
            }
            r0 += rows;
        }
    });
}

Var slice_rows(const Var& x, int64_t begin, int64_t count) {
    check_2d(x, "slice_rows");
    int64_t n = x->val.rows(), d = x->val.cols();
    if (begin < 0 || count < 0 || begin + count > n) throw std::out_of_range("slice_rows: range");
    Tensor out({count, d});
    std::copy(x->val.data() + begin * d, x->val.data() + (begin + count) * d, out.data());
    return make_op(std::move(out), {x}, [begin, d](Node& n) {
        Scalar* g = n.inputs[0]->grad_data() + begin * d;
        for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i);
    });
}

Var mean_all(const Var& x) {
    int64_t n = x->val.numel();
    Scalar s = 0;
    for (int64_t i = 0; i < n; ++i) s += x->val.at(i);
    return make_op(Tensor::scalar(s / static_cast<Scalar>(n)), {x}, [n](Node& nn) {
        Scalar g = nn.grad.at(0) / static_cast<Scalar>(n);
        Scalar* gi = nn.inputs[0]->grad_data();
        for (int64_t i = 0; i < n; ++i) gi[i] += g;
    });
}

Var add_scalars(const std::vector<std::pair<Var, Scalar>>& weighted) {
    if (weighted.empty()) throw std::invalid_argument("add_scalars: empty");
    Scalar total = 0;
    std::vector<Var> ins;
    std::vector<Scalar> ws;
    for (const auto& [v, w] : weighted) {
        if (v->val.numel() != 1) throw std::invalid_argument("add_scalars: non-scalar term");
        total += w * v->val.at(0);
        ins.push_back(v);
        ws.push_back(w);
    }
    return make_op(Tensor::scalar(total), std::move(ins), [ws](Node& n) {
        for (size_t i = 0; i < n.inputs.size(); ++i)
            if (n.inputs[i]->needs_grad) n.inputs[i]->grad_data()[0] += ws[i] * n.grad.at(0);
    });
}

Var reshape(const Var& x, Shape s) {
    Tensor out = x->val.reshaped(std::move(s));
    return make_op(std::move(out), {x}, [](Node& n) {
        Scalar* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad.at(i);
    });
}

Var transpose2d(const Var& x) {
    check_2d(x, "transpose2d");
    int64_t n = x->val.rows(), d = x->val.cols();
    Tensor out({d, n});
    mmap(out, d, n).noalias() = cmap(x->val, n, d).transpose();
    return make_op(std::move(out), {x}, [n, d](Node& nn) {
        MapRM g(nn.inputs[0]->grad_data(), n, d);
        g.noalias() += cmap(nn.grad, d, n).transpose();
    });
}

// ---------------------------------------------------------------- nn blocks

Var layer_norm(const Var& x, const Var& gain, const Var& bias, Scalar eps) {
    check_2d(x, "layer_norm");
    int64_t n = x->val.rows(), d = x->val.cols();
    if (gain->val.numel() != d || bias->val.numel() != d) throw std::invalid_argument("layer_norm: param length mismatch");
    Tensor out({n, d});
    Tensor xhat({n, d});
    Tensor inv_sd({n});
    for (int64_t r = 0; r < n; ++r) {
        Scalar mu = 0;
        for (int64_t c = 0; c < d; ++c) mu += x->val.at2(r, c);
        mu /= static_cast<Scalar>(d);
        Scalar var = 0;
        for (int64_t c = 0; c < d; ++c) {
            Scalar t = x->val.at2(r, c) - mu;
            var += t * t;
        }
        var /= static_cast<Scalar>(d);
        Scalar isd = 1.0 / std::sqrt(var + eps);
        inv_sd.at(r) = isd;
        for (int64_t c = 0; c < d; ++c) {
            Scalar xh = (x->val.at2(r, c) - mu) * isd;
            xhat.at2(r, c) = xh;
            out.at2(r, c) = xh * gain->val.at(c) + bias->val.at(c);
        }
    }
    return make_op(std::move(out), {x, gain, bias}, [n, d, xhat = std::move(xhat), inv_sd = std::move(inv_sd)](Node& nn) {
        const Tensor& g = nn.grad;
        if (nn.inputs[1]->needs_grad) {
            Scalar* gg = nn.inputs[1]->grad_data();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < d; ++c) gg[c] += g.at2(r, c) * xhat.at2(r, c);
        }
        if (nn.inputs[2]->needs_grad) {
            Scalar* gb = nn.inputs[2]->grad_data();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < d; ++c) gb[c] += g.at2(r, c);
        }
        if (nn.inputs[0]->needs_grad) {
            Scalar* gx = nn.inputs[0]->grad_data();
            const Tensor& gain = nn.inputs[1]->val;
            for (int64_t r = 0; r < n; ++r) {
                Scalar m1 = 0, m2 = 0;
                for (int64_t c = 0; c < d; ++c) {
                    Scalar dy = g.at2(r, c) * gain.at(c);
                    m1 += dy;
                    m2 += dy * xhat.at2(r, c);
                }
                m1 /= static_cast<Scalar>(d);
                m2 /= static_cast<Scalar>(d);
                for (int64_t c = 0; c < d; ++c) {
                    Scalar dy = g.at2(r, c) * gain.at(c);
                    gx[r * d + c] += inv_sd.at(r) * (dy - m1 - xhat.at2(r, c) * m2);
                }
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    check_2d(x, "softmax_rows");
    int64_t n = x->val.rows(), d = x->val.cols();
    Tensor out({n, d});
    for (int64_t r = 0; r < n; ++r) {
        Scalar mx = -1e300;
        for (int64_t c = 0; c < d; ++c) mx = std::max(mx, x->val.at2(r, c));
        Scalar z = 0;
        for (int64_t c = 0; c < d; ++c) {
            Scalar e = std::exp(x->val.at2(r, c) - mx);
            out.at2(r, c) = e;
            z += e;
        }
        for (int64_t c = 0; c < d; ++c) out.at2(r, c) /= z;
    }
    return make_op(std::move(out), {x}, [n, d](Node& nn) {
        Scalar* gx = nn.inputs[0]->grad_data();
        for (int64_t r = 0; r < n; ++r) {
            Scalar dot = 0;
            for (int64_t c = 0; c < d; ++c) dot += nn.grad.at2(r, c) * nn.val.at2(r, c);
            for (int64_t c = 0; c < d; ++c)
                gx[r * d + c] += nn.val.at2(r, c) * (nn.grad.at2(r, c) - dot);
        }
    });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
    check_2d(table, "embedding");
    int64_t v = table->val.rows(), d = table->val.cols();
    for (int id : ids)
        if (id < 0 || id >= v) throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(v));
    Tensor out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table->val.data() + ids[i] * d, table->val.data() + (ids[i] + 1) * d, out.data() + i * d);
    return make_op(std::move(out), {table}, [ids, d](Node& n) {
        Scalar* g = n.inputs[0]->grad_data();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int64_t c = 0; c < d; ++c) g[ids[i] * d + c] += n.grad.at2(static_cast<int64_t>(i), c);
    });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, bool causal) {
    check_2d(q, "attention");
    check_2d(k, "attention");
    check_2d(v, "attention");
    int64_t n = q->val.rows(), d = q->val.cols(), m = k->val.rows();
    if (k->val.cols() != d || v->val.cols() != d || v->val.rows() != m)
        throw std::invalid_argument("attention: shape mismatch");
    if (d % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
    if (causal && n != m) throw std::invalid_argument("attention: causal requires square scores");
    int64_t dh = d / heads;
    Scalar alpha = 1.0 / std::sqrt(static_cast<Scalar>(dh));

    Tensor out({n, d});
    Tensor probs({heads, n, m});
    CMapRM Q = cmap(q->val, n, d), K = cmap(k->val, m, d), V = cmap(v->val, m, d);
    MapRM O = mmap(out, n, d);
    for (int h = 0; h < heads; ++h) {
        RM S = alpha * (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose());
        for (int64_t i = 0; i < n; ++i) {
            int64_t jmax = causal ? i : m - 1;
            Scalar mx = -1e300;
            for (int64_t j = 0; j <= jmax; ++j) mx = std::max(mx, S(i, j));
            Scalar z = 0;
            for (int64_t j = 0; j <= jmax; ++j) {
                S(i, j) = std::exp(S(i, j) - mx);
                z += S(i, j);
            }
            for (int64_t j = 0; j <= jmax; ++j) {
                Scalar p = S(i, j) / z;
                probs.data()[(h * n + i) * m + j] = p;
            }
            for (int64_t j = jmax + 1; j < m; ++j) probs.data()[(h * n + i) * m + j] = 0.0;
        }
        CMapRM P(probs.data() + h * n * m, n, m);
        O.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
    }
    return make_op(std::move(out), {q, k, v}, [n, m, d, dh, heads, alpha, probs = std::move(probs)](Node& nn) {
        CMapRM G(nn.grad.data(), n, d);
        CMapRM Q = cmap(nn.inputs[0]->val, n, d), K = cmap(nn.inputs[1]->val, m, d), V = cmap(nn.inputs[2]->val, m, d);
        for (int h = 0; h < heads; ++h) {
            CMapRM P(probs.data() + h * n * m, n, m);
            RM dOh = G.middleCols(h * dh, dh);
            if (nn.inputs[2]->needs_grad) {
                MapRM gv(nn.inputs[2]->grad_data(), m, d);
                gv.middleCols(h * dh, dh).noalias() += P.transpose() * dOh;
            }
            RM dP = dOh * V.middleCols(h * dh, dh).transpose();
            // softmax backward per row
            RM dS(n, m);
            for (int64_t i = 0; i < n; ++i) {
                Scalar dot = 0;
                for (int64_t j = 0; j < m; ++j) dot += dP(i, j) * P(i, j);
                for (int64_t j = 0; j < m; ++j) dS(i, j) = P(i, j) * (dP(i, j) - dot);
            }
            dS *= alpha;
            if (nn.inputs[0]->needs_grad) {
                MapRM gq(nn.inputs[0]->grad_data(), n, d);
                gq.middleCols(h * dh, dh).noalias() += dS * K.middleCols(h * dh, dh);
            }
            if (nn.inputs[1]->needs_grad) {
                MapRM gk(nn.inputs[1]->grad_data(), m, d);
                gk.middleCols(h * dh, dh).noalias() += dS.transpose() * Q.middleCols(h * dh, dh);
            }
        }
    });
}

Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets, int ignore_id) {
    check_2d(logits, "cross_entropy_rows");
    int64_t n = logits->val.rows(), v = logits->val.cols();
    if (static_cast<int64_t>(targets.size()) != n) throw std::invalid_argument("cross_entropy_rows: target count mismatch");
    int64_t counted = 0;
    Scalar total = 0;
    Tensor probs({n, v});
    for (int64_t r = 0; r < n; ++r) {
        Scalar mx = -1e300;
        for (int64_t c = 0; c < v; ++c) mx = std::max(mx, logits->val.at2(r, c));
        Scalar z = 0;
        for (int64_t c = 0; c < v; ++c) {
            Scalar e = std::exp(logits->val.at2(r, c) - mx);
            probs.at2(r, c) = e;
            z += e;
        }
        for (int64_t c = 0; c < v; ++c) probs.at2(r, c) /= z;
        int t = targets[r];
        if (t == ignore_id) continue;
        if (t < 0 || t >= v) throw std::out_of_range("cross_entropy_rows: target id " + std::to_string(t));
        total += -std::log(std::max(probs.at2(r, t), 1e-300));
        ++counted;
    }
    Scalar loss = counted ? total / static_cast<Scalar>(counted) : 0.0;
    return make_op(Tensor::scalar(loss), {logits}, [targets, ignore_id, counted, n, v, probs = std::move(probs)](Node& nn) {
        if (!counted) return;
        Scalar g = nn.grad.at(0) / static_cast<Scalar>(counted);
        Scalar* gl = nn.inputs[0]->grad_data();
        for (int64_t r = 0; r < n; ++r) {
            int t = targets[r];
            if (t == ignore_id) continue;
            for (int64_t c = 0; c < v; ++c) gl[r * v + c] += g * probs.at2(r, c);
            gl[r * v + t] -= g;
        }
    });
}

Var mse_loss(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(a->val.shape()) + " vs " + shape_str(b->val.shape()));
    int64_t n = a->val.numel();
    Scalar s = 0;
    for (int64_t i = 0; i < n; ++i) {
        Scalar d = a->val.at(i) - b->val.at(i);
        s += d * d;
    }
    return make_op(Tensor::scalar(s / static_cast<Scalar>(n)), {a, b}, [n](Node& nn) {
        Scalar g = 2.0 * nn.grad.at(0) / static_cast<Scalar>(n);
        const Tensor& av = nn.inputs[0]->val;
        const Tensor& bv = nn.inputs[1]->val;
        if (nn.inputs[0]->needs_grad) {
            Scalar* ga = nn.inputs[0]->grad_data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g * (av.at(i) - bv.at(i));
        }
        if (nn.inputs[1]->needs_grad) {
            Scalar* gb = nn.inputs[1]->grad_data();
            for (int64_t i = 0; i < n; ++i) gb[i] -= g * (av.at(i) - bv.at(i));
        }
    });
}

Var row_l2_mean(const Var& a, const Var& b) {
    check_2d(a, "row_l2_mean");
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("row_l2_mean: shape mismatch");
    int64_t n = a->val.rows(), d = a->val.cols();
    Tensor dist({n});
    Scalar s = 0;
    for (int64_t r = 0; r < n; ++r) {
        Scalar q = 0;
        for (int64_t c = 0; c < d; ++c) {
            Scalar t = a->val.at2(r, c) - b->val.at2(r, c);
            q += t * t;
        }
        dist.at(r) = std::sqrt(q);
        s += dist.at(r);
    }
    return make_op(Tensor::scalar(s / static_cast<Scalar>(n)), {a, b}, [n, d, dist = std::move(dist)](Node& nn) {
        Scalar g = nn.grad.at(0) / static_cast<Scalar>(n);
        const Tensor& av = nn.inputs[0]->val;
        const Tensor& bv = nn.inputs[1]->val;
        for (int64_t r = 0; r < n; ++r) {
            Scalar inv = 1.0 / std::max(dist.at(r), 1e-12);
            for (int64_t c = 0; c < d; ++c) {
                Scalar t = g * inv * (av.at2(r, c) - bv.at2(r, c));
                if (nn.inputs[0]->needs_grad) nn.inputs[0]->grad_data()[r * d + c] += t;
                if (nn.inputs[1]->needs_grad) nn.inputs[1]->grad_data()[r * d + c] -= t;
            }
        }
    });
}

// ---------------------------------------------------------------- conv3d

namespace {

struct ConvGeom {
    int64_t cin, cout;
    int64_t k[3];
    int64_t site[3];   // strided-grid spatial dims (conv output / transpose input)
    int64_t dense[3];  // dense-grid spatial dims (conv input / transpose output)
    int64_t kvol() const { return k[0] * k[1] * k[2]; }
    int64_t n_sites() const { return site[0] * site[1] * site[2]; }
    int64_t n_dense() const { return dense[0] * dense[1] * dense[2]; }
};

// cols: (C*kvol) x n_sites, where site l walks the strided grid `sites` and
// reads from dense grid `dense` at (site*stride - pad + k).
void im2col3d(const Scalar* dense, int64_t channels, const int64_t dense_dims[3], const int64_t site_dims[3],
              const int64_t kk[3], const int64_t stride[3], const int64_t pad[3], Scalar* cols) {
    int64_t kvol = kk[0] * kk[1] * kk[2];
    int64_t nsites = site_dims[0] * site_dims[1] * site_dims[2];
    int64_t dHW = dense_dims[1] * dense_dims[2];
    int64_t l = 0;
    for (int64_t t = 0; t < site_dims[0]; ++t)
        for (int64_t h = 0; h < site_dims[1]; ++h)
            for (int64_t w = 0; w < site_dims[2]; ++w, ++l) {
                int64_t t0 = t * stride[0] - pad[0];
                int64_t h0 = h * stride[1] - pad[1];
                int64_t w0 = w * stride[2] - pad[2];
                for (int64_t c = 0; c < channels; ++c) {
                    const Scalar* dc = dense + c * dense_dims[0] * dHW;
                    Scalar* colbase = cols + (c * kvol) * nsites + l;
                    int64_t ki = 0;
                    for (int64_t kt = 0; kt < kk[0]; ++kt)
                        for (int64_t kh = 0; kh < kk[1]; ++kh)
                            for (int64_t kw = 0; kw < kk[2]; ++kw, ++ki) {
                                int64_t tt = t0 + kt, hh = h0 + kh, ww = w0 + kw;
                                Scalar v = 0;
                                if (tt >= 0 && tt < dense_dims[0] && hh >= 0 && hh < dense_dims[1] && ww >= 0 && ww < dense_dims[2])
                                    v = dc[tt * dHW + hh * dense_dims[2] + ww];
                                colbase[ki * nsites] = v;
                            }
                }
            }
}

// scatter-add inverse of im2col3d
void col2im3d(const Scalar* cols, int64_t channels, const int64_t dense_dims[3], const int64_t site_dims[3],
              const int64_t kk[3], const int64_t stride[3], const int64_t pad[3], Scalar* dense) {
    int64_t kvol = kk[0] * kk[1] * kk[2];
    int64_t nsites = site_dims[0] * site_dims[1] * site_dims[2];
    int64_t dHW = dense_dims[1] * dense_dims[2];
    int64_t l = 0;
    for (int64_t t = 0; t < site_dims[0]; ++t)
        for (int64_t h = 0; h < site_dims[1]; ++h)
            for (int64_t w = 0; w < site_dims[2]; ++w, ++l) {
                int64_t t0 = t * stride[0] - pad[0];
                int64_t h0 = h * stride[1] - pad[1];
                int64_t w0 = w * stride[2] - pad[2];
                for (int64_t c = 0; c < channels; ++c) {
                    Scalar* dc = dense + c * dense_dims[0] * dHW;
                    const Scalar* colbase = cols + (c * kvol) * nsites + l;
                    int64_t ki = 0;
                    for (int64_t kt = 0; kt < kk[0]; ++kt)
                        for (int64_t kh = 0; kh < kk[1]; ++kh)
                            for (int64_t kw = 0; kw < kk[2]; ++kw, ++ki) {
                                int64_t tt = t0 + kt, hh = h0 + kh, ww = w0 + kw;
                                if (tt >= 0 && tt < dense_dims[0] && hh >= 0 && hh < dense_dims[1] && ww >= 0 && ww < dense_dims[2])
                                    dc[tt * dHW + hh * dense_dims[2] + ww] += colbase[ki * nsites];
                            }
                }
            }
}

}  // namespace

Shape conv3d_out_shape(const Shape& x, const Shape& w, const Conv3dSpec& spec) {
    if (x.size() != 4 || w.size() != 5) throw std::invalid_argument("conv3d: want x {C,T,H,W}, w {Cout,Cin,kt,kh,kw}");
    if (x[0] != w[1]) throw std::invalid_argument("conv3d: channel mismatch");
    Shape out{w[0], 0, 0, 0};
    for (int i = 0; i < 3; ++i) {
        int64_t o = (x[i + 1] + 2 * spec.pad[i] - w[i + 2]) / spec.stride[i] + 1;
        if (o <= 0) throw std::invalid_argument("conv3d: non-positive output extent");
        out[i + 1] = o;
    }
    return out;
}

Shape conv_transpose3d_out_shape(const Shape& x, const Shape& w, const Conv3dSpec& spec) {
    if (x.size() != 4 || w.size() != 5) throw std::invalid_argument("conv_transpose3d: want x {C,T,H,W}, w {Cin,Cout,kt,kh,kw}");
    if (x[0] != w[0]) throw std::invalid_argument("conv_transpose3d: channel mismatch");
    Shape out{w[1], 0, 0, 0};
    for (int i = 0; i < 3; ++i) {
        int64_t o = (x[i + 1] - 1) * spec.stride[i] - 2 * spec.pad[i] + w[i + 2] + spec.out_pad[i];
        if (o <= 0) throw std::invalid_argument("conv_transpose3d: non-positive output extent");
        out[i + 1] = o;
    }
    return out;
}

Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& spec) {
    Shape oshape = conv3d_out_shape(x->val.shape(), w->val.shape(), spec);
    if (b->val.numel() != oshape[0]) throw std::invalid_argument("conv3d: bias length mismatch");
    ConvGeom g;
    g.cin = x->val.dim(0);
    g.cout = oshape[0];
    for (int i = 0; i < 3; ++i) {
        g.k[i] = w->val.dim(i + 2);
        g.site[i] = oshape[i + 1];
        g.dense[i] = x->val.dim(i + 1);
    }
    int64_t nsites = g.n_sites(), ck = g.cin * g.kvol();
    Tensor cols({ck, nsites});
    im2col3d(x->val.data(), g.cin, g.dense, g.site, g.k, spec.stride, spec.pad, cols.data());
    Tensor out(oshape);
    MapRM(out.data(), g.cout, nsites).noalias() = cmap(w->val, g.cout, ck) * cmap(cols, ck, nsites);
    for (int64_t c = 0; c < g.cout; ++c) {
        Scalar bias = b->val.at(c);
        Scalar* p = out.data() + c * nsites;
        for (int64_t i = 0; i < nsites; ++i) p[i] += bias;
    }
    return make_op(std::move(out), {x, w, b}, [g, spec, nsites, ck, cols = std::move(cols)](Node& nn) {
        CMapRM gy(nn.grad.data(), g.cout, nsites);
        if (nn.inputs[1]->needs_grad) {
            MapRM gw(nn.inputs[1]->grad_data(), g.cout, ck);
            gw.noalias() += gy * cmap(cols, ck, nsites).transpose();
        }
        if (nn.inputs[2]->needs_grad) {
            Scalar* gb = nn.inputs[2]->grad_data();
            for (int64_t c = 0; c < g.cout; ++c) gb[c] += gy.row(c).sum();
        }
        if (nn.inputs[0]->needs_grad) {
            RM gcols = cmap(nn.inputs[1]->val, g.cout, ck).transpose() * gy;
            col2im3d(gcols.data(), g.cin, g.dense, g.site, g.k, spec.stride, spec.pad, nn.inputs[0]->grad_data());
        }
    });
}

Var conv_transpose3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& spec) {
    Shape oshape = conv_transpose3d_out_shape(x->val.shape(), w->val.shape(), spec);
    if (b->val.numel() != oshape[0]) throw std::invalid_argument("conv_transpose3d: bias length mismatch");
    ConvGeom g;
    g.cin = x->val.dim(0);
    g.cout = oshape[0];
    for (int i = 0; i < 3; ++i) {
        g.k[i] = w->val.dim(i + 2);
        g.site[i] = x->val.dim(i + 1);
        g.dense[i] = oshape[i + 1];
    }
    int64_t nsites = g.n_sites(), ck = g.cout * g.kvol();
    // cols = W^T x, scattered onto the dense output grid
    RM colsm = cmap(w->val, g.cin, ck).transpose() * cmap(x->val, g.cin, nsites);
    Tensor out(oshape);
    col2im3d(colsm.data(), g.cout, g.dense, g.site, g.k, spec.stride, spec.pad, out.data());
    int64_t osites = g.n_dense();
    for (int64_t c = 0; c < g.cout; ++c) {
        Scalar bias = b->val.at(c);
        Scalar* p = out.data() + c * osites;
        for (int64_t i = 0; i < osites; ++i) p[i] += bias;
    }
    return make_op(std::move(out), {x, w, b}, [g, spec, nsites, ck](Node& nn) {
        int64_t osites = g.n_dense();
        Tensor gcols({ck, nsites});
        im2col3d(nn.grad.data(), g.cout, g.dense, g.site, g.k, spec.stride, spec.pad, gcols.data());
        if (nn.inputs[0]->needs_grad) {
            MapRM gx(nn.inputs[0]->grad_data(), g.cin, nsites);
            gx.noalias() += cmap(nn.inputs[1]->val, g.cin, ck) * cmap(gcols, ck, nsites);
        }
        if (nn.inputs[1]->needs_grad) {
            MapRM gw(nn.inputs[1]->grad_data(), g.cin, ck);
            gw.noalias() += cmap(nn.inputs[0]->val, g.cin, nsites) * cmap(gcols, ck, nsites).transpose();
        }
        if (nn.inputs[2]->needs_grad) {
            Scalar* gb = nn.inputs[2]->grad_data();
            for (int64_t c = 0; c < g.cout; ++c) {
                const Scalar* p = nn.grad.data() + c * osites;
                Scalar s = 0;
                for (int64_t i = 0; i < osites; ++i) s += p[i];
                gb[c] += s;
            }
        }
    });
}

}  // namespace xmbt

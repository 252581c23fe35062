#pragma once

#include <functional>
#include <memory>

#include "tensor.hpp"

namespace xmbt {

// Reverse-mode autodiff over a dynamically built graph. Nodes are created in
// topological order (monotone ids), so backward is a reverse sweep over the
// reachable set sorted by id.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor val;
    Tensor grad;  // allocated on demand, same shape as val
    bool needs_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into inputs
    uint64_t id = 0;

    Scalar* grad_data() {
        if (grad.empty()) grad = Tensor::zeros(val.shape());
        return grad.data();
    }
    Tensor& grad_ref() {
        if (grad.empty()) grad = Tensor::zeros(val.shape());
        return grad;
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.data(), grad.data() + grad.numel(), 0.0);
    }
};

Var make_var(Tensor value, bool needs_grad);
inline Var constant(Tensor value) { return make_var(std::move(value), false); }
inline Var parameter(Tensor value) { return make_var(std::move(value), true); }

// Runs the reverse sweep from `root` (must be scalar); seeds d(root)/d(root)=1.
void backward(const Var& root);

// ---- elementwise / linear algebra ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);           // elementwise product
Var scale(const Var& a, Scalar s);
Var add_rowvec(const Var& x, const Var& b);     // x: n x d, b: d
Var matmul(const Var& a, const Var& b);         // (n x k)(k x m)
Var linear(const Var& x, const Var& w, const Var& b);  // x w + b
Var relu(const Var& x);
Var detach(const Var& x);                       // stops gradient flow
Var concat_rows(const std::vector<Var>& xs);    // stack 2-d blocks with equal cols
Var slice_rows(const Var& x, int64_t begin, int64_t count);
Var mean_all(const Var& x);
Var add_scalars(const std::vector<std::pair<Var, Scalar>>& weighted);  // sum w_i * scalar_i
Var reshape(const Var& x, Shape s);
Var transpose2d(const Var& x);

// ---- nn primitives ----
Var layer_norm(const Var& x, const Var& gain, const Var& bias, Scalar eps = 1e-5);
Var softmax_rows(const Var& x);
Var embedding(const Var& table, const std::vector<int>& ids);
// Multi-head scaled dot-product attention over already-projected q,k,v.
Var attention(const Var& q, const Var& k, const Var& v, int heads, bool causal);
// Mean negative log-likelihood of targets under row logits; rows with
// target == ignore_id do not contribute.
Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets, int ignore_id);
Var mse_loss(const Var& a, const Var& b);
Var row_l2_mean(const Var& a, const Var& b);    // mean_i ||a_i - b_i||_2

// ---- 3-d convolution (channel-first: {C, T, H, W}) ----
struct Conv3dSpec {
    int64_t stride[3] = {1, 1, 1};
    int64_t pad[3] = {0, 0, 0};
    int64_t out_pad[3] = {0, 0, 0};  // transpose only
};
// x {Cin,T,H,W}, w {Cout,Cin,kt,kh,kw}, b {Cout}
Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& spec);
// x {Cin,T,H,W}, w {Cin,Cout,kt,kh,kw}, b {Cout}
Var conv_transpose3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& spec);

Shape conv3d_out_shape(const Shape& x, const Shape& w, const Conv3dSpec& spec);
Shape conv_transpose3d_out_shape(const Shape& x, const Shape& w, const Conv3dSpec& spec);

}  // namespace xmbt

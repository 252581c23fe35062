#pragma once

#include <functional>

#include "core/graph.hpp"

namespace xmbt::testutil {

inline Scalar rel_err(Scalar a, Scalar b) {
    Scalar denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-12) return std::abs(a - b);
    return std::abs(a - b) / denom;
}

// Central-difference check of d(loss)/d(param) against the recorded gradient.
// `forward` must rebuild the graph from scratch reading param->val.
// Returns the worst relative error over the checked entries.
inline Scalar grad_check(const Var& param, const std::function<Var()>& forward,
                         int64_t max_entries = 64, Scalar h = 1e-5) {
    Var loss = forward();
    param->zero_grad();
    backward(loss);
    Tensor analytic = param->grad.empty() ? Tensor::zeros(param->val.shape()) : param->grad;

    int64_t n = param->val.numel();
    int64_t step = std::max<int64_t>(1, n / max_entries);
    Scalar worst = 0;
    for (int64_t i = 0; i < n; i += step) {
        Scalar keep = param->val.at(i);
        param->val.at(i) = keep + h;
        Scalar up = forward()->val.item();
        param->val.at(i) = keep - h;
        Scalar dn = forward()->val.item();
        param->val.at(i) = keep;
        Scalar fd = (up - dn) / (2 * h);
        worst = std::max(worst, rel_err(fd, analytic.at(i)));
    }
    return worst;
}

}  // namespace xmbt::testutil

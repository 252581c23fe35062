#include "nn.hpp"

namespace xmbt {

void Adam::step(const std::function<bool(const std::string&)>& frozen) {
    if (m_.size() != groups_.size()) {
        m_.resize(groups_.size());
        v_.resize(groups_.size());
        for (size_t gi = 0; gi < groups_.size(); ++gi) {
            m_[gi].resize(groups_[gi]->vars.size());
            v_[gi].resize(groups_[gi]->vars.size());
            for (size_t pi = 0; pi < groups_[gi]->vars.size(); ++pi) {
                m_[gi][pi] = Tensor::zeros(groups_[gi]->vars[pi]->val.shape());
                v_[gi][pi] = Tensor::zeros(groups_[gi]->vars[pi]->val.shape());
            }
        }
    }
    ++t_;
    Scalar bc1 = 1.0 - std::pow(b1_, static_cast<Scalar>(t_));
    Scalar bc2 = 1.0 - std::pow(b2_, static_cast<Scalar>(t_));
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
        ParamGroup* g = groups_[gi];
        if (frozen && frozen(g->name)) continue;
        for (size_t pi = 0; pi < g->vars.size(); ++pi) {
            Var& p = g->vars[pi];
            if (p->grad.empty()) continue;
            Tensor& m = m_[gi][pi];
            Tensor& v = v_[gi][pi];
            for (int64_t i = 0; i < p->val.numel(); ++i) {
                Scalar gr = p->grad.at(i);
                m.at(i) = b1_ * m.at(i) + (1.0 - b1_) * gr;
                v.at(i) = b2_ * v.at(i) + (1.0 - b2_) * gr * gr;
                Scalar mh = m.at(i) / bc1;
                Scalar vh = v.at(i) / bc2;
                p->val.at(i) -= lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }
}

}  // namespace xmbt

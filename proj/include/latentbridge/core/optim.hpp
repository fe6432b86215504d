// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "latentbridge/core/graph.hpp"

namespace lb {

// Adam with bias correction. State tensors follow ParamStore order.
template <class S>
class Adam {
public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit Adam(ParamStore<S>& ps, double lr_ = 1e-4) : ps_(&ps), lr(lr_) {
        m_.resize(ps.size());
        v_.resize(ps.size());
        for (size_t i = 0; i < ps.size(); ++i) {
            m_[i] = Tensor<S>::zeros(ps.entries[i].value.shape);
            v_[i] = Tensor<S>::zeros(ps.entries[i].value.shape);
        }
    }

    void step(const GradStore<S>& gs) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        for (size_t i = 0; i < ps_->size(); ++i) {
            auto& p = ps_->entries[i].value;
            const auto& g = gs.grads[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < p.numel(); ++j) {
                const double gj = static_cast<double>(g.data[j]);
                const double mj = beta1 * static_cast<double>(m.data[j]) + (1.0 - beta1) * gj;
                const double vj = beta2 * static_cast<double>(v.data[j]) + (1.0 - beta2) * gj * gj;
                m.data[j] = static_cast<S>(mj);
                v.data[j] = static_cast<S>(vj);
                p.data[j] -= static_cast<S>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
            }
        }
    }

    int64_t steps_taken() const { return t_; }

    // Optimizer state for resumable checkpoints.
    std::vector<Tensor<S>>& moment1() { return m_; }
    std::vector<Tensor<S>>& moment2() { return v_; }
    void set_steps(int64_t t) { t_ = t; }

private:
    ParamStore<S>* ps_;
    std::vector<Tensor<S>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace lb

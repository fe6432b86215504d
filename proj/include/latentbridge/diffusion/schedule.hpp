// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "latentbridge/core/tensor.hpp"

namespace lb::diffusion {

struct DiffusionConfig {
    int total_steps = 50;      // T
    std::string beta_schedule = "linear";
    double beta_min = 0.008;
    double beta_max = 0.22;
    int base_channels = 32;
    int mid_channels = 128;    // C_h
    int n_blocks = 3;          // N tapped decoder blocks
    int k_attn = 2;            // K cross-attention layers per block
    int caption_len = 16;      // S
    int token_dim = 64;
    int attn_dim = 64;

    void validate() const {
        check(total_steps >= 2, ErrorKind::validation, "T must be >= 2");
        check(n_blocks >= 2, ErrorKind::validation, "N must be >= 2");
        check(k_attn >= 1, ErrorKind::validation, "K must be >= 1");
        check(beta_schedule == "linear", ErrorKind::validation, "unknown beta schedule");
        check(beta_min > 0 && beta_max < 1 && beta_min < beta_max, ErrorKind::validation,
              "betas must be strictly increasing within (0,1)");
    }
};

// betas[t] for t in 1..T (betas[0] unused and zero); alpha_bar[t] for t in
// 0..T with alpha_bar[0] == 1 exactly.
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alpha_bar;

    static NoiseSchedule from_config(const DiffusionConfig& cfg) {
        cfg.validate();
        NoiseSchedule s;
        const int t_max = cfg.total_steps;
        s.betas.assign(static_cast<size_t>(t_max) + 1, 0.0);
        s.alpha_bar.assign(static_cast<size_t>(t_max) + 1, 1.0);
        for (int t = 1; t <= t_max; ++t) {
            s.betas[static_cast<size_t>(t)] =
                cfg.beta_min + (cfg.beta_max - cfg.beta_min) * (t - 1) / (t_max - 1);
            s.alpha_bar[static_cast<size_t>(t)] =
                s.alpha_bar[static_cast<size_t>(t) - 1] * (1.0 - s.betas[static_cast<size_t>(t)]);
        }
        return s;
    }

    static NoiseSchedule from_betas(const std::vector<double>& betas_1_to_t) {
        NoiseSchedule s;
        s.betas.assign(1, 0.0);
        s.alpha_bar.assign(1, 1.0);
        for (double b : betas_1_to_t) {
            check(b > 0 && b < 1, ErrorKind::validation, "beta out of (0,1)");
            s.betas.push_back(b);
            s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
        }
        return s;
    }

    int total_steps() const { return static_cast<int>(alpha_bar.size()) - 1; }

    double ab(int t) const {
        check(t >= 0 && t <= total_steps(), ErrorKind::range,
              "denoising step out of range: " + std::to_string(t));
        return alpha_bar[static_cast<size_t>(t)];
    }
};

// z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) noise. ab_0 == 1, so t=0 returns x0
// bit-exactly.
template <class S>
Tensor<S> forward_diffuse(const Tensor<S>& x0, int t, const Tensor<S>& noise,
                          const NoiseSchedule& sched) {
    check(x0.same_shape(noise), ErrorKind::shape, "forward_diffuse: noise shape mismatch");
    const double ab = sched.ab(t);
    if (t == 0) return x0;
    const S a = static_cast<S>(std::sqrt(ab));
    const S b = static_cast<S>(std::sqrt(1.0 - ab));
    Tensor<S> z = x0;
    for (size_t i = 0; i < z.numel(); ++i) z.data[i] = a * x0.data[i] + b * noise.data[i];
    return z;
}

}  // namespace lb::diffusion

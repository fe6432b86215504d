// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "latentbridge/diffusion/unet.hpp"

namespace lb::diffusion {

struct SamplerConfig {
    int n_steps = 8;  // DDIM subsequence length (T and 0 always included)
};

// Descending DDIM step sequence covering T, 0, an even grid of n_steps
// anchors, and every explicitly requested step.
inline std::vector<int> ddim_step_sequence(int total_steps, int n_steps,
                                           const std::set<int>& required) {
    std::set<int, std::greater<int>> steps;
    steps.insert(total_steps);
    steps.insert(0);
    const int n = std::max(2, n_steps);
    for (int i = 0; i < n; ++i)
        steps.insert(static_cast<int>(std::lround(static_cast<double>(total_steps) * i / (n - 1))));
    for (int s : required) {
        check(s >= 0 && s <= total_steps, ErrorKind::range,
              "record step out of range: " + std::to_string(s));
        steps.insert(s);
    }
    return {steps.begin(), steps.end()};
}

// Deterministic DDIM (eta = 0) reverse pass from pure noise at t=T down to
// the clean estimate at t=0. Taps are recorded exactly at the requested
// steps. Works on any parameter state; an untrained backbone simply yields
// garbage images.
template <class S>
std::pair<Tensor<S>, std::map<int, FeatureTaps<S>>> run_reverse(
    UNet<S>& net, const MaskImage& mask, const std::vector<int>& caption, uint64_t seed,
    const std::set<int>& record_steps, const SamplerConfig& sampler = {}) {
    const int t_max = net.cfg.total_steps;
    const auto steps = ddim_step_sequence(t_max, sampler.n_steps, record_steps);

    Rng rng = Rng(seed).fork(0xDD1);
    Tensor<S> z = Tensor<S>::randn({3, data::kImageSize, data::kImageSize}, rng);
    std::map<int, FeatureTaps<S>> trajectory;
    Tensor<S> x0_pred = z;

    for (size_t i = 0; i < steps.size(); ++i) {
        const int t = steps[i];
        const bool want = record_steps.count(t) > 0;
        const bool last = i + 1 == steps.size();
        if (last && !want) break;  // t=0 with no tap request: z already holds the estimate
        auto [eps, taps] = net.denoise_with_taps(z, t, mask, caption);
        if (want) trajectory.emplace(t, std::move(taps));
        if (last) break;

        const double ab_t = net.sched.ab(t);
        const double sa = std::sqrt(ab_t), sb = std::sqrt(1.0 - ab_t);
        x0_pred = z;
        for (size_t j = 0; j < z.numel(); ++j) {
            const double x0 = (static_cast<double>(z.data[j]) - sb * static_cast<double>(eps.data[j])) /
                              (sa > 1e-8 ? sa : 1e-8);
            x0_pred.data[j] = static_cast<S>(std::clamp(x0, -1.0, 1.0));
        }
        // alpha_bar(0) == 1, so the transition into t=0 lands on the clean
        // estimate exactly.
        const double ab_n = net.sched.ab(steps[i + 1]);
        const double na = std::sqrt(ab_n), nb = std::sqrt(1.0 - ab_n);
        for (size_t j = 0; j < z.numel(); ++j)
            z.data[j] = static_cast<S>(na * static_cast<double>(x0_pred.data[j]) +
                                       nb * static_cast<double>(eps.data[j]));
    }
    return {z, std::move(trajectory)};
}

}  // namespace lb::diffusion

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference gradient checking against the tape. Used at
// double precision throughout the test suites.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "latentbridge/core/graph.hpp"
#include "latentbridge/core/rng.hpp"

namespace lbtest {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    std::string worst;
};

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// f maps a flat parameter vector to a scalar; g returns the analytic gradient.
// Probes `n_probe` coordinates chosen by rng.
inline GradCheckResult finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                         const std::vector<double>& theta,
                                         const std::vector<double>& analytic_grad, int n_probe,
                                         lb::Rng& rng, double h_scale = 1e-5) {
    GradCheckResult res;
    const size_t n = theta.size();
    for (int p = 0; p < n_probe; ++p) {
        const size_t i = static_cast<size_t>(rng.below(n));
        const double h = h_scale * std::max(1.0, std::abs(theta[i]));
        std::vector<double> tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double numeric = (f(tp) - f(tm)) / (2.0 * h);
        const double e = rel_err(analytic_grad[i], numeric);
        if (e > res.max_rel_err) {
            res.max_rel_err = e;
            res.worst = "coord " + std::to_string(i) + " analytic " +
                        std::to_string(analytic_grad[i]) + " numeric " + std::to_string(numeric);
        }
        ++res.checked;
    }
    return res;
}

// Convenience: check d(loss)/d(input tensor) for a tape-built scalar.
// build(x) must construct a fresh tape, mark x as the (needs_grad) input and
// return the scalar loss value; grad_out receives the analytic gradient.
inline GradCheckResult check_input_grad(
    const std::function<double(const lb::TensorD&, lb::TensorD*)>& run, const lb::TensorD& x0,
    int n_probe, lb::Rng& rng, double h_scale = 1e-5) {
    lb::TensorD analytic;
    run(x0, &analytic);
    std::vector<double> theta(x0.data.begin(), x0.data.end());
    std::vector<double> ag(analytic.data.begin(), analytic.data.end());
    auto f = [&](const std::vector<double>& th) {
        lb::TensorD x = x0;
        x.data.assign(th.begin(), th.end());
        return run(x, nullptr);
    };
    return finite_diff_check(f, theta, ag, n_probe, rng, h_scale);
}

}  // namespace lbtest

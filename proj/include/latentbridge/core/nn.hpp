// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "latentbridge/core/ops.hpp"

namespace lb {

// Kaiming-normal init matched to LeakyReLU(0.2).
template <class S>
Tensor<S> kaiming_conv(int out_c, int in_c, int k, Rng& rng) {
    const double fan_in = static_cast<double>(in_c) * k * k;
    const double stddev = std::sqrt(2.0 / (1.04 * fan_in));
    return Tensor<S>::randn({out_c, in_c, k, k}, rng, stddev);
}

template <class S>
Tensor<S> kaiming_fc(int out_n, int in_n, Rng& rng) {
    const double stddev = std::sqrt(2.0 / (1.04 * static_cast<double>(in_n)));
    return Tensor<S>::randn({out_n, in_n}, rng, stddev);
}

template <class S>
struct Conv2dLayer {
    int w_id = -1, b_id = -1;
    int stride = 1, pad = 0;

    void init(ParamStore<S>& ps, const std::string& name, int in_c, int out_c, int k, int stride_,
              Rng& rng, bool zero_init = false) {
        stride = stride_;
        pad = k / 2;
        Tensor<S> w = zero_init ? Tensor<S>::zeros({out_c, in_c, k, k})
                                : kaiming_conv<S>(out_c, in_c, k, rng);
        w_id = ps.add(name + ".weight", std::move(w));
        b_id = ps.add(name + ".bias", Tensor<S>::zeros({out_c}));
    }

    Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        return conv2d(x, param(t, ps, w_id), param(t, ps, b_id), stride, pad);
    }
};

template <class S>
struct LinearLayer {
    int w_id = -1, b_id = -1;

    void init(ParamStore<S>& ps, const std::string& name, int in_n, int out_n, Rng& rng,
              bool zero_init = false) {
        Tensor<S> w = zero_init ? Tensor<S>::zeros({out_n, in_n}) : kaiming_fc<S>(out_n, in_n, rng);
        w_id = ps.add(name + ".weight", std::move(w));
        b_id = ps.add(name + ".bias", Tensor<S>::zeros({out_n}));
    }

    Var<S> forward_vec(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        return linear_vec(x, param(t, ps, w_id), param(t, ps, b_id));
    }
    Var<S> forward_rows(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        return linear_rows(x, param(t, ps, w_id), param(t, ps, b_id));
    }
};

template <class S>
struct GroupNormLayer {
    int g_id = -1, b_id = -1;
    int groups = 8;

    void init(ParamStore<S>& ps, const std::string& name, int channels, int groups_) {
        groups = groups_;
        g_id = ps.add(name + ".gamma", Tensor<S>::full({channels}, S(1)));
        b_id = ps.add(name + ".beta", Tensor<S>::zeros({channels}));
    }

    Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        return group_norm(x, param(t, ps, g_id), param(t, ps, b_id), groups);
    }
};

template <class S>
struct LayerNormLayer {
    int g_id = -1, b_id = -1;

    void init(ParamStore<S>& ps, const std::string& name, int dim) {
        g_id = ps.add(name + ".gamma", Tensor<S>::full({dim}, S(1)));
        b_id = ps.add(name + ".beta", Tensor<S>::zeros({dim}));
    }

    Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        return layer_norm_rows(x, param(t, ps, g_id), param(t, ps, b_id));
    }
};

// Sinusoidal timestep embedding, dim even.
template <class S>
Tensor<S> sinusoidal_embedding(int t, int dim, int max_period = 10000) {
    Tensor<S> e({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(static_cast<double>(max_period)) * i / half);
        e.data[static_cast<size_t>(i)] = static_cast<S>(std::sin(t * freq));
        e.data[static_cast<size_t>(half + i)] = static_cast<S>(std::cos(t * freq));
    }
    return e;
}

}  // namespace lb

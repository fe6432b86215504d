// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "latentbridge/core/nn.hpp"

namespace lb::latent {

inline constexpr int kLatentDim = 512;  // D

inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

// pSp-style head: log2(spatial) stride-2 conv + LeakyReLU stages down to 1x1,
// then one fully connected layer to the latent dimension.
template <class S>
struct Map2Style {
    std::vector<Conv2dLayer<S>> convs;
    LinearLayer<S> fc;
    int in_channels = 0;
    int in_spatial = 0;
    int last_channels = 0;

    int n_stages() const { return static_cast<int>(convs.size()); }

    void init(ParamStore<S>& ps, const std::string& name, int in_c, int spatial, Rng& rng,
              bool zero_final = false) {
        check(is_pow2(spatial), ErrorKind::shape, "map2style input spatial must be a power of 2");
        in_channels = in_c;
        in_spatial = spatial;
        const int cap = std::max(in_c, 64);
        int cur = in_c;
        int stage = 0;
        for (int s = spatial; s > 1; s /= 2, ++stage) {
            const int next = std::min(cur * 2, cap);
            Conv2dLayer<S> conv;
            conv.init(ps, name + ".conv" + std::to_string(stage), cur, next, 3, 2, rng);
            convs.push_back(conv);
            cur = next;
        }
        last_channels = cur;
        fc.init(ps, name + ".fc", cur, kLatentDim, rng, zero_final);
    }

    // {C, R, R} -> {D}
    Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x) const {
        const auto& xv = x.val();
        check(xv.rank() == 3 && xv.dim(0) == in_channels, ErrorKind::shape,
              "map2style: channel mismatch");
        check(xv.dim(1) == in_spatial && xv.dim(2) == in_spatial, ErrorKind::shape,
              "map2style: expected " + std::to_string(in_spatial) + "x" +
                  std::to_string(in_spatial) + " input");
        check(is_pow2(xv.dim(1)), ErrorKind::shape, "map2style: spatial must be a power of 2");
        for (const auto& conv : convs) x = leaky_relu(conv.forward(t, ps, x));
        return fc.forward_vec(t, ps, reshape(x, {last_channels}));
    }
};

}  // namespace lb::latent

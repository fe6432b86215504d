// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "latentbridge/core/nn.hpp"
#include "latentbridge/latent/map2style.hpp"

namespace lb::gan {

struct GeneratorConfig {
    int latent_slots = 8;                          // L
    int latent_dim = latent::kLatentDim;           // D
    int stages = 4;                                // 4x4 -> 64x64
    int const_channels = 128;
    std::vector<int> stage_channels = {64, 64, 32, 16};
    int z_dim = 64;

    void validate() const {
        check(2 * stages == latent_slots, ErrorKind::validation,
              "generator needs 2 style slots per stage");
        check(static_cast<int>(stage_channels.size()) == stages, ErrorKind::validation,
              "stage_channels size must equal stages");
        check(latent_dim == latent::kLatentDim, ErrorKind::validation, "D is fixed at 512");
    }

    int output_size() const { return 4 << stages; }
};

// Style-modulated synthesis network: learned 4x4 constant, per-stage 2x
// upsampling with two style-conditioned convs (FiLM from the 512-d style row),
// bounded RGB output via tanh.
template <class S>
struct Generator {
    GeneratorConfig cfg;
    ParamStore<S> params;
    int const_id = -1;

    struct StyledConv {
        Conv2dLayer<S> conv;
        LinearLayer<S> to_scale, to_shift;

        void init(ParamStore<S>& ps, const std::string& name, int in_c, int out_c, int d,
                  Rng& rng) {
            conv.init(ps, name + ".conv", in_c, out_c, 3, 1, rng);
            // zero-init so styles start as identity modulation of the conv
            to_scale.init(ps, name + ".scale", d, out_c, rng, /*zero_init=*/true);
            to_shift.init(ps, name + ".shift", d, out_c, rng, /*zero_init=*/true);
        }

        Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x, Var<S> w_row) const {
            auto h = conv.forward(t, ps, x);
            const int hh = h.val().dim(1), ww = h.val().dim(2);
            auto sc = add_const(to_scale.forward_vec(t, ps, w_row), S(1));
            auto sh = to_shift.forward_vec(t, ps, w_row);
            h = add(mul(h, broadcast_chan(sc, hh, ww)), broadcast_chan(sh, hh, ww));
            return leaky_relu(h);
        }
    };

    std::vector<StyledConv> convs;  // 2 per stage
    Conv2dLayer<S> to_rgb;

    void init(const GeneratorConfig& config, Rng& rng) {
        cfg = config;
        cfg.validate();
        params = ParamStore<S>();
        const_id = params.add("gen.const",
                              Tensor<S>::randn({cfg.const_channels, 4, 4}, rng, 1.0));
        convs.resize(static_cast<size_t>(2 * cfg.stages));
        int cur = cfg.const_channels;
        for (int s = 0; s < cfg.stages; ++s) {
            const int out_c = cfg.stage_channels[static_cast<size_t>(s)];
            convs[static_cast<size_t>(2 * s)].init(params, "gen.s" + std::to_string(s) + "a", cur,
                                                   out_c, cfg.latent_dim, rng);
            convs[static_cast<size_t>(2 * s + 1)].init(params, "gen.s" + std::to_string(s) + "b",
                                                       out_c, out_c, cfg.latent_dim, rng);
            cur = out_c;
        }
        to_rgb.init(params, "gen.rgb", cur, 3, 3, 1, rng);
    }

    // w {L, 512} -> image {3, out, out} in [-1, 1]
    Var<S> generate(Tape<S>& t, Var<S> w) {
        const auto& wv = w.val();
        check(wv.rank() == 2 && wv.dim(0) == cfg.latent_slots && wv.dim(1) == cfg.latent_dim,
              ErrorKind::shape, "generate: w must be {L,512}, got " + wv.shape_str());
        Var<S> x = param(t, params, const_id);
        for (int s = 0; s < cfg.stages; ++s) {
            x = upsample_nearest2(x);
            x = convs[static_cast<size_t>(2 * s)].forward(t, params, x, row_of(w, 2 * s));
            x = convs[static_cast<size_t>(2 * s + 1)].forward(t, params, x, row_of(w, 2 * s + 1));
        }
        return tanh_op(to_rgb.forward(t, params, x));
    }

    Tensor<S> generate_value(const Tensor<S>& w) {
        Tape<S> t(false);
        return generate(t, constant(t, w)).val();
    }
};

// z -> w mapping network used only for generator pretraining and the mean
// latent estimate.
template <class S>
struct LatentMapper {
    ParamStore<S> params;
    LinearLayer<S> fc1, fc2;
    int z_dim = 64;

    void init(int z_dim_, Rng& rng) {
        z_dim = z_dim_;
        params = ParamStore<S>();
        fc1.init(params, "zmap.fc1", z_dim, 256, rng);
        fc2.init(params, "zmap.fc2", 256, latent::kLatentDim, rng);
    }

    Var<S> forward(Tape<S>& t, Var<S> z) {
        return fc2.forward_vec(t, params, leaky_relu(fc1.forward_vec(t, params, z)));
    }

    Tensor<S> forward_value(const Tensor<S>& z) {
        Tape<S> t(false);
        return forward(t, constant(t, z)).val();
    }
};

// Average latent code: the row-mean of n_samples mapped draws, tiled over the
// L slots. Reproducible from (seed, n_samples) bit-exactly.
template <class S>
struct MeanLatent {
    Tensor<S> w_bar;  // {L, 512}
    int n_samples = 0;
    uint64_t seed = 0;

    static MeanLatent estimate(LatentMapper<S>& mapper, int latent_slots, int n_samples,
                               uint64_t seed) {
        check(n_samples > 0, ErrorKind::validation, "n_samples must be positive");
        Rng rng = Rng(seed).fork(0xABAC);
        TensorD acc({latent::kLatentDim});
        for (int i = 0; i < n_samples; ++i) {
            const Tensor<S> z = Tensor<S>::randn({mapper.z_dim}, rng);
            const Tensor<S> w = mapper.forward_value(z);
            for (int j = 0; j < latent::kLatentDim; ++j)
                acc.data[static_cast<size_t>(j)] += static_cast<double>(w.data[static_cast<size_t>(j)]);
        }
        MeanLatent m;
        m.n_samples = n_samples;
        m.seed = seed;
        m.w_bar = Tensor<S>({latent_slots, latent::kLatentDim});
        for (int l = 0; l < latent_slots; ++l)
            for (int j = 0; j < latent::kLatentDim; ++j)
                m.w_bar.at(l, j) = static_cast<S>(acc.data[static_cast<size_t>(j)] / n_samples);
        return m;
    }
};

}  // namespace lb::gan

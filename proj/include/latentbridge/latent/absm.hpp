// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>
#include <vector>

#include "latentbridge/latent/map2style.hpp"
#include "latentbridge/refine/refinery.hpp"

namespace lb::latent {

// Attention-based style modulation network T. Local scale/shift nets read the
// concatenated refined feature maps; global nets read the averaged refined
// map. Each pair is blended by a learnable weight squashed through a sigmoid
// so the blend stays a convex combination for every parameter value, then
// L-headed map2style stacks emit the scale and shift latent codes.
template <class S>
struct AbsmNet {
    ParamStore<S> params;
    std::vector<int> block_channels;  // C_n per tapped block
    int mod_channels = 8;
    int latent_slots = 0;
    int working_res = 64;
    bool eq3_literal_beta = false;  // the collapsed form, kept for comparison

    Conv2dLayer<S> local_gamma, local_beta;    // 3x3 on concat(F_hat)
    Conv2dLayer<S> global_gamma, global_beta;  // 3x3 on F_hat_bar
    int alpha_gamma_id = -1, alpha_beta_id = -1;
    std::vector<Map2Style<S>> gamma_heads, beta_heads;

    void init(const std::vector<int>& c_blocks, int l_slots, int res, Rng& rng,
              bool literal_beta = false) {
        check(!c_blocks.empty(), ErrorKind::validation, "need at least one tapped block");
        block_channels = c_blocks;
        latent_slots = l_slots;
        working_res = res;
        eq3_literal_beta = literal_beta;
        params = ParamStore<S>();

        const int concat_c = std::accumulate(c_blocks.begin(), c_blocks.end(), 0);
        local_gamma.init(params, "absm.local_gamma", concat_c, mod_channels, 3, 1, rng);
        local_beta.init(params, "absm.local_beta", concat_c, mod_channels, 3, 1, rng);
        global_gamma.init(params, "absm.global_gamma", 1, mod_channels, 3, 1, rng);
        global_beta.init(params, "absm.global_beta", 1, mod_channels, 3, 1, rng);
        alpha_gamma_id = params.add("absm.alpha_gamma", Tensor<S>::zeros({1}));
        alpha_beta_id = params.add("absm.alpha_beta", Tensor<S>::zeros({1}));

        gamma_heads.resize(static_cast<size_t>(l_slots));
        beta_heads.resize(static_cast<size_t>(l_slots));
        for (int i = 0; i < l_slots; ++i) {
            // zero-init final FC layers: training starts at identity modulation
            gamma_heads[static_cast<size_t>(i)].init(params, "absm.gamma_head" + std::to_string(i),
                                                     mod_channels, res, rng, /*zero_final=*/true);
            beta_heads[static_cast<size_t>(i)].init(params, "absm.beta_head" + std::to_string(i),
                                                    mod_channels, res, rng, /*zero_final=*/true);
        }
    }

    // Blended scale/shift feature maps from the refined stacks.
    std::pair<Var<S>, Var<S>> modulation_maps(Tape<S>& t, const std::vector<Var<S>>& f_hat,
                                              Var<S> f_hat_bar) {
        check(f_hat.size() == block_channels.size(), ErrorKind::shape,
              "modulation_maps: N mismatch with configuration");
        for (size_t n = 0; n < f_hat.size(); ++n)
            check(f_hat[n].val().dim(0) == block_channels[n], ErrorKind::shape,
                  "modulation_maps: block channel mismatch");

        Var<S> cat = f_hat[0];
        for (size_t n = 1; n < f_hat.size(); ++n) cat = concat_channels(cat, f_hat[n]);

        auto local_g = leaky_relu(local_gamma.forward(t, params, cat));
        auto local_b = leaky_relu(local_beta.forward(t, params, cat));
        auto global_g = leaky_relu(global_gamma.forward(t, params, f_hat_bar));
        auto global_b = leaky_relu(global_beta.forward(t, params, f_hat_bar));

        auto sg = sigmoid_op(param(t, params, alpha_gamma_id));
        auto sb = sigmoid_op(param(t, params, alpha_beta_id));
        auto one_minus = [&](Var<S> s) { return add_const(scale(s, S(-1)), S(1)); };

        auto f_gamma = add(mul_scalar_var(local_g, sg), mul_scalar_var(global_g, one_minus(sg)));
        // The symmetric blend; the literal collapsed form uses the global map
        // in both slots.
        auto beta_first = eq3_literal_beta ? global_b : local_b;
        auto f_beta = add(mul_scalar_var(beta_first, sb), mul_scalar_var(global_b, one_minus(sb)));
        return {f_gamma, f_beta};
    }

    // map2style stacks producing w^gamma, w^beta in {L, 512}.
    std::pair<Var<S>, Var<S>> style_codes(Tape<S>& t, Var<S> f_gamma, Var<S> f_beta) {
        std::vector<Var<S>> g_rows, b_rows;
        g_rows.reserve(gamma_heads.size());
        b_rows.reserve(beta_heads.size());
        for (const auto& h : gamma_heads) g_rows.push_back(h.forward(t, params, f_gamma));
        for (const auto& h : beta_heads) b_rows.push_back(h.forward(t, params, f_beta));
        return {stack_rows(g_rows), stack_rows(b_rows)};
    }

    double sigma_alpha_gamma() const {
        return 1.0 / (1.0 + std::exp(-static_cast<double>(params.value(alpha_gamma_id).data[0])));
    }
    double sigma_alpha_beta() const {
        return 1.0 / (1.0 + std::exp(-static_cast<double>(params.value(alpha_beta_id).data[0])));
    }
};

// Eq. 4 with identity centering: w_t = w_m ⊙ (1 + w_gamma) ⊕ w_beta.
// Zero-initialized style heads therefore start at w_t == w_m bit-exactly.
template <class S>
Var<S> modulate(Var<S> w_m, Var<S> w_gamma, Var<S> w_beta) {
    check(w_m.val().same_shape(w_gamma.val()) && w_m.val().same_shape(w_beta.val()),
          ErrorKind::shape, "modulate: latent shape mismatch");
    return add(mul(w_m, add_const(w_gamma, S(1))), w_beta);
}

template <class S>
Tensor<S> modulate_value(const Tensor<S>& w_m, const Tensor<S>& w_gamma,
                         const Tensor<S>& w_beta) {
    Tape<S> t(false);
    return modulate(constant(t, w_m), constant(t, w_gamma), constant(t, w_beta)).val();
}

}  // namespace lb::latent

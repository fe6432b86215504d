// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "latentbridge/latent/map2style.hpp"

namespace lb::latent {

// Mapping network M: one map2style head per latent slot, all reading the
// middle-block features h_t. Output is the mapped latent code {L, 512}.
template <class S>
struct MappingNet {
    ParamStore<S> params;
    std::vector<Map2Style<S>> heads;
    int latent_slots = 0;

    void init(int l_slots, int c_h, int spatial, Rng& rng) {
        check(l_slots >= 1, ErrorKind::validation, "L must be >= 1");
        latent_slots = l_slots;
        params = ParamStore<S>();
        heads.resize(static_cast<size_t>(l_slots));
        for (int i = 0; i < l_slots; ++i)
            heads[static_cast<size_t>(i)].init(params, "mapping.head" + std::to_string(i), c_h,
                                               spatial, rng);
    }

    // h_t {C_h, 8, 8} -> w^m {L, D}
    Var<S> map_latent(Tape<S>& t, Var<S> h) {
        std::vector<Var<S>> rows;
        rows.reserve(heads.size());
        for (const auto& head : heads) rows.push_back(head.forward(t, params, h));
        return stack_rows(rows);
    }

    Tensor<S> map_latent_value(const Tensor<S>& h) {
        Tape<S> t(false);
        return map_latent(t, constant(t, h)).val();
    }
};

}  // namespace lb::latent

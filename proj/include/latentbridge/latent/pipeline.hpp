// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "latentbridge/latent/absm.hpp"
#include "latentbridge/latent/mapping_net.hpp"

namespace lb::latent {

// Evaluation-time ablations: full pipeline, mapping network only (bypass T),
// or attention maps replaced with all-ones.
enum class AblationMode { full, m_only, no_attention };

inline AblationMode parse_ablation(const std::string& name) {
    if (name == "full") return AblationMode::full;
    if (name == "m-only") return AblationMode::m_only;
    if (name == "no-attention") return AblationMode::no_attention;
    fail(ErrorKind::validation,
         "unknown ablation '" + name + "' (expected m-only|no-attention|full)");
}

inline const char* to_string(AblationMode m) {
    switch (m) {
        case AblationMode::full: return "full";
        case AblationMode::m_only: return "m-only";
        case AblationMode::no_attention: return "no-attention";
    }
    return "?";
}

// Taps -> final latent code w_t on the given tape. The taps enter as
// constants; gradients reach only the mapping/absm parameters.
template <class S>
Var<S> latent_pipeline(Tape<S>& t, const diffusion::FeatureTaps<S>& taps,
                       const std::vector<int>& caption, MappingNet<S>& mapping, AbsmNet<S>* absm,
                       AblationMode mode, int working_res) {
    auto w_m = mapping.map_latent(t, constant(t, taps.h));
    if (mode == AblationMode::m_only || absm == nullptr) return w_m;

    const auto refined = refinery::build_refined(taps, caption, working_res, working_res,
                                                 mode == AblationMode::no_attention);
    std::vector<Var<S>> f_hat;
    f_hat.reserve(refined.f_hat.size());
    for (const auto& m : refined.f_hat) f_hat.push_back(constant(t, m));
    auto [fg, fb] = absm->modulation_maps(t, f_hat, constant(t, refined.f_hat_bar));
    auto [wg, wb] = absm->style_codes(t, fg, fb);
    return modulate(w_m, wg, wb);
}

}  // namespace lb::latent

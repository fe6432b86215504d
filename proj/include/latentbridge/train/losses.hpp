// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <sstream>

#include "latentbridge/gan/embedders.hpp"
#include "latentbridge/gan/generator.hpp"

namespace lb::train {

// Loss weights for the mapping phase (lambda_m) and the style-modulation
// phase (lambda_s). Terms: 0 reconstruction, 1 perceptual, 2 identity,
// 3 latent regularization.
struct LossWeights {
    std::array<double, 4> lambda_m{1.0, 0.8, 0.1, 0.005};
    std::array<double, 4> lambda_s{1.0, 0.8, 0.1, 0.005};

    void validate() const {
        for (double v : lambda_m)
            check(v >= 0, ErrorKind::validation, "lambda_m entries must be >= 0");
        for (double v : lambda_s)
            check(v >= 0, ErrorKind::validation, "lambda_s entries must be >= 0");
        check(lambda_m[0] + lambda_m[1] + lambda_m[2] > 0, ErrorKind::validation,
              "at least one of the first three lambda_m must be positive");
        check(lambda_s[0] + lambda_s[1] + lambda_s[2] > 0, ErrorKind::validation,
              "at least one of the first three lambda_s must be positive");
    }

    static std::array<double, 4> parse4(const std::string& text, const char* key) {
        std::array<double, 4> out{};
        std::istringstream is(text);
        for (int i = 0; i < 4; ++i)
            check(static_cast<bool>(is >> out[static_cast<size_t>(i)]), ErrorKind::validation,
                  std::string(key) + " needs exactly 4 numbers");
        double extra;
        check(!(is >> extra), ErrorKind::validation, std::string(key) + " needs exactly 4 numbers");
        return out;
    }
};

template <class S>
struct LossTerms {
    Var<S> total;                   // graph node driving backward
    std::array<double, 4> terms{};  // weighted term values
    double total_value = 0;         // exact ordered double sum of the terms
};

// The three frozen networks every inversion loss consults.
template <class S>
struct FrozenNets {
    gan::Generator<S>* gen = nullptr;
    gan::IdentityNet<S>* idnet = nullptr;
    gan::PercNet<S>* percnet = nullptr;
};

namespace detail {

// lambda0*|ref - G(w)|2 + lambda1*|F(ref) - F(G(w))|2
// + lambda2*(1 - cos(R(id_ref), R(G(w)))) + lambda3*|w - w_bar|2
template <class S>
LossTerms<S> inversion_loss(Tape<S>& t, Var<S> recon_ref, Var<S> identity_ref, Var<S> w,
                            const Tensor<S>& w_bar, const std::array<double, 4>& lambda,
                            FrozenNets<S>& nets) {
    check(w.val().same_shape(w_bar), ErrorKind::shape, "latent/mean-latent shape mismatch");
    auto img = nets.gen->generate(t, w);

    auto t0 = scale(l2_norm(sub(recon_ref, img)), static_cast<S>(lambda[0]));
    auto t1 = scale(nets.percnet->distance(t, recon_ref, img), static_cast<S>(lambda[1]));
    auto t2 = scale(one_minus_cosine(nets.idnet->embed(t, identity_ref), nets.idnet->embed(t, img)),
                    static_cast<S>(lambda[2]));
    auto t3 = scale(l2_norm(sub(w, constant(t, w_bar))), static_cast<S>(lambda[3]));

    LossTerms<S> out;
    out.total = add(add(add(t0, t1), t2), t3);
    out.terms = {static_cast<double>(t0.val().data[0]), static_cast<double>(t1.val().data[0]),
                 static_cast<double>(t2.val().data[0]), static_cast<double>(t3.val().data[0])};
    out.total_value = ((out.terms[0] + out.terms[1]) + out.terms[2]) + out.terms[3];
    return out;
}

}  // namespace detail

// Mapping-phase objective: every term references the GT image; the
// regularizer pulls w^m toward the mean latent.
template <class S>
LossTerms<S> loss_mapping(Tape<S>& t, const Tensor<S>& i_gt, Var<S> w_m, const Tensor<S>& w_bar,
                          const LossWeights& weights, FrozenNets<S>& nets) {
    auto gt = constant(t, i_gt);
    return detail::inversion_loss(t, gt, gt, w_m, w_bar, weights.lambda_m, nets);
}

// Style-phase objective: reconstruction and perceptual terms reference the
// denoiser's own output I^d_0 while the identity term references the GT image.
template <class S>
LossTerms<S> loss_absm(Tape<S>& t, const Tensor<S>& i_d0, const Tensor<S>& i_gt, Var<S> w_t,
                       const Tensor<S>& w_bar, const LossWeights& weights, FrozenNets<S>& nets) {
    return detail::inversion_loss(t, constant(t, i_d0), constant(t, i_gt), w_t, w_bar,
                                  weights.lambda_s, nets);
}

}  // namespace lb::train

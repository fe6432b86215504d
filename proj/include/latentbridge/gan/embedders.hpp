// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "latentbridge/core/nn.hpp"
#include "latentbridge/data/attributes.hpp"

namespace lb::gan {

inline constexpr int kEmbedDim = 64;

// Identity embedder (ArcFace stand-in): small conv classifier over toy
// identities; after training only the L2-normalized penultimate embedding is
// used and the parameters are frozen.
template <class S>
struct IdentityNet {
    ParamStore<S> params;
    Conv2dLayer<S> c1, c2, c3;
    LinearLayer<S> embed_fc, cls_fc;
    int n_classes = data::kNumIdentities;
    bool trained = false;

    void init(int n_classes_, Rng& rng) {
        n_classes = n_classes_;
        params = ParamStore<S>();
        c1.init(params, "idnet.c1", 3, 16, 3, 2, rng);
        c2.init(params, "idnet.c2", 16, 32, 3, 2, rng);
        c3.init(params, "idnet.c3", 32, 64, 3, 2, rng);
        embed_fc.init(params, "idnet.embed", 64, kEmbedDim, rng);
        cls_fc.init(params, "idnet.cls", kEmbedDim, n_classes, rng);
    }

    Var<S> trunk(Tape<S>& t, Var<S> img) {
        auto x = leaky_relu(c1.forward(t, params, img));
        x = leaky_relu(c2.forward(t, params, x));
        x = leaky_relu(c3.forward(t, params, x));
        return global_avg_pool(x);
    }

    // Pre-normalization embedding; these are also the Fréchet features.
    Var<S> penultimate(Tape<S>& t, Var<S> img) {
        return embed_fc.forward_vec(t, params, trunk(t, img));
    }

    Var<S> logits(Tape<S>& t, Var<S> img) {
        return cls_fc.forward_vec(t, params, leaky_relu(penultimate(t, img)));
    }

    // Differentiable unit-sphere embedding.
    Var<S> embed(Tape<S>& t, Var<S> img) {
        check(trained, ErrorKind::missing_checkpoint,
              "identity embedder is untrained; run the pretrain-gan phase first");
        auto e = penultimate(t, img);
        auto n = add_const(l2_norm(e), S(1e-12));
        // e / ||e||: scale by reciprocal of the norm scalar
        auto inv = div_scalar(constant(t, Tensor<S>::full({1}, S(1))), n);
        return mul_scalar_var(e, inv);
    }

    Tensor<S> embed_value(const Tensor<S>& img) {
        Tape<S> t(false);
        return embed(t, constant(t, img)).val();
    }

    Tensor<S> penultimate_value(const Tensor<S>& img) {
        Tape<S> t(false);
        return penultimate(t, constant(t, img)).val();
    }
};

// Perceptual feature pyramid (LPIPS stand-in): a fixed-seed random conv
// pyramid, frozen forever. Three feature maps at three scales.
template <class S>
struct PercNet {
    ParamStore<S> params;
    Conv2dLayer<S> c1, c2, c3;
    uint64_t init_seed = 0;

    void init(uint64_t seed) {
        init_seed = seed;
        Rng rng = Rng(seed).fork(0xFEA7);
        params = ParamStore<S>();
        c1.init(params, "percnet.c1", 3, 16, 3, 2, rng);
        c2.init(params, "percnet.c2", 16, 32, 3, 2, rng);
        c3.init(params, "percnet.c3", 32, 64, 3, 2, rng);
    }

    std::vector<Var<S>> features(Tape<S>& t, Var<S> img) {
        auto f1 = leaky_relu(c1.forward(t, params, img));
        auto f2 = leaky_relu(c2.forward(t, params, f1));
        auto f3 = leaky_relu(c3.forward(t, params, f2));
        return {f1, f2, f3};
    }

    // sqrt of the total sum of squared feature differences across all scales
    Var<S> distance(Tape<S>& t, Var<S> a, Var<S> b) {
        auto fa = features(t, a);
        auto fb = features(t, b);
        Var<S> acc;
        for (size_t i = 0; i < fa.size(); ++i) {
            auto d = sub(fa[i], fb[i]);
            auto ss = dot(d, d);
            acc = i == 0 ? ss : add(acc, ss);
        }
        // sqrt via l2_norm of the 1-element sumsq... keep explicit:
        return sqrt_scalar(acc);
    }

    double distance_value(const Tensor<S>& a, const Tensor<S>& b) {
        Tape<S> t(false);
        return static_cast<double>(distance(t, constant(t, a), constant(t, b)).val().data[0]);
    }

private:
    static Var<S> sqrt_scalar(Var<S> x) {
        Tape<S>& t = *x.tape;
        Tensor<S> out({1});
        out.data[0] = static_cast<S>(std::sqrt(static_cast<double>(x.val().data[0])));
        Var<S> y{&t, t.new_node(std::move(out), x.needs_grad())};
        if (t.grad_enabled() && y.needs_grad()) {
            const int xi = x.idx, yi = y.idx;
            t.node(yi).back = [xi, yi](Tape<S>& tp) {
                const double yv = static_cast<double>(tp.val(yi).data[0]);
                if (yv <= 0) return;  // gradient defined as 0 at the root
                tp.grad_ref(xi).data[0] +=
                    tp.node(yi).grad.data[0] / static_cast<S>(2.0 * yv);
            };
        }
        return y;
    }
};

}  // namespace lb::gan

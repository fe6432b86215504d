// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "latentbridge/core/config.hpp"
#include "latentbridge/core/optim.hpp"
#include "latentbridge/core/serialize.hpp"
#include "latentbridge/data/dataset.hpp"
#include "latentbridge/gan/embedders.hpp"
#include "latentbridge/gan/generator.hpp"
#include "latentbridge/train/metrics_csv.hpp"

namespace lb::gan {

// Copy values for every destination entry from a (possibly merged) source
// store, matched by name.
template <class S>
void restore_subset(ParamStore<S>& dst, const ParamStore<S>& src) {
    for (auto& e : dst.entries) {
        const int id = src.id_of(e.name);
        check(src.value(id).shape == e.value.shape, ErrorKind::validation,
              "shape mismatch restoring " + e.name);
        e.value.data = src.value(id).data;
    }
}

template <class S>
struct Discriminator {
    ParamStore<S> params;
    Conv2dLayer<S> c1, c2, c3, c4;
    LinearLayer<S> fc;

    void init(Rng& rng) {
        params = ParamStore<S>();
        c1.init(params, "disc.c1", 3, 32, 3, 2, rng);
        c2.init(params, "disc.c2", 32, 64, 3, 2, rng);
        c3.init(params, "disc.c3", 64, 128, 3, 2, rng);
        c4.init(params, "disc.c4", 128, 128, 3, 2, rng);
        fc.init(params, "disc.fc", 128 * 4 * 4, 1, rng);
    }

    Var<S> logit(Tape<S>& t, Var<S> img) {
        auto x = leaky_relu(c1.forward(t, params, img));
        x = leaky_relu(c2.forward(t, params, x));
        x = leaky_relu(c3.forward(t, params, x));
        x = leaky_relu(c4.forward(t, params, x));
        return fc.forward_vec(t, params, reshape(x, {128 * 4 * 4}));
    }
};

inline GeneratorConfig generator_config_from_run(const RunConfig& rc) {
    GeneratorConfig c;
    c.latent_slots = static_cast<int>(rc.get_int("gan.latent_slots", c.latent_slots));
    c.stages = static_cast<int>(rc.get_int("gan.stages", c.stages));
    c.z_dim = static_cast<int>(rc.get_int("gan.z_dim", c.z_dim));
    c.validate();
    return c;
}

template <class S>
struct GeneratorBundle {
    Generator<S> gen;
    LatentMapper<S> mapper;
    MeanLatent<S> mean_latent;
};

template <class S>
CheckpointBundle<S> make_generator_checkpoint(const GeneratorBundle<S>& gb, const RunConfig& rc) {
    CheckpointBundle<S> b;
    b.component = "gen";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    b.extras.emplace_back("w_bar", gb.mean_latent.w_bar);
    for (const auto& e : gb.gen.params.entries) b.params.add(e.name, e.value);
    for (const auto& e : gb.mapper.params.entries) b.params.add(e.name, e.value);
    return b;
}

template <class S>
GeneratorBundle<S> generator_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "gen", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'gen'");
    const RunConfig rc = RunConfig::from_text(b.config_echo);
    GeneratorBundle<S> gb;
    Rng rng(0);
    gb.gen.init(generator_config_from_run(rc), rng);
    gb.mapper.init(static_cast<int>(rc.get_int("gan.z_dim", 64)), rng);
    restore_subset(gb.gen.params, b.params);
    restore_subset(gb.mapper.params, b.params);
    const Tensor<S>* wb = b.find_extra("w_bar");
    check(wb != nullptr, ErrorKind::io, "gen checkpoint missing w_bar");
    gb.mean_latent.w_bar = *wb;
    gb.mean_latent.n_samples = static_cast<int>(rc.get_int("gan.wbar_samples", 10000));
    gb.mean_latent.seed = static_cast<uint64_t>(rc.get_int("gan.wbar_seed", 0));
    return gb;
}

// Adversarial pretraining of the toy style generator. Non-saturating logistic
// losses with decaying instance noise on the discriminator inputs.
template <class S>
GeneratorBundle<S> pretrain_generator(const data::DatasetManifest& manifest, const RunConfig& rc,
                                      const std::filesystem::path& out_dir,
                                      CheckpointBundle<S>* out_ckpt = nullptr) {
    const auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "pretrain_generator: empty manifest");

    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed", 0));
    const int steps = static_cast<int>(rc.get_int("gan.train_steps", 1600));
    const int batch = static_cast<int>(rc.get_int("gan.batch", 4));
    const double lr = rc.get_double("gan.lr", 2e-4);
    const int wbar_samples = static_cast<int>(rc.get_int("gan.wbar_samples", 10000));
    const uint64_t wbar_seed = static_cast<uint64_t>(rc.get_int("gan.wbar_seed", 1234));

    Rng init_rng = Rng(seed).fork(0x6A11);
    GeneratorBundle<S> gb;
    gb.gen.init(generator_config_from_run(rc), init_rng);
    gb.mapper.init(static_cast<int>(rc.get_int("gan.z_dim", 64)), init_rng);
    Discriminator<S> disc;
    disc.init(init_rng);

    Adam<S> opt_g(gb.gen.params, lr);
    Adam<S> opt_m(gb.mapper.params, lr);
    Adam<S> opt_d(disc.params, lr);
    opt_g.beta1 = opt_m.beta1 = opt_d.beta1 = 0.5;

    Rng data_rng = Rng(seed).fork(0x6A12);
    const int l_slots = gb.gen.cfg.latent_slots;

    train::MetricsCsv csv(out_dir / "metrics_pretrain_gan.csv");
    for (int it = 0; it < steps; ++it) {
        const double noise_sigma = 0.1 * std::max(0.0, 1.0 - 2.0 * it / steps);

        auto sample_w = [&](Tape<S>& t) {
            auto z = constant(t, Tensor<S>::randn({gb.mapper.z_dim}, data_rng));
            auto w_row = gb.mapper.forward(t, z);
            return stack_rows(std::vector<Var<S>>(static_cast<size_t>(l_slots), w_row));
        };
        auto noisy = [&](const Tensor<S>& img) {
            if (noise_sigma <= 0) return img;
            Tensor<S> out = img;
            for (auto& v : out.data) v += static_cast<S>(noise_sigma * data_rng.gauss());
            return out;
        };

        // discriminator step
        GradStore<S> gd;
        gd.reset(disc.params);
        double d_loss = 0;
        for (int bi = 0; bi < batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            {
                Tape<S> t;
                auto real = disc.logit(t, constant(t, noisy(scene.image.template cast<S>())));
                auto loss = softplus(scale(real, S(-1)));
                d_loss += loss.val().data[0];
                t.backward(loss.idx, &gd);
            }
            {
                Tape<S> t;
                Tensor<S> fake;
                {
                    Tape<S> tg(false);
                    fake = gb.gen.generate(tg, sample_w(tg)).val();
                }
                auto fl = disc.logit(t, constant(t, noisy(fake)));
                auto loss = softplus(fl);
                d_loss += loss.val().data[0];
                t.backward(loss.idx, &gd);
            }
        }
        gd.scale(S(1) / static_cast<S>(batch));
        opt_d.step(gd);

        // generator + mapper step; discriminator is frozen on this tape
        GradStore<S> gg, gm;
        gg.reset(gb.gen.params);
        gm.reset(gb.mapper.params);
        double g_loss = 0;
        for (int bi = 0; bi < batch; ++bi) {
            Tape<S> t;
            t.mark_trainable(&gb.gen.params);
            t.mark_trainable(&gb.mapper.params);
            auto img = gb.gen.generate(t, sample_w(t));
            auto loss = softplus(scale(disc.logit(t, img), S(-1)));
            g_loss += loss.val().data[0];
            t.backward(loss.idx, {{&gb.gen.params, &gg}, {&gb.mapper.params, &gm}});
        }
        gg.scale(S(1) / static_cast<S>(batch));
        gm.scale(S(1) / static_cast<S>(batch));
        opt_g.step(gg);
        opt_m.step(gm);
        csv.row(it, d_loss / (2 * batch), g_loss / batch, 0, 0, 0, 0, 0, lr);
    }
    csv.flush();

    gb.mean_latent = MeanLatent<S>::estimate(gb.mapper, l_slots, wbar_samples, wbar_seed);

    RunConfig echo = rc;
    echo.set_int("gan.wbar_samples", wbar_samples);
    echo.set_int("gan.wbar_seed", static_cast<int64_t>(wbar_seed));
    auto ckpt = make_generator_checkpoint(gb, echo);
    ckpt.save(out_dir / "gen.ckpt");
    if (out_ckpt) *out_ckpt = std::move(ckpt);
    return gb;
}

template <class S>
CheckpointBundle<S> make_idnet_checkpoint(const IdentityNet<S>& net, const RunConfig& rc) {
    CheckpointBundle<S> b;
    b.component = "idnet";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    b.params = net.params;
    return b;
}

template <class S>
IdentityNet<S> idnet_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "idnet", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'idnet'");
    const RunConfig rc = RunConfig::from_text(b.config_echo);
    IdentityNet<S> net;
    Rng rng(0);
    net.init(static_cast<int>(rc.get_int("idnet.classes", data::kNumIdentities)), rng);
    restore_params(net.params, b.params);
    net.trained = true;
    return net;
}

// Identity-classification training for the ArcFace stand-in. Returns the
// held-out cosine margin (same-identity mean minus cross-identity mean) so
// callers can gate on it.
template <class S>
double train_identity_net(IdentityNet<S>& net, const data::DatasetManifest& manifest,
                          const RunConfig& rc, const std::filesystem::path& out_dir) {
    const auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "train_identity_net: empty manifest");

    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed", 0));
    const int steps = static_cast<int>(rc.get_int("idnet.train_steps", 500));
    const int batch = static_cast<int>(rc.get_int("idnet.batch", 16));
    const double lr = rc.get_double("idnet.lr", 1e-3);

    Adam<S> opt(net.params, lr);
    Rng data_rng = Rng(seed).fork(0x1DE7);
    train::MetricsCsv csv(out_dir / "metrics_pretrain_idnet.csv");

    for (int it = 0; it < steps; ++it) {
        GradStore<S> gs;
        gs.reset(net.params);
        double loss_acc = 0;
        for (int bi = 0; bi < batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            Tape<S> t;
            auto logits = net.logits(t, constant(t, scene.image.template cast<S>()));
            auto loss = cross_entropy_logits(logits, scene.identity_id % net.n_classes);
            loss_acc += loss.val().data[0];
            t.backward(loss.idx, &gs);
        }
        gs.scale(S(1) / static_cast<S>(batch));
        opt.step(gs);
        csv.row(it, loss_acc / batch, loss_acc / batch, 0, 0, 0, 0, 0, lr);
    }
    csv.flush();
    net.trained = true;

    // held-out margin: same-identity pairs vs cross-identity pairs
    const auto val = manifest.split(data::Split::val);
    Rng pair_rng = Rng(seed).fork(0x1DE8);
    const int n_pairs = static_cast<int>(rc.get_int("idnet.margin_pairs", 200));
    double same = 0, cross = 0;
    for (int i = 0; i < n_pairs; ++i) {
        const auto& a = val[pair_rng.below(val.size())];
        data::AttributeSpec same_id = data::AttributeSpec::sample(pair_rng);
        same_id.identity_id = a.spec.identity_id;
        data::AttributeSpec other = data::AttributeSpec::sample(pair_rng);
        other.identity_id = (a.spec.identity_id + 1 + static_cast<int>(pair_rng.below(
                                 data::kNumIdentities - 1))) % data::kNumIdentities;

        const auto ea = net.embed_value(
            data::sample_scene(a.seed, a.spec).image.template cast<S>());
        const auto eb = net.embed_value(
            data::sample_scene(a.seed ^ 0x5555, same_id).image.template cast<S>());
        const auto ec = net.embed_value(
            data::sample_scene(a.seed ^ 0xAAAA, other).image.template cast<S>());
        for (int j = 0; j < kEmbedDim; ++j) {
            same += static_cast<double>(ea.data[static_cast<size_t>(j)]) * eb.data[static_cast<size_t>(j)];
            cross += static_cast<double>(ea.data[static_cast<size_t>(j)]) * ec.data[static_cast<size_t>(j)];
        }
    }
    return (same - cross) / n_pairs;
}

template <class S>
CheckpointBundle<S> make_percnet_checkpoint(const PercNet<S>& net, const RunConfig& rc) {
    CheckpointBundle<S> b;
    b.component = "percnet";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    b.params = net.params;
    return b;
}

template <class S>
PercNet<S> percnet_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "percnet", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'percnet'");
    const RunConfig rc = RunConfig::from_text(b.config_echo);
    PercNet<S> net;
    net.init(static_cast<uint64_t>(rc.get_int("percnet.seed", 97)));
    restore_params(net.params, b.params);
    return net;
}

}  // namespace lb::gan

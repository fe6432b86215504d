// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "latentbridge/core/config.hpp"
#include "latentbridge/core/optim.hpp"
#include "latentbridge/core/serialize.hpp"
#include "latentbridge/data/dataset.hpp"
#include "latentbridge/diffusion/unet.hpp"
#include "latentbridge/train/metrics_csv.hpp"

namespace lb::diffusion {

inline DiffusionConfig config_from_run(const RunConfig& rc) {
    DiffusionConfig c;
    c.total_steps = static_cast<int>(rc.get_int("diffusion.total_steps", c.total_steps));
    c.base_channels = static_cast<int>(rc.get_int("diffusion.base_channels", c.base_channels));
    c.mid_channels = static_cast<int>(rc.get_int("diffusion.mid_channels", c.mid_channels));
    c.n_blocks = static_cast<int>(rc.get_int("diffusion.n_blocks", c.n_blocks));
    c.k_attn = static_cast<int>(rc.get_int("diffusion.k_attn", c.k_attn));
    c.token_dim = static_cast<int>(rc.get_int("diffusion.token_dim", c.token_dim));
    c.beta_min = rc.get_double("diffusion.beta_min", c.beta_min);
    c.beta_max = rc.get_double("diffusion.beta_max", c.beta_max);
    c.validate();
    return c;
}

template <class S>
CheckpointBundle<S> make_diffusion_checkpoint(const UNet<S>& net, const RunConfig& rc) {
    CheckpointBundle<S> b;
    b.component = "diffusion";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    Tensor<S> betas({net.cfg.total_steps + 1});
    for (int t = 0; t <= net.cfg.total_steps; ++t)
        betas.data[static_cast<size_t>(t)] = static_cast<S>(net.sched.betas[static_cast<size_t>(t)]);
    b.extras.emplace_back("betas", std::move(betas));
    b.params = net.params;
    return b;
}

template <class S>
UNet<S> unet_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "diffusion", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'diffusion'");
    const RunConfig rc = RunConfig::from_text(b.config_echo);
    UNet<S> net;
    Rng rng(0);  // overwritten by restore
    net.init(config_from_run(rc), rng);
    restore_params(net.params, b.params);
    return net;
}

// Standard epsilon-prediction pretraining on the manifest's train split.
template <class S>
CheckpointBundle<S> pretrain_diffusion(const data::DatasetManifest& manifest, const RunConfig& rc,
                                       const std::filesystem::path& out_dir) {
    const auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "pretrain_diffusion: empty manifest");

    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed", 0));
    const int steps = static_cast<int>(rc.get_int("diffusion.train_steps", 600));
    const int batch = static_cast<int>(rc.get_int("diffusion.batch", 8));
    const double lr = rc.get_double("diffusion.lr", 2e-4);

    Rng init_rng = Rng(seed).fork(0xD1FF);
    UNet<S> net;
    net.init(config_from_run(rc), init_rng);
    Adam<S> opt(net.params, lr);
    Rng data_rng = Rng(seed).fork(0xDA7A);

    train::MetricsCsv csv(out_dir / "metrics_pretrain_diffusion.csv");
    for (int it = 0; it < steps; ++it) {
        GradStore<S> gs;
        gs.reset(net.params);
        double loss_acc = 0;
        for (int bi = 0; bi < batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            const int t = 1 + static_cast<int>(data_rng.below(static_cast<uint64_t>(net.cfg.total_steps)));
            Tensor<S> noise = Tensor<S>::randn({3, data::kImageSize, data::kImageSize}, data_rng);
            Tensor<S> z = forward_diffuse(scene.image.template cast<S>(), t, noise, net.sched);

            Tape<S> tape;
            auto eps = net.forward(tape, constant(tape, z), t, scene.mask, scene.caption, nullptr);
            auto loss = mse(eps, constant(tape, noise));
            loss_acc += static_cast<double>(loss.val().data[0]);
            tape.backward(loss.idx, &gs);
        }
        gs.scale(S(1) / static_cast<S>(batch));
        opt.step(gs);
        csv.row(it, loss_acc / batch, loss_acc / batch, 0, 0, 0, 0, 0, lr);
    }
    csv.flush();

    auto ckpt = make_diffusion_checkpoint(net, rc);
    ckpt.save(out_dir / "diffusion.ckpt");
    return ckpt;
}

}  // namespace lb::diffusion

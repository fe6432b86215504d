// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "latentbridge/core/optim.hpp"
#include "latentbridge/diffusion/pretrain.hpp"
#include "latentbridge/gan/pretrain.hpp"
#include "latentbridge/latent/pipeline.hpp"
#include "latentbridge/train/denoised_cache.hpp"
#include "latentbridge/train/losses.hpp"

namespace lb::train {

template <class S>
struct InversionNets {
    latent::MappingNet<S> mapping;
    latent::AbsmNet<S> absm;

    // Channel geometry follows the diffusion/gan configs in the run config.
    void init_from_config(const RunConfig& rc, Rng& rng) {
        const auto dc = diffusion::config_from_run(rc);
        const auto gc = gan::generator_config_from_run(rc);
        mapping.init(gc.latent_slots, dc.mid_channels, 8, rng);
        absm.init({dc.mid_channels, 2 * dc.base_channels, dc.base_channels}, gc.latent_slots,
                  data::kImageSize, rng, rc.get_bool("absm.eq3_literal_beta", false));
    }
};

template <class S>
CheckpointBundle<S> make_inversion_checkpoint(const InversionNets<S>& nets, const RunConfig& rc,
                                              Adam<S>* opt = nullptr,
                                              const ParamStore<S>* opt_store = nullptr) {
    CheckpointBundle<S> b;
    b.component = "invert";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    for (const auto& e : nets.mapping.params.entries) b.params.add(e.name, e.value);
    for (const auto& e : nets.absm.params.entries) b.params.add(e.name, e.value);
    if (opt != nullptr && opt_store != nullptr) {
        b.opt_m = opt->moment1();
        b.opt_v = opt->moment2();
        b.opt_steps = opt->steps_taken();
    }
    return b;
}

template <class S>
InversionNets<S> inversion_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "invert", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'invert'");
    const RunConfig rc = RunConfig::from_text(b.config_echo);
    InversionNets<S> nets;
    Rng rng(0);
    nets.init_from_config(rc, rng);
    gan::restore_subset(nets.mapping.params, b.params);
    gan::restore_subset(nets.absm.params, b.params);
    return nets;
}

struct PhaseConfig {
    int steps = 400;
    int batch = 16;
    double lr = 1e-4;
    uint64_t seed = 0;
};

inline LossWeights weights_from_run(const RunConfig& rc) {
    LossWeights w;
    if (rc.has("loss.lambda_m"))
        w.lambda_m = LossWeights::parse4(rc.get("loss.lambda_m", ""), "loss.lambda_m");
    if (rc.has("loss.lambda_s"))
        w.lambda_s = LossWeights::parse4(rc.get("loss.lambda_s", ""), "loss.lambda_s");
    w.validate();
    return w;
}

inline StepSchedule schedule_from_run(const RunConfig& rc, int total_steps) {
    if (rc.has("train.schedule"))
        return StepSchedule::parse(rc.get("train.schedule", ""), total_steps);
    return StepSchedule::default_for(total_steps);
}

// Mapping phase: optimize M on loss_mapping with T (and everything else)
// frozen. z_t comes from forward diffusion of the GT image at a schedule step.
template <class S>
CheckpointBundle<S> train_phase_M(diffusion::UNet<S>& unet, InversionNets<S>& nets,
                                  FrozenNets<S>& frozen, const Tensor<S>& w_bar,
                                  const data::DatasetManifest& manifest, const RunConfig& rc,
                                  const std::filesystem::path& out_dir,
                                  Adam<S>* resume_opt = nullptr) {
    const auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "train_phase_M: empty manifest");
    const auto schedule = schedule_from_run(rc, unet.cfg.total_steps);
    schedule.validate(unet.cfg.total_steps);
    const auto weights = weights_from_run(rc);

    PhaseConfig pc;
    pc.steps = static_cast<int>(rc.get_int("invert.m_steps", 400));
    pc.batch = static_cast<int>(rc.get_int("invert.m_batch", 16));
    pc.lr = rc.get_double("invert.m_lr", 1e-4);
    pc.seed = static_cast<uint64_t>(rc.get_int("seed", 0));

    Adam<S> local_opt(nets.mapping.params, pc.lr);
    Adam<S>& opt = resume_opt ? *resume_opt : local_opt;
    Rng data_rng = Rng(pc.seed).fork(0x4D00 + static_cast<uint64_t>(opt.steps_taken()));

    MetricsCsv csv(out_dir / "metrics_invert_m.csv");
    const int remaining = pc.steps - static_cast<int>(opt.steps_taken());
    for (int it = 0; it < remaining; ++it) {
        GradStore<S> gs;
        gs.reset(nets.mapping.params);
        double total = 0;
        std::array<double, 4> terms{};
        for (int bi = 0; bi < pc.batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            const int t = schedule.sample(data_rng);
            const Tensor<S> gt = scene.image.template cast<S>();
            const Tensor<S> noise = Tensor<S>::randn({3, data::kImageSize, data::kImageSize}, data_rng);
            const Tensor<S> z = diffusion::forward_diffuse(gt, t, noise, unet.sched);
            auto [eps, taps] = unet.denoise_with_taps(z, t, scene.mask, scene.caption);

            Tape<S> tape;
            tape.mark_trainable(&nets.mapping.params);
            auto w_m = latent::latent_pipeline(tape, taps, scene.caption, nets.mapping, &nets.absm,
                                               latent::AblationMode::m_only, data::kImageSize);
            auto lt = loss_mapping(tape, gt, w_m, w_bar, weights, frozen);
            total += lt.total_value;
            for (int k = 0; k < 4; ++k) terms[static_cast<size_t>(k)] += lt.terms[static_cast<size_t>(k)];
            tape.backward(lt.total.idx, {{&nets.mapping.params, &gs}});
        }
        gs.scale(S(1) / static_cast<S>(pc.batch));
        opt.step(gs);
        csv.row(opt.steps_taken(), total / pc.batch, terms[0] / pc.batch, terms[1] / pc.batch,
                terms[2] / pc.batch, terms[3] / pc.batch, nets.absm.sigma_alpha_gamma(),
                nets.absm.sigma_alpha_beta(), pc.lr);
    }
    csv.flush();

    auto ckpt = make_inversion_checkpoint(nets, rc, &opt, &nets.mapping.params);
    ckpt.save(out_dir / "invert_m.ckpt");
    return ckpt;
}

// Style-modulation phase: optimize T on loss_absm with M frozen. z_t comes
// from the cached reverse trajectory; the reconstruction target is the cached
// I^d_0.
template <class S>
CheckpointBundle<S> train_phase_T(diffusion::UNet<S>& unet, InversionNets<S>& nets,
                                  FrozenNets<S>& frozen, const Tensor<S>& w_bar,
                                  const data::DatasetManifest& manifest, const RunConfig& rc,
                                  const std::filesystem::path& cache_dir,
                                  const std::filesystem::path& out_dir,
                                  Adam<S>* resume_opt = nullptr) {
    auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "train_phase_T: empty manifest");
    const int limit = static_cast<int>(rc.get_int("invert.t_scene_limit", 1000));
    if (static_cast<int>(items.size()) > limit) items.resize(static_cast<size_t>(limit));

    const auto schedule = schedule_from_run(rc, unet.cfg.total_steps);
    schedule.validate(unet.cfg.total_steps);
    const auto weights = weights_from_run(rc);
    const uint64_t sampler_seed = static_cast<uint64_t>(rc.get_int("sampler.seed", 11));
    const uint64_t ckpt_hash = param_hash(unet.params);

    PhaseConfig pc;
    pc.steps = static_cast<int>(rc.get_int("invert.t_steps", 300));
    pc.batch = static_cast<int>(rc.get_int("invert.t_batch", 16));
    pc.lr = rc.get_double("invert.t_lr", 1e-4);
    pc.seed = static_cast<uint64_t>(rc.get_int("seed", 0));

    Adam<S> local_opt(nets.absm.params, pc.lr);
    Adam<S>& opt = resume_opt ? *resume_opt : local_opt;
    Rng data_rng = Rng(pc.seed).fork(0x7700 + static_cast<uint64_t>(opt.steps_taken()));

    MetricsCsv csv(out_dir / "metrics_invert_t.csv");
    const int remaining = pc.steps - static_cast<int>(opt.steps_taken());
    for (int it = 0; it < remaining; ++it) {
        GradStore<S> gs;
        gs.reset(nets.absm.params);
        double total = 0;
        std::array<double, 4> terms{};
        for (int bi = 0; bi < pc.batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            const int t = schedule.sample(data_rng);
            const auto cache = load_denoised<S>(cache_dir, item.seed, sampler_seed, ckpt_hash);
            const auto zit = cache.z_at.find(t);
            check(zit != cache.z_at.end(), ErrorKind::stale_cache,
                  "denoised cache lacks step " + std::to_string(t) +
                      "; precompute with the current schedule");
            auto [eps, taps] = unet.denoise_with_taps(zit->second, t, scene.mask, scene.caption);

            Tape<S> tape;
            tape.mark_trainable(&nets.absm.params);
            auto w_t = latent::latent_pipeline(tape, taps, scene.caption, nets.mapping, &nets.absm,
                                               latent::AblationMode::full, data::kImageSize);
            auto lt = loss_absm(tape, cache.i_d0, scene.image.template cast<S>(), w_t, w_bar,
                                weights, frozen);
            total += lt.total_value;
            for (int k = 0; k < 4; ++k) terms[static_cast<size_t>(k)] += lt.terms[static_cast<size_t>(k)];
            tape.backward(lt.total.idx, {{&nets.absm.params, &gs}});
        }
        gs.scale(S(1) / static_cast<S>(pc.batch));
        opt.step(gs);
        csv.row(opt.steps_taken(), total / pc.batch, terms[0] / pc.batch, terms[1] / pc.batch,
                terms[2] / pc.batch, terms[3] / pc.batch, nets.absm.sigma_alpha_gamma(),
                nets.absm.sigma_alpha_beta(), pc.lr);
    }
    csv.flush();

    auto ckpt = make_inversion_checkpoint(nets, rc, &opt, &nets.absm.params);
    ckpt.save(out_dir / "invert_t.ckpt");
    return ckpt;
}

}  // namespace lb::train

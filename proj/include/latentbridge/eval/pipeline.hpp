// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "latentbridge/diffusion/sampler.hpp"
#include "latentbridge/eval/segmenter.hpp"
#include "latentbridge/train/engine.hpp"

namespace lb::eval {

struct EvalReport {
    double frechet = 0, perceptual = 0, ssim_v = 0, ms_ssim_v = 0, id_sim = 0, acc = 0, miou_v = 0;
    int n_samples = 0;

    void validate() const {
        check(n_samples > 0, ErrorKind::validation, "EvalReport: n_samples must be positive");
        auto finite = [](double v) { return std::isfinite(v); };
        check(finite(frechet) && finite(perceptual) && finite(ssim_v) && finite(ms_ssim_v) &&
                  finite(id_sim) && finite(acc) && finite(miou_v),
              ErrorKind::validation, "EvalReport: non-finite metric");
        check(frechet >= 0 && perceptual >= 0, ErrorKind::validation,
              "EvalReport: distances must be >= 0");
        check(acc >= 0 && acc <= 1 && miou_v >= 0 && miou_v <= 1, ErrorKind::validation,
              "EvalReport: acc/miou out of [0,1]");
        check(ssim_v >= -1 && ssim_v <= 1 && ms_ssim_v >= -1 && ms_ssim_v <= 1 && id_sim >= -1 &&
                  id_sim <= 1,
              ErrorKind::validation, "EvalReport: similarity out of [-1,1]");
    }

    // Flat key-value text with the metric constants echoed for auditability.
    void save(const std::filesystem::path& path, const std::string& ablation,
              uint64_t config_hash) const {
        validate();
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream os(path);
        check(os.good(), ErrorKind::io, "cannot write report: " + path.string());
        os << "# pairing: per-scene metrics compare generated images against the scene's GT\n";
        os << "# constants: ssim_window=" << kSsimWindow << " ssim_sigma=" << kSsimSigma
           << " k1=" << kSsimK1 << " k2=" << kSsimK2 << " ms_scales=" << kMsSsimScales
           << " frechet_eps=" << kFrechetEps << " eigen_clamp=0\n";
        os << "ablation = " << ablation << "\n";
        os << "config_hash = " << hash_hex(config_hash) << "\n";
        os << "n_samples = " << n_samples << "\n";
        os << "frechet = " << frechet << "\n";
        os << "perceptual = " << perceptual << "\n";
        os << "ssim = " << ssim_v << "\n";
        os << "ms_ssim = " << ms_ssim_v << "\n";
        os << "id_sim = " << id_sim << "\n";
        os << "acc = " << acc << "\n";
        os << "miou = " << miou_v << "\n";
    }
};

// Everything evaluation needs, already loaded and hash-checked.
template <class S>
struct EvalContext {
    diffusion::UNet<S>* unet = nullptr;
    train::InversionNets<S>* nets = nullptr;
    gan::GeneratorBundle<S>* gen = nullptr;
    gan::IdentityNet<S>* idnet = nullptr;
    gan::PercNet<S>* percnet = nullptr;
    MaskPredictor<S>* maskpred = nullptr;
};

// Full protocol: reverse pass for taps, latent pipeline, generate, score.
// The identity metric compares the edited-caption generation against a
// neutral-caption generation for the same mask and sampler seed.
template <class S>
EvalReport evaluate_pipeline(EvalContext<S>& ctx,
                             std::vector<data::DatasetManifest::Item> scenes, uint64_t eval_seed,
                             latent::AblationMode mode, const RunConfig& rc,
                             const std::filesystem::path& per_scene_csv) {
    check(!scenes.empty(), ErrorKind::validation, "evaluate_pipeline: no scenes");
    std::sort(scenes.begin(), scenes.end(),
              [](const auto& a, const auto& b) { return a.seed < b.seed; });

    diffusion::SamplerConfig sampler;
    sampler.n_steps = static_cast<int>(rc.get_int("sampler.steps", 8));
    const int infer_step = static_cast<int>(rc.get_int("infer.step", 0));

    std::filesystem::create_directories(
        per_scene_csv.parent_path().empty() ? "." : per_scene_csv.parent_path());
    std::ofstream csv(per_scene_csv);
    check(csv.good(), ErrorKind::io, "cannot write per-scene csv: " + per_scene_csv.string());
    csv << "scene_seed,acc,miou,ssim,ms_ssim,id_sim,perceptual\n";

    EvalReport rep;
    std::vector<std::vector<double>> feats_gen, feats_real;
    const auto neutral = data::neutral_caption();

    for (const auto& item : scenes) {
        const data::Scene scene = data::sample_scene(item.seed, item.spec);
        const uint64_t sseed = hash_mix(eval_seed, item.seed);

        auto generate_for = [&](const std::vector<int>& caption) {
            auto [i_d0, traj] =
                diffusion::run_reverse(*ctx.unet, scene.mask, caption, sseed, {infer_step}, sampler);
            Tape<S> t(false);
            auto w = latent::latent_pipeline(t, traj.at(infer_step), caption, ctx.nets->mapping,
                                             &ctx.nets->absm, mode, data::kImageSize);
            return ctx.gen->gen.generate_value(w.val());
        };

        const Tensor<S> img = generate_for(scene.caption);
        const Tensor<S> img_neutral = generate_for(neutral);
        const TensorF img_f = img.template cast<float>();

        const MaskImage pred = ctx.maskpred->predict_mask(img_f);
        const double acc = pixel_accuracy(pred, scene.mask);
        const double iou = miou(pred, scene.mask, data::kNumClasses);
        const double ss = ssim(img_f, scene.image);
        const double ms = ms_ssim(img_f, scene.image);
        const double perc = ctx.percnet->distance_value(img, scene.image.template cast<S>());

        double idv;
        {
            Tape<S> t(false);
            auto omc = one_minus_cosine(constant(t, ctx.idnet->embed_value(img_neutral)),
                                        constant(t, ctx.idnet->embed_value(img)));
            idv = 1.0 - static_cast<double>(omc.val().data[0]);
        }

        const auto fg = ctx.idnet->penultimate_value(img);
        const auto fr = ctx.idnet->penultimate_value(scene.image.template cast<S>());
        feats_gen.emplace_back(fg.data.begin(), fg.data.end());
        feats_real.emplace_back(fr.data.begin(), fr.data.end());

        rep.acc += acc;
        rep.miou_v += iou;
        rep.ssim_v += ss;
        rep.ms_ssim_v += ms;
        rep.perceptual += perc;
        rep.id_sim += idv;
        ++rep.n_samples;
        csv << item.seed << ',' << acc << ',' << iou << ',' << ss << ',' << ms << ',' << idv << ','
            << perc << '\n';
    }

    const double n = rep.n_samples;
    rep.acc /= n;
    rep.miou_v /= n;
    rep.ssim_v /= n;
    rep.ms_ssim_v /= n;
    rep.perceptual /= n;
    rep.id_sim /= n;
    rep.frechet = frechet_distance(feats_gen, feats_real);
    rep.validate();
    return rep;
}

// Mean cosine between embeddings of image pairs (spec: identity_similarity).
template <class S>
double identity_similarity(const std::vector<std::pair<TensorF, TensorF>>& pairs,
                           gan::IdentityNet<S>& idnet) {
    check(!pairs.empty(), ErrorKind::validation, "identity_similarity: empty pair list");
    double acc = 0;
    for (const auto& [a, b] : pairs) {
        Tape<S> t(false);
        auto omc = one_minus_cosine(constant(t, idnet.embed_value(a.template cast<S>())),
                                    constant(t, idnet.embed_value(b.template cast<S>())));
        acc += 1.0 - static_cast<double>(omc.val().data[0]);
    }
    return acc / static_cast<double>(pairs.size());
}

}  // namespace lb::eval

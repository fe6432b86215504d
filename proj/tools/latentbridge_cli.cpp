// SPDX-License-Identifier: Apache-2.0
//
// latentbridge command line: dataset synthesis, the four training phases,
// inference, attention visualization and evaluation.
//
// Exit codes: 0 success, 1 internal error, 2 user/config error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "latentbridge/core/image.hpp"
#include "latentbridge/eval/pipeline.hpp"
#include "latentbridge/train/engine.hpp"
#include "latentbridge/version.hpp"
#include "latentbridge/viz/attention_viz.hpp"

namespace fs = std::filesystem;
using S = float;
using namespace lb;

namespace {

fs::path default_output_dir() {
    const char* env = std::getenv("LB_OUTPUT_DIR");
    return env && *env ? fs::path(env) : fs::path("lb_out");
}

struct CommonOpts {
    std::string output_dir = default_output_dir().string();
    std::string config_path;
    int64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--output-dir", c.output_dir, "run directory (default $LB_OUTPUT_DIR or lb_out)");
    cmd->add_option("--config", c.config_path, "key = value config file");
    cmd->add_option("--seed", c.seed, "master seed")->each([&c](const std::string&) {
        c.seed_set = true;
    });
}

// defaults + config file + CLI overrides, persisted before any computation
RunConfig resolve_config(const CommonOpts& c, const std::string& command,
                         const std::map<std::string, std::string>& overrides) {
    RunConfig rc;
    if (!c.config_path.empty()) rc = RunConfig::from_file(c.config_path);
    if (c.seed_set || !rc.has("seed")) rc.set_int("seed", c.seed);
    for (const auto& [k, v] : overrides) rc.set(k, v);
    rc.set("command", command);
    rc.write(fs::path(c.output_dir) / (command + ".config.resolved"));
    return rc;
}

fs::path require_file(const fs::path& p) {
    check(fs::exists(p), ErrorKind::missing_checkpoint, p.string());
    return p;
}

struct LoadedPipeline {
    diffusion::UNet<S> unet;
    gan::GeneratorBundle<S> gen;
    gan::IdentityNet<S> idnet;
    gan::PercNet<S> percnet;
    eval::MaskPredictor<S> maskpred;
    train::InversionNets<S> nets;
    bool has_invert = false;
};

uint64_t dep_hash(const RunConfig& echo, const std::string& key) {
    return std::stoull(echo.get(key, "0"), nullptr, 16);
}

// Loads the full checkpoint set and verifies the inversion networks were
// trained against exactly these frozen components.
LoadedPipeline load_pipeline(const fs::path& out, bool need_invert, bool need_eval_nets) {
    LoadedPipeline lp;
    lp.unet = diffusion::unet_from_checkpoint(
        CheckpointBundle<S>::load(require_file(out / "diffusion.ckpt")));
    lp.gen = gan::generator_from_checkpoint(
        CheckpointBundle<S>::load(require_file(out / "gen.ckpt")));
    lp.idnet = gan::idnet_from_checkpoint(
        CheckpointBundle<S>::load(require_file(out / "idnet.ckpt")));
    lp.percnet = gan::percnet_from_checkpoint(
        CheckpointBundle<S>::load(require_file(out / "percnet.ckpt")));
    if (need_eval_nets)
        lp.maskpred = eval::maskpred_from_checkpoint(
            CheckpointBundle<S>::load(require_file(out / "maskpred.ckpt")));

    if (need_invert) {
        const fs::path invert_path =
            fs::exists(out / "invert_t.ckpt") ? out / "invert_t.ckpt" : out / "invert_m.ckpt";
        const auto bundle = CheckpointBundle<S>::load(require_file(invert_path));
        lp.nets = train::inversion_from_checkpoint(bundle);
        lp.has_invert = true;

        const RunConfig echo = RunConfig::from_text(bundle.config_echo);
        auto verify = [&](const char* key, uint64_t actual) {
            const uint64_t expected = dep_hash(echo, key);
            check(expected == 0 || expected == actual, ErrorKind::stale_cache,
                  std::string("checkpoint hash mismatch: ") + key +
                      " changed since the inversion networks were trained (stale pipeline)");
        };
        verify("deps.diffusion", param_hash(lp.unet.params));
        verify("deps.gen", param_hash(lp.gen.gen.params));
        verify("deps.idnet", param_hash(lp.idnet.params));
        verify("deps.percnet", param_hash(lp.percnet.params));
    }
    return lp;
}

data::DatasetManifest load_manifest(const fs::path& out) {
    return data::DatasetManifest::load(require_file(out / "manifest.tsv"));
}

// ------------------------------------------------------------------ commands

int cmd_dataset(const CommonOpts& common, int n_train, int n_val, int n_test, bool cache) {
    if (n_train < 1) fail(ErrorKind::validation, "--train must be >= 1");
    if (n_val < 1) fail(ErrorKind::validation, "--val must be >= 1");
    if (n_test < 1) fail(ErrorKind::validation, "--test must be >= 1");
    const auto rc = resolve_config(common, "dataset",
                                   {{"dataset.train", std::to_string(n_train)},
                                    {"dataset.val", std::to_string(n_val)},
                                    {"dataset.test", std::to_string(n_test)}});
    const fs::path out(common.output_dir);
    const auto manifest =
        data::build_splits(n_train, n_val, n_test, static_cast<uint64_t>(rc.get_int("seed", 0)));
    manifest.save(out / "manifest.tsv");
    data::vocab().write_asset(out / "vocab.txt");
    if (cache) data::write_dataset_cache(manifest, out / "cache");
    std::cout << "manifest: " << (out / "manifest.tsv").string() << " (" << manifest.items.size()
              << " scenes)\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& phase, bool resume) {
    const fs::path out(common.output_dir);
    const auto rc0 = resolve_config(common, "train_" + phase, {{"train.phase", phase}});
    const auto manifest = load_manifest(out);
    const uint64_t master_seed = static_cast<uint64_t>(rc0.get_int("seed", 0));

    if (phase == "pretrain-diffusion") {
        diffusion::pretrain_diffusion<S>(manifest, rc0, out);
        std::cout << "wrote " << (out / "diffusion.ckpt").string() << "\n";
        return 0;
    }
    if (phase == "pretrain-gan") {
        gan::pretrain_generator<S>(manifest, rc0, out);
        std::cout << "wrote " << (out / "gen.ckpt").string() << "\n";

        gan::IdentityNet<S> idnet;
        Rng idrng = Rng(master_seed).fork(0x1DE0);
        idnet.init(static_cast<int>(rc0.get_int("idnet.classes", data::kNumIdentities)), idrng);
        const double margin = gan::train_identity_net(idnet, manifest, rc0, out);
        gan::make_idnet_checkpoint(idnet, rc0).save(out / "idnet.ckpt");
        std::cout << "wrote " << (out / "idnet.ckpt").string() << " (held-out cosine margin "
                  << margin << ")\n";

        gan::PercNet<S> percnet;
        percnet.init(static_cast<uint64_t>(rc0.get_int("percnet.seed", 97)));
        gan::make_percnet_checkpoint(percnet, rc0).save(out / "percnet.ckpt");
        std::cout << "wrote " << (out / "percnet.ckpt").string() << "\n";

        eval::MaskPredictor<S> mp;
        Rng mprng = Rng(master_seed).fork(0x5E60);
        mp.init(mprng);
        const double acc = eval::train_mask_predictor(mp, manifest, rc0, out);
        eval::make_maskpred_checkpoint(mp, rc0).save(out / "maskpred.ckpt");
        std::cout << "wrote " << (out / "maskpred.ckpt").string() << " (val acc " << acc << ")\n";
        return 0;
    }

    // inversion phases need the frozen components
    auto lp = load_pipeline(out, /*need_invert=*/false, /*need_eval_nets=*/false);
    train::FrozenNets<S> frozen;
    frozen.gen = &lp.gen.gen;
    frozen.idnet = &lp.idnet;
    frozen.percnet = &lp.percnet;

    RunConfig rc = rc0;
    rc.set("deps.diffusion", hash_hex(param_hash(lp.unet.params)));
    rc.set("deps.gen", hash_hex(param_hash(lp.gen.gen.params)));
    rc.set("deps.idnet", hash_hex(param_hash(lp.idnet.params)));
    rc.set("deps.percnet", hash_hex(param_hash(lp.percnet.params)));

    if (phase == "precompute") {
        const auto schedule = train::schedule_from_run(rc, lp.unet.cfg.total_steps);
        diffusion::SamplerConfig sampler;
        sampler.n_steps = static_cast<int>(rc.get_int("sampler.steps", 8));
        auto items = manifest.split(data::Split::train);
        const int limit = static_cast<int>(rc.get_int("invert.t_scene_limit", 1000));
        if (static_cast<int>(items.size()) > limit) items.resize(static_cast<size_t>(limit));
        const int n = train::precompute_denoised(
            lp.unet, items, static_cast<uint64_t>(rc.get_int("sampler.seed", 11)), schedule,
            sampler, out / "cache_denoised");
        std::cout << "precomputed " << n << " reverse passes into "
                  << (out / "cache_denoised").string() << "\n";
        return 0;
    }

    if (phase == "invert-m") {
        train::InversionNets<S> nets;
        Rng rng = Rng(master_seed).fork(0x1417);
        nets.init_from_config(rc, rng);
        Adam<S> optimizer(nets.mapping.params, rc.get_double("invert.m_lr", 1e-4));
        Adam<S>* opt_ptr = nullptr;
        if (resume && fs::exists(out / "invert_m.ckpt")) {
            const auto prev = CheckpointBundle<S>::load(out / "invert_m.ckpt");
            auto loaded = train::inversion_from_checkpoint(prev);
            nets.mapping.params = loaded.mapping.params;
            nets.absm.params = loaded.absm.params;
            if (!prev.opt_m.empty()) {
                optimizer.moment1() = prev.opt_m;
                optimizer.moment2() = prev.opt_v;
                optimizer.set_steps(prev.opt_steps);
            }
            opt_ptr = &optimizer;
            std::cout << "resuming invert-m at step " << prev.opt_steps << "\n";
        }
        const uint64_t absm_before = param_hash(nets.absm.params);
        train::train_phase_M(lp.unet, nets, frozen, lp.gen.mean_latent.w_bar, manifest, rc, out,
                             opt_ptr);
        std::cout << "freeze check: absm hash " << hash_hex(absm_before) << " -> "
                  << hash_hex(param_hash(nets.absm.params))
                  << (absm_before == param_hash(nets.absm.params) ? " (unchanged)" : " (CHANGED)")
                  << "\n";
        std::cout << "wrote " << (out / "invert_m.ckpt").string() << "\n";
        return 0;
    }

    if (phase == "invert-t") {
        auto nets = train::inversion_from_checkpoint(
            CheckpointBundle<S>::load(require_file(out / "invert_m.ckpt")));
        Adam<S> optimizer(nets.absm.params, rc.get_double("invert.t_lr", 1e-4));
        Adam<S>* opt_ptr = nullptr;
        if (resume && fs::exists(out / "invert_t.ckpt")) {
            const auto prev = CheckpointBundle<S>::load(out / "invert_t.ckpt");
            auto loaded = train::inversion_from_checkpoint(prev);
            nets.mapping.params = loaded.mapping.params;
            nets.absm.params = loaded.absm.params;
            if (!prev.opt_m.empty()) {
                optimizer.moment1() = prev.opt_m;
                optimizer.moment2() = prev.opt_v;
                optimizer.set_steps(prev.opt_steps);
            }
            opt_ptr = &optimizer;
            std::cout << "resuming invert-t at step " << prev.opt_steps << "\n";
        }
        const uint64_t m_before = param_hash(nets.mapping.params);
        train::train_phase_T(lp.unet, nets, frozen, lp.gen.mean_latent.w_bar, manifest, rc,
                             out / "cache_denoised", out, opt_ptr);
        std::cout << "freeze check: mapping hash " << hash_hex(m_before) << " -> "
                  << hash_hex(param_hash(nets.mapping.params))
                  << (m_before == param_hash(nets.mapping.params) ? " (unchanged)" : " (CHANGED)")
                  << "\n";
        std::cout << "wrote " << (out / "invert_t.ckpt").string() << "\n";
        return 0;
    }

    if (phase == "invert-alternate") {
        // Alternating freeze schedule: rounds of (M chunk, T chunk) instead of
        // sequential phases. The denoised cache must exist (run precompute).
        train::InversionNets<S> nets;
        Rng rng = Rng(master_seed).fork(0x1417);
        nets.init_from_config(rc, rng);
        const int rounds = static_cast<int>(rc.get_int("invert.alt_rounds", 4));
        const int m_total = static_cast<int>(rc.get_int("invert.m_steps", 400));
        const int t_total = static_cast<int>(rc.get_int("invert.t_steps", 300));
        Adam<S> opt_m(nets.mapping.params, rc.get_double("invert.m_lr", 1e-4));
        Adam<S> opt_t(nets.absm.params, rc.get_double("invert.t_lr", 1e-4));
        for (int r = 1; r <= rounds; ++r) {
            RunConfig round_rc = rc;
            round_rc.set_int("invert.m_steps", m_total * r / rounds);
            round_rc.set_int("invert.t_steps", t_total * r / rounds);
            train::train_phase_M(lp.unet, nets, frozen, lp.gen.mean_latent.w_bar, manifest,
                                 round_rc, out, &opt_m);
            train::train_phase_T(lp.unet, nets, frozen, lp.gen.mean_latent.w_bar, manifest,
                                 round_rc, out / "cache_denoised", out, &opt_t);
            std::cout << "alternation round " << r << "/" << rounds << " done\n";
        }
        std::cout << "wrote " << (out / "invert_t.ckpt").string() << "\n";
        return 0;
    }

    fail(ErrorKind::validation,
         "unknown --phase '" + phase +
             "' (expected pretrain-diffusion|pretrain-gan|precompute|invert-m|invert-t|"
             "invert-alternate)");
}

MaskImage mask_from_args(const std::string& mask_path, int64_t scene_seed,
                         std::vector<int>* caption_out) {
    if (!mask_path.empty()) {
        const data::Scene s = data::load_scene_blob(mask_path);
        if (caption_out) *caption_out = s.caption;
        return s.mask;
    }
    const data::Scene s = data::sample_scene(static_cast<uint64_t>(scene_seed));
    if (caption_out) *caption_out = s.caption;
    return s.mask;
}

int cmd_infer(const CommonOpts& common, const std::string& mask_path, int64_t scene_seed,
              const std::string& caption_text, const std::vector<std::string>& grid_captions,
              const std::vector<int>& viz_steps) {
    const fs::path out(common.output_dir);
    const auto rc = resolve_config(common, "infer", {});
    auto lp = load_pipeline(out, /*need_invert=*/true, /*need_eval_nets=*/false);

    const fs::path vocab_path = out / "vocab.txt";
    if (!fs::exists(vocab_path)) data::vocab().write_asset(vocab_path);

    std::vector<int> scene_caption;
    const MaskImage mask = mask_from_args(mask_path, scene_seed, &scene_caption);

    std::vector<std::pair<std::string, std::vector<int>>> captions;
    if (!grid_captions.empty()) {
        for (const auto& c : grid_captions)
            captions.emplace_back(c, data::vocab().tokenize(c, vocab_path.string()));
    } else if (!caption_text.empty()) {
        captions.emplace_back(caption_text,
                              data::vocab().tokenize(caption_text, vocab_path.string()));
    } else {
        captions.emplace_back(data::vocab().detokenize(scene_caption), scene_caption);
    }

    diffusion::SamplerConfig sampler;
    sampler.n_steps = static_cast<int>(rc.get_int("sampler.steps", 8));
    const int infer_step = static_cast<int>(rc.get_int("infer.step", 0));
    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed", 0));
    const std::map<std::string, std::string> meta{
        {"latentbridge-config-hash", hash_hex(rc.hash())}};

    std::vector<img::Raster> grid_panels;
    for (size_t i = 0; i < captions.size(); ++i) {
        const auto& [text, tokens] = captions[i];
        std::set<int> record{infer_step};
        for (int s : viz_steps) record.insert(s);
        auto [i_d0, traj] = diffusion::run_reverse(lp.unet, mask, tokens, seed, record, sampler);
        Tape<S> t(false);
        auto w = latent::latent_pipeline(t, traj.at(infer_step), tokens, lp.nets.mapping,
                                         &lp.nets.absm, latent::AblationMode::full,
                                         data::kImageSize);
        const auto img_gen = lp.gen.gen.generate_value(w.val());

        const std::string tag = captions.size() > 1 ? "_" + std::to_string(i) : "";
        const auto gen_raster = img::raster_from_image(img_gen.cast<float>());
        img::write_png(out / ("generated" + tag + ".png"), gen_raster, meta);
        img::write_png(out / ("denoised" + tag + ".png"),
                       img::raster_from_image(i_d0.cast<float>()), meta);
        img::write_png(out / ("side_by_side" + tag + ".png"),
                       img::hstack({img::raster_from_image(i_d0.cast<float>()), gen_raster}),
                       meta);
        grid_panels.push_back(gen_raster);
        std::cout << "caption '" << text << "' -> "
                  << (out / ("generated" + tag + ".png")).string() << "\n";

        for (int s : viz_steps)
            viz::export_attention_panels(traj.at(s), tokens,
                                         out / ("attention" + tag) / ("step_" + std::to_string(s)),
                                         meta);
    }
    if (grid_panels.size() > 1)
        img::write_png(out / "caption_grid.png", img::hstack(grid_panels), meta);
    return 0;
}

int cmd_visualize_attention(const CommonOpts& common, const std::string& mask_path,
                            int64_t scene_seed, const std::string& caption_text,
                            std::vector<int> steps) {
    const fs::path out(common.output_dir);
    const auto rc = resolve_config(common, "visualize_attention", {});
    auto unet = diffusion::unet_from_checkpoint(
        CheckpointBundle<S>::load(require_file(out / "diffusion.ckpt")));

    std::vector<int> caption;
    const MaskImage mask = mask_from_args(mask_path, scene_seed, &caption);
    if (!caption_text.empty()) {
        const fs::path vocab_path = out / "vocab.txt";
        if (!fs::exists(vocab_path)) data::vocab().write_asset(vocab_path);
        caption = data::vocab().tokenize(caption_text, vocab_path.string());
    }

    const int t_max = unet.cfg.total_steps;
    if (steps.empty()) steps = {t_max, t_max / 2, 0};
    for (int s : steps)
        check(s >= 0 && s <= t_max, ErrorKind::range,
              "step " + std::to_string(s) + " outside [0, " + std::to_string(t_max) + "]");

    diffusion::SamplerConfig sampler;
    sampler.n_steps = static_cast<int>(rc.get_int("sampler.steps", 8));
    const auto written = viz::visualize_attention(
        unet, mask, caption, static_cast<uint64_t>(rc.get_int("seed", 0)), steps, sampler,
        out / "attention", {{"latentbridge-config-hash", hash_hex(rc.hash())}});
    std::cout << "wrote " << written.size() << " panels under " << (out / "attention").string()
              << "\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::vector<std::string>& ablations,
                 const std::string& split_name, int64_t eval_seed, int64_t max_scenes) {
    const fs::path out(common.output_dir);
    std::vector<latent::AblationMode> modes;
    for (const auto& a : ablations) modes.push_back(latent::parse_ablation(a));

    const auto rc = resolve_config(common, "evaluate", {{"eval.split", split_name}});
    auto lp = load_pipeline(out, /*need_invert=*/true, /*need_eval_nets=*/true);
    const auto manifest = load_manifest(out);

    data::Split split;
    if (split_name == "train") split = data::Split::train;
    else if (split_name == "val") split = data::Split::val;
    else if (split_name == "test") split = data::Split::test;
    else fail(ErrorKind::validation, "unknown split " + split_name);

    auto scenes = manifest.split(split);
    if (max_scenes > 0 && static_cast<int64_t>(scenes.size()) > max_scenes)
        scenes.resize(static_cast<size_t>(max_scenes));

    eval::EvalContext<S> ctx;
    ctx.unet = &lp.unet;
    ctx.nets = &lp.nets;
    ctx.gen = &lp.gen;
    ctx.idnet = &lp.idnet;
    ctx.percnet = &lp.percnet;
    ctx.maskpred = &lp.maskpred;

    std::vector<std::pair<std::string, eval::EvalReport>> reports;
    for (const auto mode : modes) {
        const std::string name = latent::to_string(mode);
        const auto rep = eval::evaluate_pipeline(ctx, scenes, static_cast<uint64_t>(eval_seed),
                                                 mode, rc, out / ("scenes_" + name + ".csv"));
        rep.save(out / ("report_" + name + ".txt"), name, rc.hash());
        reports.emplace_back(name, rep);
        std::cout << name << ": acc " << rep.acc << " miou " << rep.miou_v << " frechet "
                  << rep.frechet << " id " << rep.id_sim << "\n";
    }

    if (reports.size() > 1) {
        std::ofstream tab(out / "comparison.txt");
        tab << "ablation\tacc\tmiou\tssim\tms_ssim\tid_sim\tperceptual\tfrechet\n";
        for (const auto& [name, r] : reports)
            tab << name << '\t' << r.acc << '\t' << r.miou_v << '\t' << r.ssim_v << '\t'
                << r.ms_ssim_v << '\t' << r.id_sim << '\t' << r.perceptual << '\t' << r.frechet
                << '\n';
        std::cout << "comparison table: " << (out / "comparison.txt").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentbridge: denoiser-feature GAN inversion at desk scale"};
    app.require_subcommand(1);

    CommonOpts common;

    auto* ds = app.add_subcommand("dataset", "synthesize the toy dataset and manifest");
    int n_train = 2000, n_val = 200, n_test = 200;
    bool write_cache = false;
    ds->add_option("--train", n_train, "train scenes");
    ds->add_option("--val", n_val, "val scenes");
    ds->add_option("--test", n_test, "test scenes");
    ds->add_flag("--cache", write_cache, "also write per-scene binary blobs");
    add_common(ds, common);

    auto* tr = app.add_subcommand("train", "run one training phase");
    std::string phase;
    bool resume = false;
    tr->add_option("--phase", phase,
                   "pretrain-diffusion|pretrain-gan|precompute|invert-m|invert-t")
        ->required();
    tr->add_flag("--resume", resume, "continue from the phase checkpoint");
    add_common(tr, common);

    auto* in = app.add_subcommand("infer", "generate images from a mask and caption");
    std::string mask_path, caption_text;
    int64_t scene_seed = 0;
    std::vector<std::string> grid_captions;
    std::vector<int> viz_steps;
    in->add_option("--mask", mask_path, "scene blob path providing the mask");
    in->add_option("--scene-seed", scene_seed, "render the mask of this toy scene");
    in->add_option("--caption", caption_text, "caption text (closed vocabulary)");
    in->add_option("--grid-captions", grid_captions, "multiple captions for one mask");
    in->add_option("--viz-steps", viz_steps, "also export attention panels at these steps");
    add_common(in, common);

    auto* va = app.add_subcommand("visualize-attention", "export attention/feature panels");
    std::vector<int> steps;
    std::string va_mask, va_caption;
    int64_t va_scene_seed = 0;
    va->add_option("--steps", steps, "denoising steps (default: T, T/2, 0)");
    va->add_option("--mask", va_mask, "scene blob path providing the mask");
    va->add_option("--scene-seed", va_scene_seed, "render the mask of this toy scene");
    va->add_option("--caption", va_caption, "caption text");
    add_common(va, common);

    auto* ev = app.add_subcommand("evaluate", "run the metric suite");
    std::vector<std::string> ablations{"full"};
    std::string split_name = "test";
    int64_t eval_seed = 0;
    int64_t max_scenes = 0;
    ev->add_option("--ablation", ablations, "m-only|no-attention|full (repeatable)");
    ev->add_option("--split", split_name, "train|val|test");
    ev->add_option("--eval-seed", eval_seed, "evaluation sampler seed");
    ev->add_option("--max-scenes", max_scenes, "cap the number of scenes (0 = all)");
    add_common(ev, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (ds->parsed()) return cmd_dataset(common, n_train, n_val, n_test, write_cache);
        if (tr->parsed()) return cmd_train(common, phase, resume);
        if (in->parsed())
            return cmd_infer(common, mask_path, scene_seed, caption_text, grid_captions,
                             viz_steps);
        if (va->parsed())
            return cmd_visualize_attention(common, va_mask, va_scene_seed, va_caption, steps);
        if (ev->parsed())
            return cmd_evaluate(common, ablations, split_name, eval_seed, max_scenes);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.user_error() ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

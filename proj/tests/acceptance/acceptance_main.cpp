// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. One line per criterion, [PASS]/[FAIL], nonzero exit on
// any failure. Heavy artifacts (the reference pipeline) are cached in the
// workspace keyed by config hash; pass --fresh to rebuild from scratch.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "common/gradcheck.hpp"
#include "latentbridge/eval/pipeline.hpp"
#include "latentbridge/train/engine.hpp"
#include "latentbridge/viz/attention_viz.hpp"

namespace fs = std::filesystem;
using namespace lb;
using Clock = std::chrono::steady_clock;

namespace {

// ---- regression bounds, frozen after the reference run on the 1-core host
// Reference measurements (seed 1): full acc 0.8262, m-only acc 0.7888,
// full frechet 7.83, m-only frechet 9.85, idnet margin 0.586,
// pipeline wall clock 3518 s.
constexpr double kAccFullFloor = 0.74;        // measured 0.8262 minus margin
constexpr double kFrechetFullCeil = 20.0;     // measured 7.83 plus margin
constexpr double kIdnetMarginFloor = 0.2;     // module example bound
constexpr double kWallClockBudget = 7200.0;   // seconds; measured 3518
constexpr int kEvalScenes = 96;               // test-split subset per eval run

struct CriterionResult {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<CriterionResult> g_results;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    g_results.push_back({id, name, pass, detail});
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": " << name << " — "
              << detail << "\n"
              << std::flush;
}

double secs_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

TensorD randn_d(std::vector<int> sh, uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return TensorD::randn(std::move(sh), rng, stddev);
}

// ---------------------------------------------------------------- reference
// pipeline configuration (the "2k toy benchmark")

RunConfig reference_config() {
    RunConfig rc;
    rc.set_int("seed", 1);
    rc.set_int("diffusion.train_steps", 550);
    rc.set_int("diffusion.batch", 8);
    rc.set_double("diffusion.lr", 2e-4);
    rc.set_int("gan.train_steps", 1800);
    rc.set_int("gan.batch", 4);
    rc.set_int("idnet.train_steps", 600);
    rc.set_int("idnet.batch", 16);
    rc.set_int("maskpred.train_steps", 600);
    rc.set_int("maskpred.batch", 4);
    rc.set_int("invert.m_steps", 450);
    rc.set_int("invert.m_batch", 8);
    rc.set_double("invert.m_lr", 3e-4);
    rc.set_int("invert.t_steps", 350);
    rc.set_int("invert.t_batch", 8);
    rc.set_double("invert.t_lr", 3e-4);
    rc.set_int("invert.t_scene_limit", 600);
    rc.set_int("sampler.steps", 8);
    rc.set_int("sampler.seed", 11);
    return rc;
}

std::string cli_path() {
#ifdef LB_CLI_PATH
    return LB_CLI_PATH;
#else
    return "latentbridge";
#endif
}

// Runs one CLI phase if its artifact is missing; returns wall seconds spent
// (0 when cached).
double run_phase_if_missing(const fs::path& ws, const fs::path& cfg, const std::string& phase,
                            const fs::path& artifact) {
    if (fs::exists(artifact)) return 0.0;
    const auto t0 = Clock::now();
    const std::string cmd = cli_path() + " train --phase " + phase + " --config " + cfg.string() +
                            " --output-dir " + ws.string() + " >> " + (ws / "phases.log").string() +
                            " 2>&1";
    const int rc = std::system(cmd.c_str());
    check(WEXITSTATUS(rc) == 0, ErrorKind::validation, "phase " + phase + " failed, see " +
                                                           (ws / "phases.log").string());
    return secs_since(t0);
}

std::map<std::string, double> load_timings(const fs::path& p) {
    std::map<std::string, double> t;
    std::ifstream is(p);
    std::string k;
    double v;
    while (is >> k >> v) t[k] = v;
    return t;
}

void save_timings(const fs::path& p, const std::map<std::string, double>& t) {
    std::ofstream os(p);
    for (const auto& [k, v] : t) os << k << " " << v << "\n";
}

// Builds (or reuses) the full reference pipeline; returns the workspace dir.
fs::path ensure_reference_pipeline(const fs::path& root, bool fresh) {
    RunConfig rc = reference_config();
    const fs::path ws = root / ("ref_" + hash_hex(rc.hash()));
    if (fresh) fs::remove_all(ws);
    fs::create_directories(ws);
    const fs::path cfg = ws / "reference.cfg";
    if (!fs::exists(cfg)) {
        std::ofstream os(cfg);
        os << rc.canonical_text();
    }

    auto timings = load_timings(ws / "timings.txt");
    if (!fs::exists(ws / "manifest.tsv")) {
        const auto t0 = Clock::now();
        const std::string cmd = cli_path() + " dataset --train 2000 --val 200 --test 200 --seed 1 "
                                             "--output-dir " +
                                ws.string() + " > /dev/null 2>&1";
        check(WEXITSTATUS(std::system(cmd.c_str())) == 0, ErrorKind::validation, "dataset failed");
        timings["dataset"] = secs_since(t0);
    }
    const std::pair<const char*, const char*> phases[] = {
        {"pretrain-diffusion", "diffusion.ckpt"},
        {"pretrain-gan", "maskpred.ckpt"},
        {"invert-m", "invert_m.ckpt"},
        {"precompute", "cache_denoised"},
        {"invert-t", "invert_t.ckpt"},
    };
    for (const auto& [phase, artifact] : phases) {
        const double s = run_phase_if_missing(ws, cfg, phase, ws / artifact);
        if (s > 0) timings[phase] = s;
    }
    save_timings(ws / "timings.txt", timings);
    return ws;
}

// ------------------------------------------------------------- criterion 1

void criterion_exact() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string why;

    // refine identities (double and float)
    {
        std::vector<TensorD> f{randn_d({3, 4, 4}, 1), randn_d({2, 4, 4}, 2)};
        std::vector<TensorD> ones{TensorD::full({3, 4, 4}, 1.0), TensorD::full({2, 4, 4}, 1.0)};
        std::vector<TensorD> zero{TensorD::zeros({3, 4, 4}), TensorD::zeros({2, 4, 4})};
        const TensorD a_bar = randn_d({1, 4, 4}, 3);
        std::vector<TensorD> f_hat;
        TensorD f_bar, f_hat_bar;
        refinery::refine(f, ones, a_bar, f_hat, f_bar, f_hat_bar);
        for (size_t n = 0; n < f.size() && ok; ++n)
            if (!bit_equal(f_hat[n], f[n])) ok = false, why = "refine(ones) != identity";
        refinery::refine(f, zero, a_bar, f_hat, f_bar, f_hat_bar);
        for (const auto& m : f_hat)
            for (double v : m.data)
                if (v != 0.0) ok = false, why = "refine(zeros) != 0";
    }

    // modulate identity under zero-initialized heads, through the full T net
    if (ok) {
        Rng rng(5);
        latent::MappingNet<float> mapping;
        mapping.init(8, 128, 8, rng);
        latent::AbsmNet<float> absm;
        absm.init({128, 64, 32}, 8, 64, rng);
        diffusion::FeatureTaps<float> taps;
        taps.h = TensorF::randn({128, 8, 8}, rng);
        taps.f = {TensorF::randn({128, 16, 16}, rng), TensorF::randn({64, 32, 32}, rng),
                  TensorF::randn({32, 64, 64}, rng)};
        for (int n = 0; n < 3; ++n) {
            std::vector<TensorF> layer;
            for (int k = 0; k < 2; ++k) {
                const int hw = taps.f[static_cast<size_t>(n)].dim(1) *
                               taps.f[static_cast<size_t>(n)].dim(2);
                TensorF attn({hw, data::kCaptionLen});
                for (auto& v : attn.data) v = 1.0f / data::kCaptionLen;
                layer.push_back(std::move(attn));
            }
            taps.a.push_back(std::move(layer));
        }
        std::vector<int> caption(data::kCaptionLen, data::kPadToken);
        caption[0] = 1;
        caption[1] = 7;
        Tape<float> t(false);
        auto w_m = latent::latent_pipeline(t, taps, caption, mapping,
                                           static_cast<latent::AbsmNet<float>*>(nullptr),
                                           latent::AblationMode::m_only, 64);
        Tape<float> t2(false);
        auto w_t = latent::latent_pipeline(t2, taps, caption, mapping, &absm,
                                           latent::AblationMode::full, 64);
        if (!bit_equal(w_m.val(), w_t.val())) ok = false, why = "w_t != w_m at identity init";
    }

    // Eq. 3 endpoints: sigma(+-200) is exactly 1 / 0
    if (ok) {
        Rng rng(6);
        latent::AbsmNet<double> absm;
        absm.init({5, 3}, 2, 8, rng);
        const std::vector<TensorD> fh{randn_d({5, 8, 8}, 7), randn_d({3, 8, 8}, 8)};
        const TensorD fhb = randn_d({1, 8, 8}, 9);
        auto eval_g = [&](double alpha) {
            absm.params.value(absm.alpha_gamma_id).data[0] = alpha;
            Tape<double> t;
            std::vector<Var<double>> fhv;
            for (const auto& m : fh) fhv.push_back(constant(t, m));
            auto [fg, fb] = absm.modulation_maps(t, fhv, constant(t, fhb));
            return fg.val();
        };
        const auto hi = eval_g(200.0), lo = eval_g(-200.0);
        Tape<double> t;
        std::vector<Var<double>> fhv;
        for (const auto& m : fh) fhv.push_back(constant(t, m));
        Var<double> cat = concat_channels(fhv[0], fhv[1]);
        auto local_g = leaky_relu(absm.local_gamma.forward(t, absm.params, cat));
        auto global_g = leaky_relu(absm.global_gamma.forward(t, absm.params, constant(t, fhb)));
        if (!bit_equal(hi, local_g.val())) ok = false, why = "sigma=1 endpoint not pure local";
        if (!bit_equal(lo, global_g.val())) ok = false, why = "sigma=0 endpoint not pure global";
    }

    // loss fixed points vanish exactly
    if (ok) {
        Rng rng(10);
        gan::Generator<double> gen;
        gan::GeneratorConfig gc;
        gc.latent_slots = 4;
        gc.stages = 2;
        gc.const_channels = 16;
        gc.stage_channels = {12, 8};
        gen.init(gc, rng);
        gan::IdentityNet<double> idnet;
        idnet.init(8, rng);
        idnet.trained = true;
        gan::PercNet<double> percnet;
        percnet.init(55);
        train::FrozenNets<double> nets{&gen, &idnet, &percnet};
        const TensorD w = randn_d({4, 512}, 11, 0.2);
        const TensorD img = gen.generate_value(w);
        train::LossWeights weights;
        Tape<double> t;
        auto lm = train::loss_mapping(t, img, input(t, w, false), w, weights, nets);
        Tape<double> t2;
        auto ls = train::loss_absm(t2, img, img, input(t2, w, false), w, weights, nets);
        if (lm.total.val().data[0] != 0.0) ok = false, why = "loss_mapping fixed point != 0";
        if (ls.total.val().data[0] != 0.0) ok = false, why = "loss_absm fixed point != 0";
    }

    const double dt = secs_since(t0);
    if (dt >= 10.0) ok = false, why = "runtime " + std::to_string(dt) + "s >= 10s";
    report(1, "exact-arithmetic suite", ok,
           ok ? "all identities bit-exact in " + std::to_string(dt) + " s" : why);
}

// ------------------------------------------------------------- criterion 2

void criterion_gradients() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_site = "none";
    Rng prng(21);
    auto track = [&](const char* site, const lbtest::GradCheckResult& r) {
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_site = site;
        }
    };

    // map2style
    {
        ParamStore<double> ps;
        Rng rng(22);
        latent::Map2Style<double> head;
        head.init(ps, "h", 4, 8, rng);
        auto run = [&](const TensorD& x, TensorD* gx) {
            Tape<double> t;
            auto xv = input(t, x, true);
            auto y = head.forward(t, ps, xv);
            Rng w(77);
            auto loss = dot(y, constant(t, TensorD::randn({512}, w)));
            if (gx) {
                t.backward(loss.idx, nullptr);
                *gx = t.node(xv.idx).grad;
            }
            return static_cast<double>(loss.val().data[0]);
        };
        for (int p = 0; p < 5; ++p)
            track("map2style", lbtest::check_input_grad(run, randn_d({4, 8, 8}, 100 + p), 6, prng));
    }

    // map_latent at the production middle-block geometry
    {
        Rng rng(23);
        latent::MappingNet<double> m;
        m.init(2, 128, 8, rng);
        auto run = [&](const TensorD& x, TensorD* gx) {
            Tape<double> t;
            auto xv = input(t, x, true);
            auto y = m.map_latent(t, xv);
            Rng w(78);
            auto loss = dot(y, constant(t, TensorD::randn(y.val().shape, w)));
            if (gx) {
                t.backward(loss.idx, nullptr);
                *gx = t.node(xv.idx).grad;
            }
            return static_cast<double>(loss.val().data[0]);
        };
        for (int p = 0; p < 5; ++p)
            track("map_latent",
                  lbtest::check_input_grad(run, randn_d({128, 8, 8}, 200 + p, 0.5), 6, prng));
    }

    // modulation_maps + style_codes jointly
    {
        Rng rng(24);
        latent::AbsmNet<double> absm;
        absm.init({6, 4}, 2, 16, rng);
        absm.params.value(absm.alpha_gamma_id).data[0] = 0.4;
        absm.params.value(absm.alpha_beta_id).data[0] = -0.3;
        Rng nudge(25);
        for (auto& e : absm.params.entries)
            if (e.name.find(".fc.") != std::string::npos)
                for (auto& v : e.value.data) v = nudge.gauss() * 0.05;
        const TensorD other = randn_d({4, 16, 16}, 26);
        const TensorD fhb = randn_d({1, 16, 16}, 27);
        auto run = [&](const TensorD& x, TensorD* gx) {
            Tape<double> t;
            auto xv = input(t, x, true);
            std::vector<Var<double>> fhv{xv, constant(t, other)};
            auto [fg, fb] = absm.modulation_maps(t, fhv, constant(t, fhb));
            auto [wg, wb] = absm.style_codes(t, fg, fb);
            Rng w(79);
            auto loss = add(dot(wg, constant(t, TensorD::randn(wg.val().shape, w))),
                            dot(wb, constant(t, TensorD::randn(wb.val().shape, w))));
            if (gx) {
                t.backward(loss.idx, nullptr);
                *gx = t.node(xv.idx).grad;
            }
            return static_cast<double>(loss.val().data[0]);
        };
        for (int p = 0; p < 5; ++p)
            track("modulation_maps+style_codes",
                  lbtest::check_input_grad(run, randn_d({6, 16, 16}, 300 + p), 6, prng));
    }

    // both losses w.r.t. the latent code
    {
        Rng rng(28);
        gan::Generator<double> gen;
        gan::GeneratorConfig gc;
        gc.latent_slots = 4;
        gc.stages = 2;
        gc.const_channels = 16;
        gc.stage_channels = {12, 8};
        gen.init(gc, rng);
        gan::IdentityNet<double> idnet;
        idnet.init(8, rng);
        idnet.trained = true;
        gan::PercNet<double> percnet;
        percnet.init(56);
        train::FrozenNets<double> nets{&gen, &idnet, &percnet};
        const TensorD gt = gen.generate_value(randn_d({4, 512}, 29, 0.2));
        const TensorD i_d0 = gen.generate_value(randn_d({4, 512}, 30, 0.2));
        const TensorD w_bar = randn_d({4, 512}, 31, 0.1);
        train::LossWeights weights;

        auto run_m = [&](const TensorD& w, TensorD* gw) {
            Tape<double> t;
            auto wv = input(t, w, true);
            auto lt = train::loss_mapping(t, gt, wv, w_bar, weights, nets);
            if (gw) {
                t.backward(lt.total.idx, nullptr);
                *gw = t.node(wv.idx).grad;
            }
            return static_cast<double>(lt.total.val().data[0]);
        };
        auto run_s = [&](const TensorD& w, TensorD* gw) {
            Tape<double> t;
            auto wv = input(t, w, true);
            auto lt = train::loss_absm(t, i_d0, gt, wv, w_bar, weights, nets);
            if (gw) {
                t.backward(lt.total.idx, nullptr);
                *gw = t.node(wv.idx).grad;
            }
            return static_cast<double>(lt.total.val().data[0]);
        };
        for (int p = 0; p < 5; ++p) {
            track("loss_mapping",
                  lbtest::check_input_grad(run_m, randn_d({4, 512}, 400 + p, 0.2), 5, prng, 1e-6));
            track("loss_absm",
                  lbtest::check_input_grad(run_s, randn_d({4, 512}, 500 + p, 0.2), 5, prng, 1e-6));
        }
    }

    const double dt = secs_since(t0);
    const bool ok = worst < 1e-3 && dt < 120.0;
    std::ostringstream os;
    os << "worst rel err " << worst << " at " << worst_site << ", " << dt << " s";
    report(2, "finite-difference gradient suite (float64)", ok, os.str());
}

// ------------------------------------------------------------- criterion 3

void criterion_oracles() {
    bool ok = true;
    std::string why;

    // pooling / averaging / refinement vs scalar loop oracles (1e-6)
    {
        const int s = data::kCaptionLen;
        std::vector<int> caption(static_cast<size_t>(s), 1);
        Rng rng(41);
        auto rand_attn = [&](int hw) {
            TensorD a({hw, s});
            for (auto& v : a.data) v = rng.uniform();
            return a;
        };
        std::vector<std::vector<TensorD>> blocks{{rand_attn(4), rand_attn(4)},
                                                 {rand_attn(4), rand_attn(4)}};
        const auto got = refinery::average_attention<double>(blocks, caption, 2, 2);
        for (int p = 0; p < 4 && ok; ++p) {
            double acc = 0;
            for (const auto& blk : blocks) {
                double wacc = 0;
                for (int w = 0; w < s; ++w) wacc += std::max(blk[0].at(p, w), blk[1].at(p, w));
                acc += wacc / s;
            }
            if (std::abs(got.data[static_cast<size_t>(p)] - acc / 2.0) > 1e-6)
                ok = false, why = "average_attention oracle mismatch";
        }

        const auto pooled =
            refinery::pool_block_attention<double>(blocks[0], caption, 3, 2, 2);
        for (int p = 0; p < 4 && ok; ++p) {
            double wacc = 0;
            for (int w = 0; w < s; ++w) wacc += std::max(blocks[0][0].at(p, w), blocks[0][1].at(p, w));
            if (std::abs(pooled.data[static_cast<size_t>(p)] - wacc / s) > 1e-6)
                ok = false, why = "pool_block_attention oracle mismatch";
        }

        std::vector<TensorD> f{randn_d({2, 2, 2}, 42)};
        std::vector<TensorD> a{randn_d({2, 2, 2}, 43)};
        const TensorD a_bar = randn_d({1, 2, 2}, 44);
        std::vector<TensorD> f_hat;
        TensorD f_bar, f_hat_bar;
        refinery::refine(f, a, a_bar, f_hat, f_bar, f_hat_bar);
        for (size_t i = 0; i < f[0].numel() && ok; ++i)
            if (f_hat[0].data[i] != f[0].data[i] * a[0].data[i])
                ok = false, why = "refine not exact";
    }

    // Fréchet closed-form 1-D Gaussian case
    if (ok) {
        const double fd = eval::frechet_distance({{-1.0}, {1.0}}, {{0.0}, {2.0}});
        if (std::abs(fd - 1.0) > 1e-6)
            ok = false, why = "frechet 1-D case " + std::to_string(fd) + " != 1";
    }

    // bilinear 2x2 -> 4x4 hand table, exact
    if (ok) {
        TensorD m({1, 2, 2});
        m.data = {0.0, 1.0, 2.0, 3.0};
        const auto r = refinery::bilinear_resize(m, 4, 4);
        const double expect[16] = {0.0, 0.25, 0.75, 1.0, 0.5, 0.75, 1.25, 1.5,
                                   1.5, 1.75, 2.25, 2.5, 2.0, 2.25, 2.75, 3.0};
        for (int i = 0; i < 16; ++i)
            if (r.data[static_cast<size_t>(i)] != expect[i])
                ok = false, why = "bilinear hand table mismatch";
    }

    report(3, "oracle suite", ok, ok ? "loop/closed-form/hand oracles all match" : why);
}

// ------------------------------------------------------------- criterion 4

void criterion_freeze() {
    bool ok = true;
    std::string why;

    const auto manifest = data::build_splits(8, 2, 2, 61);
    RunConfig rc;
    rc.set_int("seed", 9);
    rc.set_int("invert.m_steps", 8);
    rc.set_int("invert.m_batch", 2);
    rc.set_int("invert.t_steps", 6);
    rc.set_int("invert.t_batch", 2);
    rc.set_int("sampler.steps", 4);
    rc.set_int("sampler.seed", 11);

    Rng rng(62);
    diffusion::UNet<float> unet;
    unet.init(diffusion::config_from_run(rc), rng);
    gan::GeneratorBundle<float> gb;
    gb.gen.init(gan::generator_config_from_run(rc), rng);
    gb.mapper.init(64, rng);
    gb.mean_latent = gan::MeanLatent<float>::estimate(gb.mapper, 8, 64, 5);
    gan::IdentityNet<float> idnet;
    idnet.init(data::kNumIdentities, rng);
    idnet.trained = true;
    gan::PercNet<float> percnet;
    percnet.init(97);
    train::InversionNets<float> nets;
    nets.init_from_config(rc, rng);
    train::FrozenNets<float> frozen{&gb.gen, &idnet, &percnet};

    const fs::path dir = fs::temp_directory_path() / "lb_acceptance_freeze";
    fs::remove_all(dir);

    const uint64_t absm0 = param_hash(nets.absm.params);
    const uint64_t gen0 = param_hash(gb.gen.params);
    const uint64_t id0 = param_hash(idnet.params);
    const uint64_t pn0 = param_hash(percnet.params);
    const uint64_t unet0 = param_hash(unet.params);

    train::train_phase_M(unet, nets, frozen, gb.mean_latent.w_bar, manifest, rc, dir);
    if (param_hash(nets.absm.params) != absm0) ok = false, why = "T changed during M phase";

    train::precompute_denoised(unet, manifest.split(data::Split::train), 11,
                               train::StepSchedule::default_for(50), {4}, dir / "cache");
    const uint64_t m0 = param_hash(nets.mapping.params);
    train::train_phase_T(unet, nets, frozen, gb.mean_latent.w_bar, manifest, rc, dir / "cache",
                         dir);
    if (param_hash(nets.mapping.params) != m0) ok = false, why = "M changed during T phase";

    if (param_hash(gb.gen.params) != gen0) ok = false, why = "generator mutated";
    if (param_hash(idnet.params) != id0) ok = false, why = "identity net mutated";
    if (param_hash(percnet.params) != pn0) ok = false, why = "perceptual net mutated";
    if (param_hash(unet.params) != unet0) ok = false, why = "backbone mutated";

    report(4, "freeze-contract suite", ok,
           ok ? "all frozen parameter hashes bit-identical across both phases" : why);
}

// ------------------------------------------------------------- criterion 5

void criterion_attention() {
    Rng rng(71);
    diffusion::UNet<float> unet;
    unet.init(diffusion::DiffusionConfig{}, rng);

    double worst = 0;
    for (int i = 0; i < 32; ++i) {
        const data::Scene sc = data::sample_scene(static_cast<uint64_t>(900 + i));
        const TensorF z = TensorF::randn({3, 64, 64}, rng);
        for (int t : {0, 25, 50}) {
            auto [eps, taps] = unet.denoise_with_taps(z, t, sc.mask, sc.caption);
            for (const auto& block : taps.a)
                for (const auto& attn : block)
                    for (int r = 0; r < attn.dim(0); ++r) {
                        double s = 0;
                        for (int c = 0; c < attn.dim(1); ++c) s += attn.at(r, c);
                        worst = std::max(worst, std::abs(s - 1.0));
                    }
        }
    }
    std::ostringstream os;
    os << "worst row-sum deviation " << worst << " over 32 inputs x {0,T/2,T} x all blocks/layers";
    report(5, "attention normalization invariant", worst < 1e-5, os.str());
}

// ------------------------------------------------------------- criterion 6

// The inversion phases overfit a 1-scene dataset on top of the reference
// pretrained frozen components (train_phase_M's stated preconditions: the
// pretrained backbone and generator checkpoints exist).
void criterion_overfit(const fs::path& ref_ws) {
    const fs::path ws = ref_ws / "overfit_1scene";
    fs::create_directories(ws);

    // deterministic phases: reuse a completed run's recorded result
    if (fs::exists(ws / "result.txt")) {
        std::ifstream is(ws / "result.txt");
        int pass;
        std::string detail;
        is >> pass;
        std::getline(is, detail);
        std::getline(is, detail);
        report(6, "single-scene end-to-end overfit", pass == 1, detail + " [cached]");
        return;
    }

    RunConfig rc;
    rc.set_int("seed", 2);
    rc.set_int("invert.m_steps", 500);
    rc.set_int("invert.m_batch", 2);
    rc.set_double("invert.m_lr", 1e-3);
    rc.set_int("invert.t_steps", 300);
    rc.set_int("invert.t_batch", 2);
    rc.set_double("invert.t_lr", 3e-4);
    rc.set_int("sampler.steps", 8);
    rc.set_int("sampler.seed", 11);

    auto unet = diffusion::unet_from_checkpoint(
        CheckpointBundle<float>::load(ref_ws / "diffusion.ckpt"));
    auto gb = gan::generator_from_checkpoint(CheckpointBundle<float>::load(ref_ws / "gen.ckpt"));
    auto idnet = gan::idnet_from_checkpoint(CheckpointBundle<float>::load(ref_ws / "idnet.ckpt"));
    gan::PercNet<float> percnet;
    percnet.init(97);
    auto mp = eval::maskpred_from_checkpoint(
        CheckpointBundle<float>::load(ref_ws / "maskpred.ckpt"));

    const auto manifest = data::build_splits(1, 1, 1, 77);
    const auto& scene_item = manifest.items[0];
    const data::Scene scene = data::sample_scene(scene_item.seed, scene_item.spec);

    train::InversionNets<float> nets;
    Rng nrng = Rng(2).fork(0x1417);
    nets.init_from_config(rc, nrng);
    train::FrozenNets<float> frozen{&gb.gen, &idnet, &percnet};

    train::train_phase_M(unet, nets, frozen, gb.mean_latent.w_bar, manifest, rc, ws);

    // loss trajectory from the metrics csv
    double first = -1, best = 1e300;
    {
        std::ifstream is(ws / "metrics_invert_m.csv");
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            const double total = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
            if (first < 0) first = total;
            best = std::min(best, total);
        }
    }
    const bool loss_ok = best < 0.1 * first;

    // mask-alignment accuracy of the generated image, before vs after T
    auto acc_for = [&](latent::AblationMode mode) {
        const auto cache = train::load_denoised<float>(ws / "cache", scene_item.seed, 11,
                                                       param_hash(unet.params));
        auto [eps, taps] = unet.denoise_with_taps(cache.z_at.at(0), 0, scene.mask, scene.caption);
        Tape<float> t(false);
        auto w = latent::latent_pipeline(t, taps, scene.caption, nets.mapping, &nets.absm, mode,
                                         64);
        const auto img = gb.gen.generate_value(w.val());
        return eval::pixel_accuracy(mp.predict_mask(img.cast<float>()), scene.mask);
    };

    train::precompute_denoised(unet, manifest.split(data::Split::train), 11,
                               train::StepSchedule::default_for(50), {8}, ws / "cache");
    const double acc_m_only = acc_for(latent::AblationMode::m_only);
    train::train_phase_T(unet, nets, frozen, gb.mean_latent.w_bar, manifest, rc, ws / "cache", ws);
    const double acc_full = acc_for(latent::AblationMode::full);

    const bool acc_ok = acc_full > acc_m_only;
    std::ostringstream os;
    os << "loss " << first << " -> " << best << " (" << (loss_ok ? "<10%" : ">=10%")
       << "); mask acc m-only " << acc_m_only << " -> full " << acc_full;
    {
        std::ofstream rf(ws / "result.txt");
        rf << (loss_ok && acc_ok ? 1 : 0) << "\n" << os.str() << "\n";
    }
    report(6, "single-scene end-to-end overfit", loss_ok && acc_ok, os.str());
}

// ------------------------------------------------------------- criterion 7

struct AblationAverages {
    double acc = 0, frechet = 0;
};

AblationAverages run_ablation_evals(const fs::path& ws, const std::string& ablation,
                                    const std::vector<int>& eval_seeds) {
    AblationAverages avg;
    for (int seed : eval_seeds) {
        const fs::path keep = ws / ("report_" + ablation + "_seed" + std::to_string(seed) + ".txt");
        if (!fs::exists(keep)) {
            const std::string cmd = cli_path() + " evaluate --ablation " + ablation +
                                    " --split test --max-scenes " + std::to_string(kEvalScenes) +
                                    " --eval-seed " + std::to_string(seed) + " --config " +
                                    (ws / "reference.cfg").string() + " --output-dir " +
                                    ws.string() + " >> " + (ws / "phases.log").string() + " 2>&1";
            check(WEXITSTATUS(std::system(cmd.c_str())) == 0, ErrorKind::validation,
                  "evaluate failed for " + ablation);
            fs::copy_file(ws / ("report_" + ablation + ".txt"), keep,
                          fs::copy_options::overwrite_existing);
        }
        std::ifstream is(keep);
        std::string line;
        double acc = -1, fre = -1;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string key, eq;
            double v;
            if (ls >> key >> eq >> v) {
                if (key == "acc") acc = v;
                if (key == "frechet") fre = v;
            }
        }
        check(acc >= 0 && fre >= 0, ErrorKind::io, "report parse failure");
        avg.acc += acc;
        avg.frechet += fre;
    }
    avg.acc /= static_cast<double>(eval_seeds.size());
    avg.frechet /= static_cast<double>(eval_seeds.size());
    return avg;
}

void criterion_ablation(const fs::path& ws) {
    const std::vector<int> seeds{101, 202, 303};
    const auto m_only = run_ablation_evals(ws, "m-only", seeds);
    const auto full = run_ablation_evals(ws, "full", seeds);

    const bool direction_ok = full.acc >= m_only.acc && full.frechet <= m_only.frechet;
    const bool regression_ok = full.acc >= kAccFullFloor && full.frechet <= kFrechetFullCeil;

    std::ostringstream os;
    os << "acc full " << full.acc << " vs m-only " << m_only.acc << "; frechet full "
       << full.frechet << " vs m-only " << m_only.frechet << " (3 eval seeds, " << kEvalScenes
       << " scenes); bounds acc>=" << kAccFullFloor << " frechet<=" << kFrechetFullCeil;
    report(7, "ablation direction (full vs m-only)", direction_ok && regression_ok, os.str());
}

// extra trained-model properties tied to the reference pipeline
void trained_model_properties(const fs::path& ws) {
    // identity margin regression bound
    {
        std::ifstream is(ws / "phases.log");
        std::string log((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        const auto pos = log.find("held-out cosine margin ");
        double margin = -1;
        if (pos != std::string::npos) margin = std::stod(log.substr(pos + 23));
        std::cout << "[info] identity embedder held-out margin " << margin << " (bound "
                  << kIdnetMarginFloor << ": " << (margin > kIdnetMarginFloor ? "ok" : "LOW")
                  << ")\n";
        if (margin <= kIdnetMarginFloor)
            report(7, "identity margin regression bound", false,
                   "margin " + std::to_string(margin));
    }

    // comparative Fréchet: trained generator beats uniform noise by a margin
    {
        auto gb = gan::generator_from_checkpoint(
            CheckpointBundle<float>::load(ws / "gen.ckpt"));
        auto idnet = gan::idnet_from_checkpoint(CheckpointBundle<float>::load(ws / "idnet.ckpt"));
        const auto manifest = data::DatasetManifest::load(ws / "manifest.tsv");
        const auto test = manifest.split(data::Split::test);
        Rng rng(313);
        std::vector<std::vector<double>> f_real, f_gen, f_noise;
        for (int i = 0; i < 128; ++i) {
            const auto& item = test[static_cast<size_t>(i) % test.size()];
            const auto real = data::sample_scene(item.seed, item.spec).image;
            const TensorF z = TensorF::randn({64}, rng);
            Tape<float> t(false);
            auto w_row = gb.mapper.forward(t, constant(t, z));
            auto w = stack_rows(std::vector<Var<float>>(8, w_row));
            const auto gen_img = gb.gen.generate_value(w.val());
            TensorF noise({3, 64, 64});
            for (auto& v : noise.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            auto emb = [&](const TensorF& im) {
                const auto e = idnet.penultimate_value(im);
                return std::vector<double>(e.data.begin(), e.data.end());
            };
            f_real.push_back(emb(real));
            f_gen.push_back(emb(gen_img));
            f_noise.push_back(emb(noise));
        }
        const double d_gen = eval::frechet_distance(f_gen, f_real);
        const double d_noise = eval::frechet_distance(f_noise, f_real);
        std::cout << "[info] frechet(generated, real) " << d_gen << " vs frechet(noise, real) "
                  << d_noise << (d_gen < d_noise ? " (ok)" : " (REGRESSION)") << "\n";
        if (d_gen >= d_noise)
            report(7, "generator comparative Fréchet bound", false, "generator not beating noise");
    }

    // step sensitivity: attention mass on non-padding tokens, t=T vs t=0
    {
        auto unet = diffusion::unet_from_checkpoint(
            CheckpointBundle<float>::load(ws / "diffusion.ckpt"));
        const auto manifest = data::DatasetManifest::load(ws / "manifest.tsv");
        const auto test = manifest.split(data::Split::test);
        double mass_T = 0, mass_0 = 0;
        const int n = 16;
        for (int i = 0; i < n; ++i) {
            const data::Scene sc = data::sample_scene(test[static_cast<size_t>(i)].seed,
                                                      test[static_cast<size_t>(i)].spec);
            auto [img, traj] = diffusion::run_reverse(unet, sc.mask, sc.caption,
                                                      hash_mix(99, sc.seed), {0, 50}, {8});
            auto mass = [&](const diffusion::FeatureTaps<float>& taps) {
                double m = 0;
                size_t rows = 0;
                for (const auto& blk : taps.a)
                    for (const auto& attn : blk) {
                        for (int r = 0; r < attn.dim(0); ++r)
                            for (int c = 0; c < attn.dim(1); ++c)
                                if (sc.caption[static_cast<size_t>(c)] != data::kPadToken)
                                    m += attn.at(r, c);
                        rows += static_cast<size_t>(attn.dim(0));
                    }
                return m / static_cast<double>(rows);
            };
            mass_T += mass(traj.at(50));
            mass_0 += mass(traj.at(0));
        }
        mass_T /= n;
        mass_0 /= n;
        std::cout << "[info] non-padding attention mass: t=T " << mass_T << ", t=0 " << mass_0
                  << ", margin " << (mass_T - mass_0)
                  << " (sign recorded, not asserted; paper direction is early-text)\n";
    }
}

// ------------------------------------------------------------- criterion 8

void criterion_cli_determinism(const fs::path& ws) {
    bool ok = true;
    std::string why;
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };

    const std::string infer_cmd = cli_path() +
                                  " infer --scene-seed 12 --caption \"gray long hair , mouth "
                                  "open , glasses\" --seed 33 --config " +
                                  (ws / "reference.cfg").string() + " --output-dir " + ws.string() +
                                  " >> " + (ws / "phases.log").string() + " 2>&1";
    check(WEXITSTATUS(std::system(infer_cmd.c_str())) == 0, ErrorKind::validation, "infer failed");
    const std::string png1 = slurp(ws / "generated.png");
    check(WEXITSTATUS(std::system(infer_cmd.c_str())) == 0, ErrorKind::validation, "infer failed");
    if (slurp(ws / "generated.png") != png1) ok = false, why = "cmd_infer bytes differ";

    const std::string eval_cmd = cli_path() +
                                 " evaluate --ablation full --split val --max-scenes 16 "
                                 "--eval-seed 404 --config " +
                                 (ws / "reference.cfg").string() + " --output-dir " + ws.string() +
                                 " >> " + (ws / "phases.log").string() + " 2>&1";
    check(WEXITSTATUS(std::system(eval_cmd.c_str())) == 0, ErrorKind::validation, "evaluate failed");
    const std::string rep1 = slurp(ws / "report_full.txt");
    const std::string csv1 = slurp(ws / "scenes_full.csv");
    check(WEXITSTATUS(std::system(eval_cmd.c_str())) == 0, ErrorKind::validation, "evaluate failed");
    if (slurp(ws / "report_full.txt") != rep1 || slurp(ws / "scenes_full.csv") != csv1)
        ok = false, why = "cmd_evaluate outputs differ";

    report(8, "CLI determinism (infer + evaluate)", ok,
           ok ? "bit-identical outputs across repeated runs" : why);
}

// ------------------------------------------------------------- criterion 9

void criterion_wall_clock(const fs::path& ws) {
    const auto timings = load_timings(ws / "timings.txt");
    double total = 0;
    std::ostringstream os;
    for (const auto& [phase, s] : timings) {
        total += s;
        os << phase << " " << static_cast<int>(s) << "s; ";
    }
    os << "total " << static_cast<int>(total) << "s (budget " << static_cast<int>(kWallClockBudget)
       << "s)";
    const bool fresh_run = timings.count("invert-t") > 0;
    if (!fresh_run) os << " [reported from cached reference run]";
    report(9, "wall-clock budget for the 4-phase pipeline", total > 0 && total < kWallClockBudget,
           os.str());
}

}  // namespace

int main(int argc, char** argv) {
    fs::path workspace = "acceptance_ws";
    bool fresh = false;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--workspace" && i + 1 < argc) workspace = argv[++i];
        else if (arg == "--fresh") fresh = true;
        else if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    fs::create_directories(workspace);

    try {
        auto want = [&](int id) { return only == 0 || only == id; };
        if (want(1)) criterion_exact();
        if (want(2)) criterion_gradients();
        if (want(3)) criterion_oracles();
        if (want(4)) criterion_freeze();
        if (want(5)) criterion_attention();
        if (want(6) || want(7) || want(8) || want(9)) {
            const fs::path ws = ensure_reference_pipeline(workspace, fresh);
            if (want(6)) criterion_overfit(ws);
            if (want(7)) {
                criterion_ablation(ws);
                trained_model_properties(ws);
            }
            if (want(8)) criterion_cli_determinism(ws);
            if (want(9)) criterion_wall_clock(ws);
        }
    } catch (const std::exception& e) {
        std::cerr << "acceptance suite aborted: " << e.what() << "\n";
        return 1;
    }

    int failures = 0;
    for (const auto& r : g_results) failures += r.pass ? 0 : 1;
    std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed"
                                : "ACCEPTANCE: " + std::to_string(failures) + " criterion(s) failed")
              << "\n";
    return failures == 0 ? 0 : 1;
}

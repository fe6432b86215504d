// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "latentbridge/eval/pipeline.hpp"
#include "latentbridge/train/engine.hpp"

using namespace lb;
using namespace lb::train;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("lb_test_engine_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Minimal full rig on production-shaped nets, untrained where training is not
// the point.
struct Rig {
    data::DatasetManifest manifest = data::build_splits(8, 2, 2, 21);
    RunConfig rc;
    diffusion::UNet<float> unet;
    gan::GeneratorBundle<float> gb;
    gan::IdentityNet<float> idnet;
    gan::PercNet<float> percnet;
    InversionNets<float> nets;
    FrozenNets<float> frozen;

    Rig() {
        rc.set_int("seed", 3);
        rc.set_int("invert.m_steps", 6);
        rc.set_int("invert.m_batch", 2);
        rc.set_int("invert.t_steps", 5);
        rc.set_int("invert.t_batch", 2);
        rc.set_int("sampler.steps", 4);
        Rng rng(5);
        unet.init(diffusion::config_from_run(rc), rng);
        gb.gen.init(gan::generator_config_from_run(rc), rng);
        gb.mapper.init(64, rng);
        gb.mean_latent = gan::MeanLatent<float>::estimate(gb.mapper, 8, 100, 7);
        idnet.init(data::kNumIdentities, rng);
        idnet.trained = true;
        percnet.init(97);
        nets.init_from_config(rc, rng);
        frozen.gen = &gb.gen;
        frozen.idnet = &idnet;
        frozen.percnet = &percnet;
    }
};

}  // namespace

TEST_CASE("step schedule: default, validation, sampling coverage") {
    const auto s = StepSchedule::default_for(50);
    CHECK(s.steps == std::vector<int>{50, 38, 25, 12, 0});
    s.validate(50);

    const StepSchedule empty{};
    const StepSchedule no_late{{50, 25}};
    const StepSchedule no_early{{25, 0}};
    const StepSchedule not_desc{{50, 25, 25, 0}};
    const StepSchedule oob{{99, 0}};
    CHECK_THROWS_AS(empty.validate(50), Error);
    CHECK_THROWS_AS(no_late.validate(50), Error);
    CHECK_THROWS_AS(no_early.validate(50), Error);
    CHECK_THROWS_AS(not_desc.validate(50), Error);
    CHECK_THROWS_AS(oob.validate(50), Error);

    // uniform sampling covers every step well within 1000 draws
    Rng rng(9);
    std::map<int, int> hits;
    for (int i = 0; i < 1000; ++i) ++hits[s.sample(rng)];
    for (int step : s.steps) CHECK(hits[step] > 0);

    const auto parsed = StepSchedule::parse("50 40 20 10 0", 50);
    CHECK(parsed.steps.size() == 5);
}

TEST_CASE("denoised cache: round trip, keys, stale and miss errors") {
    const auto dir = fresh_dir("cache");
    Rig rig;
    const auto schedule = StepSchedule::default_for(50);
    const auto items = rig.manifest.split(data::Split::train);

    diffusion::SamplerConfig sampler;
    sampler.n_steps = 4;
    const int written = precompute_denoised(rig.unet, items, 11, schedule, sampler, dir / "c");
    CHECK(written == 8);  // one entry per scene, exactly

    // idempotent: second pass is all cache hits
    CHECK(precompute_denoised(rig.unet, items, 11, schedule, sampler, dir / "c") == 0);

    const uint64_t h = param_hash(rig.unet.params);
    const auto e = load_denoised<float>(dir / "c", items[0].seed, 11, h);
    CHECK(e.z_at.size() == schedule.steps.size());
    const auto e2 = load_denoised<float>(dir / "c", items[0].seed, 11, h);
    CHECK(bit_equal(e.i_d0, e2.i_d0));
    for (const auto& [t, z] : e.z_at) CHECK(bit_equal(z, e2.z_at.at(t)));

    // different sampler seed: a different cache key
    CHECK(!fs::exists(denoised_path(dir / "c", items[0].seed, 12, h)));

    // stale: same scene+sampler, different checkpoint hash
    try {
        load_denoised<float>(dir / "c", items[0].seed, 11, h ^ 0xdead);
        FAIL("expected stale cache error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::stale_cache);
    }

    // miss: never-precomputed scene instructs a precompute pass
    try {
        load_denoised<float>(dir / "c", 0xD00D, 11, h);
        FAIL("expected cache miss error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::missing_checkpoint);
        CHECK(std::string(err.what()).find("precompute") != std::string::npos);
    }
}

TEST_CASE("train_phase_M: freeze contract, csv, determinism, reload") {
    const auto dir = fresh_dir("phasem");
    Rig rig;

    const uint64_t absm_before = param_hash(rig.nets.absm.params);
    const uint64_t gen_before = param_hash(rig.gb.gen.params);
    const uint64_t idnet_before = param_hash(rig.idnet.params);
    const uint64_t perc_before = param_hash(rig.percnet.params);
    const uint64_t mapping_before = param_hash(rig.nets.mapping.params);

    const auto ckpt = train_phase_M(rig.unet, rig.nets, rig.frozen, rig.gb.mean_latent.w_bar,
                                    rig.manifest, rig.rc, dir);

    CHECK(param_hash(rig.nets.absm.params) == absm_before);      // T frozen, bit-exact
    CHECK(param_hash(rig.gb.gen.params) == gen_before);          // G frozen
    CHECK(param_hash(rig.idnet.params) == idnet_before);         // R frozen
    CHECK(param_hash(rig.percnet.params) == perc_before);        // F frozen
    CHECK(param_hash(rig.nets.mapping.params) != mapping_before);  // M trained

    CHECK(fs::exists(dir / "metrics_invert_m.csv"));
    CHECK(fs::exists(dir / "invert_m.ckpt"));

    // loss decomposition within the csv: total == sum of terms
    std::ifstream is(dir / "metrics_invert_m.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,total,term0,term1,term2,term3,alpha_gamma,alpha_beta,lr");
    int rows = 0;
    while (std::getline(is, line)) {
        std::array<double, 9> col{};
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i < 9 && std::getline(ss, cell, ','); ++i) col[static_cast<size_t>(i)] = std::stod(cell);
        CHECK(col[1] == doctest::Approx(col[2] + col[3] + col[4] + col[5]).epsilon(1e-9));
        CHECK(col[6] == doctest::Approx(0.5).epsilon(1e-12));  // sigma(0) at init
        ++rows;
    }
    CHECK(rows == 6);

    // fresh rig, same seed: bit-identical phase outcome
    Rig rig2;
    train_phase_M(rig2.unet, rig2.nets, rig2.frozen, rig2.gb.mean_latent.w_bar, rig2.manifest,
                  rig2.rc, fresh_dir("phasem2"));
    CHECK(param_hash(rig2.nets.mapping.params) == param_hash(rig.nets.mapping.params));

    // checkpoint carries both stores
    auto loaded = inversion_from_checkpoint(CheckpointBundle<float>::load(dir / "invert_m.ckpt"));
    CHECK(param_hash(loaded.mapping.params) == param_hash(rig.nets.mapping.params));
    CHECK(param_hash(loaded.absm.params) == absm_before);
}

TEST_CASE("train_phase_T: identity init, M frozen, cache miss error") {
    const auto dir = fresh_dir("phaset");
    Rig rig;

    // at T-phase start (zero-initialized heads) w_t == w^m for any probe
    {
        Rng rng(31);
        const data::Scene sc = data::sample_scene(55);
        const TensorF z = TensorF::randn({3, 64, 64}, rng);
        auto [eps, taps] = rig.unet.denoise_with_taps(z, 25, sc.mask, sc.caption);
        Tape<float> t(false);
        auto w_m = latent::latent_pipeline(t, taps, sc.caption, rig.nets.mapping,
                                           &rig.nets.absm, latent::AblationMode::m_only, 64);
        Tape<float> t2(false);
        auto w_t = latent::latent_pipeline(t2, taps, sc.caption, rig.nets.mapping,
                                           &rig.nets.absm, latent::AblationMode::full, 64);
        CHECK(bit_equal(w_m.val(), w_t.val()));
    }

    // cache-miss before precompute
    rig.rc.set_int("sampler.seed", 11);
    CHECK_THROWS_AS(train_phase_T(rig.unet, rig.nets, rig.frozen, rig.gb.mean_latent.w_bar,
                                  rig.manifest, rig.rc, dir / "cache", dir),
                    Error);

    diffusion::SamplerConfig sampler;
    sampler.n_steps = 4;
    precompute_denoised(rig.unet, rig.manifest.split(data::Split::train), 11,
                        StepSchedule::default_for(50), sampler, dir / "cache");

    const uint64_t mapping_before = param_hash(rig.nets.mapping.params);
    const uint64_t absm_before = param_hash(rig.nets.absm.params);
    train_phase_T(rig.unet, rig.nets, rig.frozen, rig.gb.mean_latent.w_bar, rig.manifest, rig.rc,
                  dir / "cache", dir);
    CHECK(param_hash(rig.nets.mapping.params) == mapping_before);  // M frozen, bit-exact
    CHECK(param_hash(rig.nets.absm.params) != absm_before);        // T trained
    CHECK(fs::exists(dir / "invert_t.ckpt"));
}

TEST_CASE("evaluate_pipeline: report sanity and determinism on a tiny split") {
    const auto dir = fresh_dir("eval");
    Rig rig;

    // the mask predictor needs minimal training to exist
    eval::MaskPredictor<float> mp;
    Rng rng(41);
    mp.init(rng);
    RunConfig mp_rc;
    mp_rc.set_int("maskpred.train_steps", 40);
    mp_rc.set_double("maskpred.acc_threshold", 0.0);
    eval::train_mask_predictor(mp, rig.manifest, mp_rc, dir);

    eval::EvalContext<float> ctx;
    ctx.unet = &rig.unet;
    ctx.nets = &rig.nets;
    ctx.gen = &rig.gb;
    ctx.idnet = &rig.idnet;
    ctx.percnet = &rig.percnet;
    ctx.maskpred = &mp;

    auto scenes = rig.manifest.split(data::Split::test);
    auto rep1 = eval::evaluate_pipeline(ctx, scenes, 77, latent::AblationMode::full, rig.rc,
                                        dir / "scenes1.csv");
    rep1.validate();
    CHECK(rep1.n_samples == 2);

    auto rep2 = eval::evaluate_pipeline(ctx, scenes, 77, latent::AblationMode::full, rig.rc,
                                        dir / "scenes2.csv");
    CHECK(rep1.acc == rep2.acc);
    CHECK(rep1.frechet == rep2.frechet);
    CHECK(rep1.id_sim == rep2.id_sim);

    std::ifstream a(dir / "scenes1.csv"), b(dir / "scenes2.csv");
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);

    // m-only and no-attention ablations run through the same contract
    auto rep3 = eval::evaluate_pipeline(ctx, scenes, 77, latent::AblationMode::m_only, rig.rc,
                                        dir / "scenes3.csv");
    rep3.validate();
    // with zero-initialized T, full == m-only exactly
    CHECK(rep3.acc == rep1.acc);
    auto rep4 = eval::evaluate_pipeline(ctx, scenes, 77, latent::AblationMode::no_attention,
                                        rig.rc, dir / "scenes4.csv");
    rep4.validate();
}

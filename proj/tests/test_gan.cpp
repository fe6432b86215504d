// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "common/gradcheck.hpp"
#include "latentbridge/gan/pretrain.hpp"
#include "latentbridge/train/losses.hpp"

using namespace lb;
using namespace lb::gan;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path p = fs::temp_directory_path() / "lb_test_gan";
    fs::create_directories(p);
    return p;
}

GeneratorConfig tiny_gen_cfg() {
    GeneratorConfig c;
    c.latent_slots = 4;
    c.stages = 2;  // 4x4 -> 16x16
    c.const_channels = 16;
    c.stage_channels = {12, 8};
    return c;
}

TensorD randn(std::vector<int> sh, uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return TensorD::randn(std::move(sh), rng, stddev);
}

}  // namespace

TEST_CASE("generator: determinism, range, shape errors") {
    Rng rng(1);
    Generator<float> g;
    GeneratorConfig cfg;  // production: 8 slots, 64x64
    g.init(cfg, rng);

    Rng wrng(2);
    const TensorF w = TensorF::randn({8, 512}, wrng);
    const TensorF img1 = g.generate_value(w);
    const TensorF img2 = g.generate_value(w);
    CHECK(bit_equal(img1, img2));
    CHECK(img1.shape == std::vector<int>{3, 64, 64});
    CHECK(img1.min() >= -1.0f);
    CHECK(img1.max() <= 1.0f);
    CHECK(img1.all_finite());

    Tape<float> t;
    CHECK_THROWS_AS(g.generate(t, constant(t, TensorF::randn({4, 512}, wrng))), Error);
    CHECK_THROWS_AS(g.generate(t, constant(t, TensorF::randn({8, 256}, wrng))), Error);

    GeneratorConfig bad;
    bad.latent_slots = 7;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("generator: gradient w.r.t. latent vs finite differences") {
    Rng rng(3);
    Generator<double> g;
    g.init(tiny_gen_cfg(), rng);

    auto run = [&](const TensorD& w, TensorD* gw) {
        Tape<double> t;
        auto wv = input(t, w, true);
        auto img = g.generate(t, wv);
        Rng prng(44);
        auto loss = dot(img, constant(t, TensorD::randn(img.val().shape, prng)));
        if (gw) {
            t.backward(loss.idx, nullptr);
            *gw = t.node(wv.idx).grad;
        }
        return static_cast<double>(loss.val().data[0]);
    };
    Rng prng(4);
    const auto res = lbtest::check_input_grad(run, randn({4, 512}, 5, 0.3), 24, prng);
    CHECK(res.max_rel_err < 1e-2);
}

TEST_CASE("mean latent recomputation is exact") {
    Rng rng(6);
    LatentMapper<float> m;
    m.init(64, rng);
    const auto a = MeanLatent<float>::estimate(m, 8, 500, 77);
    const auto b = MeanLatent<float>::estimate(m, 8, 500, 77);
    CHECK(bit_equal(a.w_bar, b.w_bar));
    CHECK(a.n_samples == 500);
    CHECK(a.seed == 77);
    const auto c = MeanLatent<float>::estimate(m, 8, 500, 78);
    CHECK(!bit_equal(a.w_bar, c.w_bar));
}

TEST_CASE("pretrain_generator: short run, reload, determinism") {
    const auto dir = tmp_dir();
    const auto manifest = data::build_splits(16, 1, 1, 9);
    RunConfig rc;
    rc.set_int("seed", 4);
    rc.set_int("gan.train_steps", 12);
    rc.set_int("gan.batch", 2);
    rc.set_int("gan.wbar_samples", 200);

    CheckpointBundle<float> ckpt;
    auto gb = pretrain_generator<float>(manifest, rc, dir / "a", &ckpt);
    CHECK(gb.mean_latent.w_bar.shape == std::vector<int>{8, 512});

    auto gb2 = generator_from_checkpoint(CheckpointBundle<float>::load(dir / "a" / "gen.ckpt"));
    CHECK(param_hash(gb.gen.params) == param_hash(gb2.gen.params));
    CHECK(bit_equal(gb.mean_latent.w_bar, gb2.mean_latent.w_bar));
    CHECK(gb2.mean_latent.n_samples == 200);

    // recompute w_bar from the stored seed: exact
    const auto re = MeanLatent<float>::estimate(gb2.mapper, 8, gb2.mean_latent.n_samples,
                                                gb2.mean_latent.seed);
    CHECK(bit_equal(re.w_bar, gb2.mean_latent.w_bar));

    // same config, fresh run: bit-identical training
    auto gb3 = pretrain_generator<float>(manifest, rc, dir / "b", nullptr);
    CHECK(param_hash(gb.gen.params) == param_hash(gb3.gen.params));

    data::DatasetManifest empty;
    CHECK_THROWS_AS(pretrain_generator<float>(empty, rc, dir / "c", nullptr), Error);
}

TEST_CASE("identity embedder: untrained refusal, unit norm, margin direction") {
    Rng rng(7);
    IdentityNet<float> net;
    net.init(data::kNumIdentities, rng);

    const data::Scene sc = data::sample_scene(3);
    Tape<float> t;
    CHECK_THROWS_AS(net.embed(t, constant(t, sc.image)), Error);
    try {
        net.embed_value(sc.image);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_checkpoint);
    }

    const auto dir = tmp_dir();
    const auto manifest = data::build_splits(192, 48, 1, 10);
    RunConfig rc;
    rc.set_int("seed", 5);
    rc.set_int("idnet.train_steps", 220);
    rc.set_int("idnet.batch", 16);
    rc.set_int("idnet.margin_pairs", 60);
    const double margin = train_identity_net(net, manifest, rc, dir);
    CHECK(net.trained);
    CHECK(margin > 0.0);  // the 0.2 regression bound is enforced on the full run

    const auto e = net.embed_value(sc.image);
    double norm = 0;
    for (float v : e.data) norm += static_cast<double>(v) * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);

    // cos(e(x), e(x)) is exactly 1 under the normalized-difference form
    Tape<float> t2;
    auto c = one_minus_cosine(constant(t2, e), constant(t2, e));
    CHECK(c.val().data[0] == 0.0f);

    // round trip
    const auto b = make_idnet_checkpoint(net, rc);
    b.save(dir / "idnet.ckpt");
    auto net2 = idnet_from_checkpoint(CheckpointBundle<float>::load(dir / "idnet.ckpt"));
    CHECK(bit_equal(net2.embed_value(sc.image), e));
}

TEST_CASE("perceptual net: zero self-distance, symmetry, noise monotonicity") {
    PercNet<float> net;
    net.init(97);

    Rng rng(8);
    int monotone_ok = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const TensorF x = TensorF::randn({3, 32, 32}, rng, 0.5);
        CHECK(net.distance_value(x, x) == 0.0);  // exact

        const TensorF y = TensorF::randn({3, 32, 32}, rng, 0.5);
        CHECK(net.distance_value(x, y) == net.distance_value(y, x));

        const TensorF dir = TensorF::randn({3, 32, 32}, rng);
        double prev = 0;
        bool mono = true;
        for (double epsv : {0.01, 0.05, 0.1}) {
            TensorF xe = x;
            for (size_t i = 0; i < xe.numel(); ++i)
                xe.data[i] += static_cast<float>(epsv) * dir.data[i];
            const double d = net.distance_value(x, xe);
            if (d <= prev) mono = false;
            prev = d;
        }
        monotone_ok += mono;
    }
    CHECK(monotone_ok == 20);

    // fixed seed: reinitialization reproduces the frozen pyramid
    PercNet<float> net2;
    net2.init(97);
    CHECK(param_hash(net.params) == param_hash(net2.params));
}

namespace {

struct LossRig {
    Generator<double> gen;
    IdentityNet<double> idnet;
    PercNet<double> percnet;
    train::FrozenNets<double> nets;

    LossRig() {
        Rng rng(11);
        gen.init(tiny_gen_cfg(), rng);
        idnet.init(8, rng);
        idnet.trained = true;  // gradients don't need a trained embedder
        percnet.init(55);
        nets.gen = &gen;
        nets.idnet = &idnet;
        nets.percnet = &percnet;
    }
};

}  // namespace

TEST_CASE("losses: fixed points vanish exactly and terms decompose") {
    LossRig rig;
    const TensorD w = randn({4, 512}, 20, 0.2);
    const TensorD img = rig.gen.generate_value(w);
    train::LossWeights weights;

    {
        Tape<double> t;
        auto lt = train::loss_mapping(t, img, input(t, w, false), w, weights, rig.nets);
        CHECK(lt.total.val().data[0] == 0.0);  // all four terms vanish, zero tolerance
        for (double v : lt.terms) CHECK(v == 0.0);
    }
    {
        Tape<double> t;
        auto lt = train::loss_absm(t, img, img, input(t, w, false), w, weights, rig.nets);
        CHECK(lt.total.val().data[0] == 0.0);
    }

    // regularizer-only: unit-norm (one-hot) perturbation gives exactly 1
    {
        train::LossWeights reg;
        reg.lambda_m = {0.0, 0.0, 0.0, 1.0};
        TensorD w2 = w;
        w2.data[7] += 1.0;
        Tape<double> t;
        auto lt = train::loss_mapping(t, img, input(t, w2, false), w, reg, rig.nets);
        CHECK(lt.terms[3] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(lt.total.val().data[0] == doctest::Approx(1.0).epsilon(1e-12));
    }

    // reconstruction-only with a constant 0.1 offset: 0.1*sqrt(3P)
    {
        train::LossWeights rec;
        rec.lambda_s = {1.0, 0.0, 0.0, 0.0};
        TensorD i_d0 = img;
        for (auto& v : i_d0.data) v += 0.1;
        Tape<double> t;
        auto lt = train::loss_absm(t, i_d0, img, input(t, w, false), w, rec, rig.nets);
        const double p = 16.0 * 16.0;
        CHECK(lt.total.val().data[0] == doctest::Approx(0.1 * std::sqrt(3.0 * p)).epsilon(1e-9));
    }

    // decomposition: total equals the ordered sum of the reported terms
    {
        Tape<double> t;
        const TensorD gt = randn({3, 16, 16}, 21, 0.4);
        auto lt = train::loss_mapping(t, gt, input(t, randn({4, 512}, 22, 0.2), false),
                                      randn({4, 512}, 23, 0.2), weights, rig.nets);
        const double sum = ((lt.terms[0] + lt.terms[1]) + lt.terms[2]) + lt.terms[3];
        CHECK(lt.total.val().data[0] == sum);
        for (double v : lt.terms) CHECK(v >= 0.0);
    }
}

TEST_CASE("losses: gradients w.r.t. the latent code vs finite differences") {
    LossRig rig;
    const TensorD gt = rig.gen.generate_value(randn({4, 512}, 30, 0.2));
    const TensorD w_bar = randn({4, 512}, 31, 0.1);
    train::LossWeights weights;  // all four terms active

    auto run_m = [&](const TensorD& w, TensorD* gw) {
        Tape<double> t;
        auto wv = input(t, w, true);
        auto lt = train::loss_mapping(t, gt, wv, w_bar, weights, rig.nets);
        if (gw) {
            t.backward(lt.total.idx, nullptr);
            *gw = t.node(wv.idx).grad;
        }
        return static_cast<double>(lt.total.val().data[0]);
    };
    Rng prng(32);
    for (int probe = 0; probe < 5; ++probe) {
        const auto res =
            lbtest::check_input_grad(run_m, randn({4, 512}, 40 + probe, 0.2), 6, prng, 1e-6);
        CHECK(res.max_rel_err < 1e-3);
    }

    const TensorD i_d0 = rig.gen.generate_value(randn({4, 512}, 50, 0.2));
    auto run_s = [&](const TensorD& w, TensorD* gw) {
        Tape<double> t;
        auto wv = input(t, w, true);
        auto lt = train::loss_absm(t, i_d0, gt, wv, w_bar, weights, rig.nets);
        if (gw) {
            t.backward(lt.total.idx, nullptr);
            *gw = t.node(wv.idx).grad;
        }
        return static_cast<double>(lt.total.val().data[0]);
    };
    for (int probe = 0; probe < 5; ++probe) {
        const auto res =
            lbtest::check_input_grad(run_s, randn({4, 512}, 60 + probe, 0.2), 6, prng, 1e-6);
        CHECK(res.max_rel_err < 1e-3);
    }
}

TEST_CASE("loss weights validation") {
    train::LossWeights w;
    w.validate();
    w.lambda_m = {0.0, 0.0, 0.0, 1.0};
    CHECK_THROWS_AS(w.validate(), Error);
    w.lambda_m = {1.0, 0.0, -0.1, 0.0};
    CHECK_THROWS_AS(w.validate(), Error);
    CHECK_THROWS_AS(train::LossWeights::parse4("1 2 3", "k"), Error);
    CHECK_THROWS_AS(train::LossWeights::parse4("1 2 3 4 5", "k"), Error);
    const auto arr = train::LossWeights::parse4("1 0.8 0.1 0.005", "k");
    CHECK(arr[1] == 0.8);
}

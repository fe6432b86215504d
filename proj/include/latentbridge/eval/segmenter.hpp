// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "latentbridge/core/config.hpp"
#include "latentbridge/core/nn.hpp"
#include "latentbridge/core/optim.hpp"
#include "latentbridge/core/serialize.hpp"
#include "latentbridge/data/dataset.hpp"
#include "latentbridge/eval/metrics.hpp"
#include "latentbridge/train/metrics_csv.hpp"

namespace lb::eval {

// Small full-resolution conv segmenter used to score mask alignment of
// generated images. Trained once on the toy set, then frozen for all
// evaluation.
template <class S>
struct MaskPredictor {
    ParamStore<S> params;
    Conv2dLayer<S> c1, c2, c3;
    bool trained = false;

    void init(Rng& rng) {
        params = ParamStore<S>();
        c1.init(params, "maskpred.c1", 3, 24, 3, 1, rng);
        c2.init(params, "maskpred.c2", 24, 32, 3, 1, rng);
        c3.init(params, "maskpred.c3", 32, data::kNumClasses, 1, 1, rng);
    }

    Var<S> logits(Tape<S>& t, Var<S> img) {
        auto x = leaky_relu(c1.forward(t, params, img));
        x = leaky_relu(c2.forward(t, params, x));
        return c3.forward(t, params, x);
    }

    MaskImage predict_mask(const TensorF& image) {
        check(trained, ErrorKind::missing_checkpoint,
              "mask predictor is untrained; run the pretrain-gan phase first");
        Tape<S> t(false);
        const auto lg = logits(t, constant(t, image.template cast<S>())).val();
        const int h = lg.dim(1), w = lg.dim(2);
        MaskImage out(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int best = 0;
                S bv = lg.at(0, y, x);
                for (int c = 1; c < data::kNumClasses; ++c)
                    if (lg.at(c, y, x) > bv) {
                        bv = lg.at(c, y, x);
                        best = c;
                    }
                out.at(y, x) = static_cast<uint8_t>(best);
            }
        return out;
    }
};

template <class S>
CheckpointBundle<S> make_maskpred_checkpoint(const MaskPredictor<S>& net, const RunConfig& rc) {
    CheckpointBundle<S> b;
    b.component = "maskpred";
    b.config_echo = rc.canonical_text();
    b.config_hash = rc.hash();
    b.params = net.params;
    return b;
}

template <class S>
MaskPredictor<S> maskpred_from_checkpoint(const CheckpointBundle<S>& b) {
    check(b.component == "maskpred", ErrorKind::validation,
          "checkpoint component is '" + b.component + "', expected 'maskpred'");
    MaskPredictor<S> net;
    Rng rng(0);
    net.init(rng);
    restore_params(net.params, b.params);
    net.trained = true;
    return net;
}

// Trains the segmenter and verifies held-out accuracy; anything below the
// threshold fails loudly rather than silently degrading every downstream
// metric.
template <class S>
double train_mask_predictor(MaskPredictor<S>& net, const data::DatasetManifest& manifest,
                            const RunConfig& rc, const std::filesystem::path& out_dir) {
    const auto items = manifest.split(data::Split::train);
    check(!items.empty(), ErrorKind::validation, "train_mask_predictor: empty manifest");

    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed", 0));
    const int steps = static_cast<int>(rc.get_int("maskpred.train_steps", 600));
    const int batch = static_cast<int>(rc.get_int("maskpred.batch", 4));
    const double lr = rc.get_double("maskpred.lr", 2e-3);
    const double threshold = rc.get_double("maskpred.acc_threshold", 0.95);

    Adam<S> opt(net.params, lr);
    Rng data_rng = Rng(seed).fork(0x5E6);
    train::MetricsCsv csv(out_dir / "metrics_pretrain_maskpred.csv");
    for (int it = 0; it < steps; ++it) {
        GradStore<S> gs;
        gs.reset(net.params);
        double loss_acc = 0;
        for (int bi = 0; bi < batch; ++bi) {
            const auto& item = items[data_rng.below(items.size())];
            const data::Scene scene = data::sample_scene(item.seed, item.spec);
            Tape<S> t;
            auto lg = net.logits(t, constant(t, scene.image.template cast<S>()));
            auto loss = pixel_cross_entropy(lg, scene.mask);
            loss_acc += loss.val().data[0];
            t.backward(loss.idx, &gs);
        }
        gs.scale(S(1) / static_cast<S>(batch));
        opt.step(gs);
        csv.row(it, loss_acc / batch, loss_acc / batch, 0, 0, 0, 0, 0, lr);
    }
    csv.flush();
    net.trained = true;

    const auto val = manifest.split(data::Split::val);
    double acc = 0;
    for (const auto& item : val) {
        const data::Scene scene = data::sample_scene(item.seed, item.spec);
        acc += pixel_accuracy(net.predict_mask(scene.image), scene.mask);
    }
    acc /= static_cast<double>(val.size());
    check(acc >= threshold, ErrorKind::validation,
          "mask predictor validation accuracy " + std::to_string(acc) + " is below the " +
              std::to_string(threshold) + " threshold; evaluation metrics would be invalid");
    return acc;
}

}  // namespace lb::eval

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "latentbridge/core/nn.hpp"
#include "latentbridge/data/render.hpp"
#include "latentbridge/data/vocab.hpp"
#include "latentbridge/diffusion/schedule.hpp"

namespace lb::diffusion {

// Per-step tap bundle: middle-block features, decoder features at N
// resolutions, K cross-attention maps per block, and the noisy input.
template <class S>
struct FeatureTaps {
    Tensor<S> h;                              // {C_h, 8, 8}
    std::vector<Tensor<S>> f;                 // N maps {C_n, H_n, W_n}, H_n doubling
    std::vector<std::vector<Tensor<S>>> a;    // N blocks x K maps {H_n*W_n, S}
    int t = 0;
    Tensor<S> z;                              // {3, H, W}
};

// Conditional denoising U-Net. Caption tokens enter through cross-attention
// in the decoder blocks; the one-hot semantic mask is encoded by two convs
// and added to the input stem.
template <class S>
struct UNet {
    DiffusionConfig cfg;
    ParamStore<S> params;
    NoiseSchedule sched;

    // layers
    Conv2dLayer<S> stem, mask_enc1, mask_enc2;
    LinearLayer<S> temb1, temb2;
    int token_table = -1;

    struct ResBlock {
        GroupNormLayer<S> norm;
        Conv2dLayer<S> conv;
        LinearLayer<S> temb_proj;
        Conv2dLayer<S> skip;  // 1x1, used when channel counts differ
        bool has_skip = false;

        void init(ParamStore<S>& ps, const std::string& name, int in_c, int out_c, int temb_dim,
                  Rng& rng) {
            norm.init(ps, name + ".norm", in_c, std::min(8, in_c));
            conv.init(ps, name + ".conv", in_c, out_c, 3, 1, rng);
            temb_proj.init(ps, name + ".temb", temb_dim, out_c, rng);
            has_skip = in_c != out_c;
            if (has_skip) skip.init(ps, name + ".skip", in_c, out_c, 1, 1, rng);
        }

        Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x, Var<S> temb) const {
            auto h = conv.forward(t, ps, silu(norm.forward(t, ps, x)));
            auto tp = temb_proj.forward_vec(t, ps, temb);
            h = add(h, broadcast_chan(tp, h.val().dim(1), h.val().dim(2)));
            auto sk = has_skip ? skip.forward(t, ps, x) : x;
            return add(h, sk);
        }
    };

    struct CrossAttn {
        LayerNormLayer<S> ln;
        LinearLayer<S> q, k, v, o;
        int dim = 64;

        void init(ParamStore<S>& ps, const std::string& name, int channels, int token_dim, int d,
                  Rng& rng) {
            dim = d;
            ln.init(ps, name + ".ln", channels);
            q.init(ps, name + ".q", channels, d, rng);
            k.init(ps, name + ".k", token_dim, d, rng);
            v.init(ps, name + ".v", token_dim, d, rng);
            o.init(ps, name + ".o", d, channels, rng);
        }

        // Returns the residual-updated features; writes the attention map
        // ({HW, S} rows softmax-normalized) into *attn_out when non-null.
        Var<S> forward(Tape<S>& t, ParamStore<S>& ps, Var<S> x, Var<S> tokens,
                       Tensor<S>* attn_out) const {
            const int h = x.val().dim(1), w = x.val().dim(2);
            auto rows = rows_from_chw(x);
            auto qn = q.forward_rows(t, ps, ln.forward(t, ps, rows));
            auto kn = k.forward_rows(t, ps, tokens);
            auto vn = v.forward_rows(t, ps, tokens);
            auto scores = scale(matmul(qn, transpose(kn)),
                                static_cast<S>(1.0 / std::sqrt(static_cast<double>(dim))));
            auto attn = softmax_rows(scores);
            if (attn_out) *attn_out = attn.val();
            auto out = o.forward_rows(t, ps, matmul(attn, vn));
            return add(x, chw_from_rows(out, h, w));
        }
    };

    ResBlock rb1, rb2, rbm;
    Conv2dLayer<S> down1, down2, down3;

    struct DecoderBlock {
        Conv2dLayer<S> upconv;  // applied before 2x nearest upsample
        Conv2dLayer<S> merge;   // 1x1 after skip concat
        ResBlock rb;
        std::vector<CrossAttn> attn;
    };
    std::vector<DecoderBlock> dec;

    GroupNormLayer<S> out_norm;
    Conv2dLayer<S> out_conv;

    static constexpr int kTembDim = 128;

    void init(const DiffusionConfig& config, Rng& rng) {
        cfg = config;
        cfg.validate();
        check(cfg.n_blocks == 3, ErrorKind::validation,
              "this backbone is wired for N=3 decoder blocks");
        sched = NoiseSchedule::from_config(cfg);
        params = ParamStore<S>();

        const int b = cfg.base_channels;       // 64x64 level
        const int c1 = 2 * b;                  // 32x32 level
        const int c2 = cfg.mid_channels;       // 16x16 and 8x8 levels

        token_table = params.add("unet.tokens",
                                 Tensor<S>::randn({static_cast<int>(data::vocab().size()),
                                                   cfg.token_dim},
                                                  rng, 0.02));
        stem.init(params, "unet.stem", 3, b, 3, 1, rng);
        mask_enc1.init(params, "unet.mask_enc1", data::kNumClasses, 16, 3, 1, rng);
        mask_enc2.init(params, "unet.mask_enc2", 16, b, 3, 1, rng);
        temb1.init(params, "unet.temb1", cfg.token_dim, kTembDim, rng);
        temb2.init(params, "unet.temb2", kTembDim, kTembDim, rng);

        down1.init(params, "unet.down1", b, c1, 3, 2, rng);
        rb1.init(params, "unet.rb1", c1, c1, kTembDim, rng);
        down2.init(params, "unet.down2", c1, c2, 3, 2, rng);
        rb2.init(params, "unet.rb2", c2, c2, kTembDim, rng);
        down3.init(params, "unet.down3", c2, c2, 3, 2, rng);
        rbm.init(params, "unet.rbm", c2, c2, kTembDim, rng);

        // decoder channels per tapped block: {c2@16, c1@32, b@64}
        const int dec_in[3] = {c2, c2, c1};
        const int dec_out[3] = {c2, c1, b};
        const int skip_c[3] = {c2, c1, b};
        dec.resize(3);
        for (int n = 0; n < 3; ++n) {
            const std::string base = "unet.dec" + std::to_string(n + 1);
            dec[static_cast<size_t>(n)].upconv.init(params, base + ".up", dec_in[n], dec_out[n], 3, 1, rng);
            dec[static_cast<size_t>(n)].merge.init(params, base + ".merge", dec_out[n] + skip_c[n],
                                                   dec_out[n], 1, 1, rng);
            dec[static_cast<size_t>(n)].rb.init(params, base + ".rb", dec_out[n], dec_out[n],
                                                kTembDim, rng);
            dec[static_cast<size_t>(n)].attn.resize(static_cast<size_t>(cfg.k_attn));
            for (int k = 0; k < cfg.k_attn; ++k)
                dec[static_cast<size_t>(n)].attn[static_cast<size_t>(k)].init(
                    params, base + ".attn" + std::to_string(k + 1), dec_out[n], cfg.token_dim,
                    cfg.attn_dim, rng);
        }
        out_norm.init(params, "unet.out_norm", b, std::min(8, b));
        out_conv.init(params, "unet.out_conv", b, 3, 3, 1, rng, /*zero_init=*/true);
    }

    Tensor<S> mask_onehot(const MaskImage& mask) const {
        Tensor<S> oh({data::kNumClasses, mask.h, mask.w});
        for (int y = 0; y < mask.h; ++y)
            for (int x = 0; x < mask.w; ++x) oh.at(mask.at(y, x), y, x) = S(1);
        return oh;
    }

    // Graph-building forward. Pure function of (inputs, parameters); taps are
    // recorded as value snapshots when `taps` is non-null.
    Var<S> forward(Tape<S>& t, Var<S> z, int step, const MaskImage& mask,
                   const std::vector<int>& caption, FeatureTaps<S>* taps) {
        check(step >= 0 && step <= cfg.total_steps, ErrorKind::range,
              "denoising step out of range: " + std::to_string(step));
        check(static_cast<int>(caption.size()) == cfg.caption_len, ErrorKind::shape,
              "caption length must be S=" + std::to_string(cfg.caption_len));
        check(z.val().rank() == 3 && z.val().dim(0) == 3, ErrorKind::shape,
              "z must be {3,H,W}");

        auto temb = silu(temb1.forward_vec(
            t, params, constant(t, sinusoidal_embedding<S>(step, cfg.token_dim))));
        temb = temb2.forward_vec(t, params, temb);

        auto tokens = embedding_rows(param(t, params, token_table), caption);

        auto mh = mask_enc2.forward(
            t, params, leaky_relu(mask_enc1.forward(t, params, constant(t, mask_onehot(mask)))));
        auto s0 = add(stem.forward(t, params, z), mh);

        auto s1 = rb1.forward(t, params, down1.forward(t, params, s0), temb);
        auto s2 = rb2.forward(t, params, down2.forward(t, params, s1), temb);
        auto mid = rbm.forward(t, params, down3.forward(t, params, s2), temb);

        if (taps) {
            taps->t = step;
            taps->z = z.val();
            taps->h = mid.val();
            taps->f.clear();
            taps->a.assign(static_cast<size_t>(cfg.n_blocks), {});
        }

        Var<S> x = mid;
        const Var<S> skips[3] = {s2, s1, s0};
        for (int n = 0; n < cfg.n_blocks; ++n) {
            auto& blk = dec[static_cast<size_t>(n)];
            x = upsample_nearest2(blk.upconv.forward(t, params, x));
            x = blk.merge.forward(t, params, concat_channels(x, skips[n]));
            x = blk.rb.forward(t, params, x, temb);
            for (int k = 0; k < cfg.k_attn; ++k) {
                Tensor<S> attn_map;
                x = blk.attn[static_cast<size_t>(k)].forward(t, params, x, tokens,
                                                             taps ? &attn_map : nullptr);
                if (taps) taps->a[static_cast<size_t>(n)].push_back(std::move(attn_map));
            }
            if (taps) taps->f.push_back(x.val());
        }

        return out_conv.forward(t, params, silu(out_norm.forward(t, params, x)));
    }

    // Inference entry point: epsilon prediction plus taps, no gradients.
    std::pair<Tensor<S>, FeatureTaps<S>> denoise_with_taps(const Tensor<S>& z, int step,
                                                           const MaskImage& mask,
                                                           const std::vector<int>& caption) {
        Tape<S> t(false);
        FeatureTaps<S> taps;
        auto eps = forward(t, constant(t, z), step, mask, caption, &taps);
        return {eps.val(), std::move(taps)};
    }
};

}  // namespace lb::diffusion

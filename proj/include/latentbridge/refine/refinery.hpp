// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "latentbridge/core/tensor.hpp"
#include "latentbridge/diffusion/unet.hpp"

// Converts raw denoiser taps into the refined stacks consumed by the style
// modulation network. Everything here is exact elementwise arithmetic; no
// parameters, no tolerances.

namespace lb::refinery {

// Bilinear resize, align_corners=false, edge-clamped. The lerp form
// a + w*(b-a) preserves constant maps bit-exactly.
template <class S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int oh, int ow) {
    check(x.rank() == 3, ErrorKind::shape, "bilinear_resize: need {C,H,W}");
    const int c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    if (ih == oh && iw == ow) return x;
    Tensor<S> out({c, oh, ow});
    const double sy = static_cast<double>(ih) / oh;
    const double sx = static_cast<double>(iw) / ow;
    for (int oy = 0; oy < oh; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const S wy = static_cast<S>(fy - y0);
        const int y0c = std::clamp(y0, 0, ih - 1);
        const int y1c = std::clamp(y0 + 1, 0, ih - 1);
        for (int ox = 0; ox < ow; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const S wx = static_cast<S>(fx - x0);
            const int x0c = std::clamp(x0, 0, iw - 1);
            const int x1c = std::clamp(x0 + 1, 0, iw - 1);
            for (int ch = 0; ch < c; ++ch) {
                const S tl = x.at(ch, y0c, x0c), tr = x.at(ch, y0c, x1c);
                const S bl = x.at(ch, y1c, x0c), br = x.at(ch, y1c, x1c);
                const S top = tl + wx * (tr - tl);
                const S bot = bl + wx * (br - bl);
                out.at(ch, oy, ox) = top + wy * (bot - top);
            }
        }
    }
    return out;
}

// F_t: upsample every decoder feature map to the working resolution.
// Downsampling is outside the contract.
template <class S>
std::vector<Tensor<S>> upsample_features(const std::vector<Tensor<S>>& f, int h, int w) {
    check(!f.empty(), ErrorKind::validation, "upsample_features: empty input");
    std::vector<Tensor<S>> out;
    out.reserve(f.size());
    for (const auto& m : f) {
        check(m.rank() == 3, ErrorKind::shape, "upsample_features: need {C,H,W} maps");
        check(m.dim(1) <= h && m.dim(2) <= w, ErrorKind::validation,
              "upsample_features: map larger than target resolution");
        out.push_back(bilinear_resize(m, h, w));
    }
    return out;
}

namespace detail {

// {HW, S} attention rows reshaped to square {S-channel, R, R} layout checks.
inline int square_side(int hw) {
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(hw))));
    check(r * r == hw, ErrorKind::shape, "attention tensor is not square-spatial");
    return r;
}

template <class S>
int validated_word_count(const std::vector<int>& caption) {
    int n = 0;
    for (int t : caption)
        if (t != data::kPadToken) ++n;
    check(n > 0, ErrorKind::validation, "all-padding caption: no words to average over");
    return n;
}

// max over K layers then mean over non-padding words -> {1, R, R}
template <class S>
Tensor<S> block_word_mean(const std::vector<Tensor<S>>& block_attn,
                          const std::vector<int>& caption) {
    check(!block_attn.empty(), ErrorKind::validation, "block has no attention layers");
    const int hw = block_attn[0].dim(0);
    const int s = block_attn[0].dim(1);
    const int r = square_side(hw);
    check(static_cast<int>(caption.size()) == s, ErrorKind::shape,
          "caption length does not match attention width");
    const int n_words = validated_word_count<S>(caption);

    Tensor<S> out({1, r, r});
    for (const auto& a : block_attn)
        check(a.dim(0) == hw && a.dim(1) == s, ErrorKind::shape,
              "inconsistent attention shapes within block");
    for (int p = 0; p < hw; ++p) {
        S acc = S(0);
        for (int w = 0; w < s; ++w) {
            if (caption[static_cast<size_t>(w)] == data::kPadToken) continue;
            S mx = block_attn[0].at(p, w);
            for (size_t k = 1; k < block_attn.size(); ++k)
                mx = std::max(mx, block_attn[k].at(p, w));
            acc += mx;
        }
        out.data[static_cast<size_t>(p)] = acc / static_cast<S>(n_words);
    }
    return out;
}

}  // namespace detail

// A^n_t: max over the K layers, word channels collapsed by the non-padding
// mean and broadcast across the block's feature channels, then upsampled.
template <class S>
Tensor<S> pool_block_attention(const std::vector<Tensor<S>>& block_attn,
                               const std::vector<int>& caption, int target_channels, int h,
                               int w) {
    check(target_channels >= 1, ErrorKind::validation, "target_channels must be >= 1");
    Tensor<S> pooled = detail::block_word_mean<S>(block_attn, caption);
    check(pooled.dim(1) <= h && pooled.dim(2) <= w, ErrorKind::validation,
          "attention map larger than target resolution");
    Tensor<S> up = bilinear_resize(pooled, h, w);
    Tensor<S> out({target_channels, h, w});
    for (int c = 0; c < target_channels; ++c)
        std::copy(up.data.begin(), up.data.end(),
                  out.data.begin() + static_cast<size_t>(c) * h * w);
    return out;
}

// A_bar_t: per block max over K then word mean, upsampled, averaged over the
// N blocks. {1, H, W}, entries >= 0.
template <class S>
Tensor<S> average_attention(const std::vector<std::vector<Tensor<S>>>& a,
                            const std::vector<int>& caption, int h, int w) {
    check(!a.empty(), ErrorKind::validation, "average_attention: no blocks");
    Tensor<S> acc({1, h, w});
    for (const auto& block : a) {
        Tensor<S> up = bilinear_resize(detail::block_word_mean<S>(block, caption), h, w);
        for (size_t i = 0; i < acc.numel(); ++i) acc.data[i] += up.data[i];
    }
    const S inv = S(1) / static_cast<S>(a.size());
    for (auto& v : acc.data) v *= inv;
    return acc;
}

template <class S>
struct RefinedFeatures {
    std::vector<Tensor<S>> f;      // F_t, upsampled decoder features
    std::vector<Tensor<S>> a;      // A_t, pooled attention per block
    Tensor<S> a_bar;               // {1,H,W}
    Tensor<S> f_bar;               // {1,H,W}
    std::vector<Tensor<S>> f_hat;  // F_t ⊙ A_t
    Tensor<S> f_hat_bar;           // F_bar ⊙ A_bar
};

// F_hat[n] = F[n] ⊙ A[n]; F_bar = mean over blocks of each block's
// depth-wise mean; F_hat_bar = F_bar ⊙ A_bar. Exact arithmetic.
template <class S>
void refine(const std::vector<Tensor<S>>& f, const std::vector<Tensor<S>>& a,
            const Tensor<S>& a_bar, std::vector<Tensor<S>>& f_hat, Tensor<S>& f_bar,
            Tensor<S>& f_hat_bar) {
    check(f.size() == a.size() && !f.empty(), ErrorKind::shape, "refine: F/A block count mismatch");
    const int h = f[0].dim(1), w = f[0].dim(2);
    check(a_bar.rank() == 3 && a_bar.dim(0) == 1 && a_bar.dim(1) == h && a_bar.dim(2) == w,
          ErrorKind::shape, "refine: A_bar shape mismatch");

    f_hat.clear();
    f_hat.reserve(f.size());
    f_bar = Tensor<S>({1, h, w});
    for (size_t n = 0; n < f.size(); ++n) {
        check(f[n].same_shape(a[n]), ErrorKind::shape, "refine: F/A shape mismatch in block");
        check(f[n].dim(1) == h && f[n].dim(2) == w, ErrorKind::shape,
              "refine: blocks disagree on resolution");
        Tensor<S> fh = f[n];
        for (size_t i = 0; i < fh.numel(); ++i) fh.data[i] *= a[n].data[i];
        f_hat.push_back(std::move(fh));

        const int c = f[n].dim(0);
        const S inv_c = S(1) / static_cast<S>(c);
        for (int p = 0; p < h * w; ++p) {
            S acc = S(0);
            for (int ch = 0; ch < c; ++ch)
                acc += f[n].data[static_cast<size_t>(ch) * h * w + p];
            f_bar.data[static_cast<size_t>(p)] += acc * inv_c;
        }
    }
    const S inv_n = S(1) / static_cast<S>(f.size());
    for (auto& v : f_bar.data) v *= inv_n;

    f_hat_bar = f_bar;
    for (size_t i = 0; i < f_hat_bar.numel(); ++i) f_hat_bar.data[i] *= a_bar.data[i];
}

// Full per-step refinement from raw taps. When `ones_attention` is set, A_t
// and A_bar_t are replaced by all-ones maps (the no-attention ablation).
template <class S>
RefinedFeatures<S> build_refined(const diffusion::FeatureTaps<S>& taps,
                                 const std::vector<int>& caption, int h, int w,
                                 bool ones_attention = false) {
    check(taps.f.size() == taps.a.size() && !taps.f.empty(), ErrorKind::shape,
          "taps have mismatched block counts");
    RefinedFeatures<S> r;
    r.f = upsample_features(taps.f, h, w);
    for (size_t n = 0; n < taps.f.size(); ++n) {
        const int c_n = taps.f[n].dim(0);
        if (ones_attention)
            r.a.push_back(Tensor<S>::full({c_n, h, w}, S(1)));
        else
            r.a.push_back(pool_block_attention(taps.a[n], caption, c_n, h, w));
    }
    r.a_bar = ones_attention ? Tensor<S>::full({1, h, w}, S(1))
                             : average_attention(taps.a, caption, h, w);
    refine(r.f, r.a, r.a_bar, r.f_hat, r.f_bar, r.f_hat_bar);
    return r;
}

}  // namespace lb::refinery

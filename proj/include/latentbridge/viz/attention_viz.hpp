// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iomanip>
#include <sstream>

#include "latentbridge/core/image.hpp"
#include "latentbridge/diffusion/sampler.hpp"
#include "latentbridge/refine/refinery.hpp"

namespace lb::viz {

inline std::string bounds_tag(double lo, double hi) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "min" << lo << "_max" << hi;
    return os.str();
}

// Per-step attention/feature panels: one pooled attention map per decoder
// block, the block-averaged map, and the channel-mean of each refined feature
// stack. All panels of a step share one color scale; the scale bounds land in
// the filenames.
template <class S>
std::vector<std::filesystem::path> export_attention_panels(
    const diffusion::FeatureTaps<S>& taps, const std::vector<int>& caption,
    const std::filesystem::path& step_dir, const std::map<std::string, std::string>& meta) {
    const int res = data::kImageSize;
    const auto refined = refinery::build_refined(taps, caption, res, res);

    // single-channel views: attention channel 0 (pre-broadcast), feature means
    std::vector<Tensor<S>> attn_panels;
    for (const auto& a : refined.a) {
        Tensor<S> plane({1, res, res});
        std::copy(a.data.begin(), a.data.begin() + static_cast<size_t>(res) * res,
                  plane.data.begin());
        attn_panels.push_back(std::move(plane));
    }
    attn_panels.push_back(refined.a_bar);

    std::vector<Tensor<S>> fhat_panels;
    for (const auto& f : refined.f_hat) {
        Tensor<S> plane({1, res, res});
        const int c = f.dim(0);
        for (int p = 0; p < res * res; ++p) {
            double acc = 0;
            for (int ch = 0; ch < c; ++ch) acc += f.data[static_cast<size_t>(ch) * res * res + p];
            plane.data[static_cast<size_t>(p)] = static_cast<S>(acc / c);
        }
        fhat_panels.push_back(std::move(plane));
    }

    double a_lo = 1e300, a_hi = -1e300, f_lo = 1e300, f_hi = -1e300;
    for (const auto& p : attn_panels) {
        a_lo = std::min(a_lo, static_cast<double>(p.min()));
        a_hi = std::max(a_hi, static_cast<double>(p.max()));
    }
    for (const auto& p : fhat_panels) {
        f_lo = std::min(f_lo, static_cast<double>(p.min()));
        f_hi = std::max(f_hi, static_cast<double>(p.max()));
    }

    std::vector<std::filesystem::path> written;
    for (size_t n = 0; n < attn_panels.size(); ++n) {
        const std::string name = n + 1 < attn_panels.size()
                                     ? "attn_block" + std::to_string(n + 1)
                                     : std::string("attn_avg");
        const auto path = step_dir / (name + "_" + bounds_tag(a_lo, a_hi) + ".png");
        img::write_png(path, img::raster_from_map(attn_panels[n], a_lo, a_hi), meta);
        written.push_back(path);
    }
    for (size_t n = 0; n < fhat_panels.size(); ++n) {
        const auto path = step_dir /
                          ("fhat_block" + std::to_string(n + 1) + "_" + bounds_tag(f_lo, f_hi) + ".png");
        img::write_png(path, img::raster_from_map(fhat_panels[n], f_lo, f_hi), meta);
        written.push_back(path);
    }
    return written;
}

// Runs one reverse pass recording every requested step and writes the panel
// set per step. Returns all written paths.
template <class S>
std::vector<std::filesystem::path> visualize_attention(
    diffusion::UNet<S>& net, const MaskImage& mask, const std::vector<int>& caption,
    uint64_t seed, const std::vector<int>& steps, const diffusion::SamplerConfig& sampler,
    const std::filesystem::path& out_dir, const std::map<std::string, std::string>& meta) {
    std::set<int> record(steps.begin(), steps.end());
    auto [i_d0, traj] = diffusion::run_reverse(net, mask, caption, seed, record, sampler);
    std::vector<std::filesystem::path> written;
    for (const auto& [t, taps] : traj) {
        auto paths = export_attention_panels(taps, caption,
                                             out_dir / ("step_" + std::to_string(t)), meta);
        written.insert(written.end(), paths.begin(), paths.end());
    }
    img::write_png(out_dir / "denoised.png",
                   img::raster_from_image(i_d0.template cast<float>()), meta);
    written.push_back(out_dir / "denoised.png");
    return written;
}

}  // namespace lb::viz

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>

#include "latentbridge/core/serialize.hpp"
#include "latentbridge/data/dataset.hpp"
#include "latentbridge/diffusion/sampler.hpp"
#include "latentbridge/train/schedule.hpp"

namespace lb::train {

inline constexpr const char* kDenoisedCacheMagic = "LBDC0001";

// Content of one precomputed reverse pass: the denoiser's final image and the
// trajectory states z_t at the schedule steps. Taps are one deterministic
// U-Net call away, so caching z_t instead of full taps keeps the cache small.
template <class S>
struct DenoisedEntry {
    uint64_t scene_seed = 0;
    uint64_t sampler_seed = 0;
    uint64_t ckpt_hash = 0;
    Tensor<S> i_d0;
    std::map<int, Tensor<S>> z_at;  // step -> z_t
};

inline std::filesystem::path denoised_path(const std::filesystem::path& dir, uint64_t scene_seed,
                                           uint64_t sampler_seed, uint64_t ckpt_hash) {
    return dir / ("scene" + std::to_string(scene_seed) + "_s" + std::to_string(sampler_seed) +
                  "_" + hash_hex(ckpt_hash) + ".bin");
}

template <class S>
void save_denoised(const DenoisedEntry<S>& e, const std::filesystem::path& dir) {
    const auto path = denoised_path(dir, e.scene_seed, e.sampler_seed, e.ckpt_hash);
    std::filesystem::create_directories(dir);
    std::ofstream os(path, std::ios::binary);
    check(os.good(), ErrorKind::io, "cannot write denoised cache: " + path.string());
    bio::write_bytes(os, kDenoisedCacheMagic, 8);
    bio::write_pod<uint64_t>(os, e.scene_seed);
    bio::write_pod<uint64_t>(os, e.sampler_seed);
    bio::write_pod<uint64_t>(os, e.ckpt_hash);
    bio::write_tensor(os, e.i_d0);
    bio::write_pod<uint32_t>(os, static_cast<uint32_t>(e.z_at.size()));
    for (const auto& [t, z] : e.z_at) {
        bio::write_pod<int32_t>(os, t);
        bio::write_tensor(os, z);
    }
}

// Stale caches (written against a different backbone checkpoint) and misses
// are distinct, loud failures.
template <class S>
DenoisedEntry<S> load_denoised(const std::filesystem::path& dir, uint64_t scene_seed,
                               uint64_t sampler_seed, uint64_t expected_ckpt_hash) {
    const auto path = denoised_path(dir, scene_seed, sampler_seed, expected_ckpt_hash);
    if (!std::filesystem::exists(path)) {
        // distinguish "never precomputed" from "precomputed against another backbone"
        for (const auto& entry : std::filesystem::directory_iterator(
                 std::filesystem::exists(dir) ? dir : std::filesystem::path("."))) {
            const auto name = entry.path().filename().string();
            if (name.rfind("scene" + std::to_string(scene_seed) + "_s" +
                               std::to_string(sampler_seed) + "_",
                           0) == 0)
                fail(ErrorKind::stale_cache,
                     "denoised cache for scene " + std::to_string(scene_seed) +
                         " was built against a different backbone checkpoint; rerun the "
                         "precompute pass");
        }
        fail(ErrorKind::missing_checkpoint,
             "no denoised cache for scene " + std::to_string(scene_seed) +
                 "; run `latentbridge train --phase invert-t` after precompute, or invoke the "
                 "precompute pass first");
    }
    std::ifstream is(path, std::ios::binary);
    check(is.good(), ErrorKind::io, "cannot open denoised cache: " + path.string());
    char magic[9] = {};
    bio::read_bytes(is, magic, 8);
    check(std::string(magic) == kDenoisedCacheMagic, ErrorKind::io, "bad denoised cache magic");
    DenoisedEntry<S> e;
    e.scene_seed = bio::read_pod<uint64_t>(is);
    e.sampler_seed = bio::read_pod<uint64_t>(is);
    e.ckpt_hash = bio::read_pod<uint64_t>(is);
    check(e.ckpt_hash == expected_ckpt_hash, ErrorKind::stale_cache,
          "denoised cache checkpoint hash mismatch");
    e.i_d0 = bio::read_tensor<S>(is);
    const uint32_t n = bio::read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        const int t = bio::read_pod<int32_t>(is);
        e.z_at[t] = bio::read_tensor<S>(is);
    }
    return e;
}

// One reverse pass per scene; the per-scene noise seed mixes the pass-level
// sampler seed with the scene seed.
template <class S>
int precompute_denoised(diffusion::UNet<S>& net, const std::vector<data::DatasetManifest::Item>& items,
                        uint64_t sampler_seed, const StepSchedule& schedule,
                        const diffusion::SamplerConfig& sampler,
                        const std::filesystem::path& dir) {
    const uint64_t ckpt_hash = param_hash(net.params);
    std::set<int> record(schedule.steps.begin(), schedule.steps.end());
    int written = 0;
    for (const auto& item : items) {
        const auto path = denoised_path(dir, item.seed, sampler_seed, ckpt_hash);
        if (std::filesystem::exists(path)) continue;
        const data::Scene scene = data::sample_scene(item.seed, item.spec);
        auto [i_d0, traj] = run_reverse(net, scene.mask, scene.caption,
                                        hash_mix(sampler_seed, item.seed), record, sampler);
        DenoisedEntry<S> e;
        e.scene_seed = item.seed;
        e.sampler_seed = sampler_seed;
        e.ckpt_hash = ckpt_hash;
        e.i_d0 = std::move(i_d0);
        for (auto& [t, taps] : traj) e.z_at[t] = std::move(taps.z);
        save_denoised(e, dir);
        ++written;
    }
    return written;
}

}  // namespace lb::train

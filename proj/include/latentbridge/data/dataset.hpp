// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "latentbridge/core/serialize.hpp"
#include "latentbridge/data/render.hpp"
#include "latentbridge/data/vocab.hpp"

namespace lb::data {

// One toy sample: image, semantic mask, caption tokens, identity, attributes.
struct Scene {
    TensorF image;             // {3,H,W} in [-1,1]
    MaskImage mask;            // {H,W} labels in [0, kNumClasses)
    std::vector<int> caption;  // length kCaptionLen, pad id 0
    int identity_id = 0;
    AttributeSpec attributes;
    uint64_t seed = 0;
};

// Deterministic scene synthesis. When spec is omitted, attributes are drawn
// uniformly from the attribute grid keyed by the seed alone.
inline Scene sample_scene(uint64_t seed, std::optional<AttributeSpec> spec = std::nullopt) {
    AttributeSpec attrs;
    if (spec.has_value()) {
        attrs = *spec;
        attrs.validate();
    } else {
        Rng rng = Rng(seed).fork(0xA77);
        attrs = AttributeSpec::sample(rng);
    }
    Scene s;
    s.seed = seed;
    s.attributes = attrs;
    s.identity_id = attrs.identity_id;
    s.caption = caption_render(attrs);
    render_scene(attrs, seed, s.image, s.mask);
    return s;
}

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

// Persisted list of (seed, spec) pairs with disjoint per-split seed ranges.
struct DatasetManifest {
    struct Item {
        uint64_t seed;
        AttributeSpec spec;
    };
    std::vector<Item> items;
    int n_train = 0, n_val = 0, n_test = 0;

    std::vector<Item> split(Split s) const {
        const int off = s == Split::train ? 0 : s == Split::val ? n_train : n_train + n_val;
        const int cnt = s == Split::train ? n_train : s == Split::val ? n_val : n_test;
        return {items.begin() + off, items.begin() + off + cnt};
    }

    void save(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream os(path);
        check(os.good(), ErrorKind::io, "cannot write manifest: " + path.string());
        for (const auto& it : items) os << it.seed << "\t" << it.spec.to_json().dump() << "\n";
        std::ofstream ss(path.string() + ".splits");
        ss << "train " << n_train << "\nval " << n_val << "\ntest " << n_test << "\n";
    }

    static DatasetManifest load(const std::filesystem::path& path) {
        std::ifstream is(path);
        check(is.good(), ErrorKind::io, "cannot open manifest: " + path.string());
        DatasetManifest m;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            check(tab != std::string::npos, ErrorKind::io, "malformed manifest line");
            Item it;
            it.seed = std::stoull(line.substr(0, tab));
            it.spec = AttributeSpec::from_json(nlohmann::json::parse(line.substr(tab + 1)));
            m.items.push_back(std::move(it));
        }
        std::ifstream ss(path.string() + ".splits");
        check(ss.good(), ErrorKind::io, "missing split sidecar: " + path.string() + ".splits");
        std::string key;
        int v = 0;
        while (ss >> key >> v) {
            if (key == "train") m.n_train = v;
            else if (key == "val") m.n_val = v;
            else if (key == "test") m.n_test = v;
        }
        check(m.n_train + m.n_val + m.n_test == static_cast<int>(m.items.size()), ErrorKind::io,
              "split sizes disagree with manifest length");
        return m;
    }
};

// Disjoint seed blocks per split: seed b encodes (base_seed, index). Attribute
// draws are keyed by the per-scene seed, so regeneration is byte-identical.
inline DatasetManifest build_splits(int n_train, int n_val, int n_test, uint64_t seed) {
    check(n_train >= 1 && n_val >= 1 && n_test >= 1, ErrorKind::validation,
          "all split counts must be >= 1");
    DatasetManifest m;
    m.n_train = n_train;
    m.n_val = n_val;
    m.n_test = n_test;
    const int total = n_train + n_val + n_test;
    m.items.reserve(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) {
        const uint64_t scene_seed = (seed << 32) + static_cast<uint64_t>(i);
        Rng rng = Rng(scene_seed).fork(0xA77);
        m.items.push_back({scene_seed, AttributeSpec::sample(rng)});
    }
    return m;
}

// ------------------------------------------------------------- binary cache

// Per-scene blob: magic, then image float32 LE, mask uint8, caption int32.
inline void save_scene_blob(const Scene& s, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path, std::ios::binary);
    check(os.good(), ErrorKind::io, "cannot write scene blob: " + path.string());
    bio::write_bytes(os, kDatasetMagic, 8);
    bio::write_pod<int32_t>(os, kImageSize);
    bio::write_pod<int32_t>(os, kNumClasses);
    bio::write_pod<uint64_t>(os, s.seed);
    bio::write_pod<int32_t>(os, s.identity_id);
    bio::write_str(os, s.attributes.to_json().dump());
    bio::write_bytes(os, s.image.data.data(), s.image.data.size() * sizeof(float));
    bio::write_bytes(os, s.mask.labels.data(), s.mask.labels.size());
    for (int t : s.caption) bio::write_pod<int32_t>(os, t);
    check(os.good(), ErrorKind::io, "scene blob write failed");
}

inline Scene load_scene_blob(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.good(), ErrorKind::io, "cannot open scene blob: " + path.string());
    char magic[9] = {};
    bio::read_bytes(is, magic, 8);
    check(std::string(magic) == kDatasetMagic, ErrorKind::io, "bad scene magic: " + path.string());
    const int size = bio::read_pod<int32_t>(is);
    const int ncls = bio::read_pod<int32_t>(is);
    check(size == kImageSize && ncls == kNumClasses, ErrorKind::io, "scene blob geometry mismatch");
    Scene s;
    s.seed = bio::read_pod<uint64_t>(is);
    s.identity_id = bio::read_pod<int32_t>(is);
    s.attributes = AttributeSpec::from_json(nlohmann::json::parse(bio::read_str(is)));
    s.image = TensorF({3, size, size});
    bio::read_bytes(is, s.image.data.data(), s.image.data.size() * sizeof(float));
    s.mask = MaskImage(size, size);
    bio::read_bytes(is, s.mask.labels.data(), s.mask.labels.size());
    s.caption.resize(kCaptionLen);
    for (auto& t : s.caption) t = bio::read_pod<int32_t>(is);
    return s;
}

inline void write_dataset_cache(const DatasetManifest& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& it : m.items) {
        const Scene s = sample_scene(it.seed, it.spec);
        save_scene_blob(s, dir / ("scene_" + std::to_string(it.seed) + ".bin"));
    }
}

}  // namespace lb::data

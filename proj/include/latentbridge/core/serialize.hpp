// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "latentbridge/core/graph.hpp"
#include "latentbridge/core/hash.hpp"
#include "latentbridge/version.hpp"

namespace lb {

namespace bio {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    check(static_cast<size_t>(is.gcount()) == n, ErrorKind::io, "truncated stream");
}

template <class T>
void write_pod(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    read_bytes(is, &v, sizeof(T));
    return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline std::string read_str(std::istream& is) {
    const uint32_t n = read_pod<uint32_t>(is);
    check(n < (1u << 28), ErrorKind::io, "string length corrupt");
    std::string s(n, '\0');
    if (n) read_bytes(is, s.data(), n);
    return s;
}

template <class S>
void write_tensor(std::ostream& os, const Tensor<S>& t) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<int32_t>(os, d);
    write_pod<uint8_t>(os, static_cast<uint8_t>(sizeof(S)));
    write_bytes(os, t.data.data(), t.data.size() * sizeof(S));
}

template <class S>
Tensor<S> read_tensor(std::istream& is) {
    const uint32_t rank = read_pod<uint32_t>(is);
    check(rank <= 8, ErrorKind::io, "tensor rank corrupt");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = read_pod<int32_t>(is);
    const uint8_t width = read_pod<uint8_t>(is);
    check(width == sizeof(S), ErrorKind::io, "tensor scalar width mismatch");
    Tensor<S> t(shape);
    read_bytes(is, t.data.data(), t.data.size() * sizeof(S));
    return t;
}

}  // namespace bio

// Serialized network bundle: parameters, named extra tensors (schedules, mean
// latent), optional optimizer state for resume, and the resolved run config.
template <class S>
struct CheckpointBundle {
    std::string component;          // "diffusion", "gen", "idnet", "percnet", "maskpred", "invert"
    std::string config_echo;        // resolved config text
    uint64_t config_hash = 0;
    std::vector<std::pair<std::string, Tensor<S>>> extras;
    ParamStore<S> params;
    std::vector<Tensor<S>> opt_m, opt_v;  // empty when not resumable
    int64_t opt_steps = 0;

    const Tensor<S>* find_extra(const std::string& name) const {
        for (const auto& [n, t] : extras)
            if (n == name) return &t;
        return nullptr;
    }

    uint64_t params_hash() const { return param_hash(params); }

    void save(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream os(path, std::ios::binary);
        check(os.good(), ErrorKind::io, "cannot open for write: " + path.string());
        bio::write_bytes(os, kCheckpointMagic, 8);
        bio::write_pod<uint32_t>(os, 1);
        bio::write_str(os, component);
        bio::write_str(os, config_echo);
        bio::write_pod<uint64_t>(os, config_hash);
        bio::write_pod<uint32_t>(os, static_cast<uint32_t>(extras.size()));
        for (const auto& [n, t] : extras) {
            bio::write_str(os, n);
            bio::write_tensor(os, t);
        }
        bio::write_pod<uint32_t>(os, static_cast<uint32_t>(params.size()));
        for (const auto& e : params.entries) {
            bio::write_str(os, e.name);
            bio::write_tensor(os, e.value);
        }
        bio::write_pod<uint32_t>(os, static_cast<uint32_t>(opt_m.size()));
        for (size_t i = 0; i < opt_m.size(); ++i) {
            bio::write_tensor(os, opt_m[i]);
            bio::write_tensor(os, opt_v[i]);
        }
        bio::write_pod<int64_t>(os, opt_steps);
        check(os.good(), ErrorKind::io, "write failed: " + path.string());
    }

    static CheckpointBundle load(const std::filesystem::path& path) {
        check(std::filesystem::exists(path), ErrorKind::missing_checkpoint,
              "missing checkpoint: " + path.string());
        std::ifstream is(path, std::ios::binary);
        check(is.good(), ErrorKind::io, "cannot open: " + path.string());
        char magic[9] = {};
        bio::read_bytes(is, magic, 8);
        check(std::string(magic) == kCheckpointMagic, ErrorKind::io,
              "bad checkpoint magic in " + path.string());
        const uint32_t ver = bio::read_pod<uint32_t>(is);
        check(ver == 1, ErrorKind::io, "unsupported checkpoint version");
        CheckpointBundle b;
        b.component = bio::read_str(is);
        b.config_echo = bio::read_str(is);
        b.config_hash = bio::read_pod<uint64_t>(is);
        const uint32_t ne = bio::read_pod<uint32_t>(is);
        for (uint32_t i = 0; i < ne; ++i) {
            std::string n = bio::read_str(is);
            b.extras.emplace_back(std::move(n), bio::read_tensor<S>(is));
        }
        const uint32_t np = bio::read_pod<uint32_t>(is);
        for (uint32_t i = 0; i < np; ++i) {
            std::string n = bio::read_str(is);
            b.params.add(n, bio::read_tensor<S>(is));
        }
        const uint32_t no = bio::read_pod<uint32_t>(is);
        for (uint32_t i = 0; i < no; ++i) {
            b.opt_m.push_back(bio::read_tensor<S>(is));
            b.opt_v.push_back(bio::read_tensor<S>(is));
        }
        b.opt_steps = bio::read_pod<int64_t>(is);
        return b;
    }
};

// Copy loaded parameter values into a live (already initialized) store.
// Shapes and names must match exactly.
template <class S>
void restore_params(ParamStore<S>& dst, const ParamStore<S>& src) {
    check(dst.size() == src.size(), ErrorKind::validation,
          "parameter count mismatch on restore");
    for (size_t i = 0; i < dst.size(); ++i) {
        const auto& s = src.entries[i];
        auto& d = dst.entries[i];
        check(d.name == s.name, ErrorKind::validation, "parameter name mismatch: " + d.name);
        check(d.value.shape == s.value.shape, ErrorKind::validation,
              "parameter shape mismatch: " + d.name);
        d.value.data = s.value.data;
    }
}

}  // namespace lb

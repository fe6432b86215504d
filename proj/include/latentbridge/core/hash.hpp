// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "latentbridge/core/graph.hpp"

namespace lb {

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Bit-exact digest of all parameters in registration order: names, shapes and
// raw value bytes. Used for the freeze contract and cache keys.
template <class S>
uint64_t param_hash(const ParamStore<S>& ps) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& e : ps.entries) {
        h = fnv1a64(e.name, h);
        for (int d : e.value.shape) h = fnv1a64(&d, sizeof(d), h);
        h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(S), h);
    }
    return h;
}

}  // namespace lb

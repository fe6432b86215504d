// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "latentbridge/core/tensor.hpp"

// Minimal PNG writer: 8-bit RGB, stored (uncompressed) deflate blocks, tEXt
// metadata chunks. No external dependencies.

namespace lb::img {

struct Rgb8 {
    uint8_t r = 0, g = 0, b = 0;
};

// Row-major 8-bit RGB raster.
struct Raster {
    int w = 0, h = 0;
    std::vector<Rgb8> px;

    Raster() = default;
    Raster(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_) {}
    Rgb8& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    const Rgb8& at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
};

namespace detail {

inline uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc;
}

inline uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

inline void write_chunk(std::ofstream& os, const char type[4], const std::vector<uint8_t>& body) {
    std::vector<uint8_t> head;
    put_u32(head, static_cast<uint32_t>(body.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    std::vector<uint8_t> tc(type, type + 4);
    tc.insert(tc.end(), body.begin(), body.end());
    os.write(reinterpret_cast<const char*>(tc.data()), static_cast<std::streamsize>(tc.size()));
    std::vector<uint8_t> crc;
    put_u32(crc, crc32(tc.data(), tc.size()) ^ 0xFFFFFFFFu);
    os.write(reinterpret_cast<const char*>(crc.data()), 4);
}

// zlib stream of stored deflate blocks
inline std::vector<uint8_t> zlib_stored(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> z{0x78, 0x01};
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xFF));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xFF));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xFF));
        z.insert(z.end(), raw.begin() + static_cast<long>(off), raw.begin() + static_cast<long>(off + n));
        off += n;
    }
    put_u32(z, adler32(raw.data(), raw.size()));
    return z;
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Raster& img,
                      const std::map<std::string, std::string>& text_meta = {}) {
    check(img.w > 0 && img.h > 0, ErrorKind::validation, "write_png: empty image");
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path, std::ios::binary);
    check(os.good(), ErrorKind::io, "cannot write png: " + path.string());

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    detail::put_u32(ihdr, static_cast<uint32_t>(img.w));
    detail::put_u32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::write_chunk(os, "IHDR", ihdr);

    for (const auto& [key, value] : text_meta) {
        std::vector<uint8_t> t(key.begin(), key.end());
        t.push_back(0);
        t.insert(t.end(), value.begin(), value.end());
        detail::write_chunk(os, "tEXt", t);
    }

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.h) * (1 + 3 * static_cast<size_t>(img.w)));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.w; ++x) {
            const Rgb8& p = img.at(y, x);
            raw.push_back(p.r);
            raw.push_back(p.g);
            raw.push_back(p.b);
        }
    }
    detail::write_chunk(os, "IDAT", detail::zlib_stored(raw));
    detail::write_chunk(os, "IEND", {});
    check(os.good(), ErrorKind::io, "png write failed: " + path.string());
}

// {3,H,W} in [-1,1] -> raster
inline Raster raster_from_image(const TensorF& t) {
    check(t.rank() == 3 && t.dim(0) == 3, ErrorKind::shape, "raster_from_image: need {3,H,W}");
    Raster r(t.dim(2), t.dim(1));
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) {
            auto q = [&](int c) {
                const double v = (static_cast<double>(t.at(c, y, x)) + 1.0) / 2.0;
                return static_cast<uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
            };
            r.at(y, x) = {q(0), q(1), q(2)};
        }
    return r;
}

// Heat ramp (dark violet -> red -> yellow) for attention/feature panels.
inline Rgb8 heat_color(double v) {
    static const std::array<std::array<double, 3>, 5> anchors{{{0.0, 0.0, 0.02},
                                                               {0.35, 0.06, 0.43},
                                                               {0.74, 0.21, 0.33},
                                                               {0.98, 0.56, 0.04},
                                                               {0.99, 1.0, 0.64}}};
    v = std::clamp(v, 0.0, 1.0) * (anchors.size() - 1);
    const int i = std::min<int>(static_cast<int>(v), anchors.size() - 2);
    const double f = v - i;
    auto lerp = [&](int c) {
        return anchors[static_cast<size_t>(i)][static_cast<size_t>(c)] +
               f * (anchors[static_cast<size_t>(i) + 1][static_cast<size_t>(c)] -
                    anchors[static_cast<size_t>(i)][static_cast<size_t>(c)]);
    };
    return {static_cast<uint8_t>(lerp(0) * 255 + 0.5), static_cast<uint8_t>(lerp(1) * 255 + 0.5),
            static_cast<uint8_t>(lerp(2) * 255 + 0.5)};
}

// Single-channel map to a heat raster under a fixed scale [lo, hi].
template <class S>
Raster raster_from_map(const Tensor<S>& m, double lo, double hi) {
    check(m.rank() == 3 && m.dim(0) >= 1, ErrorKind::shape, "raster_from_map: need {C,H,W}");
    Raster r(m.dim(2), m.dim(1));
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            r.at(y, x) = heat_color((static_cast<double>(m.at(0, y, x)) - lo) / span);
    return r;
}

// Horizontal strip of equally sized panels with a 2px separator.
inline Raster hstack(const std::vector<Raster>& panels) {
    check(!panels.empty(), ErrorKind::validation, "hstack: empty");
    const int h = panels[0].h;
    int w_total = -2;
    for (const auto& p : panels) {
        check(p.h == h, ErrorKind::shape, "hstack: height mismatch");
        w_total += p.w + 2;
    }
    Raster out(w_total, h);
    int x0 = 0;
    for (const auto& p : panels) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < p.w; ++x) out.at(y, x0 + x) = p.at(y, x);
        x0 += p.w + 2;
    }
    return out;
}

}  // namespace lb::img

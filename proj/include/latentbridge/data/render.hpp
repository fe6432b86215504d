// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "latentbridge/core/tensor.hpp"
#include "latentbridge/data/attributes.hpp"

namespace lb::data {

inline constexpr int kImageSize = 64;  // H = W
inline constexpr int kNumClasses = 8;  // C_sem

enum MaskClass : uint8_t {
    cls_background = 0,
    cls_skin = 1,
    cls_hair = 2,
    cls_eyes = 3,
    cls_mouth = 4,
    cls_nose = 5,
    cls_glasses = 6,
    cls_ears = 7,
};

// Face geometry derived deterministically from identity_id alone.
struct FaceGeometry {
    double ax, ay;        // face ellipse semi-axes
    double eye_dx;        // half eye spacing
    double eye_frac;      // eye height above center, fraction of ay
    double mouth_w;       // mouth half-width
    double hairline_frac; // hairline height above center, fraction of ay
    double nose_len;
};

inline FaceGeometry identity_geometry(int identity_id) {
    auto u = [&](uint64_t k) { return hash_unit(0x1D5Aull + static_cast<uint64_t>(identity_id), k); };
    FaceGeometry g;
    g.ax = 13.0 + 4.0 * u(1);
    g.ay = 17.0 + 4.0 * u(2);
    g.eye_dx = 5.0 + 3.0 * u(3);
    g.eye_frac = 0.18 + 0.10 * u(4);
    g.mouth_w = 4.0 + 3.0 * u(5);
    g.hairline_frac = 0.38 + 0.15 * u(6);
    g.nose_len = 3.0 + 2.0 * u(7);
    return g;
}

struct Rgb {
    double r, g, b;
};

inline Rgb skin_rgb(SkinTone t) {
    switch (t) {
        case SkinTone::light: return {0.75, 0.55, 0.40};
        case SkinTone::medium: return {0.45, 0.25, 0.10};
        case SkinTone::dark: return {0.05, -0.15, -0.30};
    }
    return {0, 0, 0};
}

inline Rgb hair_rgb(HairColor c) {
    switch (c) {
        case HairColor::black: return {-0.80, -0.80, -0.80};
        case HairColor::blond: return {0.80, 0.60, 0.10};
        case HairColor::brown: return {0.25, 0.00, -0.20};
        case HairColor::gray: return {0.35, 0.35, 0.35};
    }
    return {0, 0, 0};
}

inline constexpr Rgb kBackgroundRgb{-0.65, -0.60, -0.55};
inline constexpr Rgb kEyeRgb{-0.90, -0.90, -0.85};
inline constexpr Rgb kMouthRgb{0.60, -0.40, -0.35};
inline constexpr Rgb kGlassesRgb{-0.95, -0.95, -0.90};

// Renders image and mask with hard class boundaries (no anti-aliasing), so
// the two agree exactly. Pure function of (identity, attributes, seed); the
// seed only drives low-amplitude pixel noise in the image.
inline void render_scene(const AttributeSpec& spec, uint64_t seed, TensorF& image,
                         MaskImage& mask) {
    spec.validate();
    const int n = kImageSize;
    const FaceGeometry g = identity_geometry(spec.identity_id);
    const double cx = n / 2.0 + spec.pose_offset * n;
    const double cy = 34.0;
    const double eye_y = cy - g.eye_frac * g.ay;
    const double hairline_y = cy - g.hairline_frac * g.ay;
    const double mouth_y = cy + 0.55 * g.ay;
    const bool long_hair = spec.hair_length == HairLength::long_hair;

    const Rgb skin = skin_rgb(spec.skin_tone);
    const Rgb hair = hair_rgb(spec.hair_color);
    const Rgb nose{skin.r - 0.15, skin.g - 0.15, skin.b - 0.15};
    const Rgb ears{skin.r - 0.05, skin.g - 0.05, skin.b - 0.05};

    image = TensorF({3, n, n});
    mask = MaskImage(n, n);

    auto in_ellipse = [](double x, double y, double ex, double ey, double rx, double ry) {
        const double dx = (x - ex) / rx, dy = (y - ey) / ry;
        return dx * dx + dy * dy <= 1.0;
    };

    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            uint8_t cls = cls_background;
            Rgb col = kBackgroundRgb;

            // back hair halo
            if (in_ellipse(px, py, cx, cy, g.ax + 2.5, g.ay + 2.5) && py < hairline_y + 4.0) {
                cls = cls_hair;
                col = hair;
            }
            // ears (side ellipses, partly behind the face)
            const bool in_ear = in_ellipse(px, py, cx - g.ax - 0.5, eye_y + 2.0, 2.5, 3.5) ||
                                in_ellipse(px, py, cx + g.ax + 0.5, eye_y + 2.0, 2.5, 3.5);
            if (in_ear) {
                cls = cls_ears;
                col = ears;
            }
            // face
            const bool in_face = in_ellipse(px, py, cx, cy, g.ax, g.ay);
            if (in_face) {
                cls = cls_skin;
                col = skin;
            }
            // hair cap on top of the head
            if (in_face && py < hairline_y) {
                cls = cls_hair;
                col = hair;
            }
            // long hair curtains fall over the ears
            if (long_hair && std::abs(px - cx) >= g.ax - 3.0 && std::abs(px - cx) <= g.ax + 4.0 &&
                py >= hairline_y && py <= cy + 0.7 * g.ay &&
                in_ellipse(px, py, cx, cy, g.ax + 4.0, g.ay + 4.0)) {
                cls = cls_hair;
                col = hair;
            }
            // eyes
            if (in_ellipse(px, py, cx - g.eye_dx, eye_y, 2.2, 1.6) ||
                in_ellipse(px, py, cx + g.eye_dx, eye_y, 2.2, 1.6)) {
                cls = cls_eyes;
                col = kEyeRgb;
            }
            // nose wedge
            if (py >= cy - 1.0 && py <= cy - 1.0 + g.nose_len &&
                std::abs(px - cx) <= 0.8 + 0.3 * (py - (cy - 1.0))) {
                cls = cls_nose;
                col = nose;
            }
            // mouth: closed is a thin 2-row band, open an ellipse with interior
            if (spec.mouth_open) {
                if (in_ellipse(px, py, cx, mouth_y, g.mouth_w, 3.2)) {
                    cls = cls_mouth;
                    col = kMouthRgb;
                }
            } else {
                if (std::abs(py - mouth_y) < 1.0 && std::abs(px - cx) <= g.mouth_w) {
                    cls = cls_mouth;
                    col = kMouthRgb;
                }
            }
            // glasses frames: rectangular rings around both eyes plus bridge
            if (spec.glasses) {
                bool frame = false;
                for (int side = -1; side <= 1; side += 2) {
                    const double ex = cx + side * g.eye_dx;
                    const double axd = std::abs(px - ex), ayd = std::abs(py - eye_y);
                    const bool outer = axd <= 3.6 && ayd <= 3.0;
                    const bool inner = axd <= 2.6 && ayd <= 2.0;
                    if (outer && !inner) frame = true;
                }
                if (std::abs(py - eye_y) < 0.8 && std::abs(px - cx) <= g.eye_dx - 2.6) frame = true;
                if (frame) {
                    cls = cls_glasses;
                    col = kGlassesRgb;
                }
            }

            mask.at(y, x) = cls;
            const double noise_amp = 0.02;
            for (int c = 0; c < 3; ++c) {
                const double noise =
                    (hash_unit(seed, (static_cast<uint64_t>(c) * n + y) * n + x) - 0.5) * 2.0 *
                    noise_amp;
                const double v = (c == 0 ? col.r : c == 1 ? col.g : col.b) + noise;
                image.at(c, y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
        }
    }
}

}  // namespace lb::data

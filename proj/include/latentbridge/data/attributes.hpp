// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include <json.hpp>

#include "latentbridge/core/error.hpp"
#include "latentbridge/core/rng.hpp"

namespace lb::data {

enum class HairColor { black, blond, brown, gray };
enum class SkinTone { light, medium, dark };
enum class HairLength { short_hair, long_hair };

inline constexpr int kNumIdentities = 64;
inline constexpr std::array<double, 5> kPoseGrid{-0.2, -0.1, 0.0, 0.1, 0.2};

inline const char* to_string(HairColor c) {
    switch (c) {
        case HairColor::black: return "black";
        case HairColor::blond: return "blond";
        case HairColor::brown: return "brown";
        case HairColor::gray: return "gray";
    }
    return "?";
}

inline const char* to_string(SkinTone s) {
    switch (s) {
        case SkinTone::light: return "light";
        case SkinTone::medium: return "medium";
        case SkinTone::dark: return "dark";
    }
    return "?";
}

inline const char* to_string(HairLength l) {
    return l == HairLength::short_hair ? "short" : "long";
}

inline HairColor hair_color_from(const std::string& s) {
    if (s == "black") return HairColor::black;
    if (s == "blond") return HairColor::blond;
    if (s == "brown") return HairColor::brown;
    if (s == "gray") return HairColor::gray;
    fail(ErrorKind::validation, "invalid hair_color value: '" + s + "'");
}

inline SkinTone skin_tone_from(const std::string& s) {
    if (s == "light") return SkinTone::light;
    if (s == "medium") return SkinTone::medium;
    if (s == "dark") return SkinTone::dark;
    fail(ErrorKind::validation, "invalid skin_tone value: '" + s + "'");
}

inline HairLength hair_length_from(const std::string& s) {
    if (s == "short") return HairLength::short_hair;
    if (s == "long") return HairLength::long_hair;
    fail(ErrorKind::validation, "invalid hair_length value: '" + s + "'");
}

// Ground-truth attributes of one scene. identity_id fixes face geometry;
// everything else varies freely.
struct AttributeSpec {
    int identity_id = 0;
    HairColor hair_color = HairColor::black;
    SkinTone skin_tone = SkinTone::light;
    bool mouth_open = false;
    bool glasses = false;
    HairLength hair_length = HairLength::short_hair;
    double pose_offset = 0.0;  // horizontal face-center shift, fraction of width

    void validate() const {
        check(identity_id >= 0, ErrorKind::validation, "identity_id must be >= 0");
        check(pose_offset >= -0.2 && pose_offset <= 0.2, ErrorKind::validation,
              "pose_offset out of [-0.2, 0.2]");
    }

    static AttributeSpec sample(Rng& rng) {
        AttributeSpec s;
        s.identity_id = static_cast<int>(rng.below(kNumIdentities));
        s.hair_color = static_cast<HairColor>(rng.below(4));
        s.skin_tone = static_cast<SkinTone>(rng.below(3));
        s.mouth_open = rng.below(2) == 1;
        s.glasses = rng.below(2) == 1;
        s.hair_length = static_cast<HairLength>(rng.below(2));
        s.pose_offset = kPoseGrid[rng.below(kPoseGrid.size())];
        return s;
    }

    nlohmann::json to_json() const {
        return {{"identity_id", identity_id},
                {"hair_color", to_string(hair_color)},
                {"skin_tone", to_string(skin_tone)},
                {"mouth_open", mouth_open},
                {"glasses", glasses},
                {"hair_length", to_string(hair_length)},
                {"pose_offset", pose_offset}};
    }

    static AttributeSpec from_json(const nlohmann::json& j) {
        AttributeSpec s;
        try {
            s.identity_id = j.at("identity_id").get<int>();
            s.hair_color = hair_color_from(j.at("hair_color").get<std::string>());
            s.skin_tone = skin_tone_from(j.at("skin_tone").get<std::string>());
            s.mouth_open = j.at("mouth_open").get<bool>();
            s.glasses = j.at("glasses").get<bool>();
            s.hair_length = hair_length_from(j.at("hair_length").get<std::string>());
            s.pose_offset = j.at("pose_offset").get<double>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::validation, std::string("malformed attribute spec: ") + e.what());
        }
        s.validate();
        return s;
    }

    bool operator==(const AttributeSpec& o) const {
        return identity_id == o.identity_id && hair_color == o.hair_color &&
               skin_tone == o.skin_tone && mouth_open == o.mouth_open && glasses == o.glasses &&
               hair_length == o.hair_length && pose_offset == o.pose_offset;
    }
};

}  // namespace lb::data

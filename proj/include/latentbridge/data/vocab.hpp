// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentbridge/core/error.hpp"
#include "latentbridge/data/attributes.hpp"
#include "latentbridge/version.hpp"

namespace lb::data {

inline constexpr int kCaptionLen = 16;  // S
inline constexpr int kPadToken = 0;

// Closed caption vocabulary. The table below is the source of truth; the
// versioned asset file written next to datasets mirrors it for external
// consumers.
class Vocabulary {
public:
    Vocabulary() {
        static const char* words[] = {"<pad>", "black", "blond", "brown",   "gray", "short",
                                      "long",  "hair",  ",",     "mouth",   "open", "closed",
                                      "glasses", "face"};
        for (const char* w : words) add(w);
    }

    int size() const { return static_cast<int>(id_to_word_.size()); }

    int id(const std::string& word) const {
        auto it = word_to_id_.find(word);
        return it == word_to_id_.end() ? -1 : it->second;
    }

    const std::string& word(int id) const {
        check(id >= 0 && id < size(), ErrorKind::range, "token id out of range");
        return id_to_word_[static_cast<size_t>(id)];
    }

    // Whitespace tokenization against the closed vocabulary. Unknown words are
    // an error listing every offender plus the asset path for reference.
    std::vector<int> tokenize(const std::string& text, const std::string& vocab_path_hint) const {
        std::istringstream is(text);
        std::string w;
        std::vector<int> ids;
        std::string unknown;
        while (is >> w) {
            const int i = id(w);
            if (i < 0)
                unknown += (unknown.empty() ? "" : ", ") + ("'" + w + "'");
            else
                ids.push_back(i);
        }
        check(unknown.empty(), ErrorKind::validation,
              "unknown caption words: " + unknown + " (vocabulary: " + vocab_path_hint + ")");
        check(static_cast<int>(ids.size()) <= kCaptionLen, ErrorKind::validation,
              "caption longer than " + std::to_string(kCaptionLen) + " tokens");
        ids.resize(kCaptionLen, kPadToken);
        return ids;
    }

    std::string detokenize(const std::vector<int>& ids) const {
        std::string out;
        for (int i : ids) {
            if (i == kPadToken) continue;
            out += (out.empty() ? "" : " ") + word(i);
        }
        return out;
    }

    void write_asset(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream os(path);
        check(os.good(), ErrorKind::io, "cannot write vocabulary: " + path.string());
        os << kVocabMagic << "\n";
        for (int i = 0; i < size(); ++i) os << i << "\t" << id_to_word_[static_cast<size_t>(i)] << "\n";
    }

    static Vocabulary from_asset(const std::filesystem::path& path) {
        std::ifstream is(path);
        check(is.good(), ErrorKind::io, "cannot open vocabulary: " + path.string());
        std::string line;
        check(static_cast<bool>(std::getline(is, line)) && line == kVocabMagic, ErrorKind::io,
              "bad vocabulary magic in " + path.string());
        Vocabulary v;
        v.word_to_id_.clear();
        v.id_to_word_.clear();
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            check(tab != std::string::npos, ErrorKind::io, "malformed vocabulary line");
            const int id = std::stoi(line.substr(0, tab));
            const std::string w = line.substr(tab + 1);
            check(id == static_cast<int>(v.id_to_word_.size()), ErrorKind::io,
                  "vocabulary ids must be dense");
            v.add(w);
        }
        return v;
    }

private:
    void add(const std::string& w) {
        word_to_id_[w] = static_cast<int>(id_to_word_.size());
        id_to_word_.push_back(w);
    }

    std::map<std::string, int> word_to_id_;
    std::vector<std::string> id_to_word_;
};

inline const Vocabulary& vocab() {
    static const Vocabulary v;
    return v;
}

// Deterministic caption template:
//   "<hair_color> <hair_length> hair , mouth <open|closed> [, glasses]"
inline std::vector<int> caption_render(const AttributeSpec& spec) {
    spec.validate();
    const Vocabulary& v = vocab();
    std::vector<int> ids;
    ids.push_back(v.id(to_string(spec.hair_color)));
    ids.push_back(v.id(to_string(spec.hair_length)));
    ids.push_back(v.id("hair"));
    ids.push_back(v.id(","));
    ids.push_back(v.id("mouth"));
    ids.push_back(v.id(spec.mouth_open ? "open" : "closed"));
    if (spec.glasses) {
        ids.push_back(v.id(","));
        ids.push_back(v.id("glasses"));
    }
    ids.resize(kCaptionLen, kPadToken);
    return ids;
}

// Fixed single-word caption used as the "before text edit" reference in the
// identity-similarity protocol.
inline std::vector<int> neutral_caption() {
    std::vector<int> ids{vocab().id("face")};
    ids.resize(kCaptionLen, kPadToken);
    return ids;
}

inline int count_words(const std::vector<int>& caption) {
    int n = 0;
    for (int t : caption)
        if (t != kPadToken) ++n;
    return n;
}

}  // namespace lb::data

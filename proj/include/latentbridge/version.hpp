// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace lb {

inline constexpr const char* kVersion = "0.1.0";

// On-disk magics. 8 bytes each, never reordered.
inline constexpr const char* kDatasetMagic    = "LBDS0001";
inline constexpr const char* kCheckpointMagic = "LBCK0001";
inline constexpr const char* kVocabMagic     = "LBVC0001";

}  // namespace lb

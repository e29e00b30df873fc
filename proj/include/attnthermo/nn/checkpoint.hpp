#pragma once

#include <filesystem>

#include "attnthermo/nn/transformer.hpp"

namespace thermo::nn {

// Versioned binary checkpoint: the 8-byte magic "ATCKPT01", a u64
// little-endian length, a JSON header (config, parameter names and shapes,
// dtype), then the raw little-endian f64 parameter data in declaration
// order. Any magic/version/schema mismatch on load is an explicit error.
void save_checkpoint(const std::filesystem::path& path,
                     const Transformer& model);

Transformer load_checkpoint(const std::filesystem::path& path);

}  // namespace thermo::nn

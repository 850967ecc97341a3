#pragma once

#include <string>

#include "maxim/params.hpp"

namespace maxim {

/// Binary checkpoint: magic "MXIM", format version, model-config digest,
/// named tensors as raw little-endian 32-bit floats, optional Adam state.
/// Save -> load reproduces every parameter bit-exactly for f32 stores.
void save_checkpoint(const std::string& path, const ParamStore& store, uint64_t config_digest,
                     bool include_optimizer_state = false);

/// Loads into an already-built store (names and shapes must match). Rejects
/// a mismatched config digest or malformed file.
void load_checkpoint(const std::string& path, ParamStore& store, uint64_t config_digest);

/// Reads just the stored digest (for tooling).
uint64_t checkpoint_digest(const std::string& path);

}  // namespace maxim

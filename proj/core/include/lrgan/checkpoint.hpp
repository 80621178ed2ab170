#pragma once

// Binary checkpoint container:
//   "LRGANCKP" | u32 version | u64 payload length | payload | SHA-256(payload) hex
// The payload is a u64-length-prefixed JSON header (config, counters, RNG
// state, tensor index) followed by the raw little-endian tensor bytes.

#include "lrgan/training.hpp"

#include <cstdint>
#include <string>

namespace lrgan {

inline constexpr uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const TrainState& state);
/// Rebuilds a complete state or throws CheckpointError; never returns a partial state.
TrainState deserialize_checkpoint(const std::string& bytes);

/// Writes via a temporary file and rename.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace lrgan

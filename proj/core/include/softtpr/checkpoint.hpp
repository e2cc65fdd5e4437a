// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container. Layout (all integers little-endian):
//
//   magic    8 bytes  "SOFTTPR\0"
//   version  u32
//   sections repeated { tag u32, length u64, payload[length] }
//
// Sections, in order: config (JSON text), iteration, rng, roles, parameters.
// Reals are stored as their IEEE-754 bit patterns.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "softtpr/config.hpp"
#include "softtpr/model.hpp"
#include "softtpr/rng.hpp"

namespace softtpr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::uint64_t iteration = 0;
  SeededRng rng;
  SoftTprAutoencoder model;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws IoError on a bad magic, unsupported version or truncated/corrupt payload.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// File name for the checkpoint at `iteration`, e.g. "checkpoint_000100.bin".
std::string checkpoint_file_name(std::uint64_t iteration);

}  // namespace softtpr

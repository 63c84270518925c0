// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "voxfuse/model.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

// File layout, all integers little-endian:
//   "VOXK" | version u32 | count u32 |
//   count × { name_len u16 | name utf-8 | rank u8 | dims u32×rank | values f32×N }
inline constexpr char kCheckpointMagic[4] = {'V', 'O', 'X', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
/// Tensors under this prefix belong to the frozen acoustic model.
inline constexpr std::string_view kFrozenPrefix = "acoustic.";

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

/// Which parts of a FusedModel a checkpoint carries.
struct CheckpointContents {
  bool acoustic = false;
  bool lm = false;
  bool fusion = false;
};

/// Serialises the selected parts plus `meta.*` tensors describing configs,
/// injection layer and adapters.
NamedTensors model_state(FusedModel& model, CheckpointContents parts);
void save_model(const std::filesystem::path& path, FusedModel& model, CheckpointContents parts);

/// Rebuilds the parts present in a checkpoint into `model`, recreating
/// adapters when the checkpoint has them. Tensors under `acoustic.` load
/// frozen. Returns what was found.
CheckpointContents load_model_into(const NamedTensors& tensors, FusedModel& model);

/// Builds a model sized from the meta tensors of one or more checkpoints
/// (later checkpoints override earlier ones for the parts they carry).
FusedModel load_model(const std::vector<std::filesystem::path>& paths);

}  // namespace voxfuse

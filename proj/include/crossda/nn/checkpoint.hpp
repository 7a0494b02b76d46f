#pragma once

#include <filesystem>

#include "json.hpp"

#include "crossda/nn/params.hpp"

namespace crossda::nn {

/// Parameter checkpoint file:
///
///   "CDCK" | u32 version (1) | u64 manifest byte length | manifest JSON |
///   f32 payloads, little-endian, in manifest order
///
/// The manifest is {"tensors": [{"name", "shape"}...], "meta": {...}}.
struct Checkpoint {
  ParameterSet params;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `params`; names and shapes must agree.
void assign_parameters(ParameterSet& params, const ParameterSet& from);

}  // namespace crossda::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "therblig/nn/params.hpp"

namespace tbk::nn {

inline constexpr int kCheckpointFormatVersion = 1;

/// Checkpoint = JSON header at `header_path` plus a little-endian float32
/// blob next to it (same stem, ".bin"). `metadata_json` must be a JSON
/// object; it is stored verbatim under "metadata".
void save_checkpoint(const std::filesystem::path& header_path, const ParamStore<float>& params,
                     const std::string& metadata_json = "{}");

struct LoadedCheckpoint {
  ParamStore<float> params;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& header_path);

std::filesystem::path blob_path_for(const std::filesystem::path& header_path);

}  // namespace tbk::nn

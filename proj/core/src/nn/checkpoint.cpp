// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "therblig/error.hpp"

namespace tbk::nn {

using nlohmann::json;

namespace {

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::filesystem::path blob_path_for(const std::filesystem::path& header_path) {
  auto p = header_path;
  p.replace_extension(".bin");
  if (p == header_path) p += ".bin";
  return p;
}

void save_checkpoint(const std::filesystem::path& header_path, const ParamStore<float>& params,
                     const std::string& metadata_json) {
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["dtype"] = "f32";
  const auto blob_path = blob_path_for(header_path);
  header["blob"] = blob_path.filename().string();
  try {
    header["metadata"] = json::parse(metadata_json);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }

  std::string blob;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& p : params.entries()) {
    entries.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", offset},
                       {"trainable", p.trainable}});
    for (Eigen::Index i = 0; i < p.value.size(); ++i) put_f32_le(blob, p.value.data()[i]);
    offset += static_cast<std::size_t>(p.value.size()) * 4;
  }
  header["params"] = entries;

  std::ofstream hout(header_path, std::ios::binary);
  if (!hout) throw RuntimeFault("cannot write " + header_path.string());
  hout << header.dump(2) << '\n';
  std::ofstream bout(blob_path, std::ios::binary);
  if (!bout) throw RuntimeFault("cannot write " + blob_path.string());
  bout.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!hout || !bout) throw RuntimeFault("short write for checkpoint " + header_path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& header_path) {
  LoadedCheckpoint out;
  json header;
  try {
    header = json::parse(read_file(header_path));
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint header " + header_path.string() + ": " + e.what());
  }
  try {
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ValidationError("unsupported checkpoint format_version");
    if (header.at("dtype").get<std::string>() != "f32")
      throw ValidationError("unsupported checkpoint dtype");
    const auto blob_path = header_path.parent_path() / header.at("blob").get<std::string>();
    const std::string blob = read_file(blob_path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    for (const auto& e : header.at("params")) {
      const auto rows = e.at("shape").at(0).get<Eigen::Index>();
      const auto cols = e.at("shape").at(1).get<Eigen::Index>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = static_cast<std::size_t>(rows * cols);
      if (offset + count * 4 > blob.size())
        throw ValidationError("checkpoint blob too short for '" +
                              e.at("name").get<std::string>() + "'");
      Matrix<float> m(rows, cols);
      for (std::size_t i = 0; i < count; ++i) m.data()[i] = get_f32_le(bytes + offset + 4 * i);
      out.params.add(e.at("name").get<std::string>(), std::move(m),
                     e.value("trainable", true));
    }
    out.metadata_json = header.value("metadata", json::object()).dump();
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint header " + header_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace tbk::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "therblig/config_file.hpp"
#include "therblig/datagen.hpp"

namespace tbk::datagen {

enum class Split { Train, Validation, Test };
std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct GeneratorConfig {
  int demos_per_template = 52;
  int duration = 600;
  double sample_rate_hz = 10.0;
  NoiseConfig noise;
  std::uint64_t seed = 42;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;
  int threads = 1;
  /// Template names; empty means all training templates.
  std::vector<std::string> templates;

  void validate() const;
  /// Keys: demos_per_template, duration, sample_rate_hz, state_sigma,
  /// force_sigma, force_drift_rate, label_jitter, seed, split_train,
  /// split_val, split_test, templates (comma separated).
  static GeneratorConfig from_config(const ConfigFile& cfg);
  ConfigFile to_config() const;
};

/// Per-template split sizes: train and validation are floored, test takes
/// the remainder. 52 at 0.6/0.2/0.2 gives 31/10/11.
std::array<int, 3> split_counts(int n, double train, double validation);

struct DemoRecord {
  std::string file;        // CSV, relative to the dataset root
  std::string scene_file;  // JSON, relative to the dataset root
  std::string task;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::string checksum;    // fnv1a-64 of the CSV bytes, hex
  std::vector<GroundTruthAnchor> anchors;
};

struct DatasetManifest {
  int format_version = 1;
  std::string config_canonical;
  std::vector<DemoRecord> demos;
};

struct CorpusItem {
  std::string task;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  Demonstration demo;
  LabelSequence labels;
  SceneDescriptor scene;
  std::vector<GroundTruthAnchor> anchors;
};

struct Corpus {
  std::vector<CorpusItem> items;
  std::vector<std::size_t> indices(Split s) const;
};

/// In-memory generation; identical to what generate_dataset writes.
Corpus generate_corpus(const GeneratorConfig& config);

/// Writes demos/*.csv, scenes/*.json and manifest.json (last) under `out`.
DatasetManifest generate_dataset(const GeneratorConfig& config, const std::filesystem::path& out);

/// Accepts the dataset directory or the manifest path. Verifies checksums.
Corpus load_dataset(const std::filesystem::path& path);

std::string demo_to_csv(const Demonstration& demo, const LabelSequence& labels);
void write_demo_csv(const std::filesystem::path& path, const Demonstration& demo,
                    const LabelSequence& labels);
struct CsvDemo {
  Demonstration demo;
  LabelSequence labels;
};
CsvDemo demo_from_csv(const std::string& text, const std::string& source = "<csv>");
CsvDemo read_demo_csv(const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string checksum_hex(const std::string& bytes);

}  // namespace tbk::datagen

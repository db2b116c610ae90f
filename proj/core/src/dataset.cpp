// SPDX-License-Identifier: Apache-2.0
#include "therblig/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "therblig/error.hpp"
#include "therblig/parallel.hpp"
#include "therblig/rng.hpp"

namespace tbk::datagen {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

void GeneratorConfig::validate() const {
  if (demos_per_template < 1) throw ValidationError("demos_per_template must be >= 1");
  if (duration < 2) throw ValidationError("duration must be >= 2");
  if (!(sample_rate_hz > 0)) throw ValidationError("sample_rate_hz must be > 0");
  if (noise.state_sigma < 0 || noise.force_sigma < 0 || noise.force_drift_rate < 0)
    throw ValidationError("noise levels must be >= 0");
  if (noise.label_jitter < 0) throw ValidationError("label_jitter must be >= 0");
  for (double f : {train_fraction, validation_fraction, test_fraction})
    if (f < 0 || f > 1) throw ValidationError("split fractions must lie in [0, 1]");
  if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9)
    throw ValidationError("split fractions must sum to 1");
}

GeneratorConfig GeneratorConfig::from_config(const ConfigFile& cfg) {
  GeneratorConfig g;
  g.demos_per_template = static_cast<int>(cfg.get_int("demos_per_template", g.demos_per_template));
  g.duration = static_cast<int>(cfg.get_int("duration", g.duration));
  g.sample_rate_hz = cfg.get_double("sample_rate_hz", g.sample_rate_hz);
  g.noise.state_sigma = cfg.get_double("state_sigma", g.noise.state_sigma);
  g.noise.force_sigma = cfg.get_double("force_sigma", g.noise.force_sigma);
  g.noise.force_drift_rate = cfg.get_double("force_drift_rate", g.noise.force_drift_rate);
  g.noise.label_jitter = static_cast<int>(cfg.get_int("label_jitter", g.noise.label_jitter));
  g.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(g.seed)));
  g.train_fraction = cfg.get_double("split_train", g.train_fraction);
  g.validation_fraction = cfg.get_double("split_val", g.validation_fraction);
  g.test_fraction = cfg.get_double("split_test", g.test_fraction);
  g.threads = static_cast<int>(cfg.get_int("threads", g.threads));
  if (auto t = cfg.get("templates"); t && !t->empty()) {
    std::stringstream ss(*t);
    std::string name;
    while (std::getline(ss, name, ','))
      if (!name.empty()) g.templates.push_back(name);
  }
  g.validate();
  return g;
}

ConfigFile GeneratorConfig::to_config() const {
  ConfigFile c;
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  c.set("demos_per_template", std::to_string(demos_per_template));
  c.set("duration", std::to_string(duration));
  c.set("sample_rate_hz", num(sample_rate_hz));
  c.set("state_sigma", num(noise.state_sigma));
  c.set("force_sigma", num(noise.force_sigma));
  c.set("force_drift_rate", num(noise.force_drift_rate));
  c.set("label_jitter", std::to_string(noise.label_jitter));
  c.set("seed", std::to_string(seed));
  c.set("split_train", num(train_fraction));
  c.set("split_val", num(validation_fraction));
  c.set("split_test", num(test_fraction));
  std::string names;
  for (const auto& t : templates) names += (names.empty() ? "" : ",") + t;
  c.set("templates", names);
  return c;
}

std::array<int, 3> split_counts(int n, double train, double validation) {
  const int tr = static_cast<int>(std::floor(n * train + 1e-9));
  const int va = static_cast<int>(std::floor(n * validation + 1e-9));
  return {tr, va, n - tr - va};
}

std::vector<std::size_t> Corpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == s) out.push_back(i);
  return out;
}

// ---- files -------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFault("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFault("write failed for '" + path.string() + "'");
}

std::string checksum_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

// ---- CSV -----------------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "t,q0,q1,q2,q3,q4,q5,q6,qd0,qd1,qd2,qd3,qd4,qd5,qd6,x,y,z,roll,pitch,yaw,fx,fy,fz,tx,ty,tz,"
    "gripper,label";

void append_float(std::string& out, double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  out.append(buf, r.ptr);
}

}  // namespace

std::string demo_to_csv(const Demonstration& demo, const LabelSequence& labels) {
  if (labels.size() != demo.length())
    throw ValidationError("label count " + std::to_string(labels.size()) +
                          " does not match demo length " + std::to_string(demo.length()));
  if (demo.states.cols() != kNumFeatures)
    throw ValidationError("demo has " + std::to_string(demo.states.cols()) + " features, expected 26");
  std::string out = kCsvHeader;
  out += '\n';
  out.reserve(demo.length() * 260);
  for (std::size_t t = 0; t < demo.length(); ++t) {
    out += std::to_string(t);
    for (int f = 0; f < kNumFeatures; ++f) {
      out += ',';
      append_float(out, demo.states(static_cast<Eigen::Index>(t), f));
    }
    out += ',';
    out += (t < demo.gripper.size() && demo.gripper[t]) ? '1' : '0';
    out += ',';
    out += std::to_string(code_of(labels.labels[t]));
    out += '\n';
  }
  return out;
}

void write_demo_csv(const fs::path& path, const Demonstration& demo, const LabelSequence& labels) {
  write_file(path, demo_to_csv(demo, labels));
}

CsvDemo demo_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ValidationError(source + ": unexpected header");

  std::vector<std::array<double, kNumFeatures>> rows;
  std::vector<bool> gripper;
  std::vector<int> codes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, kNumFeatures + 3> vals{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      auto r = std::from_chars(p, end, vals[k]);
      if (r.ec != std::errc()) {
        throw ValidationError(source + ":" + std::to_string(lineno) + ": bad value in column " +
                              std::to_string(k));
      }
      p = r.ptr;
      if (k + 1 < vals.size()) {
        if (p == end || *p != ',')
          throw ValidationError(source + ":" + std::to_string(lineno) + ": expected 29 columns");
        ++p;
      }
    }
    if (p != end) throw ValidationError(source + ":" + std::to_string(lineno) + ": trailing data");
    std::array<double, kNumFeatures> row{};
    std::copy(vals.begin() + 1, vals.begin() + 1 + kNumFeatures, row.begin());
    rows.push_back(row);
    gripper.push_back(vals[kNumFeatures + 1] != 0.0);
    codes.push_back(static_cast<int>(vals[kNumFeatures + 2]));
  }
  CsvDemo out;
  out.demo.states.resize(static_cast<Eigen::Index>(rows.size()), kNumFeatures);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (int f = 0; f < kNumFeatures; ++f) out.demo.states(static_cast<Eigen::Index>(t), f) = rows[t][f];
  out.demo.gripper = std::move(gripper);
  out.labels = LabelSequence::from_codes(codes);
  return out;
}

CsvDemo read_demo_csv(const fs::path& path) {
  return demo_from_csv(read_file(path), path.string());
}

// ---- manifest ------------------------------------------------------------------

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["config"] = m.config_canonical;
  j["demos"] = json::array();
  for (const auto& d : m.demos) {
    json anchors = json::array();
    for (const auto& a : d.anchors) {
      anchors.push_back({{"therblig", std::string(therblig_name(a.therblig))},
                         {"timestep", a.timestep},
                         {"xy", {a.xy.x(), a.xy.y()}},
                         {"yaw", a.yaw},
                         {"object_id", a.object_id}});
    }
    j["demos"].push_back({{"file", d.file},
                          {"scene", d.scene_file},
                          {"task", d.task},
                          {"split", std::string(split_name(d.split))},
                          {"seed", d.seed},
                          {"checksum", d.checksum},
                          {"anchors", anchors}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
      throw ValidationError("unsupported manifest version " + std::to_string(m.format_version));
    m.config_canonical = j.value("config", std::string());
    for (const auto& d : j.at("demos")) {
      DemoRecord r;
      r.file = d.at("file").get<std::string>();
      r.scene_file = d.at("scene").get<std::string>();
      r.task = d.at("task").get<std::string>();
      r.split = split_from_name(d.at("split").get<std::string>());
      r.seed = d.at("seed").get<std::uint64_t>();
      r.checksum = d.at("checksum").get<std::string>();
      for (const auto& a : d.at("anchors")) {
        GroundTruthAnchor g;
        const auto name = a.at("therblig").get<std::string>();
        const auto t = therblig_from_name(name);
        if (!t) throw ValidationError("unknown therblig '" + name + "' in manifest");
        g.therblig = *t;
        g.timestep = a.at("timestep").get<std::size_t>();
        g.xy = Vec2(a.at("xy").at(0).get<double>(), a.at("xy").at(1).get<double>());
        g.yaw = a.at("yaw").get<double>();
        g.object_id = a.at("object_id").get<std::string>();
        r.anchors.push_back(std::move(g));
      }
      m.demos.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

// ---- generation ----------------------------------------------------------------

namespace {

struct Planned {
  const TaskTemplate* tmpl;
  int index;
  Split split;
  std::uint64_t seed;
};

std::vector<Planned> plan(const GeneratorConfig& config, const std::vector<TaskTemplate>& all,
                          std::vector<TaskTemplate>& chosen) {
  config.validate();
  if (config.templates.empty()) {
    chosen = all;
  } else {
    for (const auto& n : config.templates) chosen.push_back(find_template(all, n));
  }
  if (chosen.empty()) throw ValidationError("at least one template is required");
  const auto counts =
      split_counts(config.demos_per_template, config.train_fraction, config.validation_fraction);
  std::vector<Planned> out;
  for (const auto& t : chosen) {
    std::vector<int> order(static_cast<std::size_t>(config.demos_per_template));
    for (int i = 0; i < config.demos_per_template; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(config.seed, "split/" + t.name));
    rng.shuffle(order.begin(), order.end());
    std::vector<Split> split(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto kk = static_cast<int>(k);
      split[static_cast<std::size_t>(order[k])] =
          kk < counts[0] ? Split::Train : kk < counts[0] + counts[1] ? Split::Validation : Split::Test;
    }
    const auto task_seed = derive_seed(config.seed, "task/" + t.name);
    for (int i = 0; i < config.demos_per_template; ++i) {
      out.push_back({nullptr, i, split[static_cast<std::size_t>(i)],
                     derive_seed(task_seed, static_cast<std::uint64_t>(i))});
    }
  }
  // Pointers are taken after `chosen` is final.
  std::size_t k = 0;
  for (const auto& t : chosen)
    for (int i = 0; i < config.demos_per_template; ++i) out[k++].tmpl = &t;
  return out;
}

CorpusItem make_item(const Planned& p, const GeneratorConfig& config) {
  CorpusItem item;
  item.task = p.tmpl->name;
  item.split = p.split;
  item.seed = p.seed;
  item.scene = generate_scene(static_cast<int>(p.tmpl->roles().size()), 0,
                              derive_seed(p.seed, "scene"));
  auto g = generate_demo(*p.tmpl, item.scene, p.seed, config.noise, config.duration,
                         config.sample_rate_hz);
  item.demo = std::move(g.demo);
  item.labels = std::move(g.labels);
  item.anchors = std::move(g.anchors);
  return item;
}

std::string stem_for(const Planned& p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", p.index);
  return p.tmpl->name + "_" + buf;
}

}  // namespace

Corpus generate_corpus(const GeneratorConfig& config) {
  std::vector<TaskTemplate> chosen;
  const auto planned = plan(config, training_templates(), chosen);
  Corpus corpus;
  corpus.items.resize(planned.size());
  parallel_for(planned.size(), config.threads,
               [&](std::size_t i) { corpus.items[i] = make_item(planned[i], config); });
  return corpus;
}

DatasetManifest generate_dataset(const GeneratorConfig& config, const fs::path& out) {
  std::vector<TaskTemplate> chosen;
  const auto planned = plan(config, training_templates(), chosen);
  DatasetManifest manifest;
  manifest.config_canonical = config.to_config().canonical();
  manifest.demos.resize(planned.size());
  parallel_for(planned.size(), config.threads, [&](std::size_t i) {
    const auto item = make_item(planned[i], config);
    DemoRecord r;
    const auto stem = stem_for(planned[i]);
    r.file = "demos/" + stem + ".csv";
    r.scene_file = "scenes/" + stem + ".json";
    r.task = item.task;
    r.split = item.split;
    r.seed = item.seed;
    r.anchors = item.anchors;
    auto csv = demo_to_csv(item.demo, item.labels);
    r.checksum = checksum_hex(csv);
    write_file(out / r.file, csv);
    write_file(out / r.scene_file, scene_to_json(item.scene) + "\n");
    manifest.demos[i] = std::move(r);
  });
  write_file(out / "manifest.json", manifest_to_json(manifest));
  return manifest;
}

Corpus load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path root = manifest_path.parent_path();
  const auto manifest = manifest_from_json(read_file(manifest_path));
  Corpus corpus;
  for (const auto& r : manifest.demos) {
    const auto csv = read_file(root / r.file);
    if (checksum_hex(csv) != r.checksum) {
      throw ValidationError("checksum mismatch for '" + (root / r.file).string() + "'");
    }
    auto parsed = demo_from_csv(csv, (root / r.file).string());
    CorpusItem item;
    item.task = r.task;
    item.split = r.split;
    item.seed = r.seed;
    item.demo = std::move(parsed.demo);
    item.demo.task_id = r.task;
    item.labels = std::move(parsed.labels);
    item.scene = load_scene(root / r.scene_file);
    item.anchors = r.anchors;
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

}  // namespace tbk::datagen

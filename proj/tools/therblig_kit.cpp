// SPDX-License-Identifier: Apache-2.0
//
// therblig-kit: command-line front end for dataset generation, training,
// evaluation, transfer, point correction and success simulation.
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "therblig/actionreg.hpp"
#include "therblig/config_file.hpp"
#include "therblig/dataset.hpp"
#include "therblig/error.hpp"
#include "therblig/harness.hpp"
#include "therblig/lapvc.hpp"
#include "therblig/mgsf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tbk;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool deterministic = false;

  int effective_threads() const { return deterministic ? 1 : threads; }
};

ConfigFile load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigFile cfg;
  if (!path.empty()) cfg = ConfigFile::load(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

void apply_globals(ConfigFile& cfg, const Globals& g) {
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  cfg.set("threads", std::to_string(g.effective_threads()));
}

std::uint64_t seed_of(const ConfigFile& cfg, std::uint64_t fallback) {
  return static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(fallback)));
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("bad seed '" + item + "' in seed list");
    }
  }
  if (out.empty()) throw ValidationError("seed list is empty");
  return out;
}

/// A bare count N means seeds 1..N.
std::vector<std::uint64_t> parse_seed_arg(const std::string& text) {
  if (text.find(',') != std::string::npos) return parse_seeds(text);
  const auto n = parse_seeds(text).front();
  if (n < 1 || n > 1000) throw ValidationError("seed count must be in [1, 1000]");
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
  return out;
}

fs::path artifact_path(const std::string& out, const char* name) {
  const fs::path p(out);
  if (p.extension() == ".json") return p;
  fs::create_directories(p);
  return p / name;
}

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  for (auto s : parse_seeds(text)) out.push_back(static_cast<int>(s));
  return out;
}

void write_out(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes;
    if (!bytes.empty() && bytes.back() != '\n') std::cout << '\n';
  } else {
    datagen::write_file(path, bytes);
  }
}

json segments_json(const std::vector<TherbligSegment>& segs) {
  json a = json::array();
  for (const auto& s : segs)
    a.push_back({{"therblig", std::string(therblig_name(s.therblig))}, {"start", s.start}, {"end", s.end}});
  return a;
}

std::vector<lapvc::TaggedPoint> points_from_json(const std::string& text) {
  std::vector<lapvc::TaggedPoint> out;
  try {
    auto j = json::parse(text);
    if (j.is_object()) j = j.at("points");
    for (const auto& p : j) {
      lapvc::TaggedPoint t;
      const auto& xy = p.is_array() ? p : p.at("xy");
      t.xy = Vec2(xy.at(0).get<double>(), xy.at(1).get<double>());
      if (p.is_object() && p.contains("therblig")) {
        auto th = therblig_from_name(p.at("therblig").get<std::string>());
        if (!th) throw ValidationError("unknown therblig '" + p.at("therblig").get<std::string>() + "'");
        t.therblig = *th;
      }
      out.push_back(t);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("points file: ") + e.what());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"therblig-kit: therblig segmentation and one-shot transfer toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides config files)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 1024));
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, byte-reproducible outputs");

  std::string config_path, out_path, data_path, model_path, split_name = "test", seeds_text = "5", report_format = "json";
  std::string sweep_text, heldout_path, demo_path, scene_path, new_scene_path, calib_path, policy_text;
  std::string labels_path, points_path, trace_path, log_path, mode_text = "sim", dir_path;
  std::vector<std::string> overrides;
  bool oracle = false;
  int trials = 0;

  auto add_cfg = [&](CLI::App* s) {
    s->add_option("--config", config_path, "Flat key = value config file");
    s->add_option("--set", overrides, "Config override key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled corpus");
  add_cfg(gen);
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a segmentation model");
  add_cfg(tr);
  tr->add_option("--data", data_path, "Dataset directory or manifest")->required();
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Training log JSON");

  auto* ev = app.add_subcommand("eval", "Score a model on a dataset split");
  ev->add_option("--model,--ckpt", model_path, "Checkpoint path")->required();
  ev->add_option("--data", data_path, "Dataset directory or manifest")->required();
  ev->add_option("--split", split_name, "train, val or test");
  ev->add_option("--report", report_format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  ev->add_option("--out", out_path, "Metrics file (default stdout)");

  auto* ab = app.add_subcommand("ablate", "Variant ablation or dataset-size sweep");
  add_cfg(ab);
  ab->add_option("--data", data_path, "Dataset directory or manifest")->required();
  ab->add_option("--seeds", seeds_text, "Seed count N (seeds 1..N) or a comma-separated seed list");
  ab->add_option("--sweep", sweep_text, "Comma-separated total demo counts; runs a size sweep");
  ab->add_option("--heldout", heldout_path, "Held-out dataset scored by every sweep model");
  ab->add_option("--out", out_path, "Artifact directory, or a .json file path")->required();

  auto* sg = app.add_subcommand("segment", "Label one demonstration");
  sg->add_option("--model,--ckpt", model_path, "Checkpoint path")->required();
  sg->add_option("--demo", demo_path, "Demonstration CSV")->required();
  sg->add_option("--out", out_path, "Segmentation JSON (default stdout)");

  auto* tf = app.add_subcommand("transfer", "Warp a demonstration onto a new object layout");
  tf->add_option("--demo", demo_path, "Demonstration CSV")->required();
  tf->add_option("--demo-scene", scene_path, "Scene JSON of the demonstration")->required();
  tf->add_option("--new-scene", new_scene_path, "Scene JSON of the new layout")->required();
  tf->add_option("--model,--ckpt", model_path, "Checkpoint used for segmentation");
  tf->add_option("--labels", labels_path, "Labels JSON ({\"labels\": [codes]} or a code array)");
  tf->add_option("--calib", calib_path, "Robot-to-scene homography JSON");
  tf->add_option("--policy", policy_text, "Anchor correction: passthrough, snap, external[,mock]");
  tf->add_option("--out", out_path, "Warped demonstration CSV")->required();
  tf->add_option("--trace", trace_path, "Stage trace JSON");

  auto* co = app.add_subcommand("correct", "Correct predicted anchor points");
  co->add_option("--points", points_path, "Points JSON")->required();
  co->add_option("--scene", scene_path, "Scene JSON")->required();
  co->add_option("--policy", policy_text, "passthrough, snap, external or external,mock")->required();
  co->add_option("--out", out_path, "Corrected points JSON (default stdout)");

  auto* si = app.add_subcommand("simulate", "Run a one-shot transfer success suite");
  add_cfg(si);
  si->add_option("--mode", mode_text, "sim or com");
  si->add_option("--model", model_path, "Checkpoint used for segmentation");
  si->add_flag("--oracle", oracle, "Use exact phases instead of a model");
  si->add_option("--trials", trials, "Trials per task");
  si->add_option("--policy", policy_text, "Anchor correction policy");
  si->add_option("--out", out_path, "Output directory")->required();

  auto* rp = app.add_subcommand("report", "Summarize run artifacts");
  rp->add_option("--dir", dir_path, "Artifact directory")->required();
  rp->add_option("--out", out_path, "Output directory (default: the artifact directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (gen->parsed()) {
      auto cfg = load_config(config_path, overrides);
      apply_globals(cfg, g);
      const auto gc = datagen::GeneratorConfig::from_config(cfg);
      const auto m = datagen::generate_dataset(gc, out_path);
      std::cerr << "wrote " << m.demos.size() << " demonstrations to " << out_path << "\n";
    } else if (tr->parsed()) {
      auto cfg = load_config(config_path, overrides);
      apply_globals(cfg, g);
      const auto mc = mgsf::MgsfConfig::from_config(cfg);
      const auto corpus = datagen::load_dataset(data_path);
      mgsf::TrainHooks hooks;
      hooks.on_epoch = [](const mgsf::EpochLog& e) {
        std::fprintf(stderr, "epoch %3d  loss %.5f  val recall %.2f\n", e.epoch, e.train_loss, e.val_recall);
      };
      const auto res = mgsf::train(mc, corpus, seed_of(cfg, 1), hooks);
      mgsf::save_model(res.model, out_path);
      json log;
      log["best_epoch"] = res.best_epoch;
      log["best_val_recall"] = res.best_val_recall;
      log["diverged"] = res.diverged;
      log["stop_reason"] = res.stop_reason;
      json epochs = json::array();
      for (const auto& e : res.log)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_recall", e.val_recall}});
      log["epochs"] = epochs;
      if (!log_path.empty()) datagen::write_file(log_path, log.dump(2) + "\n");
      std::fprintf(stderr, "best epoch %d, validation recall %.2f (%s)\n", res.best_epoch, res.best_val_recall,
                   res.stop_reason.c_str());
      if (res.diverged) throw RuntimeFault("training diverged: " + res.stop_reason);
    } else if (ev->parsed()) {
      const auto model = mgsf::load_model(model_path);
      const auto corpus = datagen::load_dataset(data_path);
      const auto idx = corpus.indices(datagen::split_from_name(split_name));
      if (idx.empty()) throw ValidationError("split '" + split_name + "' is empty");
      const auto m = mgsf::evaluate(model, corpus, idx, g.effective_threads());
      write_out(out_path, report_format == "csv" ? metrics_to_csv(m) : metrics_to_json(m) + "\n");
    } else if (ab->parsed()) {
      auto cfg = load_config(config_path, overrides);
      apply_globals(cfg, g);
      const auto mc = mgsf::MgsfConfig::from_config(cfg);
      const auto corpus = datagen::load_dataset(data_path);
      const auto seeds = parse_seed_arg(seeds_text);
      if (!sweep_text.empty()) {
        if (heldout_path.empty()) throw ValidationError("--sweep needs --heldout");
        const auto heldout = datagen::load_dataset(heldout_path);
        const auto sweep = mgsf::run_size_sweep(mc, corpus, heldout, parse_sizes(sweep_text), seeds,
                                                [](int n, std::uint64_t s, double r) {
                                                  std::fprintf(stderr, "size %d seed %llu recall %.2f\n", n,
                                                               static_cast<unsigned long long>(s), r);
                                                });
        datagen::write_file(artifact_path(out_path, "sweep.json"), harness::sweep_to_json(sweep, mc.to_config().canonical(), seeds) + "\n");
      } else {
        const auto res = mgsf::run_ablation(mc, corpus, seeds, [](const mgsf::AblationCell& c) {
          std::fprintf(stderr, "%-9s seed %llu  %s  test recall %.2f\n", std::string(mgsf::variant_name(c.variant)).c_str(),
                       static_cast<unsigned long long>(c.seed), c.ok ? "ok" : c.error.c_str(), c.test.recall);
        });
        datagen::write_file(artifact_path(out_path, "ablation.json"), harness::ablation_to_json(res, mc.to_config().canonical(), seeds) + "\n");
        std::cerr << mgsf::ablation_table(res);
      }
    } else if (sg->parsed()) {
      const auto model = mgsf::load_model(model_path);
      const auto csv = datagen::read_demo_csv(demo_path);
      const auto seg = mgsf::segment(model, csv.demo);
      json j;
      j["labels"] = seg.labels.codes();
      j["segments"] = segments_json(seg.segments);
      write_out(out_path, j.dump(2) + "\n");
    } else if (tf->parsed()) {
      const auto csv = datagen::read_demo_csv(demo_path);
      const auto demo_scene = load_scene(scene_path);
      const auto new_scene = load_scene(new_scene_path);
      const auto calib = calib_path.empty() ? actionreg::Calibration() : actionreg::Calibration::load(calib_path);
      std::vector<TherbligSegment> segments;
      if (!model_path.empty() && !labels_path.empty()) throw ValidationError("give --labels or --ckpt, not both");
      if (!model_path.empty()) {
        segments = mgsf::segment(mgsf::load_model(model_path), csv.demo).segments;
      } else if (!labels_path.empty()) {
        std::vector<int> codes;
        try {
          auto j = json::parse(datagen::read_file(labels_path));
          if (j.is_object()) j = j.at("labels");
          codes = j.get<std::vector<int>>();
        } catch (const json::exception& e) {
          throw ValidationError(std::string("labels file: ") + e.what());
        }
        const auto labels = LabelSequence::from_codes(codes);
        if (labels.size() != csv.demo.length())
          throw ValidationError("labels cover " + std::to_string(labels.size()) + " steps, demonstration has " +
                                std::to_string(csv.demo.length()));
        segments = segments_from_labels(labels);
      } else {
        if (csv.labels.size() != csv.demo.length()) throw ValidationError("demonstration CSV carries no labels");
        segments = segments_from_labels(csv.labels);
      }
      actionreg::TransferOptions opts;
      if (!policy_text.empty()) {
        const auto policy = lapvc::CorrectionPolicy::parse(policy_text);
        opts.corrector = [policy](const std::vector<actionreg::Anchor>& anchors, const SceneDescriptor& scene) {
          std::vector<lapvc::TaggedPoint> pts;
          for (const auto& a : anchors) pts.push_back({a.therblig, a.xy});
          return lapvc::correct_points(pts, scene, policy).points;
        };
      }
      const auto res = actionreg::transfer(csv.demo, segments, demo_scene, new_scene, calib, opts);
      if (!trace_path.empty()) datagen::write_file(trace_path, actionreg::trace_to_json(res.trace) + "\n");
      if (!res.ok())
        throw RuntimeFault("transfer failed (" + std::string(actionreg::category_name(res.failure)) +
                           "): " + res.failure_detail);
      datagen::write_demo_csv(out_path, res.demo, csv.labels);
    } else if (co->parsed()) {
      const auto points = points_from_json(datagen::read_file(points_path));
      const auto scene = load_scene(scene_path);
      const auto policy = lapvc::CorrectionPolicy::parse(policy_text);
      const auto c = lapvc::correct_points(points, scene, policy);
      json j;
      j["protocol_version"] = lapvc::kProtocolVersion;
      json pts = json::array();
      for (const auto& p : c.points) pts.push_back({p.x(), p.y()});
      j["corrected_points"] = pts;
      j["rationale"] = c.rationale;
      j["fallback"] = c.fallback;
      write_out(out_path, j.dump(2) + "\n");
    } else if (si->parsed()) {
      auto cfg = load_config(config_path, overrides);
      apply_globals(cfg, g);
      if (si->count("--mode") > 0 || !cfg.has("mode")) cfg.set("mode", mode_text);
      if (trials > 0) cfg.set("trials", std::to_string(trials));
      if (!policy_text.empty()) cfg.set("policy", policy_text);
      if (oracle) cfg.set("oracle", "true");
      const auto sc = harness::ScenarioConfig::from_config(cfg);
      harness::Segmenter seg;
      std::string seg_name;
      if (sc.oracle) {
        seg = harness::oracle_segmenter();
        seg_name = "oracle";
      } else {
        if (model_path.empty()) throw ValidationError("simulate needs --model or --oracle");
        seg = harness::model_segmenter(std::make_shared<const mgsf::MgsfModel>(mgsf::load_model(model_path)));
        seg_name = "model";
      }
      const auto rep = harness::run_success_suite(sc, seg, seg_name);
      fs::create_directories(out_path);
      const std::string base = "success_" + std::string(harness::mode_name(sc.mode));
      datagen::write_file(fs::path(out_path) / (base + ".json"), rep.to_json() + "\n");
      datagen::write_file(fs::path(out_path) / (base + ".csv"), rep.to_csv());
      std::fprintf(stderr, "%s: %d/%d trials succeeded (%.1f%%)\n", std::string(harness::mode_name(sc.mode)).c_str(),
                   rep.successes, rep.trials, rep.total_rate());
    } else if (rp->parsed()) {
      const auto rep = harness::build_report(dir_path);
      const fs::path out = out_path.empty() ? fs::path(dir_path) : fs::path(out_path);
      fs::create_directories(out);
      datagen::write_file(out / "report.md", rep.text);
      datagen::write_file(out / "report.csv", rep.csv);
      std::cout << rep.text;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
#include "therblig/harness.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "therblig/dataset.hpp"
#include "therblig/error.hpp"
#include "therblig/parallel.hpp"
#include "therblig/rng.hpp"

namespace tbk::harness {

using nlohmann::json;
using actionreg::FailureCategory;

std::string_view mode_name(Mode m) { return m == Mode::Sim ? "sim" : "com"; }

Mode mode_from_name(std::string_view name) {
  if (name == "sim") return Mode::Sim;
  if (name == "com") return Mode::Com;
  throw ValidationError("unknown scenario mode '" + std::string(name) + "' (expected sim or com)");
}

lapvc::ErrorModel ScenarioConfig::default_error() {
  lapvc::ErrorModel e;
  e.bias = Vec2(0.015, -0.01);
  e.sigma = 0.005;
  e.rotation = 0.01;
  return e;
}

void ScenarioConfig::validate() const {
  if (task_objects < 1) throw ValidationError("task_objects must be >= 1");
  if (min_distractors < 0 || max_distractors < min_distractors)
    throw ValidationError("distractor range must satisfy 0 <= min <= max");
  if (trials_per_task < 1) throw ValidationError("trials must be >= 1");
  if (!(epsilon > 0)) throw ValidationError("epsilon must be > 0");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  error.validate();
}

ScenarioConfig ScenarioConfig::from_config(const ConfigFile& cfg) {
  ScenarioConfig s;
  s.mode = mode_from_name(cfg.get_string("mode", "sim"));
  s.task_objects = static_cast<int>(cfg.get_int("task_objects", s.task_objects));
  s.min_distractors = static_cast<int>(cfg.get_int("min_distractors", s.min_distractors));
  s.max_distractors = static_cast<int>(cfg.get_int("max_distractors", s.max_distractors));
  s.trials_per_task = static_cast<int>(cfg.get_int("trials", s.trials_per_task));
  s.error.bias.x() = cfg.get_double("error_bias_x", s.error.bias.x());
  s.error.bias.y() = cfg.get_double("error_bias_y", s.error.bias.y());
  s.error.sigma = cfg.get_double("error_sigma", s.error.sigma);
  s.error.rotation = cfg.get_double("error_rotation", s.error.rotation);
  s.policy = lapvc::CorrectionPolicy::parse(cfg.get_string("policy", "snap"));
  s.policy.snap_radius = cfg.get_double("snap_radius", s.policy.snap_radius);
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));
  s.oracle = cfg.get_bool("oracle", s.oracle);
  s.relayout = cfg.get_bool("relayout", s.relayout);
  s.epsilon = cfg.get_double("epsilon", s.epsilon);
  s.threads = static_cast<int>(cfg.get_int("threads", s.threads));
  const auto t = cfg.get_string("templates", "");
  std::stringstream ss(t);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) s.templates.push_back(item);
  s.validate();
  return s;
}

ConfigFile ScenarioConfig::to_config() const {
  ConfigFile c;
  auto num = [](double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", v);
    return std::string(b);
  };
  c.set("mode", std::string(mode_name(mode)));
  c.set("task_objects", std::to_string(task_objects));
  c.set("min_distractors", std::to_string(min_distractors));
  c.set("max_distractors", std::to_string(max_distractors));
  c.set("trials", std::to_string(trials_per_task));
  c.set("error_bias_x", num(error.bias.x()));
  c.set("error_bias_y", num(error.bias.y()));
  c.set("error_sigma", num(error.sigma));
  c.set("error_rotation", num(error.rotation));
  c.set("policy", policy.name());
  c.set("snap_radius", num(policy.snap_radius));
  c.set("seed", std::to_string(seed));
  c.set("oracle", oracle ? "true" : "false");
  c.set("relayout", relayout ? "true" : "false");
  c.set("epsilon", num(epsilon));
  std::string t;
  for (const auto& name : templates) t += (t.empty() ? "" : ",") + name;
  c.set("templates", t);
  return c;
}

Segmenter oracle_segmenter() {
  return [](const datagen::GeneratedDemo& g) { return g.phases; };
}

Segmenter model_segmenter(std::shared_ptr<const mgsf::MgsfModel> model) {
  if (!model) throw ValidationError("model segmenter needs a model");
  return [model](const datagen::GeneratedDemo& g) { return mgsf::segment(*model, g.demo).segments; };
}

namespace {

std::string order_string(const std::vector<Therblig>& order) {
  std::string out;
  for (auto t : order) out += (out.empty() ? "" : " ") + std::to_string(code_of(t));
  return out;
}

}  // namespace

TrialResult run_trial(const datagen::TaskTemplate& tmpl, const ScenarioConfig& scenario,
                      const Segmenter& segmenter, int trial, std::shared_ptr<lapvc::Transport> transport) {
  TrialResult r;
  r.task = tmpl.name;
  r.trial = trial;
  r.seed = derive_seed(derive_seed(scenario.seed, "trial/" + tmpl.name), static_cast<std::uint64_t>(trial));
  auto fail = [&](FailureCategory c, std::string detail) {
    r.success = false;
    r.category = c;
    r.detail = std::move(detail);
    return r;
  };
  try {
    const int n_task = std::max(scenario.task_objects, static_cast<int>(tmpl.roles().size()));
    const auto identity = derive_seed(r.seed, "identity");
    const auto demo_scene = datagen::generate_scene(n_task, 0, identity);
    const auto g = datagen::generate_demo(tmpl, demo_scene, derive_seed(r.seed, "demo"));

    int n_distractors = 0;
    if (scenario.mode == Mode::Com) {
      Rng rng(derive_seed(r.seed, "distractor-count"));
      n_distractors = static_cast<int>(rng.uniform_int(scenario.min_distractors, scenario.max_distractors));
    }
    const auto new_scene = scenario.relayout
                               ? datagen::generate_layout(n_task, n_distractors, identity,
                                                          derive_seed(r.seed, "layout"))
                               : demo_scene;

    const auto segments = segmenter(g);
    const auto predicted_order = segment_order(segments);
    const auto true_order = segment_order(g.phases);

    lapvc::ErrorModel em = scenario.error;
    em.seed = derive_seed(r.seed, scenario.error.seed);
    actionreg::TransferOptions opts;
    opts.corrector = [&](const std::vector<actionreg::Anchor>& anchors, const SceneDescriptor& scene) {
      std::vector<Vec2> xy;
      for (const auto& a : anchors) xy.push_back(a.xy);
      const auto noisy = lapvc::inject_error(xy, em);
      std::vector<lapvc::TaggedPoint> tagged;
      for (std::size_t k = 0; k < anchors.size(); ++k) tagged.push_back({anchors[k].therblig, noisy[k]});
      auto c = lapvc::correct_points(tagged, scene, scenario.policy, transport);
      r.correction_fallback = c.fallback;
      return c.points;
    };
    const actionreg::Calibration calib;
    auto res = actionreg::transfer(g.demo, segments, demo_scene, new_scene, calib, opts);
    r.trace = res.trace;

    if (predicted_order != true_order)
      return fail(FailureCategory::TherbligSegmentation,
                  "segment order " + order_string(predicted_order) + " differs from " + order_string(true_order));
    if (!res.ok()) return fail(res.failure, res.failure_detail);
    if (res.anchors.size() != g.anchors.size())
      return fail(FailureCategory::ActionRegistration, "anchor count differs from ground truth");

    std::vector<Vec2> warped;
    for (const auto& a : res.anchors) {
      const auto s = res.demo.state(a.timestep);
      warped.push_back(calib.to_scene(Vec2(s.ee_position[0], s.ee_position[1])));
    }
    for (std::size_t o = static_cast<std::size_t>(n_task); o < new_scene.objects.size(); ++o)
      for (std::size_t k = 0; k < warped.size(); ++k)
        if ((warped[k] - new_scene.objects[o].centroid).norm() < scenario.epsilon)
          return fail(FailureCategory::ContextMatching,
                      "anchor " + std::to_string(k) + " lies on distractor " + new_scene.objects[o].id);

    bool accurate = true;
    std::size_t worst = 0;
    for (std::size_t k = 0; k < g.anchors.size(); ++k) {
      const auto& gt = g.anchors[k];
      const auto* od = demo_scene.find(gt.object_id);
      const auto* on = new_scene.find(gt.object_id);
      if (!od || !on) return fail(FailureCategory::Others, "ground-truth object '" + gt.object_id + "' missing");
      const auto t = actionreg::SceneTransform::about(actionreg::wrap_half_pi(on->orientation - od->orientation),
                                                      od->centroid, on->centroid - od->centroid);
      const double e = (warped[k] - t.apply(gt.xy)).norm();
      r.anchor_errors.push_back(e);
      if (e > scenario.epsilon && accurate) {
        accurate = false;
        worst = k;
      }
    }
    if (!accurate) {
      char b[128];
      std::snprintf(b, sizeof b, "anchor %zu off by %.4f m", worst, r.anchor_errors[worst]);
      return fail(FailureCategory::ActionRegistration, b);
    }

    for (std::size_t t = 0; t < res.demo.length(); ++t) {
      const auto s = res.demo.state(t);
      if (!new_scene.workspace.contains(calib.to_scene(Vec2(s.ee_position[0], s.ee_position[1]))))
        return fail(FailureCategory::TrajectoryPlanning, "path leaves the workspace at step " + std::to_string(t));
    }
    r.success = true;
    r.category = FailureCategory::None;
  } catch (const std::exception& e) {
    return fail(FailureCategory::Others, e.what());
  }
  return r;
}

SuccessReport run_success_suite(const ScenarioConfig& scenario, const Segmenter& segmenter,
                                const std::string& segmenter_name, std::shared_ptr<lapvc::Transport> transport) {
  scenario.validate();
  const auto all = datagen::evaluation_templates();
  std::vector<datagen::TaskTemplate> templates;
  if (scenario.templates.empty()) {
    templates = all;
  } else {
    const auto train = datagen::training_templates();
    for (const auto& name : scenario.templates) {
      bool found = false;
      for (const auto* pool : {&all, &train})
        for (const auto& t : *pool)
          if (!found && t.name == name) {
            templates.push_back(t);
            found = true;
          }
      if (!found) throw ValidationError("unknown template '" + name + "'");
    }
  }

  SuccessReport rep;
  rep.mode = scenario.mode;
  rep.segmenter = segmenter_name;
  rep.config_canonical = scenario.to_config().canonical();
  rep.seed = scenario.seed;
  const auto per = static_cast<std::size_t>(scenario.trials_per_task);
  rep.results.resize(templates.size() * per);
  parallel_for(rep.results.size(), scenario.threads, [&](std::size_t i) {
    rep.results[i] = run_trial(templates[i / per], scenario, segmenter, static_cast<int>(i % per), transport);
  });
  for (std::size_t t = 0; t < templates.size(); ++t) {
    TaskSuccess ts;
    ts.task = templates[t].name;
    for (std::size_t k = 0; k < per; ++k) {
      const auto& r = rep.results[t * per + k];
      ++ts.trials;
      if (r.success) {
        ++ts.successes;
      } else {
        for (std::size_t c = 0; c < kFailureCategories.size(); ++c)
          if (kFailureCategories[c] == r.category) ++rep.failures[c];
      }
    }
    rep.trials += ts.trials;
    rep.successes += ts.successes;
    rep.tasks.push_back(ts);
  }
  return rep;
}

std::string config_hash(const std::string& canonical) {
  char b[17];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return b;
}

std::string SuccessReport::to_json(int indent) const {
  json j;
  j["mode"] = std::string(mode_name(mode));
  j["segmenter"] = segmenter;
  j["config"] = config_canonical;
  j["config_hash"] = config_hash(config_canonical);
  j["seed"] = seed;
  j["trials"] = trials;
  j["successes"] = successes;
  j["total_rate"] = total_rate();
  json tj = json::array();
  for (const auto& t : tasks)
    tj.push_back({{"task", t.task}, {"trials", t.trials}, {"successes", t.successes}, {"rate", t.rate()}});
  j["tasks"] = tj;
  json hist = json::object();
  for (std::size_t c = 0; c < kFailureCategories.size(); ++c)
    hist[std::string(actionreg::category_name(kFailureCategories[c]))] = failures[c];
  j["failures"] = hist;
  json rj = json::array();
  for (const auto& r : results) {
    rj.push_back({{"task", r.task},
                  {"trial", r.trial},
                  {"seed", r.seed},
                  {"success", r.success},
                  {"category", std::string(actionreg::category_name(r.category))},
                  {"detail", r.detail},
                  {"anchor_errors", r.anchor_errors},
                  {"correction_fallback", r.correction_fallback},
                  {"trace", json::parse(actionreg::trace_to_json(r.trace, -1))}});
  }
  j["results"] = rj;
  return j.dump(indent);
}

SuccessReport SuccessReport::from_json(const std::string& text) {
  SuccessReport s;
  try {
    const auto j = json::parse(text);
    s.mode = mode_from_name(j.at("mode").get<std::string>());
    s.segmenter = j.at("segmenter").get<std::string>();
    s.config_canonical = j.at("config").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.trials = j.at("trials").get<int>();
    s.successes = j.at("successes").get<int>();
    for (const auto& t : j.at("tasks"))
      s.tasks.push_back({t.at("task").get<std::string>(), t.at("trials").get<int>(), t.at("successes").get<int>()});
    for (std::size_t c = 0; c < kFailureCategories.size(); ++c)
      s.failures[c] = j.at("failures").at(std::string(actionreg::category_name(kFailureCategories[c]))).get<int>();
    for (const auto& r : j.at("results")) {
      TrialResult t;
      t.task = r.at("task").get<std::string>();
      t.trial = r.at("trial").get<int>();
      t.seed = r.at("seed").get<std::uint64_t>();
      t.success = r.at("success").get<bool>();
      t.category = actionreg::category_from_name(r.at("category").get<std::string>());
      t.detail = r.at("detail").get<std::string>();
      t.anchor_errors = r.at("anchor_errors").get<std::vector<double>>();
      t.correction_fallback = r.at("correction_fallback").get<bool>();
      for (const auto& e : r.at("trace"))
        t.trace.push_back({e.at("stage").get<std::string>(), e.at("status").get<std::string>(),
                           e.at("detail").get<std::string>()});
      s.results.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed success report: ") + e.what());
  }
  return s;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string fixed(double v, int prec) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*f", prec, v);
  return b;
}

}  // namespace

std::string SuccessReport::to_csv() const {
  std::ostringstream os;
  os << "task,trial,seed,success,category,max_anchor_error,correction_fallback,detail\n";
  for (const auto& r : results) {
    double worst = 0;
    for (double e : r.anchor_errors) worst = std::max(worst, e);
    os << r.task << ',' << r.trial << ',' << r.seed << ',' << (r.success ? 1 : 0) << ','
       << actionreg::category_name(r.category) << ',' << fixed(worst, 6) << ',' << (r.correction_fallback ? 1 : 0)
       << ',' << csv_quote(r.detail) << '\n';
  }
  return os.str();
}

// ---- artifacts ---------------------------------------------------------------------

std::string ablation_to_json(const mgsf::AblationResult& r, const std::string& config_canonical,
                             const std::vector<std::uint64_t>& seeds) {
  json j;
  j["config"] = config_canonical;
  j["config_hash"] = config_hash(config_canonical);
  j["seeds"] = seeds;
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"variant", std::string(mgsf::variant_name(c.variant))},
                     {"seed", c.seed},
                     {"ok", c.ok},
                     {"error", c.error},
                     {"val_recall", c.val_recall},
                     {"best_epoch", c.best_epoch},
                     {"test", json::parse(metrics_to_json(c.test, -1))}});
  }
  j["cells"] = cells;
  json summary = json::object();
  for (auto v : mgsf::kAllVariants) {
    const auto s = r.recall(v);
    summary[std::string(mgsf::variant_name(v))] = {{"recall_mean", s.mean}, {"recall_std", s.std}};
  }
  j["summary"] = summary;
  return j.dump(2);
}

mgsf::AblationResult ablation_from_json(const std::string& text) {
  mgsf::AblationResult r;
  try {
    const auto j = json::parse(text);
    for (const auto& c : j.at("cells")) {
      mgsf::AblationCell cell;
      cell.variant = mgsf::variant_from_name(c.at("variant").get<std::string>());
      cell.seed = c.at("seed").get<std::uint64_t>();
      cell.ok = c.at("ok").get<bool>();
      cell.error = c.at("error").get<std::string>();
      cell.val_recall = c.at("val_recall").get<double>();
      cell.best_epoch = c.at("best_epoch").get<int>();
      const auto& t = c.at("test");
      if (!t.at("bce_loss").is_null()) cell.test.bce_loss = t.at("bce_loss").get<double>();
      cell.test.precision = t.at("precision").get<double>();
      cell.test.recall = t.at("recall").get<double>();
      cell.test.f1 = t.at("f1").get<double>();
      cell.test.kappa = t.at("kappa").get<double>();
      cell.test.tp_range = {t.at("tp_range").at(0).get<double>(), t.at("tp_range").at(1).get<double>()};
      cell.test.samples = t.at("samples").get<long long>();
      r.cells.push_back(std::move(cell));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ablation artifact: ") + e.what());
  }
  return r;
}

std::string sweep_to_json(const std::vector<mgsf::SweepPoint>& sweep, const std::string& config_canonical,
                          const std::vector<std::uint64_t>& seeds) {
  json j;
  j["config"] = config_canonical;
  j["config_hash"] = config_hash(config_canonical);
  j["seeds"] = seeds;
  json pts = json::array();
  for (const auto& p : sweep)
    pts.push_back({{"total_demos", p.total_demos}, {"recalls", p.recalls}, {"mean", p.stat.mean}, {"std", p.stat.std}});
  j["points"] = pts;
  return j.dump(2);
}

Report build_report(const std::filesystem::path& dir) {
  Report rep;
  std::ostringstream md, csv;
  csv << "section,row,column,value\n";
  md << "# Run report\n\n";

  auto read = [&](const std::string& name, std::string& out) {
    const auto p = dir / name;
    if (!std::filesystem::exists(p)) {
      rep.missing.push_back(name);
      return false;
    }
    out = datagen::read_file(p);
    return true;
  };

  md << "## Segmentation variants\n\n";
  if (std::string text; read("ablation.json", text)) {
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("ablation.json is not valid JSON");
    const auto ab = ablation_from_json(text);
    md << "config hash `" << j.value("config_hash", std::string("?")) << "`, seeds";
    for (const auto& s : j.at("seeds")) md << ' ' << s.get<std::uint64_t>();
    md << "\n\n```\n" << mgsf::ablation_table(ab) << "```\n\n";
    for (auto v : mgsf::kAllVariants) {
      const auto s = ab.recall(v);
      const std::string name(mgsf::variant_name(v));
      csv << "ablation," << name << ",recall_mean," << fixed(s.mean, 4) << '\n';
      csv << "ablation," << name << ",recall_std," << fixed(s.std, 4) << '\n';
    }
  } else {
    md << "_missing: ablation.json_\n\n";
  }

  md << "## Dataset size\n\n";
  if (std::string text; read("sweep.json", text)) {
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("sweep.json is not valid JSON");
    md << "config hash `" << j.value("config_hash", std::string("?")) << "`\n\n";
    md << "| demos | recall mean | recall std | runs |\n|---|---|---|---|\n";
    for (const auto& p : j.at("points")) {
      const auto n = p.at("total_demos").get<int>();
      md << "| " << n << " | " << fixed(p.at("mean").get<double>(), 2) << " | "
         << fixed(p.at("std").get<double>(), 2) << " | " << p.at("recalls").size() << " |\n";
      csv << "sweep," << n << ",recall_mean," << fixed(p.at("mean").get<double>(), 4) << '\n';
      csv << "sweep," << n << ",recall_std," << fixed(p.at("std").get<double>(), 4) << '\n';
    }
    md << '\n';
  } else {
    md << "_missing: sweep.json_\n\n";
  }

  std::optional<SuccessReport> sim, com;
  if (std::string text; read("success_sim.json", text)) sim = SuccessReport::from_json(text);
  if (std::string text; read("success_com.json", text)) com = SuccessReport::from_json(text);

  md << "## Task success\n\n";
  if (!sim && !com) md << "_missing: success_sim.json, success_com.json_\n\n";
  if (sim || com) {
    for (const auto* s : {&sim, &com})
      if (*s)
        md << mode_name((*s)->mode) << ": segmenter " << (*s)->segmenter << ", config hash `"
           << config_hash((*s)->config_canonical) << "`, seed " << (*s)->seed << "\n\n";
    md << "| task | sim | com |\n|---|---|---|\n";
    std::vector<std::string> names;
    for (const auto* s : {&sim, &com})
      if (*s)
        for (const auto& t : (*s)->tasks)
          if (std::find(names.begin(), names.end(), t.task) == names.end()) names.push_back(t.task);
    auto cell = [](const std::optional<SuccessReport>& s, const std::string& task) -> std::string {
      if (!s) return "n/a";
      for (const auto& t : s->tasks)
        if (t.task == task) return std::to_string(t.successes) + "/" + std::to_string(t.trials) + " (" + fixed(t.rate(), 1) + "%)";
      return "n/a";
    };
    for (const auto& n : names) md << "| " << n << " | " << cell(sim, n) << " | " << cell(com, n) << " |\n";
    auto total = [](const std::optional<SuccessReport>& s) -> std::string {
      if (!s) return "n/a";
      return std::to_string(s->successes) + "/" + std::to_string(s->trials) + " (" + fixed(s->total_rate(), 1) + "%)";
    };
    md << "| total | " << total(sim) << " | " << total(com) << " |\n\n";

    md << "## Failure cases\n\n| category | sim | com |\n|---|---|---|\n";
    for (std::size_t c = 0; c < kFailureCategories.size(); ++c) {
      const std::string name(actionreg::category_name(kFailureCategories[c]));
      md << "| " << name << " | " << (sim ? std::to_string(sim->failures[c]) : "n/a") << " | "
         << (com ? std::to_string(com->failures[c]) : "n/a") << " |\n";
    }
    md << '\n';
    for (const auto* s : {&sim, &com}) {
      if (!*s) continue;
      const std::string m(mode_name((*s)->mode));
      for (const auto& t : (*s)->tasks) csv << "success_" << m << ',' << t.task << ",rate," << fixed(t.rate(), 4) << '\n';
      csv << "success_" << m << ",total,rate," << fixed((*s)->total_rate(), 4) << '\n';
      for (std::size_t c = 0; c < kFailureCategories.size(); ++c)
        csv << "failures_" << m << ',' << actionreg::category_name(kFailureCategories[c]) << ",count,"
            << (*s)->failures[c] << '\n';
    }
  }

  if (!rep.missing.empty()) {
    md << "## Gaps\n\n";
    for (const auto& m : rep.missing) md << "- " << m << " not found\n";
  }
  rep.text = md.str();
  rep.csv = csv.str();
  return rep;
}

}  // namespace tbk::harness

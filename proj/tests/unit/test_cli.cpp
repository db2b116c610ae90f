// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "therblig/scene.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "tbk_cli_test";

// Runs the CLI inside the work directory and returns its exit status.
int kit(const std::string& args) {
  const std::string cmd = "cd '" + kWork.string() + "' && '" TBK_CLI_PATH "' " + args + " > last.log 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kTinyModel =
    " --set epochs=1 --set lstm_hidden=4 --set d_model=8 --set heads=2 --set ffn_hidden=8"
    " --set meta_hidden=8 --set meta_dim=4 --set crop_length=100";

// Dataset and checkpoint shared by the cases below.
void prepare() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  REQUIRE(kit("--deterministic gen-data --set demos_per_template=5 --out data") == 0);
  REQUIRE(kit(std::string("--deterministic train --data data --out m.ckpt") + kTinyModel) == 0);
  done = true;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  prepare();
  CHECK(kit("--help") == 0);
  CHECK(slurp(kWork / "last.log").find("simulate") != std::string::npos);
  CHECK(kit("train --help") == 0);
  CHECK(kit("") == 1);
  CHECK(kit("--bogus gen-data --out x") == 1);
  CHECK(kit("fly") == 1);
  CHECK(kit("--threads 0 gen-data --out x") == 1);
  CHECK(kit("gen-data") == 1);
}

TEST_CASE("validation errors exit with 1") {
  prepare();
  CHECK(kit("gen-data --set demos_per_template=abc --out bad") == 1);
  CHECK(kit("gen-data --config missing.cfg --out bad") == 1);
  CHECK(kit("train --data nowhere --out x.ckpt") == 1);
  spit(kWork / "garbage.ckpt", "garbage");
  CHECK(kit("segment --model garbage.ckpt --demo data/demos/bricks_gluing_000.csv") == 1);
  CHECK(kit("eval --model m.ckpt --data data --report xml") == 1);
  CHECK(kit("correct --points nope.json --scene data/scenes/bricks_gluing_000.json --policy snap") == 1);
  spit(kWork / "pts.json", R"({"points": [{"therblig": "Grasp", "xy": [0.3, 0.3]}]})");
  CHECK(kit("correct --points pts.json --scene data/scenes/bricks_gluing_000.json --policy magic") == 1);
  CHECK(kit("simulate --out sims") == 1);
  CHECK(kit("ablate --data data --seeds 0 --out ab") == 1);
}

TEST_CASE("successful commands exit with 0") {
  prepare();
  CHECK(kit("eval --model m.ckpt --data data") == 0);
  CHECK(slurp(kWork / "last.log").find("\"recall\"") != std::string::npos);
  CHECK(kit("eval --model m.ckpt --data data --report csv") == 0);
  CHECK(kit("segment --model m.ckpt --demo data/demos/bricks_gluing_000.csv --out seg.json") == 0);
  CHECK(fs::exists(kWork / "seg.json"));
  spit(kWork / "pts.json", R"({"points": [{"therblig": "Grasp", "xy": [0.3, 0.3]}]})");
  CHECK(kit("correct --points pts.json --scene data/scenes/bricks_gluing_000.json --policy external,mock --out c.json") == 0);
  CHECK(slurp(kWork / "c.json").find("corrected_points") != std::string::npos);
  CHECK(kit("transfer --demo data/demos/bricks_gluing_000.csv --demo-scene data/scenes/bricks_gluing_000.json"
            " --new-scene data/scenes/bricks_gluing_000.json --out same.csv --trace trace.json") == 0);
  CHECK(fs::exists(kWork / "same.csv"));
  CHECK(kit("--deterministic simulate --oracle --trials 2 --out sims") == 0);
  CHECK(fs::exists(kWork / "sims" / "success_sim.json"));
  CHECK(kit("report --dir sims") == 0);
  CHECK(fs::exists(kWork / "sims" / "report.md"));
}

TEST_CASE("runtime faults exit with 2") {
  prepare();
  auto scene = tbk::load_scene(kWork / "data" / "scenes" / "bricks_gluing_000.json");
  for (auto& o : scene.objects) o.descriptor = scene.objects.front().descriptor;
  tbk::save_scene(scene, kWork / "twins.json");
  CHECK(kit("transfer --demo data/demos/bricks_gluing_000.csv --demo-scene data/scenes/bricks_gluing_000.json"
            " --new-scene twins.json --out twins.csv --trace twins_trace.json") == 2);
  CHECK(slurp(kWork / "twins_trace.json").find("ContextMatching") != std::string::npos);
  CHECK_FALSE(fs::exists(kWork / "twins.csv"));
  CHECK(kit(std::string("train --data data --out diverged.ckpt --set lr=1e30") + kTinyModel) == 2);
}

}  // TEST_SUITE

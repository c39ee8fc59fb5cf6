#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "delnet_cli_test.log";
  const std::string cmd = std::string("'") + DELNET_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  o.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return o;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

const char* kTiny =
    R"({"tasks": ["haze", "rain"], "use_valve": false, "steps_per_task": 4, "image_size": 16,
        "onset_batches": 1, "replay_size": 2, "eval_samples": 2, "routing_window": 2})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("run --bogus").code == 2);
  CHECK(run_cli("sweep --axis colours --out /tmp/x").code == 2);
  CHECK(run_cli("run --config /nonexistent/config.json --out /tmp/x").code == 2);
}

TEST_CASE("config errors exit with 2") {
  const auto unknown = write_config("delnet_cli_unknown.json", R"({"tasks": ["haze"], "speed": 3})");
  const auto o = run_cli("run --config '" + unknown.string() + "' --out '" +
                         fresh_dir("delnet_cli_unknown").string() + "'");
  CHECK(o.code == 2);
  CHECK(o.output.find("speed") != std::string::npos);
  const auto bad = write_config("delnet_cli_bad.json", R"({"steps_per_task": 0})");
  CHECK(run_cli("run --config '" + bad.string() + "' --out /tmp/delnet_cli_bad").code == 2);
  CHECK(run_cli("dump-samples --family fog --n 1 --out /tmp/delnet_cli_fog").code == 2);
  fs::remove(unknown);
  fs::remove(bad);
}

TEST_CASE("runtime aborts exit with 3") {
  const auto cfg = write_config(
      "delnet_cli_capacity.json",
      R"({"tasks": ["haze", "rain"], "use_valve": false, "expert_capacity": 1, "steps_per_task": 2,
          "image_size": 16, "onset_batches": 1, "replay_size": 2, "eval_samples": 2, "routing_window": 2})");
  const auto o = run_cli("run --config '" + cfg.string() + "' --out '" +
                         fresh_dir("delnet_cli_capacity").string() + "'");
  CHECK(o.code == 3);
  CHECK(o.output.find("expert capacity exhausted") != std::string::npos);
  CHECK(run_cli("verify --checkpoint '" + fresh_dir("delnet_cli_nockpt").string() + "'").code == 3);
  fs::remove(cfg);
}

TEST_CASE("run, eval and verify") {
  const auto cfg = write_config("delnet_cli_tiny.json", kTiny);
  const auto out = fresh_dir("delnet_cli_run");
  const auto r = run_cli("run --config '" + cfg.string() + "' --out '" + out.string() + "' --seed 4");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "losses.csv"));
  CHECK(fs::exists(out / "checkpoint" / "manifest.json"));

  const auto e = run_cli("eval --checkpoint '" + (out / "checkpoint").string() + "' --task 1");
  CHECK(e.code == 0);
  CHECK(e.output.find("1,rain,") != std::string::npos);
  CHECK(run_cli("eval --checkpoint '" + (out / "checkpoint").string() + "' --task 9").code == 2);

  CHECK(run_cli("verify --checkpoint '" + (out / "checkpoint").string() + "'").code == 0);
  std::ofstream(out / "checkpoint" / "manifest.json", std::ios::trunc) << "{\"format_version\": 1,";
  CHECK(run_cli("verify --checkpoint '" + (out / "checkpoint").string() + "'").code == 3);
  fs::remove_all(out);
  fs::remove(cfg);
}

TEST_CASE("dump-samples writes ppm pairs") {
  const auto out = fresh_dir("delnet_cli_dump");
  const auto o = run_cli("dump-samples --family snow --n 3 --out '" + out.string() + "'");
  CHECK(o.code == 0);
  for (int i = 0; i < 3; ++i) {
    for (const char* kind : {"clean", "degraded"}) {
      const auto p = out / ("snow_" + std::to_string(i) + "_" + kind + ".ppm");
      REQUIRE(fs::exists(p));
      CHECK(fs::file_size(p) == std::string("P6\n32 32\n255\n").size() + 32 * 32 * 3);
    }
  }
  fs::remove_all(out);
}

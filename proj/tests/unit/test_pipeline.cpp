#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "statetrait/error.hpp"
#include "statetrait/pipeline.hpp"

using namespace statetrait;
using namespace statetrait::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kToy = fs::path(STATETRAIT_SOURCE_DIR) / "data" / "toy";

json toy_doc() {
  std::ifstream f(kToy / "config.json");
  return json::parse(f);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("statetrait_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  return line;
}

}  // namespace

TEST_CASE("stage names") {
  for (Stage s : stage_order()) CHECK(parse_stage(to_string(s)) == s);
  CHECK(parse_stage("all") == Stage::All);
  CHECK_THROWS_AS(parse_stage("train"), ConfigError);
  CHECK(stage_order().size() == 10);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(parse_config(toy_doc(), kToy));
  auto d = toy_doc();
  d.erase("seed");
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["colour"] = "blue";
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["corpus"]["path"] = "missing.jsonl";
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["providers"]["generation"] = json::array({{{"kind", "http"}, {"model", "m"}}});
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["providers"]["reward"] = json::array({{{"model", "a"}}, {{"model", "a"}}});
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["report"]["formats"] = {"pdf"};
  CHECK_THROWS_AS(parse_config(d, kToy), ConfigError);
  d = toy_doc();
  d["archetypes"]["k"] = "auto";
  CHECK_FALSE(parse_config(d, kToy).k.has_value());
  CHECK_THROWS_AS(load_config(kToy / "nope.json"), ConfigError);
}

TEST_CASE("fingerprint ignores output directory and parallelism") {
  auto a = parse_config(toy_doc(), kToy);
  auto b = a;
  b.output_dir = "/elsewhere";
  b.parallelism = 8;
  CHECK(a.fingerprint() == b.fingerprint());
  b.seed = 8;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("missing prior artifact is a dependency error with exit 1") {
  RunOptions opt;
  opt.output_dir = scratch("dep");
  const auto r = run(Stage::Decompose, parse_config(toy_doc(), kToy), opt);
  CHECK(r.exit_code == kExitError);
  CHECK(r.error.find("run stage 'fuse' first") != std::string::npos);
}

TEST_CASE("run all on the toy corpus") {
  RunOptions opt;
  opt.output_dir = scratch("all");
  opt.force_mock = true;
  const auto r = run(Stage::All, parse_config(toy_doc(), kToy), opt);
  REQUIRE_MESSAGE(r.exit_code == kExitOk, r.error);
  CHECK(r.stages.size() == 10);
  const fs::path out = *opt.output_dir;
  for (const char* f : {"decompose/decomposition_summary.csv", "archetypes/cards.txt", "audit-gen/sensitivity.json",
                        "audit-reward/invariance.json", "report/index.json", "report/profile_heatmap.svg"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  for (Stage s : stage_order()) {
    const json m = json::parse(slurp(out / "manifests" / (to_string(s) + ".json")));
    CHECK(m["seed"] == 7);
    CHECK(m["version"] == version());
    CHECK(m.contains("inputs_hash"));
  }
  const json ingest = json::parse(slurp(out / "ingest/manifest.json"));
  CHECK(ingest["n_users"] == 12);
  CHECK(ingest["posts_per_user"] == 3);
  CHECK(first_line(out / "decompose/decomposition_summary.csv") ==
        "method,mean_icc,icc_min,icc_max,n_below_threshold,n_dimensions,mean_ospe");
  const json inv = json::parse(slurp(out / "audit-reward/invariance.json"));
  CHECK(inv["directions"]["rm-blind"] == "invariant");
  CHECK(inv["directions"]["rm-plus"] == "rewards profiles");
  CHECK(inv["directions"]["rm-minus"] == "penalizes profiles");
  CHECK(inv["disagreement_flag"] == true);

  // A single stage rerun reproduces its outputs.
  const std::string before = slurp(out / "validate/regression.csv");
  CHECK(run(Stage::Validate, parse_config(toy_doc(), kToy), opt).exit_code == kExitOk);
  CHECK(slurp(out / "validate/regression.csv") == before);

  // Another seed changes the sample and the manifest's seed.
  RunOptions other = opt;
  other.output_dir = scratch("all_seed");
  other.seed = 99;
  REQUIRE(run(Stage::Ingest, parse_config(toy_doc(), kToy), other).exit_code == kExitOk);
  CHECK(slurp(*other.output_dir / "ingest/posts.jsonl") != slurp(out / "ingest/posts.jsonl"));
  CHECK(json::parse(slurp(*other.output_dir / "manifests/ingest.json"))["seed"] == 99);
}

TEST_CASE("unreachable generation endpoint leaves holes and exit 2") {
  auto doc = toy_doc();
  RunOptions opt;
  opt.output_dir = scratch("partial");
  for (Stage s : {Stage::Ingest, Stage::Extract, Stage::Assess, Stage::Fuse, Stage::Archetypes})
    REQUIRE(run(s, parse_config(doc, kToy), opt).exit_code == kExitOk);
  ::setenv("STATETRAIT_TEST_KEY", "x", 1);
  doc["providers"]["generation"] = json::array(
      {{{"kind", "mock"}, {"model", "ok-model"}},
       {{"kind", "http"}, {"model", "down"}, {"base_url", "http://127.0.0.1:9/v1"}, {"credential_env", "STATETRAIT_TEST_KEY"},
        {"timeout_seconds", 1}}});
  doc["providers"]["max_attempts"] = 1;
  const auto r = run(Stage::AuditGen, parse_config(doc, kToy), opt);
  CHECK(r.exit_code == kExitPartial);
  const fs::path out = *opt.output_dir;
  std::ifstream holes(out / "audit-gen/holes.jsonl");
  std::size_t n = 0;
  for (std::string line; std::getline(holes, line);) {
    CHECK(json::parse(line)["model"] == "down");
    ++n;
  }
  CHECK(n == 55 * 7);
  CHECK_FALSE(fs::exists(out / "audit-gen/sensitivity.json"));
  // Forcing mocks recovers a complete grid.
  opt.force_mock = true;
  CHECK(run(Stage::AuditGen, parse_config(doc, kToy), opt).exit_code == kExitOk);
}

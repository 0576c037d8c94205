#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "statetrait/error.hpp"
#include "statetrait/pipeline.hpp"
#include "statetrait/report.hpp"

namespace pl = statetrait::pipeline;

namespace {

int cmd_run(const std::string& stage_name, const std::string& config_path, std::optional<std::uint64_t> seed, bool mock,
            const std::string& out, std::optional<std::size_t> parallelism, bool quiet) {
  try {
    const auto stage = pl::parse_stage(stage_name);
    auto cfg = pl::load_config(config_path);
    pl::RunOptions opt;
    opt.seed = seed;
    opt.force_mock = mock;
    if (!out.empty()) opt.output_dir = out;
    opt.parallelism = parallelism;
    opt.log = quiet ? nullptr : &std::cerr;
    const auto r = pl::run(stage, std::move(cfg), opt);
    if (r.exit_code == pl::kExitError) std::cerr << "error: " << r.error << "\n";
    if (r.exit_code == pl::kExitPartial) std::cerr << "warning: grid incomplete; see holes.jsonl\n";
    return r.exit_code;
  } catch (const statetrait::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::kExitError;
  }
}

int cmd_emit(const std::string& table_path, const std::string& format, const std::string& out, const std::string& title) {
  try {
    const auto f = statetrait::report::parse_format(format);
    std::ifstream in(table_path);
    if (!in) throw statetrait::ConfigError("cannot open '" + table_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto doc = nlohmann::json::parse(ss.str(), nullptr, false);
    if (doc.is_discarded()) throw statetrait::ValidationError(0, "table file is not JSON");
    const auto text = statetrait::report::emit(statetrait::report::table_from_json(doc), f, title);
    if (out.empty() || out == "-") {
      std::cout << text;
    } else {
      std::ofstream o(out, std::ios::binary);
      if (!o) throw statetrait::ConfigError("cannot write '" + out + "'");
      o << text;
    }
    return 0;
  } catch (const statetrait::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual psychological profiling and model audit pipeline"};
  app.set_version_flag("--version", pl::version());
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a pipeline stage (or all of them)");
  std::string stage_pos, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  bool mock = false, quiet = false;
  run->add_option("stage,--stage", stage_pos,
                  "ingest|extract|assess|fuse|decompose|validate|archetypes|audit-gen|audit-reward|report|all")
      ->required();
  run->add_option("--config", config, "Run config (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_flag("--mock", mock, "Force mock providers");
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--parallelism", parallelism, "Provider concurrency bound")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "No progress log");

  auto* emit = app.add_subcommand("emit", "Render a saved table as csv, json or svg-heatmap");
  std::string table, format = "csv", emit_out, title;
  emit->add_option("table", table, "A .table.json artifact")->required();
  emit->add_option("--format", format, "csv|json|svg-heatmap");
  emit->add_option("--out", emit_out, "Output file (default stdout)");
  emit->add_option("--title", title, "Heatmap title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (*run) {
    return cmd_run(stage_pos, config, seed, mock, out, parallelism, quiet);
  }
  return cmd_emit(table, format, emit_out, title);
}

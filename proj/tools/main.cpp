#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "config.hpp"
#include "pipeline.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 2, kStage = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> stages;
  int threads = 1;
};

// Parses and validates, printing every problem; nullopt means exit 2.
std::optional<delwalk::cli::ExperimentConfig> load(const Flags& f) {
  if (f.config.empty()) {
    std::cerr << "error: --config is required\n";
    return std::nullopt;
  }
  auto parsed = delwalk::cli::load_config(f.config);
  if (f.seed) parsed.config.seed = *f.seed;
  if (!f.out.empty()) parsed.config.out = f.out;
  if (!f.stages.empty()) parsed.config.stages = f.stages;
  auto errors = parsed.errors;
  if (errors.empty()) errors = delwalk::cli::validate_config(parsed.config);
  if (f.threads < 1) errors.push_back("--threads: must be >= 1");
  for (const auto& e : errors) std::cerr << "error: " << e << '\n';
  if (!errors.empty()) return std::nullopt;
  return parsed.config;
}

int run(const Flags& f, std::vector<std::string> stages) {
  const auto cfg = load(f);
  if (!cfg) return kValidation;
  if (stages.empty()) stages = cfg->stages;
  const auto m = delwalk::cli::run_stages(*cfg, stages, f.threads);
  for (const auto& s : m.stages) {
    std::cout << s.name << ": " << s.status;
    if (s.status == "ok") std::cout << " (" << s.seconds << " s, " << s.files.size() << " files)";
    if (!s.error.empty()) std::cout << " - " << s.error;
    std::cout << '\n';
  }
  std::cout << "manifest: " << (std::filesystem::path(cfg->out) / delwalk::cli::kManifestName).string() << '\n';
  return m.ok() ? kOk : kStage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks on Delaunay triangulations: experiment runner"};
  app.require_subcommand(1);
  Flags f;
  std::string manifest;

  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "INI experiment config");
    sub->add_option("--seed", f.seed, "override experiment.seed");
    sub->add_option("--out", f.out, "override experiment.out");
    sub->add_option("--threads", f.threads, "worker threads (stages run sequentially)");
  };

  auto* run_cmd = app.add_subcommand("run", "run the configured stages in dependency order");
  add_flags(run_cmd);
  run_cmd->add_option("--stage", f.stages, "restrict to these stages")->delimiter(',');
  auto* validate_cmd = app.add_subcommand("validate", "check a config without running anything");
  add_flags(validate_cmd);
  auto* report_cmd = app.add_subcommand("report", "summarize a finished run");
  report_cmd->add_option("manifest", manifest, "path to manifest.json");
  report_cmd->add_option("--out", f.out, "output directory holding manifest.json");
  report_cmd->add_option("--config", f.config, "config whose output directory holds the manifest");

  std::vector<std::pair<CLI::App*, std::string>> stage_cmds;
  for (const auto& name : delwalk::cli::kStageOrder) {
    auto* sub = app.add_subcommand(name, "run only the " + name + " stage on serialized inputs");
    add_flags(sub);
    stage_cmds.emplace_back(sub, name);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (*validate_cmd) {
      if (!load(f)) return kValidation;
      std::cout << "ok\n";
      return kOk;
    }
    if (*run_cmd) return run(f, {});
    if (*report_cmd) {
      std::filesystem::path p = manifest;
      if (p.empty() && !f.out.empty()) p = std::filesystem::path(f.out) / delwalk::cli::kManifestName;
      if (p.empty() && !f.config.empty()) {
        const auto cfg = load(f);
        if (!cfg) return kValidation;
        p = std::filesystem::path(cfg->out) / delwalk::cli::kManifestName;
      }
      if (p.empty()) {
        std::cerr << "error: give a manifest path, --out or --config\n";
        return kValidation;
      }
      const auto rep = delwalk::cli::make_report(p);
      std::cout << rep.text;
      return kOk;
    }
    for (const auto& [sub, name] : stage_cmds)
      if (*sub) return run(f, {name});
  } catch (const delwalk::LookupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const delwalk::ConsistencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStage;
  }
  return kOk;
}

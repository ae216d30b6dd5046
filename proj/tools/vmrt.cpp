// vmrt: run experiment matrices, compare bundles, list presets, check the
// PLRU golden vectors.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vmrt/config.hpp"
#include "vmrt/harness.hpp"
#include "vmrt/presets.hpp"
#include "vmrt/vectors.hpp"

namespace {

vmrt::ExperimentConfig load(const std::string& what) {
  if (std::filesystem::exists(what)) return vmrt::load_config(what);
  if (auto p = vmrt::find_preset(what)) return vmrt::parse_config(std::string(p->text));
  throw vmrt::ConfigError("'" + what + "' is neither a config file nor a preset name (see `vmrt presets list`)");
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", *v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-criticality TLB/cache interference simulator"};
  app.set_version_flag("--version", std::string(vmrt::kVersion));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run every scenario of a config file or preset");
  std::string target;
  std::string out = "out";
  std::optional<std::uint64_t> seed, iterations;
  std::optional<unsigned> workers;
  bool dump_state = false;
  run->add_option("config", target, "Config file path or preset name")->required();
  run->add_option("--seed", seed, "Master seed (overrides [run] seed)");
  run->add_option("--iterations", iterations, "Iterations per scenario (overrides the config)");
  run->add_option("--workers", workers, "Worker threads; results do not depend on this")->check(CLI::Range(1U, 256U));
  run->add_option("--out", out, "Output directory for CSV files and summary.json");
  run->add_flag("--dump-state", dump_state, "Also write <scenario>.state.txt with TLB and layout dumps");

  auto* cmp = app.add_subcommand("compare", "Percentage change of mean and stddev between two scenarios");
  std::string bundle, baseline, subject;
  cmp->add_option("bundle", bundle, "Output directory or summary.json")->required();
  cmp->add_option("baseline", baseline, "Baseline scenario name")->required();
  cmp->add_option("subject", subject, "Subject scenario name")->required();

  auto* pre = app.add_subcommand("presets", "Built-in presets");
  pre->require_subcommand(1);
  auto* pre_list = pre->add_subcommand("list", "List presets");
  auto* pre_show = pre->add_subcommand("show", "Print a preset's config text");
  std::string preset_name;
  pre_show->add_option("name", preset_name)->required();

  auto* vec = app.add_subcommand("vectors", "Check the eight-entry PLRU golden vectors");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load(target);
      vmrt::RunOptions opt{seed, iterations, workers, dump_state};
      const auto m = vmrt::run_matrix(cfg, opt, std::filesystem::path(out));
      std::printf("%-28s %10s %10s %12s %12s\n", "scenario", "mean", "stddev", "d_std(iso)", "d_std(unmit)");
      const auto* iso = m.find(m.isolation);
      const auto* unm = m.find(m.unmitigated);
      for (const auto& s : m.scenarios) {
        const auto di = iso ? vmrt::delta_pct(iso->stats.stddev, s.stats.stddev) : std::nullopt;
        const auto du = unm ? vmrt::delta_pct(unm->stats.stddev, s.stats.stddev) : std::nullopt;
        std::printf("%-28s %10.1f %10.1f %12s %12s\n", s.spec.name.c_str(), s.stats.mean, s.stats.stddev,
                    pct(di).c_str(), pct(du).c_str());
      }
      std::cout << "wrote " << (std::filesystem::path(out) / "summary.json").string() << "\n";
    } else if (*cmp) {
      const auto c = vmrt::compare_bundle(bundle, baseline, subject);
      nlohmann::ordered_json j;
      j["baseline"] = c.baseline;
      j["subject"] = c.subject;
      j["mean_pct"] = c.mean_pct ? nlohmann::ordered_json(*c.mean_pct) : nlohmann::ordered_json("undefined");
      j["stddev_pct"] = c.stddev_pct ? nlohmann::ordered_json(*c.stddev_pct) : nlohmann::ordered_json("undefined");
      std::cout << j.dump(2) << "\n";
    } else if (*pre_list) {
      for (const auto& p : vmrt::presets()) std::cout << p.name << "\t" << p.description << "\n";
    } else if (*pre_show) {
      const auto p = vmrt::find_preset(preset_name);
      if (!p) throw vmrt::ConfigError("unknown preset '" + preset_name + "'");
      std::cout << p->text;
    } else if (*vec) {
      bool all = true;
      for (const auto& r : vmrt::run_plru_vectors()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const vmrt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

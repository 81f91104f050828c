#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hidfd/config.hpp"
#include "hidfd/errors.hpp"
#include "hidfd/kernels.hpp"
#include "hidfd/pipeline.hpp"
#include "hidfd/theory.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;
constexpr int kIdentityFailed = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.sets, "override, key=value (repeatable)")->take_all();
}

hidfd::ExperimentConfig resolve(const Common& c) {
  hidfd::ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = hidfd::load_config(c.config_path);
  for (const auto& s : c.sets) cfg = hidfd::apply_override(cfg, s);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

int verify_theory(std::size_t trials, std::uint64_t seed) {
  bool all = true;
  for (const auto& r : hidfd::theory::verify_theory(trials, seed)) {
    std::printf("%s %-24s worst=%.3e tolerance=%.1e trials=%zu\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.tolerance, r.trials);
    all = all && r.passed;
  }
  return all ? kOk : kIdentityFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid data-free distillation on toy data"};
  app.require_subcommand(1);

  Common common;
  auto* pretrain = app.add_subcommand("pretrain-teacher", "train the teacher on the full data");
  auto* gan = app.add_subcommand("train-gan", "train the conditional GAN on collected data");
  auto* distill = app.add_subcommand("distill", "generate, mix and train the student");
  auto* run_all = app.add_subcommand("run-all", "every phase followed by report");
  auto* ablate = app.add_subcommand("ablate", "GAN + student runs with each loss disabled");
  auto* sweep = app.add_subcommand("sweep-inflation", "student runs over a list of values");
  auto* report = app.add_subcommand("report", "assemble and print report.json");
  for (auto* cmd : {pretrain, gan, distill, run_all, ablate, sweep, report}) add_common(cmd, common);

  std::string sweep_key = "student.inflation";
  std::string sweep_values = "1,2,4,8,0";
  sweep->add_option("--key", sweep_key, "config key to sweep");
  sweep->add_option("--values", sweep_values, "comma-separated values");

  auto* theory = app.add_subcommand("verify-theory", "check the TVD, KL and classifier identities");
  std::size_t trials = 10000;
  std::uint64_t theory_seed = 0;
  theory->add_option("--trials", trials, "random instances per identity");
  theory->add_option("--seed", theory_seed, "seed");

  auto* isa = app.add_subcommand("kernels", "list the available kernel instruction sets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kConfigError;
  }

  try {
    if (theory->parsed()) return verify_theory(trials, theory_seed);
    if (isa->parsed()) {
      for (auto i : hidfd::kernels::available_isas()) {
        std::cout << hidfd::kernels::isa_name(i)
                  << (i == hidfd::kernels::active().isa ? " (active)" : "") << "\n";
      }
      return kOk;
    }

    const hidfd::ExperimentConfig cfg = resolve(common);
    if (ablate->parsed()) {
      std::cout << hidfd::ablate(cfg).dump(2) << "\n";
      return kOk;
    }
    if (sweep->parsed()) {
      std::vector<std::string> values;
      std::string cur;
      for (char ch : sweep_values + ",") {
        if (ch == ',') {
          if (!cur.empty()) values.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      std::cout << hidfd::sweep(cfg, sweep_key, values).dump(2) << "\n";
      return kOk;
    }

    hidfd::Pipeline pipeline(cfg);
    if (pretrain->parsed()) {
      std::cout << pipeline.pretrain_teacher().dump(2) << "\n";
    } else if (gan->parsed()) {
      std::cout << pipeline.train_gan().dump(2) << "\n";
    } else if (distill->parsed()) {
      std::cout << pipeline.distill().dump(2) << "\n";
    } else if (run_all->parsed()) {
      std::cout << hidfd::summarize_report(pipeline.run_all());
    } else if (report->parsed()) {
      std::cout << hidfd::summarize_report(pipeline.report());
    }
    return kOk;
  } catch (const hidfd::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const hidfd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

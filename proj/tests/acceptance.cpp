// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hidfd/data.hpp"
#include "hidfd/distillation.hpp"
#include "hidfd/generation.hpp"
#include "hidfd/kvfile.hpp"
#include "hidfd/pipeline.hpp"
#include "hidfd/theory.hpp"
#include "loss_cases.hpp"

using namespace hidfd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void gradient_suite(std::size_t per_loss) {
  const auto t0 = Clock::now();
  Rng rng(20240501);
  double worst = 0.0;
  std::size_t total = 0;
  bool ok = true;
  std::string detail;
  for (const auto& c : testing::loss_cases()) {
    double loss_worst = 0.0;
    for (std::size_t i = 0; i < per_loss; ++i) {
      const auto r = c.run(rng);
      if (r.entries == 0 || r.analytic_norm == 0.0) ok = false;
      loss_worst = std::max(loss_worst, r.rel_error);
      ++total;
    }
    if (!(loss_worst < 1e-6)) {
      ok = false;
      detail += " " + c.name + fmt("=%.2e", loss_worst);
    }
    worst = std::max(worst, loss_worst);
  }
  const double secs = seconds_since(t0);
  ok = ok && per_loss >= 50 && secs < 30.0;
  report(ok, "gradient_suite",
         fmt("worst_rel=%.2e", worst) + " cases=" + std::to_string(total) +
             " per_loss=" + std::to_string(per_loss) + fmt(" seconds=%.2f", secs) + detail);
}

void theory_oracle() {
  const auto t0 = Clock::now();
  const auto results = theory::verify_theory(10000, 7);
  const double secs = seconds_since(t0);
  auto find = [&](const std::string& n) {
    for (const auto& r : results)
      if (r.name == n) return r;
    return theory::IdentityResult{n, false, std::numeric_limits<double>::quiet_NaN(), 0.0, 0};
  };
  const auto id = find("mixture_identity");
  const auto bound = find("mixture_bound");
  const auto kl = find("kl_equivalence");
  const auto tab = find("tabular_classifier");
  const bool ok_a = id.worst <= 1e-12 && id.trials >= 10000;
  const bool ok_b = -bound.worst >= -1e-9 && bound.trials >= 10000;
  const bool ok_c = kl.worst < 1e-10 && kl.trials >= 1000;
  const bool ok_d = tab.worst < 1e-3 && tab.trials >= 20;
  report(ok_a && secs < 60.0, "theory_mixture_identity",
         fmt("worst=%.2e", id.worst) + " trials=" + std::to_string(id.trials));
  report(ok_b && secs < 60.0, "theory_mixture_bound",
         fmt("min_slack=%.2e", -bound.worst) + " trials=" + std::to_string(bound.trials));
  report(ok_c && secs < 60.0, "theory_kl_equivalence",
         fmt("worst=%.2e", kl.worst) + " trials=" + std::to_string(kl.trials));
  report(ok_d && secs < 60.0, "theory_tabular_classifier",
         fmt("worst=%.2e", tab.worst) + " trials=" + std::to_string(tab.trials) +
             fmt(" seconds=%.2f", secs));
}

// |n^t - k| against (1-gamma)^t |n^0 - k| for a constant count vector k.
void ema_contraction() {
  Rng rng(99);
  const double eps = std::numeric_limits<double>::epsilon();
  double worst_ulps = 0.0;
  for (double gamma : {0.1, 0.5, 0.9}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t C = 2 + rng.below(8);
      std::vector<double> k(C);
      for (double& v : k) v = rng.uniform(0.0, 100.0);
      const double n0 = rng.uniform(0.0, 100.0);
      ClassFrequencyTracker tr(C, gamma, n0);
      for (std::size_t t = 1; t <= 300; ++t) {
        tr.update(k);
        for (std::size_t c = 0; c < C; ++c) {
          const double expected = std::pow(1.0 - gamma, double(t)) * std::abs(n0 - k[c]);
          const double got = std::abs(tr.values()[c] - k[c]);
          const double scale = std::max(n0, k[c]) * eps;
          worst_ulps = std::max(worst_ulps, std::abs(got - expected) / scale);
        }
      }
    }
  }
  report(worst_ulps <= 64.0, "ema_contraction",
         fmt("worst_ulps_of_scale=%.1f", worst_ulps) + " gammas=0.1,0.5,0.9 steps=300");
}

void gradient_probe() {
  const double ratio = theory::overfit_gradient_probe(1e-6) / theory::overfit_gradient_probe(0.5);
  report(ratio < 1e-5, "vanishing_gradient_probe", fmt("ratio=%.3e", ratio));
}

void inflation_mix() {
  Rng rng(5);
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dc = 1 + rng.below(200);
    const std::size_t ds = 1 + rng.below(2000);
    std::size_t n = 1;
    while ((n + 1) * dc <= ds) ++n;
    const long double exact = (long double)(n * dc) / (long double)(n * dc + ds);

    std::vector<double> fc(dc), fs(ds);
    for (double& v : fc) v = rng.uniform();
    for (double& v : fs) v = rng.uniform();
    const Dataset collected(1, 2, Provenance::collected, fc, std::vector<int>(dc, 0));
    const Dataset synthetic(1, 2, Provenance::synthetic, fs, std::vector<int>(ds, 1));
    const std::size_t got_n = default_inflation(ds, dc);
    const HybridDataset h = mix(inflate(collected, got_n), synthetic, got_n, rng.next_u64());
    const double half_ulp =
        (std::nextafter(h.alpha, 2.0) - h.alpha) / 2.0;
    ok = ok && got_n == n && h.inflation == n && h.data.size() == n * dc + ds &&
         h.data.class_counts()[0] == n * dc &&
         std::fabs((long double)h.alpha - exact) <= (long double)half_ulp;
  }
  report(ok, "inflation_mix", "pairs=100");
}

void schedule_check(const ExperimentConfig& toy) {
  bool ok = true;
  std::string detail;
  for (std::size_t epochs : {std::size_t(240), toy.student.epochs, std::size_t(24)}) {
    const LrSchedule& s = toy.student.schedule;
    const auto m = s.milestones(epochs);
    const std::vector<double> want{0.05, 0.005, 0.0005, 0.00005};
    const std::vector<std::size_t> at{0, m.at(0), m.at(1), m.at(2)};
    for (std::size_t i = 0; i < 4; ++i) {
      const double lr = s.lr_at(at[i], epochs);
      ok = ok && std::abs(lr - want[i]) <= 4e-15 * want[i];
      // the epoch before a breakpoint still uses the previous rate
      if (at[i] > 0) ok = ok && std::abs(s.lr_at(at[i] - 1, epochs) - want[i - 1]) <= 4e-15 * want[i - 1];
    }
    ok = ok && m[0] == epochs * 150 / 240 && m[1] == epochs * 180 / 240 && m[2] == epochs * 210 / 240;
    detail += " epochs=" + std::to_string(epochs) + ":" + std::to_string(m[0]) + "/" +
              std::to_string(m[1]) + "/" + std::to_string(m[2]);
  }
  report(ok, "lr_schedule", detail.substr(1));
}

void end_to_end(const ExperimentConfig& toy, const fs::path& work,
                const std::vector<std::uint64_t>& seeds) {
  double student = 0.0, baseline = 0.0, minf_full = 0.0, minf_noreg = 0.0, slowest = 0.0;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig c = toy;
    c.seed = seed;
    c.out = (work / ("seed" + std::to_string(seed))).string();
    fs::remove_all(c.out);
    const auto t0 = Clock::now();
    const nlohmann::json r = Pipeline(c).run_all();
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);

    ExperimentConfig noreg = c;
    noreg.gan.disable_reg = true;
    noreg.out = c.out + "_noreg";
    fs::remove_all(noreg.out);
    copy_phase_artifacts(c.out, noreg.out, false);
    const nlohmann::json g = Pipeline(noreg).train_gan();

    const double s = r["distill"]["student_accuracy"], b = r["distill"]["baseline_accuracy"];
    const double mf = r["train_gan"]["synthetic_min_frequency"];
    const double mn = g["synthetic_min_frequency"];
    std::printf("  seed %llu: student=%.4f baseline=%.4f min_freq reg=%.4f no_reg=%.4f seconds=%.1f\n",
                static_cast<unsigned long long>(seed), s, b, mf, mn, secs);
    std::fflush(stdout);
    student += s;
    baseline += b;
    minf_full += mf;
    minf_noreg += mn;
  }
  const double n = double(seeds.size());
  student /= n;
  baseline /= n;
  minf_full /= n;
  minf_noreg /= n;
  const bool enough = seeds.size() >= 5;
  report(enough && student >= baseline, "e2e_student_vs_baseline",
         fmt("student=%.4f", student) + fmt(" baseline=%.4f", baseline) +
             " seeds=" + std::to_string(seeds.size()));
  report(enough && minf_full >= minf_noreg, "e2e_reg_min_frequency",
         fmt("with_reg=%.4f", minf_full) + fmt(" without_reg=%.4f", minf_noreg));
  report(slowest < 600.0, "e2e_runtime", fmt("slowest_run_seconds=%.1f", slowest));
}

void determinism(const std::string& cli, const fs::path& config, const fs::path& work) {
  std::vector<std::string> reports;
  for (const char* tag : {"a", "b"}) {
    const fs::path out = work / (std::string("determinism_") + tag);
    fs::remove_all(out);
    const std::string cmd = "\"" + cli + "\" run-all --config \"" + config.string() +
                            "\" --seed 101 --out \"" + out.string() + "\" > \"" +
                            (work / (std::string("determinism_") + tag + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0 || !fs::exists(out / "report.json")) {
      report(false, "determinism", std::string("run-all failed: ") + cmd);
      return;
    }
    reports.push_back(read_text_file(out / "report.json"));
  }
  report(reports[0] == reports[1] && !reports[0].empty(), "determinism",
         "report.json bytes=" + std::to_string(reports[0].size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hidfd acceptance suite"};
  std::string cli = HIDFD_CLI_PATH;
  std::string config = std::string(HIDFD_SOURCE_DIR) + "/configs/toy.cfg";
  std::string work = "acceptance_work";
  std::vector<std::uint64_t> seeds{101, 102, 103, 104, 105};
  std::size_t per_loss = 50;
  app.add_option("--cli", cli, "hidfd executable");
  app.add_option("--config", config, "toy configuration");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--seeds", seeds, "end-to-end seeds")->delimiter(',');
  app.add_option("--per-loss", per_loss, "gradient cases per loss");
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(work);
    const ExperimentConfig toy = load_config(config);
    gradient_suite(per_loss);
    theory_oracle();
    ema_contraction();
    gradient_probe();
    inflation_mix();
    schedule_check(toy);
    end_to_end(toy, work, seeds);
    determinism(cli, config, work);
  } catch (const std::exception& e) {
    std::printf("FAIL %-28s %s\n", "acceptance_aborted", e.what());
    return 1;
  }
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}

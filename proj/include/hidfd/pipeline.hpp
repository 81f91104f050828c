#pragma once

// End-to-end runner. Every phase reads its inputs from the output directory
// and writes its artifacts back there, so any phase can be rerun alone.
//
// Layout of an output directory:
//   manifest.json   config snapshot, phase seeds, artifact paths, version
//   timings.json    wall-clock seconds per phase
//   metrics.jsonl   one line per epoch, tagged with "phase"
//   phase_<name>.json, report.json
//   data/*.csv, checkpoints/<name>.{manifest,bin}

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hidfd/config.hpp"

namespace hidfd {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct PhaseSeeds {
  std::uint64_t data = 0;
  std::uint64_t split = 0;
  std::uint64_t collected = 0;
  std::uint64_t teacher_init = 0;
  std::uint64_t teacher = 0;
  std::uint64_t gan = 0;
  std::uint64_t synthetic = 0;
  std::uint64_t mix = 0;
  std::uint64_t student_init = 0;
  std::uint64_t student = 0;
  std::uint64_t baseline_init = 0;
  std::uint64_t baseline = 0;
};

PhaseSeeds phase_seeds(std::uint64_t master);
nlohmann::json seeds_json(const PhaseSeeds& seeds);

class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  const ExperimentConfig& config() const noexcept { return config_; }
  const std::filesystem::path& out() const noexcept { return out_; }
  const PhaseSeeds& seeds() const noexcept { return seeds_; }

  // Each returns the phase summary it also writes to phase_<name>.json.
  nlohmann::json pretrain_teacher();
  nlohmann::json train_gan();
  nlohmann::json distill();
  // Assembles report.json from the phase summaries.
  nlohmann::json report();
  nlohmann::json run_all();

  // Writes manifest.json unless present. ConfigError if an existing manifest
  // was written for a different configuration.
  void ensure_manifest();

 private:
  template <class Fn>
  nlohmann::json timed(const std::string& phase, Fn&& fn);
  void log_metric(const nlohmann::json& line);
  void write_phase(const std::string& phase, const nlohmann::json& summary);

  ExperimentConfig config_;
  std::filesystem::path out_;
  PhaseSeeds seeds_;
};

// Copies data and checkpoints produced by earlier phases from `from` to `to`.
void copy_phase_artifacts(const std::filesystem::path& from, const std::filesystem::path& to,
                          bool include_gan);

// Paired GAN + distillation runs with each ablation flag, sharing one teacher.
// Writes <out>/ablation.json.
nlohmann::json ablate(const ExperimentConfig& base);

// One run per value of `key`. Keys that only affect distillation reuse the
// base teacher and GAN. Writes <out>/sweep.json.
nlohmann::json sweep(const ExperimentConfig& base, const std::string& key,
                     const std::vector<std::string>& values);

// Human-readable summary of report.json.
std::string summarize_report(const nlohmann::json& report);

}  // namespace hidfd

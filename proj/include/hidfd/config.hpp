#pragma once

// Experiment configuration as flat key=value text. Every field has a default;
// to_key_values / from_key_values round-trip exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hidfd/distillation.hpp"
#include "hidfd/generation.hpp"
#include "hidfd/kvfile.hpp"

namespace hidfd {

struct ExperimentConfig {
  // toy Gaussian mixture
  std::size_t num_classes = 4;
  std::size_t data_dim = 2;
  std::size_t per_class = 500;
  double spread = 1.0;
  double covariance = 0.16;
  double test_fraction = 0.2;

  // collected data: rho * |train| examples with weights ratio^(C-1-c)
  double rho = 0.1;
  double imbalance_ratio = 3.0;

  std::vector<std::size_t> teacher_hidden{64, 64};
  std::vector<std::size_t> student_hidden{32};
  std::size_t feature_dim = 32;

  DistillConfig teacher = [] {
    DistillConfig d;
    d.epochs = 100;
    return d;
  }();
  GanArchitecture gan_arch;
  GanTrainConfig gan;
  std::size_t synthetic_per_class = 500;
  DistillConfig student;
  std::size_t tvd_bins = 16;

  std::uint64_t seed = 0;
  std::string out = "runs/default";

  void validate() const;  // ConfigError
};

KeyValues to_key_values(const ExperimentConfig& config);
// Starts from `base` and applies every key. ConfigError on unknown keys or bad values.
ExperimentConfig apply_key_values(ExperimentConfig base, const KeyValues& kv,
                                  const std::string& origin = "<overrides>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);

// "key=value" -> applied override.
ExperimentConfig apply_override(ExperimentConfig config, const std::string& assignment);

std::vector<std::string> config_keys();

}  // namespace hidfd

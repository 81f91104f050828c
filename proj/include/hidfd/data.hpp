#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hidfd/tensor.hpp"

namespace hidfd {

enum class Provenance { original, collected, synthetic, hybrid };

std::string provenance_name(Provenance p);

// Immutable labeled examples with per-class tallies.
class Dataset {
 public:
  Dataset() = default;
  // Throws DomainError if a label is outside [0, num_classes) and
  // DimensionError if features.size() != labels.size() * dim.
  Dataset(std::size_t dim, std::size_t num_classes, Provenance provenance,
          std::vector<double> features, std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  Provenance provenance() const noexcept { return provenance_; }

  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<double>& flat_features() const noexcept { return features_; }
  const std::vector<std::size_t>& class_counts() const noexcept { return class_counts_; }

  Tensor features_tensor() const;
  Tensor features_tensor(std::span<const std::size_t> indices) const;
  std::vector<int> labels_at(std::span<const std::size_t> indices) const;

  Dataset subset(std::span<const std::size_t> indices, Provenance provenance) const;
  Dataset with_provenance(Provenance p) const;

 private:
  std::size_t dim_ = 0;
  std::size_t num_classes_ = 0;
  Provenance provenance_ = Provenance::original;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<std::size_t> class_counts_;
};

// Inflated collected data concatenated with synthetic data, then shuffled.
struct HybridDataset {
  Dataset data;
  double alpha = 0.0;              // N|Dc| / (N|Dc| + |Ds|)
  std::size_t inflation = 1;       // N
  std::size_t collected_size = 0;  // |Dc| before inflation
  std::size_t synthetic_size = 0;  // |Ds|
  std::uint64_t shuffle_seed = 0;
};

struct GaussianMixtureSpec {
  std::size_t num_classes = 4;
  std::vector<std::size_t> per_class;    // examples per class
  std::vector<std::vector<double>> means;  // num_classes x dim
  double covariance_scale = 1.0;         // isotropic variance
};

// Class means evenly spaced on a circle of radius spread*sqrt(2) starting at
// 45 degrees; for four classes in 2-D these are the corners (+-spread, +-spread).
std::vector<std::vector<double>> default_means(std::size_t num_classes, std::size_t dim,
                                               double spread);

Dataset make_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Per-class split; round(test_fraction * count_c) examples of class c go to test.
TrainTestSplit stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed);

// Allocation of `total` units proportional to `weights` by largest remainder.
// Ties in the remainder go to the lower index.
std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total);

// Weights ratio^(C-1-c): a long tail where each class has 1/ratio of the previous.
std::vector<double> geometric_profile(std::size_t num_classes, double ratio);

// round(rho * |original|) examples, allotted to classes by largest remainder
// over `weights` and drawn without replacement within each class.
Dataset sample_collected(const Dataset& original, double rho, std::span<const double> weights,
                         std::uint64_t seed);

// N contiguous copies of the collected sequence.
Dataset inflate(const Dataset& collected, std::size_t factor);

// floor(|Ds| / |Dc|), at least 1.
std::size_t default_inflation(std::size_t synthetic_size, std::size_t collected_size);

double mix_proportion(std::size_t inflation, std::size_t collected_size,
                      std::size_t synthetic_size);

// `inflated` must hold N copies of the collected data.
HybridDataset mix(const Dataset& inflated, const Dataset& synthetic, std::size_t inflation,
                  std::uint64_t seed);

// CSV with header `y,x0,x1,...` and 17-significant-digit floats.
void write_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes, Provenance provenance);

// FNV-1a over labels and feature bit patterns.
std::uint64_t dataset_checksum(const Dataset& data);

}  // namespace hidfd

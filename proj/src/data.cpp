#include "hidfd/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hidfd/errors.hpp"
#include "hidfd/kvfile.hpp"
#include "hidfd/rng.hpp"

namespace hidfd {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::original:
      return "original";
    case Provenance::collected:
      return "collected";
    case Provenance::synthetic:
      return "synthetic";
    case Provenance::hybrid:
      return "hybrid";
  }
  return "original";
}

Dataset::Dataset(std::size_t dim, std::size_t num_classes, Provenance provenance,
                 std::vector<double> features, std::vector<int> labels)
    : dim_(dim),
      num_classes_(num_classes),
      provenance_(provenance),
      features_(std::move(features)),
      labels_(std::move(labels)),
      class_counts_(num_classes, 0) {
  if (dim_ == 0) throw DimensionError("dataset", "feature dimension must be positive");
  if (features_.size() != labels_.size() * dim_) {
    throw DimensionError("dataset", std::to_string(features_.size()) + " feature values for " +
                                        std::to_string(labels_.size()) + " examples of width " +
                                        std::to_string(dim_));
  }
  for (int y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes_) {
      throw DomainError("dataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes_) + ")");
    }
    ++class_counts_[static_cast<std::size_t>(y)];
  }
}

Tensor Dataset::features_tensor() const {
  if (empty()) throw DomainError("dataset: no examples");
  return Tensor({size(), dim_}, features_);
}

Tensor Dataset::features_tensor(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DomainError("dataset: empty batch");
  Tensor out({indices.size(), dim_});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = features(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::vector<int> Dataset::labels_at(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels_[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices, Provenance provenance) const {
  std::vector<double> f;
  std::vector<int> y;
  f.reserve(indices.size() * dim_);
  y.reserve(indices.size());
  for (std::size_t i : indices) {
    auto src = features(i);
    f.insert(f.end(), src.begin(), src.end());
    y.push_back(labels_[i]);
  }
  return Dataset(dim_, num_classes_, provenance, std::move(f), std::move(y));
}

Dataset Dataset::with_provenance(Provenance p) const {
  Dataset out = *this;
  out.provenance_ = p;
  return out;
}

std::vector<std::vector<double>> default_means(std::size_t num_classes, std::size_t dim,
                                               double spread) {
  if (dim < 2) throw ConfigError("default_means: need at least two dimensions");
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  const double radius = spread * std::numbers::sqrt2;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = std::numbers::pi / 4.0 +
                         2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(num_classes);
    means[c][0] = radius * std::cos(angle);
    means[c][1] = radius * std::sin(angle);
  }
  return means;
}

Dataset make_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2) throw ConfigError("gaussian mixture: need at least two classes");
  if (spec.per_class.size() != spec.num_classes || spec.means.size() != spec.num_classes) {
    throw ConfigError("gaussian mixture: per_class and means must have one entry per class");
  }
  if (!(spec.covariance_scale > 0.0)) {
    throw ConfigError("gaussian mixture: covariance_scale must be positive");
  }
  const std::size_t dim = spec.means.front().size();
  for (const auto& m : spec.means) {
    if (m.size() != dim || dim == 0) throw ConfigError("gaussian mixture: ragged means");
  }
  for (std::size_t n : spec.per_class) {
    if (n == 0) throw ConfigError("gaussian mixture: class counts must be positive");
  }
  Rng rng(seed);
  const double sd = std::sqrt(spec.covariance_scale);
  std::vector<double> f;
  std::vector<int> y;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class[c]; ++i) {
      for (std::size_t d = 0; d < dim; ++d) f.push_back(spec.means[c][d] + sd * rng.normal());
      y.push_back(static_cast<int>(c));
    }
  }
  Dataset ordered(dim, spec.num_classes, Provenance::original, std::move(f), std::move(y));
  std::vector<std::size_t> perm(ordered.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  return ordered.subset(perm, Provenance::original);
}

TrainTestSplit stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("split: test_fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < data.num_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (static_cast<std::size_t>(data.label(i)) == c) members.push_back(i);
    }
    rng.shuffle(members);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(members.size())));
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + n_test);
    train_idx.insert(train_idx.end(), members.begin() + n_test, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.subset(train_idx, data.provenance()), data.subset(test_idx, data.provenance())};
}

std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("class weights must be nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw ConfigError("class weights must not all be zero");
  std::vector<std::size_t> alloc(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double quota = static_cast<double>(total) * weights[c] / sum;
    alloc[c] = static_cast<std::size_t>(std::floor(quota));
    assigned += alloc[c];
    rem.emplace_back(quota - std::floor(quota), c);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++alloc[rem[k % rem.size()].second];
  return alloc;
}

std::vector<double> geometric_profile(std::size_t num_classes, double ratio) {
  if (!(ratio > 0.0)) throw ConfigError("imbalance ratio must be positive");
  std::vector<double> w(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    w[c] = std::pow(ratio, static_cast<double>(num_classes - 1 - c));
  }
  return w;
}

Dataset sample_collected(const Dataset& original, double rho, std::span<const double> weights,
                         std::uint64_t seed) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
  if (weights.size() != original.num_classes()) {
    throw ConfigError("imbalance profile needs one weight per class");
  }
  const auto total =
      static_cast<std::size_t>(std::llround(rho * static_cast<double>(original.size())));
  const auto alloc = largest_remainder(weights, total);
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < alloc.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < original.size(); ++i) {
      if (static_cast<std::size_t>(original.label(i)) == c) members.push_back(i);
    }
    if (alloc[c] > members.size()) {
      throw DomainError("sample_collected: class " + std::to_string(c) + " needs " +
                        std::to_string(alloc[c]) + " examples but holds " +
                        std::to_string(members.size()));
    }
    // Partial Fisher-Yates: the first alloc[c] slots are a uniform sample.
    for (std::size_t k = 0; k < alloc[c]; ++k) {
      std::swap(members[k], members[k + rng.below(members.size() - k)]);
    }
    chosen.insert(chosen.end(), members.begin(), members.begin() + alloc[c]);
  }
  std::sort(chosen.begin(), chosen.end());
  return original.subset(chosen, Provenance::collected);
}

Dataset inflate(const Dataset& collected, std::size_t factor) {
  if (factor == 0) throw ConfigError("inflate: factor must be at least 1");
  std::vector<std::size_t> idx;
  idx.reserve(collected.size() * factor);
  for (std::size_t k = 0; k < factor; ++k) {
    for (std::size_t i = 0; i < collected.size(); ++i) idx.push_back(i);
  }
  return collected.subset(idx, collected.provenance());
}

std::size_t default_inflation(std::size_t synthetic_size, std::size_t collected_size) {
  if (collected_size == 0) throw DomainError("default_inflation: collected data is empty");
  return std::max<std::size_t>(1, synthetic_size / collected_size);
}

double mix_proportion(std::size_t inflation, std::size_t collected_size,
                      std::size_t synthetic_size) {
  const double n = static_cast<double>(inflation) * static_cast<double>(collected_size);
  return n / (n + static_cast<double>(synthetic_size));
}

HybridDataset mix(const Dataset& inflated, const Dataset& synthetic, std::size_t inflation,
                  std::uint64_t seed) {
  if (synthetic.empty()) throw DomainError("mix: synthetic data is empty");
  if (inflated.empty()) throw DomainError("mix: collected data is empty");
  if (inflated.dim() != synthetic.dim() || inflated.num_classes() != synthetic.num_classes()) {
    throw DimensionError("mix", "collected and synthetic data disagree on dimension or classes");
  }
  if (inflation == 0 || inflated.size() % inflation != 0) {
    throw ConfigError("mix: inflated size is not a multiple of the inflation factor");
  }
  std::vector<double> f = inflated.flat_features();
  f.insert(f.end(), synthetic.flat_features().begin(), synthetic.flat_features().end());
  std::vector<int> y = inflated.labels();
  y.insert(y.end(), synthetic.labels().begin(), synthetic.labels().end());
  Dataset joined(inflated.dim(), inflated.num_classes(), Provenance::hybrid, std::move(f),
                 std::move(y));
  std::vector<std::size_t> perm(joined.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  HybridDataset out;
  out.data = joined.subset(perm, Provenance::hybrid);
  out.inflation = inflation;
  out.collected_size = inflated.size() / inflation;
  out.synthetic_size = synthetic.size();
  out.alpha = mix_proportion(inflation, out.collected_size, out.synthetic_size);
  out.shuffle_seed = seed;
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream os;
  os << "y";
  for (std::size_t d = 0; d < data.dim(); ++d) os << ",x" << d;
  os << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.label(i);
    for (double v : data.features(i)) os << "," << format_double(v);
    os << "\n";
  }
  write_text_file(path, os.str());
}

Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes,
                 Provenance provenance) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty CSV");
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "y") {
    throw ConfigError(path.string() + ": expected header y,x0,...");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t d = 0; d < dim; ++d) {
    if (header[d + 1] != "x" + std::to_string(d)) {
      throw ConfigError(path.string() + ": unexpected column " + header[d + 1]);
    }
  }
  std::vector<double> f;
  std::vector<int> y;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != dim + 1) throw ConfigError(where + ": wrong number of columns");
    y.push_back(static_cast<int>(parse_u64(cells[0], where)));
    for (std::size_t d = 0; d < dim; ++d) f.push_back(parse_double(cells[d + 1], where));
  }
  return Dataset(dim, num_classes, provenance, std::move(f), std::move(y));
}

std::uint64_t dataset_checksum(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bits = [&h](std::uint64_t bits) {
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    mix_bits(static_cast<std::uint64_t>(data.label(i)));
    for (double v : data.features(i)) mix_bits(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace hidfd

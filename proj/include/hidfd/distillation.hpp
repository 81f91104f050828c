#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hidfd/data.hpp"
#include "hidfd/models.hpp"
#include "hidfd/optim.hpp"

namespace hidfd {

// Step decay: initial * factor^k after the k-th milestone. Milestones are
// fractions of the configured epoch count (150/240, 180/240, 210/240 by
// default), rounded down to whole epochs.
struct LrSchedule {
  double initial = 0.05;
  double factor = 0.1;
  std::vector<double> milestone_fractions{150.0 / 240.0, 180.0 / 240.0, 210.0 / 240.0};

  std::vector<std::size_t> milestones(std::size_t epochs) const;
  double lr_at(std::size_t epoch, std::size_t epochs) const;
  void validate(std::size_t epochs) const;  // milestones strictly increasing
};

struct DistillConfig {
  std::size_t inflation = 0;  // 0 selects floor(|Ds| / |Dc|)
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 240;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

// Student sharing the teacher head: phi widths {in, hidden..., teacher feature_dim}.
Classifier make_student(const Classifier& teacher, const std::vector<std::size_t>& hidden,
                        Rng& rng);

// Mean ||phi_S(x) - phi_T(x)|| over the batch; gradients reach the student only.
Var loss_align(Tape& tape, const FeatureNetwork& teacher, FeatureNetwork& student, Var x);

struct DistillEpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double align = 0.0;
  double accuracy = 0.0;     // on the held-out test split
  double feature_gap = 0.0;  // mean ||phi_S - phi_T|| on the test split
};

struct StudentResult {
  Classifier student;
  std::vector<DistillEpochMetrics> metrics;
};

using DistillEpochCallback = std::function<void(const DistillEpochMetrics&)>;

// Feature alignment on the hybrid data. Labels of the hybrid set are never
// read; the student head must be a frozen shared head.
StudentResult train_student(const DistillConfig& config, const Classifier& teacher,
                            Classifier student, const HybridDataset& hybrid,
                            const Dataset& test, const DistillEpochCallback& on_epoch = {});

struct ClassifierEpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
};

using ClassifierEpochCallback = std::function<void(const ClassifierEpochMetrics&)>;

// Cross-entropy training of every trainable parameter with the SGD schedule.
// Used for teacher pretraining and the collected-only baseline.
Classifier train_cross_entropy(const DistillConfig& config, Classifier net, const Dataset& train,
                               const Dataset& test, const ClassifierEpochCallback& on_epoch = {},
                               const char* phase = "train_cross_entropy");

// Fraction of argmax predictions equal to the label. DomainError when empty.
double evaluate(const Classifier& net, const Dataset& test);

struct TvdRecord {
  std::size_t bins = 16;
  std::vector<double> lower;  // grid bounding box
  std::vector<double> upper;
  double tvd_pq = 0.0;  // collected vs synthetic
  double tvd_up = 0.0;  // hybrid vs collected
  double tvd_uq = 0.0;  // hybrid vs synthetic
  double alpha = 0.0;
  double bound_slack = 0.0;          // (2 - alpha) TVD(P,Q) - TVD(U,Q)
  double identity_residual = 0.0;    // |TVD(U,P) - (1 - alpha) TVD(Q,P)|
};

// Histogram distributions on a common `bins`-per-axis grid spanning all three sets.
TvdRecord tvd_report(const Dataset& collected, const Dataset& synthetic,
                     const HybridDataset& hybrid, std::size_t bins = 16);

}  // namespace hidfd

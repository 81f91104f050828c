#include "hidfd/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hidfd/errors.hpp"
#include "hidfd/ops.hpp"
#include "hidfd/theory.hpp"

namespace hidfd {

std::vector<std::size_t> LrSchedule::milestones(std::size_t epochs) const {
  std::vector<std::size_t> out;
  for (double f : milestone_fractions) {
    out.push_back(static_cast<std::size_t>(std::floor(f * static_cast<double>(epochs) + 1e-9)));
  }
  return out;
}

double LrSchedule::lr_at(std::size_t epoch, std::size_t epochs) const {
  double lr = initial;
  for (std::size_t m : milestones(epochs)) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

void LrSchedule::validate(std::size_t epochs) const {
  if (!(initial > 0.0)) throw ConfigError("initial learning rate must be positive");
  const auto ms = milestones(epochs);
  for (std::size_t i = 1; i < ms.size(); ++i) {
    if (ms[i] <= ms[i - 1]) {
      throw ConfigError("learning-rate milestones must be strictly increasing for " +
                        std::to_string(epochs) + " epochs");
    }
  }
}

void DistillConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  schedule.validate(epochs);
}

Classifier make_student(const Classifier& teacher, const std::vector<std::size_t>& hidden,
                        Rng& rng) {
  std::vector<std::size_t> widths{teacher.phi.in_dim()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(teacher.phi.feature_dim());
  std::vector<Activation> acts(widths.size() - 1, Activation::relu);
  FeatureNetwork phi("student", std::move(widths), std::move(acts), rng);
  return Classifier(std::move(phi), share_classifier(teacher.head, teacher.phi.feature_dim()));
}

Var loss_align(Tape& tape, const FeatureNetwork& teacher, FeatureNetwork& student, Var x) {
  if (teacher.feature_dim() != student.feature_dim()) {
    throw DimensionError("loss_align", "student feature_dim " +
                                           std::to_string(student.feature_dim()) +
                                           " vs teacher " + std::to_string(teacher.feature_dim()));
  }
  return ops::mean(
      ops::l2_distance(student.forward(tape, x, Grad::track), teacher.forward_frozen(tape, x)));
}

namespace {

double mean_feature_gap(const FeatureNetwork& teacher, const FeatureNetwork& student,
                        const Tensor& x) {
  const Tensor ft = teacher.infer(x);
  const Tensor fs = student.infer(x);
  double total = 0.0;
  for (std::size_t r = 0; r < ft.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < ft.cols(); ++c) s += (fs(r, c) - ft(r, c)) * (fs(r, c) - ft(r, c));
    total += std::sqrt(s);
  }
  return total / static_cast<double>(ft.rows());
}

void guard(double v, const char* phase, std::size_t epoch) {
  if (!std::isfinite(v) || std::abs(v) > 1e6) {
    throw DivergenceError(phase, epoch, "loss = " + std::to_string(v));
  }
}

}  // namespace

StudentResult train_student(const DistillConfig& config, const Classifier& teacher,
                            Classifier student, const HybridDataset& hybrid, const Dataset& test,
                            const DistillEpochCallback& on_epoch) {
  config.validate();
  if (hybrid.data.empty()) throw DomainError("train_student: hybrid data is empty");
  if (!student.head.frozen()) {
    throw ConfigError("train_student: student head must be the frozen shared teacher head");
  }
  if (student.phi.in_dim() != hybrid.data.dim()) {
    throw DimensionError("train_student", "student input width differs from data width");
  }

  Rng rng(config.seed);
  Sgd opt(student.trainable_parameters(),
          {config.schedule.initial, config.momentum, config.weight_decay});
  const Tensor test_x = test.features_tensor();
  std::vector<std::size_t> order(hybrid.data.size());
  std::iota(order.begin(), order.end(), 0);

  StudentResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.lr_at(epoch, config.epochs);
    opt.set_lr(lr);
    rng.shuffle(order);
    double align_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Tape tape;
      Var loss = loss_align(tape, teacher.phi, student.phi,
                            tape.constant(hybrid.data.features_tensor(idx)));
      const double v = loss.value().item();
      guard(v, "train_student", epoch);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      align_sum += v;
      ++steps;
    }
    DistillEpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.align = align_sum / static_cast<double>(steps);
    m.accuracy = evaluate(student, test);
    m.feature_gap = mean_feature_gap(teacher.phi, student.phi, test_x);
    if (on_epoch) on_epoch(m);
    result.metrics.push_back(m);
  }
  result.student = std::move(student);
  return result;
}

Classifier train_cross_entropy(const DistillConfig& config, Classifier net, const Dataset& train,
                               const Dataset& test, const ClassifierEpochCallback& on_epoch,
                               const char* phase) {
  config.validate();
  if (train.empty()) throw DomainError(std::string(phase) + ": training data is empty");
  Rng rng(config.seed);
  Sgd opt(net.trainable_parameters(),
          {config.schedule.initial, config.momentum, config.weight_decay});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.lr_at(epoch, config.epochs);
    opt.set_lr(lr);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Tape tape;
      const std::vector<int> y = train.labels_at(idx);
      Var logits = net.logits(tape, tape.constant(train.features_tensor(idx)), Grad::track);
      Var loss = ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), y)), -1.0);
      const double v = loss.value().item();
      guard(v, phase, epoch);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += v;
      ++steps;
    }
    if (on_epoch) {
      on_epoch({epoch, lr, loss_sum / static_cast<double>(steps),
                test.empty() ? 0.0 : evaluate(net, test)});
    }
  }
  return net;
}

double evaluate(const Classifier& net, const Dataset& test) {
  if (test.empty()) throw DomainError("evaluate: empty test set");
  const std::vector<int> pred = net.predict(test.features_tensor());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.label(i) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

namespace {

struct Grid {
  std::size_t bins;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t cells() const {
    std::size_t n = 1;
    for (std::size_t d = 0; d < lower.size(); ++d) n *= bins;
    return n;
  }

  std::size_t cell(std::span<const double> x) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < lower.size(); ++d) {
      const double width = upper[d] - lower[d];
      std::size_t b = 0;
      if (width > 0.0) {
        const double t = (x[d] - lower[d]) / width * static_cast<double>(bins);
        b = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, std::floor(t))));
      }
      idx = idx * bins + b;
    }
    return idx;
  }

  std::vector<double> histogram(const Dataset& data) const {
    std::vector<double> h(cells(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) h[cell(data.features(i))] += 1.0;
    for (double& v : h) v /= static_cast<double>(data.size());
    return h;
  }
};

}  // namespace

TvdRecord tvd_report(const Dataset& collected, const Dataset& synthetic,
                     const HybridDataset& hybrid, std::size_t bins) {
  if (collected.empty() || synthetic.empty() || hybrid.data.empty()) {
    throw DomainError("tvd_report: empty dataset");
  }
  if (bins == 0) throw ConfigError("tvd_report: bins must be positive");
  const std::size_t dim = collected.dim();
  if (synthetic.dim() != dim || hybrid.data.dim() != dim) {
    throw DimensionError("tvd_report", "datasets disagree on dimension");
  }
  Grid grid{bins, std::vector<double>(dim, INFINITY), std::vector<double>(dim, -INFINITY)};
  for (const Dataset* ds : {&collected, &synthetic, &hybrid.data}) {
    for (std::size_t i = 0; i < ds->size(); ++i) {
      auto x = ds->features(i);
      for (std::size_t d = 0; d < dim; ++d) {
        grid.lower[d] = std::min(grid.lower[d], x[d]);
        grid.upper[d] = std::max(grid.upper[d], x[d]);
      }
    }
  }
  const auto p = grid.histogram(collected);
  const auto q = grid.histogram(synthetic);
  const auto u = grid.histogram(hybrid.data);

  TvdRecord r;
  r.bins = bins;
  r.lower = grid.lower;
  r.upper = grid.upper;
  r.alpha = hybrid.alpha;
  r.tvd_pq = theory::tvd(p, q);
  r.tvd_up = theory::tvd(u, p);
  r.tvd_uq = theory::tvd(u, q);
  r.bound_slack = (2.0 - r.alpha) * r.tvd_pq - r.tvd_uq;
  r.identity_residual = std::abs(r.tvd_up - (1.0 - r.alpha) * theory::tvd(q, p));
  return r;
}

}  // namespace hidfd

#include "hidfd/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hidfd/errors.hpp"
#include "hidfd/ops.hpp"
#include "hidfd/optim.hpp"

namespace hidfd {

// ---------------------------------------------------------------- frequency tracker

ClassFrequencyTracker::ClassFrequencyTracker(std::size_t num_classes, double gamma,
                                             double initial)
    : n_(num_classes, initial), gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(initial >= 0.0)) throw ConfigError("initial class frequency must be nonnegative");
}

void ClassFrequencyTracker::update(std::span<const double> counts) {
  if (counts.size() != n_.size()) {
    throw DimensionError("update_frequency", std::to_string(counts.size()) + " counts for " +
                                                 std::to_string(n_.size()) + " classes");
  }
  for (std::size_t c = 0; c < n_.size(); ++c) {
    n_[c] = (1.0 - gamma_) * n_[c] + gamma_ * counts[c];
  }
  ++t_;
}

void ClassFrequencyTracker::update_from_labels(std::span<const int> labels) {
  update(count_labels(labels, n_.size()));
}

std::vector<double> ClassFrequencyTracker::normalized() const {
  double total = 0.0;
  for (double v : n_) total += v;
  if (!(total > 0.0)) throw DomainError("normalized_frequencies: all class frequencies are zero");
  std::vector<double> out(n_.size());
  for (std::size_t c = 0; c < n_.size(); ++c) out[c] = n_[c] / total;
  return out;
}

std::vector<double> count_labels(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("count_labels: label out of range");
    }
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  return counts;
}

void GanTrainConfig::validate() const {
  if (lambda_d < 0.0 || lambda_g < 0.0) throw ConfigError("lambda_d and lambda_g must be >= 0");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("q must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("GAN learning rates must be positive");
  if (batch_size == 0) throw ConfigError("gan batch_size must be positive");
  if (eval_per_class == 0) throw ConfigError("eval_per_class must be positive");
}

// ---------------------------------------------------------------- loss terms

Var adc_joint_log_probs(Var class_logits) { return ops::log_softmax(class_logits); }

namespace {

std::vector<int> shifted(std::span<const int> labels, int offset) {
  std::vector<int> out(labels.begin(), labels.end());
  for (int& y : out) y += offset;
  return out;
}

void require_nonempty(std::span<const int> labels, const char* op) {
  if (labels.empty()) throw DomainError(std::string(op) + ": empty batch");
}

void check_divergence(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v) || std::abs(v) > 1e6) {
    throw DivergenceError("train_gan", epoch, std::string(what) + " = " + std::to_string(v));
  }
}

}  // namespace

AdcDTerms adc_d_terms(const AdcDiscriminator::Outputs& real, std::span<const int> real_labels,
                      const AdcDiscriminator::Outputs& fake, std::span<const int> fake_labels) {
  require_nonempty(real_labels, "loss_adc_d");
  require_nonempty(fake_labels, "loss_adc_d");
  const int classes = static_cast<int>(real.class_logits.value().cols() / 2);
  Var adv = ops::add(ops::mean(ops::softplus(ops::scale(real.adv_logit, -1.0))),
                     ops::mean(ops::softplus(fake.adv_logit)));
  Var lp_real = ops::pick(adc_joint_log_probs(real.class_logits), real_labels);
  Var lp_fake = ops::pick(adc_joint_log_probs(fake.class_logits), shifted(fake_labels, classes));
  Var cls = ops::scale(ops::add(ops::mean(lp_real), ops::mean(lp_fake)), -1.0);
  return {adv, cls, ops::add(adv, cls)};
}

AdcGTerms adc_g_terms(const AdcDiscriminator::Outputs& fake, std::span<const int> fake_labels) {
  require_nonempty(fake_labels, "loss_adc_g");
  const int classes = static_cast<int>(fake.class_logits.value().cols() / 2);
  // log(1 - sigmoid(s)) = log sigmoid(-s)
  Var adv = ops::mean(ops::log_sigmoid(ops::scale(fake.adv_logit, -1.0)));
  Var lp = adc_joint_log_probs(fake.class_logits);
  Var lp_pos = ops::mean(ops::pick(lp, fake_labels));
  Var lp_neg = ops::mean(ops::pick(lp, shifted(fake_labels, classes)));
  Var cls = ops::sub(lp_neg, lp_pos);
  return {adv, cls, ops::add(adv, cls)};
}

Var loss_adc_d(Tape& tape, AdcDiscriminator& d, Var real, std::span<const int> real_labels,
               Var fake, std::span<const int> fake_labels) {
  const auto r = d.forward(tape, real, Grad::track);
  const auto f = d.forward(tape, fake, Grad::track);
  return adc_d_terms(r, real_labels, f, fake_labels).total;
}

Var loss_adc_g(Tape& tape, const AdcDiscriminator& d, Var fake,
               std::span<const int> fake_labels) {
  return adc_g_terms(d.forward_frozen(tape, fake), fake_labels).total;
}

bool blend_gate(double p, double q, bool invert) { return invert ? p < q : p > q; }

Var blend_from_features(Var teacher_real, Var teacher_fake, Var disc_real, Var disc_fake) {
  return ops::mean(ops::add(ops::l2_distance(teacher_real, disc_fake),
                            ops::l2_distance(teacher_fake, disc_real)));
}

Var trans_from_features(Var teacher_real, Var teacher_fake, Var disc_real, Var disc_fake) {
  return ops::mean(ops::add(ops::l2_distance(teacher_real, disc_real),
                            ops::l2_distance(teacher_fake, disc_fake)));
}

Var loss_blend(Tape& tape, const FeatureNetwork& teacher, AdcDiscriminator& d, Var real, Var fake,
               double p, double q, bool invert_gate) {
  if (real.value().rows() != fake.value().rows()) {
    throw DimensionError("loss_blend", "real batch of " + std::to_string(real.value().rows()) +
                                           " paired with fake batch of " +
                                           std::to_string(fake.value().rows()));
  }
  if (!blend_gate(p, q, invert_gate)) return tape.constant(Tensor::scalar(0.0));
  return blend_from_features(teacher.forward_frozen(tape, real), teacher.forward_frozen(tape, fake),
                             d.phi.forward(tape, real, Grad::track),
                             d.phi.forward(tape, fake, Grad::track));
}

Var loss_trans(Tape& tape, const FeatureNetwork& teacher, AdcDiscriminator& d, Var real,
               Var fake) {
  return trans_from_features(teacher.forward_frozen(tape, real), teacher.forward_frozen(tape, fake),
                             d.phi.forward(tape, real, Grad::track),
                             d.phi.forward(tape, fake, Grad::track));
}

Var loss_reg(Tape& tape, const Classifier& teacher, Var fake, std::span<const double> n_hat,
             double floor) {
  if (fake.value().rows() == 0) throw DomainError("loss_reg: empty batch");
  if (n_hat.size() != teacher.head.num_classes()) {
    throw DimensionError("loss_reg", "frequency vector does not match class count");
  }
  Tensor inv({1, n_hat.size()});
  for (std::size_t c = 0; c < n_hat.size(); ++c) inv[c] = 1.0 / std::max(n_hat[c], floor);
  Var p = ops::mean_rows(ops::softmax(teacher.logits_frozen(tape, fake)));
  return ops::sum(ops::mul(ops::mul(p, ops::log(p)), tape.constant(std::move(inv))));
}

double lg_gradient_norm(ConditionalGenerator& g, const AdcDiscriminator& d, const Tensor& z,
                        std::span<const int> labels) {
  for (Parameter* p : g.parameters()) p->zero_grad();
  Tape tape;
  Var fake = g.forward(tape, tape.constant(z), labels, Grad::track);
  Var lg = ops::mean(ops::log_sigmoid(ops::scale(d.forward_frozen(tape, fake).adv_logit, -1.0)));
  tape.backward(lg);
  double sq = 0.0;
  for (Parameter* p : g.parameters()) {
    for (double v : p->grad.data()) sq += v * v;
    p->zero_grad();
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------- training

namespace {

std::vector<std::size_t> with_output(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  return widths;
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

ConditionalGenerator make_generator(const GanArchitecture& arch, Rng& rng) {
  auto widths = with_output(arch.z_dim + arch.embed_dim, arch.generator_hidden, arch.data_dim);
  std::vector<Activation> acts(widths.size() - 1, Activation::relu);
  acts.back() = Activation::identity;
  Tensor embedding = glorot_uniform(arch.num_classes, arch.embed_dim, rng);
  FeatureNetwork body("gen", std::move(widths), std::move(acts), rng);
  ConditionalGenerator g(arch.num_classes, arch.z_dim, arch.embed_dim, std::move(body));
  g.embedding.value = std::move(embedding);
  return g;
}

AdcDiscriminator make_discriminator(const GanArchitecture& arch, Rng& rng) {
  auto widths = with_output(arch.data_dim, arch.discriminator_hidden, arch.feature_dim);
  std::vector<Activation> acts(widths.size() - 1, Activation::relu);
  FeatureNetwork phi("disc", std::move(widths), std::move(acts), rng);
  return AdcDiscriminator(std::move(phi), arch.num_classes, rng);
}

std::vector<double> class_histogram(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> h = count_labels(labels, num_classes);
  if (labels.empty()) return h;
  for (double& v : h) v /= static_cast<double>(labels.size());
  return h;
}

double entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

GanResult train_gan(const GanTrainConfig& config, const Classifier& teacher,
                    const Dataset& collected, ConditionalGenerator generator,
                    AdcDiscriminator discriminator, const GanEpochCallback& on_epoch) {
  config.validate();
  if (collected.empty()) throw DomainError("train_gan: collected data is empty");
  const std::size_t classes = collected.num_classes();
  if (teacher.head.num_classes() != classes || generator.num_classes() != classes ||
      discriminator.num_classes() != classes) {
    throw ConfigError("train_gan: networks and data disagree on the number of classes");
  }
  if (teacher.phi.feature_dim() != discriminator.phi.feature_dim()) {
    throw ConfigError("train_gan: teacher and discriminator feature widths differ");
  }
  if (generator.data_dim() != collected.dim()) {
    throw ConfigError("train_gan: generator output width differs from data width");
  }

  Rng rng(config.seed);
  Rng eval_rng(derive_seed(config.seed, "gan-eval"));
  std::vector<int> eval_labels;
  for (std::size_t c = 0; c < classes; ++c) {
    eval_labels.insert(eval_labels.end(), config.eval_per_class, static_cast<int>(c));
  }
  const Tensor eval_z = normal_tensor(eval_labels.size(), generator.z_dim(), eval_rng);

  Adam opt_d(discriminator.parameters(), {config.lr_d, config.beta1, config.beta2, 1e-8});
  Adam opt_g(generator.parameters(), {config.lr_g, config.beta1, config.beta2, 1e-8});

  const double initial = config.initial_frequency > 0.0
                             ? config.initial_frequency
                             : static_cast<double>(config.batch_size) / static_cast<double>(classes);
  ClassFrequencyTracker tracker(classes, config.gamma, initial);
  std::vector<double> previous_counts;

  std::vector<std::size_t> order(collected.size());
  std::iota(order.begin(), order.end(), 0);

  GanResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    GanEpochMetrics m;
    m.epoch = epoch;
    std::size_t steps = 0;
    std::size_t gate_on = 0;
    std::size_t real_seen = 0;
    std::size_t real_correct = 0;
    std::size_t fake_correct = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const std::size_t b = idx.size();
      const Tensor real_x = collected.features_tensor(idx);
      const std::vector<int> real_y = collected.labels_at(idx);
      const Tensor z = normal_tensor(b, generator.z_dim(), rng);
      std::vector<int> fake_y(b);
      for (int& y : fake_y) y = static_cast<int>(rng.below(classes));
      const double p = rng.uniform();
      const bool gate = blend_gate(p, config.q, config.invert_blend_gate);

      // Discriminator step on detached fakes.
      double adc_d_v = 0.0;
      double blend_v = 0.0;
      double trans_v = 0.0;
      double loss_d_v = 0.0;
      std::vector<int> fake_pred;
      {
        Tape tape;
        Var real = tape.constant(real_x);
        Var fake = tape.constant(generator.generate(z, fake_y));
        const auto out_r = discriminator.forward(tape, real, Grad::track);
        const auto out_f = discriminator.forward(tape, fake, Grad::track);
        const AdcDTerms adc = adc_d_terms(out_r, real_y, out_f, fake_y);
        Var total = adc.total;
        const bool use_blend = gate && !config.disable_blend;
        if (use_blend || !config.disable_trans) {
          Var t_real = teacher.phi.forward_frozen(tape, real);
          Var t_fake = teacher.phi.forward_frozen(tape, fake);
          Var integ = tape.constant(Tensor::scalar(0.0));
          if (use_blend) {
            Var bl = blend_from_features(t_real, t_fake, out_r.features, out_f.features);
            blend_v = bl.value().item();
            integ = ops::add(integ, bl);
          }
          if (!config.disable_trans) {
            Var tr = trans_from_features(t_real, t_fake, out_r.features, out_f.features);
            trans_v = tr.value().item();
            integ = ops::add(integ, tr);
          }
          if (config.lambda_d != 0.0) total = ops::add(total, ops::scale(integ, config.lambda_d));
        }
        adc_d_v = adc.total.value().item();
        loss_d_v = total.value().item();
        check_divergence(loss_d_v, "L_D", epoch);
        opt_d.zero_grad();
        tape.backward(total);
        opt_d.step();

        const Tensor& sr = out_r.adv_logit.value();
        const Tensor& sf = out_f.adv_logit.value();
        for (std::size_t i = 0; i < b; ++i) {
          real_correct += sr[i] > 0.0 ? 1 : 0;
          fake_correct += sf[i] < 0.0 ? 1 : 0;
        }
        real_seen += b;
        fake_pred = config.frequency_source == FrequencySource::teacher
                        ? teacher.predict(fake.value())
                        : fake_y;
      }

      // Class-frequency smoothing: n^t from the counts of iteration t-1.
      if (!previous_counts.empty()) tracker.update(previous_counts);
      previous_counts = count_labels(fake_pred, classes);
      const std::vector<double> n_hat = tracker.normalized();

      // Generator step through the (fixed) discriminator and teacher.
      double adc_g_v = 0.0;
      double reg_v = 0.0;
      double loss_g_v = 0.0;
      {
        Tape tape;
        Var fake = generator.forward(tape, tape.constant(z), fake_y, Grad::track);
        const AdcGTerms adc = adc_g_terms(discriminator.forward_frozen(tape, fake), fake_y);
        Var total = adc.total;
        if (!config.disable_reg) {
          Var reg = loss_reg(tape, teacher, fake, n_hat, config.frequency_floor);
          reg_v = reg.value().item();
          if (config.lambda_g != 0.0) total = ops::add(total, ops::scale(reg, config.lambda_g));
        }
        adc_g_v = adc.total.value().item();
        loss_g_v = total.value().item();
        check_divergence(loss_g_v, "L_G", epoch);
        opt_g.zero_grad();
        tape.backward(total);
        opt_g.step();
      }

      m.adc_d += adc_d_v;
      m.blend += blend_v;
      m.trans += trans_v;
      m.loss_d += loss_d_v;
      m.adc_g += adc_g_v;
      m.reg += reg_v;
      m.loss_g += loss_g_v;
      gate_on += gate ? 1 : 0;
      ++steps;
    }

    const double inv = 1.0 / static_cast<double>(steps);
    for (double* v : {&m.adc_d, &m.blend, &m.trans, &m.loss_d, &m.adc_g, &m.reg, &m.loss_g}) {
      *v *= inv;
    }
    m.blend_rate = static_cast<double>(gate_on) * inv;
    m.d_real_acc = static_cast<double>(real_correct) / static_cast<double>(real_seen);
    m.d_fake_acc = static_cast<double>(fake_correct) / static_cast<double>(real_seen);
    m.histogram = class_histogram(teacher.predict(generator.generate(eval_z, eval_labels)), classes);
    m.entropy = entropy(m.histogram);
    m.min_frequency = *std::min_element(m.histogram.begin(), m.histogram.end());
    m.tracker = tracker.normalized();
    if (on_epoch) on_epoch(m);
    result.metrics.push_back(std::move(m));
  }
  result.generator = std::move(generator);
  result.discriminator = std::move(discriminator);
  return result;
}

GanResult train_gan(const GanTrainConfig& config, const GanArchitecture& arch,
                    const Classifier& teacher, const Dataset& collected,
                    const GanEpochCallback& on_epoch) {
  Rng init(derive_seed(config.seed, "gan-init"));
  ConditionalGenerator g = make_generator(arch, init);
  AdcDiscriminator d = make_discriminator(arch, init);
  return train_gan(config, teacher, collected, std::move(g), std::move(d), on_epoch);
}

Dataset generate_synthetic(const ConditionalGenerator& generator,
                           std::span<const std::size_t> counts, std::uint64_t seed) {
  if (counts.size() != generator.num_classes()) {
    throw ConfigError("generate_synthetic: one count per class required");
  }
  Rng rng(seed);
  std::vector<double> features;
  std::vector<int> labels;
  constexpr std::size_t kChunk = 256;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t done = 0; done < counts[c]; done += kChunk) {
      const std::size_t n = std::min(kChunk, counts[c] - done);
      const Tensor z = normal_tensor(n, generator.z_dim(), rng);
      const std::vector<int> y(n, static_cast<int>(c));
      const Tensor x = generator.generate(z, y);
      features.insert(features.end(), x.data().begin(), x.data().end());
      labels.insert(labels.end(), y.begin(), y.end());
    }
  }
  return Dataset(generator.data_dim(), generator.num_classes(), Provenance::synthetic,
                 std::move(features), std::move(labels));
}

}  // namespace hidfd

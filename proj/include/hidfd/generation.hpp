#pragma once

// Teacher-guided conditional GAN training.
//
// Loss conventions (all are minimised):
//   adc_d   = softplus(-s(x)) + softplus(s(x^))           adversarial, -L_d
//             - log Psi(y+|x) - log Psi(y-|x^)             2C-way classifier NLL
//   adc_g   = log(1 - sigmoid(s(x^)))                      L_g
//             - log Psi(y+|x^) + log Psi(y-|x^)
//   blend   = I(p > q) * mean_i ||T(x_i) - D(x^_i)|| + ||T(x^_i) - D(x_i)||
//   trans   = mean_i ||T(x_i) - D(x_i)|| + ||T(x^_i) - D(x^_i)||
//   reg     = sum_c p_c log p_c / n^_c,  p = batch mean of teacher softmax
//   L_D = adc_d + lambda_d (blend + trans),  L_G = adc_g + lambda_g reg
// where s is the discriminator score logit, T / D the teacher / discriminator
// feature extractors, x real and x^ generated examples. Real and fake batches
// are paired by index.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hidfd/data.hpp"
#include "hidfd/models.hpp"
#include "hidfd/tape.hpp"

namespace hidfd {

// Exponential moving average of generated-class counts:
//   n_c <- (1 - gamma) n_c + gamma * count_c
class ClassFrequencyTracker {
 public:
  ClassFrequencyTracker(std::size_t num_classes, double gamma, double initial);

  void update(std::span<const double> counts);
  void update_from_labels(std::span<const int> labels);
  // n_c / sum_j n_j; DomainError when every n_c is zero.
  std::vector<double> normalized() const;

  const std::vector<double>& values() const noexcept { return n_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t iterations() const noexcept { return t_; }

 private:
  std::vector<double> n_;
  double gamma_;
  std::size_t t_ = 0;
};

std::vector<double> count_labels(std::span<const int> labels, std::size_t num_classes);

enum class FrequencySource { teacher, conditioning };

struct GanTrainConfig {
  double lambda_d = 0.1;
  double lambda_g = 0.1;
  double q = 0.7;
  double gamma = 0.5;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // <= 0 selects batch_size / C.
  double initial_frequency = 0.0;
  double frequency_floor = 1e-6;
  FrequencySource frequency_source = FrequencySource::teacher;
  bool disable_blend = false;
  bool disable_trans = false;
  bool disable_reg = false;
  bool invert_blend_gate = false;
  // Fixed evaluation draw used for the per-epoch class histogram.
  std::size_t eval_per_class = 64;

  void validate() const;  // ConfigError
};

// --- loss terms ------------------------------------------------------------

// log-probabilities over the 2C joint (class, real/fake) labels.
Var adc_joint_log_probs(Var class_logits);

struct AdcDTerms {
  Var adversarial;     // -L_d
  Var classification;  // -E log Psi(y+|x) - E log Psi(y-|x^)
  Var total;
};

AdcDTerms adc_d_terms(const AdcDiscriminator::Outputs& real, std::span<const int> real_labels,
                      const AdcDiscriminator::Outputs& fake, std::span<const int> fake_labels);

struct AdcGTerms {
  Var adversarial;     // L_g
  Var classification;  // -E log Psi(y+|x^) + E log Psi(y-|x^)
  Var total;
};

AdcGTerms adc_g_terms(const AdcDiscriminator::Outputs& fake, std::span<const int> fake_labels);

// Full-network forms. Trainable side: `d` for the discriminator losses.
Var loss_adc_d(Tape& tape, AdcDiscriminator& d, Var real, std::span<const int> real_labels,
               Var fake, std::span<const int> fake_labels);
Var loss_adc_g(Tape& tape, const AdcDiscriminator& d, Var fake,
               std::span<const int> fake_labels);

bool blend_gate(double p, double q, bool invert);

// Feature-level forms; teacher features are expected to be constants.
Var blend_from_features(Var teacher_real, Var teacher_fake, Var disc_real, Var disc_fake);
Var trans_from_features(Var teacher_real, Var teacher_fake, Var disc_real, Var disc_fake);

// Exactly 0 (a recorded constant) when the gate is off. DimensionError if the
// real and fake batches differ in size.
Var loss_blend(Tape& tape, const FeatureNetwork& teacher, AdcDiscriminator& d, Var real, Var fake,
               double p, double q, bool invert_gate = false);
Var loss_trans(Tape& tape, const FeatureNetwork& teacher, AdcDiscriminator& d, Var real, Var fake);

// `fake` carries the generator graph; teacher parameters are constants.
Var loss_reg(Tape& tape, const Classifier& teacher, Var fake, std::span<const double> n_hat,
             double floor = 1e-6);

// ||grad_G L_g|| for one batch with the discriminator held fixed.
double lg_gradient_norm(ConditionalGenerator& g, const AdcDiscriminator& d, const Tensor& z,
                        std::span<const int> labels);

// --- training --------------------------------------------------------------

struct GanArchitecture {
  std::size_t data_dim = 2;
  std::size_t num_classes = 4;
  std::size_t z_dim = 8;
  std::size_t embed_dim = 8;
  std::vector<std::size_t> generator_hidden{64, 64};
  std::vector<std::size_t> discriminator_hidden{64};
  std::size_t feature_dim = 32;
};

ConditionalGenerator make_generator(const GanArchitecture& arch, Rng& rng);
AdcDiscriminator make_discriminator(const GanArchitecture& arch, Rng& rng);

struct GanEpochMetrics {
  std::size_t epoch = 0;
  double adc_d = 0.0;
  double blend = 0.0;
  double trans = 0.0;
  double loss_d = 0.0;
  double adc_g = 0.0;
  double reg = 0.0;
  double loss_g = 0.0;
  double blend_rate = 0.0;   // fraction of steps with the blend gate on
  double d_real_acc = 0.0;   // real examples scored > 0.5
  double d_fake_acc = 0.0;   // generated examples scored < 0.5
  std::vector<double> histogram;  // teacher-predicted class shares of the eval draw
  double entropy = 0.0;
  double min_frequency = 0.0;
  std::vector<double> tracker;  // normalised EMA frequencies
};

struct GanResult {
  ConditionalGenerator generator;
  AdcDiscriminator discriminator;
  std::vector<GanEpochMetrics> metrics;
};

using GanEpochCallback = std::function<void(const GanEpochMetrics&)>;

// Throws DivergenceError if a loss becomes non-finite or exceeds 1e6 in magnitude.
GanResult train_gan(const GanTrainConfig& config, const Classifier& teacher,
                    const Dataset& collected, ConditionalGenerator generator,
                    AdcDiscriminator discriminator, const GanEpochCallback& on_epoch = {});

GanResult train_gan(const GanTrainConfig& config, const GanArchitecture& arch,
                    const Classifier& teacher, const Dataset& collected,
                    const GanEpochCallback& on_epoch = {});

// counts[c] examples conditioned on label c, z ~ N(0, I) from `seed`.
Dataset generate_synthetic(const ConditionalGenerator& generator,
                           std::span<const std::size_t> counts, std::uint64_t seed);

// Shares of each class among `labels`, and their Shannon entropy (nats).
std::vector<double> class_histogram(std::span<const int> labels, std::size_t num_classes);
double entropy(std::span<const double> distribution);

}  // namespace hidfd

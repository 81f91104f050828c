#pragma once

// Fully connected networks used by the distillation pipeline: teacher and
// student classifiers (feature extractor + classifier head), the
// auxiliary-classifier discriminator, and the label-conditioned generator.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hidfd/rng.hpp"
#include "hidfd/tape.hpp"
#include "hidfd/tensor.hpp"

namespace hidfd {

enum class Activation { identity, relu, tanh };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

// Whether a forward pass records parameters as trainable leaves or constants.
enum class Grad { track, frozen };

Var apply_activation(Var x, Activation a);

// Glorot-uniform initialisation: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

class Linear {
 public:
  Linear(std::string name, std::size_t in, std::size_t out);  // zero-initialised
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng);

  Var forward(Tape& tape, Var x, Grad mode);
  Var forward_frozen(Tape& tape, Var x) const;

  std::size_t in_dim() const noexcept { return weight.value.rows(); }
  std::size_t out_dim() const noexcept { return weight.value.cols(); }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

// Feature extractor: a stack of affine layers, each followed by an activation.
class FeatureNetwork {
 public:
  FeatureNetwork() = default;
  // widths = {in, hidden..., out}; one activation per layer.
  FeatureNetwork(std::string name, std::vector<std::size_t> widths,
                 std::vector<Activation> activations);
  FeatureNetwork(std::string name, std::vector<std::size_t> widths,
                 std::vector<Activation> activations, Rng& rng);

  Var forward(Tape& tape, Var x, Grad mode);
  Var forward_frozen(Tape& tape, Var x) const;
  Tensor infer(const Tensor& x) const;

  std::size_t in_dim() const noexcept { return widths_.front(); }
  std::size_t feature_dim() const noexcept { return widths_.back(); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  const std::vector<Activation>& activations() const noexcept { return activations_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Linear>& layers() noexcept { return layers_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }

 private:
  void check_input(const Tensor& x) const;

  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
  std::vector<Linear> layers_;
};

// Linear classifier over features: logits = f * W (+ b).
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t feature_dim, std::size_t num_classes, bool with_bias);
  ClassifierHead(std::size_t feature_dim, std::size_t num_classes, bool with_bias, Rng& rng);

  Var logits(Tape& tape, Var features, Grad mode);
  Var logits_frozen(Tape& tape, Var features) const;

  std::size_t feature_dim() const noexcept { return weight.value.rows(); }
  std::size_t num_classes() const noexcept { return weight.value.cols(); }
  bool frozen() const noexcept { return frozen_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter weight;  // feature_dim x C
  std::optional<Parameter> bias;

 private:
  friend ClassifierHead share_classifier(const ClassifierHead&, std::size_t);
  friend class Classifier;
  bool frozen_ = false;
};

// Copy of the teacher head for a student with the given feature width. The
// copy is bit-identical and frozen: trainable_parameters() of a classifier
// holding it never includes it. Throws ConfigError on width mismatch.
ClassifierHead share_classifier(const ClassifierHead& teacher, std::size_t student_feature_dim);

// Network N = head(phi(x)); teacher, student and baselines.
class Classifier {
 public:
  Classifier() = default;
  Classifier(FeatureNetwork phi, ClassifierHead head);

  Var logits(Tape& tape, Var x, Grad mode);
  Var logits_frozen(Tape& tape, Var x) const;

  Tensor features(const Tensor& x) const { return phi.infer(x); }
  Tensor probabilities(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;

  // Parameters an optimizer may update (excludes a frozen head).
  std::vector<Parameter*> trainable_parameters();
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  void freeze_head() noexcept { head.frozen_ = true; }

  FeatureNetwork phi;
  ClassifierHead head;
};

// Discriminator with a shared feature extractor, a real/fake score head and a
// 2C-way classifier whose first C logits are (class, real) and last C are
// (class, fake). Class embeddings are columns of class_real / class_fake.
class AdcDiscriminator {
 public:
  struct Outputs {
    Var features;
    Var adv_logit;     // B x 1, sigmoid gives the probability of "real"
    Var class_logits;  // B x 2C
  };

  AdcDiscriminator() = default;
  AdcDiscriminator(FeatureNetwork phi, std::size_t num_classes);  // zero heads
  AdcDiscriminator(FeatureNetwork phi, std::size_t num_classes, Rng& rng);

  Outputs forward(Tape& tape, Var x, Grad mode);
  Outputs forward_frozen(Tape& tape, Var x) const;

  // Row-wise softmax over the 2C joint (class, real/fake) logits.
  Tensor class_probs(const Tensor& x) const;
  // sigmoid(adv_logit), in (0, 1).
  Tensor adv_scores(const Tensor& x) const;

  std::size_t num_classes() const noexcept { return class_real.value.cols(); }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  FeatureNetwork phi;
  Linear adv_head{"adv", 1, 1};
  Parameter class_real;  // feature_dim x C
  Parameter class_fake;  // feature_dim x C
};

// Generator G(z, y): label embedding concatenated to the noise, then an MLP.
class ConditionalGenerator {
 public:
  ConditionalGenerator() = default;
  ConditionalGenerator(std::size_t num_classes, std::size_t z_dim, std::size_t embed_dim,
                       FeatureNetwork body);  // zero embedding
  ConditionalGenerator(std::size_t num_classes, std::size_t z_dim, std::size_t embed_dim,
                       FeatureNetwork body, Rng& rng);

  // Throws DomainError when a label is outside [0, C).
  Var forward(Tape& tape, Var z, std::span<const int> labels, Grad mode);
  Var forward_frozen(Tape& tape, Var z, std::span<const int> labels) const;
  Tensor generate(const Tensor& z, std::span<const int> labels) const;

  std::size_t num_classes() const noexcept { return embedding.value.rows(); }
  std::size_t embed_dim() const noexcept { return embedding.value.cols(); }
  std::size_t z_dim() const noexcept { return z_dim_; }
  std::size_t data_dim() const noexcept { return body.feature_dim(); }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter embedding;  // C x e
  FeatureNetwork body;  // (z_dim + e) -> data_dim

 private:
  Tensor one_hot(std::span<const int> labels) const;
  std::size_t z_dim_ = 0;
};

}  // namespace hidfd

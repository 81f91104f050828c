#include "hidfd/models.hpp"

#include <cmath>

#include "hidfd/errors.hpp"
#include "hidfd/ops.hpp"

namespace hidfd {
namespace {

Var bind(Tape& tape, Parameter& p, Grad mode) {
  return mode == Grad::track ? tape.param(p) : tape.constant(p.value);
}

Var bind_frozen(Tape& tape, const Parameter& p) { return tape.constant(p.value); }


}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

Var apply_activation(Var x, Activation a) {
  switch (a) {
    case Activation::relu:
      return ops::relu(x);
    case Activation::tanh:
      return ops::tanh(x);
    case Activation::identity:
      break;
  }
  return x;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : weight(name + ".weight", Tensor({in, out})), bias(name + ".bias", Tensor({1, out})) {}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", glorot_uniform(in, out, rng)),
      bias(name + ".bias", Tensor({1, out})) {}

Var Linear::forward(Tape& tape, Var x, Grad mode) {
  return ops::add_bias(ops::matmul(x, bind(tape, weight, mode)), bind(tape, bias, mode));
}

Var Linear::forward_frozen(Tape& tape, Var x) const {
  return ops::add_bias(ops::matmul(x, bind_frozen(tape, weight)), bind_frozen(tape, bias));
}

// ---------------------------------------------------------------- FeatureNetwork

namespace {

void check_architecture(const std::vector<std::size_t>& widths,
                        const std::vector<Activation>& activations) {
  if (widths.size() < 2) throw ConfigError("feature network needs at least one layer");
  if (activations.size() != widths.size() - 1) {
    throw ConfigError("feature network: " + std::to_string(widths.size() - 1) + " layers but " +
                      std::to_string(activations.size()) + " activations");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("feature network: zero layer width");
  }
}

}  // namespace

FeatureNetwork::FeatureNetwork(std::string name, std::vector<std::size_t> widths,
                               std::vector<Activation> activations)
    : widths_(std::move(widths)), activations_(std::move(activations)) {
  check_architecture(widths_, activations_);
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), widths_[i], widths_[i + 1]);
  }
}

FeatureNetwork::FeatureNetwork(std::string name, std::vector<std::size_t> widths,
                               std::vector<Activation> activations, Rng& rng)
    : widths_(std::move(widths)), activations_(std::move(activations)) {
  check_architecture(widths_, activations_);
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), widths_[i], widths_[i + 1], rng);
  }
}

void FeatureNetwork::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_dim()) {
    throw DimensionError("forward_features", "expected input width " + std::to_string(in_dim()) +
                                                 ", got " + shape_string(x.shape()));
  }
}

Var FeatureNetwork::forward(Tape& tape, Var x, Grad mode) {
  check_input(x.value());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = apply_activation(layers_[i].forward(tape, x, mode), activations_[i]);
  }
  return x;
}

Var FeatureNetwork::forward_frozen(Tape& tape, Var x) const {
  check_input(x.value());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = apply_activation(layers_[i].forward_frozen(tape, x), activations_[i]);
  }
  return x;
}

Tensor FeatureNetwork::infer(const Tensor& x) const {
  Tape tape;
  return forward_frozen(tape, tape.constant(x)).value();
}

std::vector<Parameter*> FeatureNetwork::parameters() {
  std::vector<Parameter*> out;
  for (Linear& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> FeatureNetwork::parameters() const {
  std::vector<const Parameter*> out;
  for (const Linear& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

// ---------------------------------------------------------------- ClassifierHead

ClassifierHead::ClassifierHead(std::size_t feature_dim, std::size_t num_classes, bool with_bias)
    : weight("head.weight", Tensor({feature_dim, num_classes})) {
  if (with_bias) bias.emplace("head.bias", Tensor({1, num_classes}));
}

ClassifierHead::ClassifierHead(std::size_t feature_dim, std::size_t num_classes, bool with_bias,
                               Rng& rng)
    : weight("head.weight", glorot_uniform(feature_dim, num_classes, rng)) {
  if (with_bias) bias.emplace("head.bias", Tensor({1, num_classes}));
}

Var ClassifierHead::logits(Tape& tape, Var features, Grad mode) {
  if (frozen_) mode = Grad::frozen;
  Var z = ops::matmul(features, bind(tape, weight, mode));
  if (bias) z = ops::add_bias(z, bind(tape, *bias, mode));
  return z;
}

Var ClassifierHead::logits_frozen(Tape& tape, Var features) const {
  Var z = ops::matmul(features, bind_frozen(tape, weight));
  if (bias) z = ops::add_bias(z, bind_frozen(tape, *bias));
  return z;
}

std::vector<Parameter*> ClassifierHead::parameters() {
  std::vector<Parameter*> out{&weight};
  if (bias) out.push_back(&*bias);
  return out;
}

std::vector<const Parameter*> ClassifierHead::parameters() const {
  std::vector<const Parameter*> out{&weight};
  if (bias) out.push_back(&*bias);
  return out;
}

ClassifierHead share_classifier(const ClassifierHead& teacher, std::size_t student_feature_dim) {
  if (teacher.feature_dim() != student_feature_dim) {
    throw ConfigError("share_classifier: student feature_dim " +
                      std::to_string(student_feature_dim) + " != teacher feature_dim " +
                      std::to_string(teacher.feature_dim()));
  }
  ClassifierHead shared = teacher;
  shared.frozen_ = true;
  return shared;
}

// ---------------------------------------------------------------- Classifier

Classifier::Classifier(FeatureNetwork phi_in, ClassifierHead head_in)
    : phi(std::move(phi_in)), head(std::move(head_in)) {
  if (phi.feature_dim() != head.feature_dim()) {
    throw ConfigError("classifier: feature_dim " + std::to_string(phi.feature_dim()) +
                      " does not match head input " + std::to_string(head.feature_dim()));
  }
}

Var Classifier::logits(Tape& tape, Var x, Grad mode) {
  return head.logits(tape, phi.forward(tape, x, mode), mode);
}

Var Classifier::logits_frozen(Tape& tape, Var x) const {
  return head.logits_frozen(tape, phi.forward_frozen(tape, x));
}

Tensor Classifier::probabilities(const Tensor& x) const {
  Tape tape;
  return ops::softmax(logits_frozen(tape, tape.constant(x))).value();
}

std::vector<int> Classifier::predict(const Tensor& x) const {
  Tape tape;
  const Tensor z = logits_frozen(tape, tape.constant(x)).value();
  std::vector<int> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<Parameter*> Classifier::trainable_parameters() {
  std::vector<Parameter*> out = phi.parameters();
  if (!head.frozen()) {
    for (Parameter* p : head.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> Classifier::parameters() {
  std::vector<Parameter*> out = phi.parameters();
  for (Parameter* p : head.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Classifier::parameters() const {
  std::vector<const Parameter*> out = phi.parameters();
  for (const Parameter* p : head.parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------- AdcDiscriminator

AdcDiscriminator::AdcDiscriminator(FeatureNetwork phi_in, std::size_t num_classes)
    : phi(std::move(phi_in)),
      adv_head("adv", phi.feature_dim(), 1),
      class_real("class_real", Tensor({phi.feature_dim(), num_classes})),
      class_fake("class_fake", Tensor({phi.feature_dim(), num_classes})) {}

AdcDiscriminator::AdcDiscriminator(FeatureNetwork phi_in, std::size_t num_classes, Rng& rng)
    : phi(std::move(phi_in)),
      adv_head("adv", phi.feature_dim(), 1, rng),
      class_real("class_real", glorot_uniform(phi.feature_dim(), num_classes, rng)),
      class_fake("class_fake", glorot_uniform(phi.feature_dim(), num_classes, rng)) {}

AdcDiscriminator::Outputs AdcDiscriminator::forward(Tape& tape, Var x, Grad mode) {
  Var f = phi.forward(tape, x, mode);
  Var adv = adv_head.forward(tape, f, mode);
  Var logits = ops::concat_cols(ops::matmul(f, bind(tape, class_real, mode)),
                                ops::matmul(f, bind(tape, class_fake, mode)));
  return {f, adv, logits};
}

AdcDiscriminator::Outputs AdcDiscriminator::forward_frozen(Tape& tape, Var x) const {
  Var f = phi.forward_frozen(tape, x);
  Var adv = adv_head.forward_frozen(tape, f);
  Var logits = ops::concat_cols(ops::matmul(f, bind_frozen(tape, class_real)),
                                ops::matmul(f, bind_frozen(tape, class_fake)));
  return {f, adv, logits};
}

Tensor AdcDiscriminator::class_probs(const Tensor& x) const {
  Tape tape;
  return ops::softmax(forward_frozen(tape, tape.constant(x)).class_logits).value();
}

Tensor AdcDiscriminator::adv_scores(const Tensor& x) const {
  Tape tape;
  return ops::sigmoid(forward_frozen(tape, tape.constant(x)).adv_logit).value();
}

std::vector<Parameter*> AdcDiscriminator::parameters() {
  std::vector<Parameter*> out = phi.parameters();
  out.push_back(&adv_head.weight);
  out.push_back(&adv_head.bias);
  out.push_back(&class_real);
  out.push_back(&class_fake);
  return out;
}

std::vector<const Parameter*> AdcDiscriminator::parameters() const {
  std::vector<const Parameter*> out = phi.parameters();
  out.push_back(&adv_head.weight);
  out.push_back(&adv_head.bias);
  out.push_back(&class_real);
  out.push_back(&class_fake);
  return out;
}

// ---------------------------------------------------------------- ConditionalGenerator

namespace {

void check_generator_body(const FeatureNetwork& body, std::size_t z_dim, std::size_t embed_dim) {
  if (body.in_dim() != z_dim + embed_dim) {
    throw ConfigError("generator body expects input width " + std::to_string(body.in_dim()) +
                      ", noise + embedding is " + std::to_string(z_dim + embed_dim));
  }
}

}  // namespace

ConditionalGenerator::ConditionalGenerator(std::size_t num_classes, std::size_t z_dim,
                                           std::size_t embed_dim, FeatureNetwork body_in)
    : embedding("embedding", Tensor({num_classes, embed_dim})),
      body(std::move(body_in)),
      z_dim_(z_dim) {
  check_generator_body(body, z_dim, embed_dim);
}

ConditionalGenerator::ConditionalGenerator(std::size_t num_classes, std::size_t z_dim,
                                           std::size_t embed_dim, FeatureNetwork body_in,
                                           Rng& rng)
    : embedding("embedding", glorot_uniform(num_classes, embed_dim, rng)),
      body(std::move(body_in)),
      z_dim_(z_dim) {
  check_generator_body(body, z_dim, embed_dim);
}

Tensor ConditionalGenerator::one_hot(std::span<const int> labels) const {
  const std::size_t c = num_classes();
  Tensor out({labels.size(), c});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DomainError("generate: label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(c) + ")");
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

Var ConditionalGenerator::forward(Tape& tape, Var z, std::span<const int> labels, Grad mode) {
  if (z.value().rows() != labels.size() || z.value().cols() != z_dim_) {
    throw DimensionError("generate", "noise " + shape_string(z.shape()) + " for " +
                                         std::to_string(labels.size()) + " labels, z_dim " +
                                         std::to_string(z_dim_));
  }
  Var e = ops::matmul(tape.constant(one_hot(labels)), bind(tape, embedding, mode));
  return body.forward(tape, ops::concat_cols(z, e), mode);
}

Var ConditionalGenerator::forward_frozen(Tape& tape, Var z, std::span<const int> labels) const {
  if (z.value().rows() != labels.size() || z.value().cols() != z_dim_) {
    throw DimensionError("generate", "noise " + shape_string(z.shape()) + " for " +
                                         std::to_string(labels.size()) + " labels, z_dim " +
                                         std::to_string(z_dim_));
  }
  Var e = ops::matmul(tape.constant(one_hot(labels)), bind_frozen(tape, embedding));
  return body.forward_frozen(tape, ops::concat_cols(z, e));
}

Tensor ConditionalGenerator::generate(const Tensor& z, std::span<const int> labels) const {
  Tape tape;
  return forward_frozen(tape, tape.constant(z), labels).value();
}

std::vector<Parameter*> ConditionalGenerator::parameters() {
  std::vector<Parameter*> out{&embedding};
  for (Parameter* p : body.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ConditionalGenerator::parameters() const {
  std::vector<const Parameter*> out{&embedding};
  for (const Parameter* p : body.parameters()) out.push_back(p);
  return out;
}

}  // namespace hidfd

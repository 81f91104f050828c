#pragma once

// Randomized small-network instances of every training loss, each checked
// against central differences. Smooth (tanh) networks keep the finite
// differences away from ReLU kinks.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "hidfd/distillation.hpp"
#include "hidfd/generation.hpp"
#include "hidfd/ops.hpp"
#include "hidfd/rng.hpp"

namespace hidfd::testing {

struct Instance {
  std::size_t classes, dim, feat, batch, z_dim, embed;
  AdcDiscriminator d;
  Classifier teacher;
  ConditionalGenerator g;
  FeatureNetwork student;
  Tensor real, fake, z;
  std::vector<int> real_y, fake_y;
  std::vector<double> n_hat;
};

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t({r, c});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline void jitter(std::vector<Parameter*> params, Rng& rng, double scale) {
  for (Parameter* p : params) {
    for (double& v : p->value.data()) v += scale * rng.normal();
  }
}

inline Instance random_instance(Rng& rng) {
  const std::size_t classes = 2 + rng.below(3);
  const std::size_t dim = 2 + rng.below(3);
  const std::size_t feat = 2 + rng.below(4);
  const std::size_t batch = 2 + rng.below(4);
  const std::size_t z_dim = 1 + rng.below(3);
  const std::size_t embed = 1 + rng.below(3);
  const std::size_t hidden = 3 + rng.below(3);
  using A = Activation;
  Instance in{classes,
              dim,
              feat,
              batch,
              z_dim,
              embed,
              AdcDiscriminator(FeatureNetwork("d", {dim, hidden, feat}, {A::tanh, A::tanh}, rng),
                               classes, rng),
              Classifier(FeatureNetwork("t", {dim, hidden, feat}, {A::tanh, A::tanh}, rng),
                         ClassifierHead(feat, classes, true, rng)),
              ConditionalGenerator(classes, z_dim, embed,
                                   FeatureNetwork("g", {z_dim + embed, hidden, dim},
                                                  {A::tanh, A::identity}, rng),
                                   rng),
              FeatureNetwork("s", {dim, hidden, feat}, {A::tanh, A::tanh}, rng),
              random_tensor(batch, dim, rng),
              random_tensor(batch, dim, rng),
              random_tensor(batch, z_dim, rng),
              {},
              {},
              {}};
  // Zero-initialised heads and embeddings would hide whole gradient blocks.
  jitter(in.d.parameters(), rng, 0.3);
  jitter(in.g.parameters(), rng, 0.3);
  for (std::size_t i = 0; i < batch; ++i) {
    in.real_y.push_back(static_cast<int>(rng.below(classes)));
    in.fake_y.push_back(static_cast<int>(rng.below(classes)));
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    in.n_hat.push_back(0.2 + rng.uniform());
    total += in.n_hat.back();
  }
  for (double& v : in.n_hat) v /= total;
  return in;
}

struct LossCase {
  std::string name;
  GradCheck (*run)(Rng&);
};

inline GradCheck case_adc_d(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        return loss_adc_d(t, in.d, t.constant(in.real), in.real_y, t.constant(in.fake), in.fake_y);
      },
      in.d.parameters());
}

inline GradCheck case_adc_g(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        Var fake = in.g.forward(t, t.constant(in.z), in.fake_y, Grad::track);
        return loss_adc_g(t, in.d, fake, in.fake_y);
      },
      in.g.parameters());
}

inline GradCheck case_blend(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        return loss_blend(t, in.teacher.phi, in.d, t.constant(in.real), t.constant(in.fake), 1.0,
                          0.7);
      },
      in.d.parameters());
}

inline GradCheck case_trans(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        return loss_trans(t, in.teacher.phi, in.d, t.constant(in.real), t.constant(in.fake));
      },
      in.d.parameters());
}

inline GradCheck case_reg(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        Var fake = in.g.forward(t, t.constant(in.z), in.fake_y, Grad::track);
        return loss_reg(t, in.teacher, fake, in.n_hat);
      },
      in.g.parameters());
}

inline GradCheck case_align(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) { return loss_align(t, in.teacher.phi, in.student, t.constant(in.real)); },
      in.student.parameters());
}

inline GradCheck case_total_d(Rng& rng) {
  Instance in = random_instance(rng);
  const double lambda = 0.1 + rng.uniform();
  return check_gradients(
      [&](Tape& t) {
        Var real = t.constant(in.real);
        Var fake = t.constant(in.fake);
        Var integ = ops::add(loss_blend(t, in.teacher.phi, in.d, real, fake, 1.0, 0.7),
                             loss_trans(t, in.teacher.phi, in.d, real, fake));
        return ops::add(loss_adc_d(t, in.d, real, in.real_y, fake, in.fake_y),
                        ops::scale(integ, lambda));
      },
      in.d.parameters());
}

inline GradCheck case_total_g(Rng& rng) {
  Instance in = random_instance(rng);
  const double lambda = 0.1 + rng.uniform();
  return check_gradients(
      [&](Tape& t) {
        Var fake = in.g.forward(t, t.constant(in.z), in.fake_y, Grad::track);
        return ops::add(loss_adc_g(t, in.d, fake, in.fake_y),
                        ops::scale(loss_reg(t, in.teacher, fake, in.n_hat), lambda));
      },
      in.g.parameters());
}

// Cross-entropy used for teacher and baseline training.
inline GradCheck case_cross_entropy(Rng& rng) {
  Instance in = random_instance(rng);
  return check_gradients(
      [&](Tape& t) {
        Var logits = in.teacher.logits(t, t.constant(in.real), Grad::track);
        return ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), in.real_y)), -1.0);
      },
      in.teacher.parameters());
}

inline std::vector<LossCase> loss_cases() {
  return {{"adc_d", case_adc_d},         {"adc_g", case_adc_g},   {"blend", case_blend},
          {"trans", case_trans},         {"reg", case_reg},       {"align", case_align},
          {"L_D", case_total_d},         {"L_G", case_total_g},   {"cross_entropy", case_cross_entropy}};
}

}  // namespace hidfd::testing

#pragma once

// Numeric instantiations of the distributional identities behind hybrid
// distillation, on finite supports where they hold exactly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hidfd/rng.hpp"
#include "hidfd/tensor.hpp"

namespace hidfd::theory {

// 1/2 sum |p - q|. DomainError if the supports differ in size.
double tvd(std::span<const double> p, std::span<const double> q);

struct MixtureRecord {
  double alpha = 0.0;
  double tvd_up = 0.0;  // TVD(U, P)
  double tvd_qp = 0.0;  // TVD(Q, P)
  double tvd_uq = 0.0;  // TVD(U, Q)
  double bound = 0.0;   // (2 - alpha) TVD(P, Q)
  double identity_residual = 0.0;  // |TVD(U,P) - (1 - alpha) TVD(Q,P)|
  double bound_slack = 0.0;        // bound - TVD(U, Q)
  std::vector<double> mixture;     // U = alpha P + (1 - alpha) Q
};

MixtureRecord mixture_identities(std::span<const double> p, std::span<const double> q,
                                 double alpha);

// Joint table over X x Y with nonnegative entries summing to one.
class DiscreteJoint {
 public:
  // DomainError on negative entries or total mass off by more than 1e-12.
  DiscreteJoint(std::size_t xs, std::size_t ys, std::vector<double> table);

  std::size_t xs() const noexcept { return xs_; }
  std::size_t ys() const noexcept { return ys_; }
  double operator()(std::size_t x, std::size_t y) const { return table_[x * ys_ + y]; }
  double marginal_x(std::size_t x) const;
  const std::vector<double>& table() const noexcept { return table_; }

 private:
  std::size_t xs_;
  std::size_t ys_;
  std::vector<double> table_;
};

std::vector<double> random_distribution(std::size_t n, Rng& rng);  // flat Dirichlet
DiscreteJoint random_joint(std::size_t xs, std::size_t ys, Rng& rng);

// Classifier over 2|Y| outputs per retained x: columns [0, |Y|) are (y, real),
// columns [|Y|, 2|Y|) are (y, fake).
struct AdcTable {
  std::vector<std::size_t> rows;     // retained x values
  std::vector<std::size_t> dropped;  // x with p(x) + q(x) = 0
  Tensor probs;                      // rows.size() x 2|Y|
};

// Psi*(y+|x) = p(x,y) / (p(x) + q(x)),  Psi*(y-|x) = q(x,y) / (p(x) + q(x)).
AdcTable optimal_adc_classifier(const DiscreteJoint& p, const DiscreteJoint& q);

// Maximises E_P log Psi(y+|x) + E_Q log Psi(y-|x) over a free logit table by
// gradient ascent through the same 2C-way log-softmax the discriminator uses.
AdcTable train_tabular_classifier(const DiscreteJoint& p, const DiscreteJoint& q,
                                  std::size_t steps = 4000, double lr = 1.0);

// KL(Q || P) with 0 log 0 = 0; DomainError when q > 0 where p = 0.
double kl_divergence(const DiscreteJoint& q, const DiscreteJoint& p);

struct KlCheck {
  double lhs = 0.0;  // E_Q log Psi*(y+|x) - E_Q log Psi*(y-|x)
  double rhs = 0.0;  // -KL(Q || P)
  double residual = 0.0;
};

KlCheck kl_equivalence_check(const DiscreteJoint& p, const DiscreteJoint& q);

// |d/dtheta log(1 - sigmoid(s(G(theta))))| for a fixed linear toy generator
// and a linear discriminator whose bias sets sigmoid(s) = score at the probe
// point. Equals score * |ds/dtheta|. DomainError unless 0 < score < 1.
double overfit_gradient_probe(double score);

struct IdentityResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // largest residual or bound violation; negative is margin
                           // passed when worst <= tolerance
  double tolerance = 0.0;
  std::size_t trials = 0;
};

// Runs every identity over randomized instances.
std::vector<IdentityResult> verify_theory(std::size_t trials, std::uint64_t seed);

}  // namespace hidfd::theory

#include "hidfd/theory.hpp"

#include <algorithm>
#include <cmath>

#include "hidfd/errors.hpp"
#include "hidfd/generation.hpp"
#include "hidfd/ops.hpp"
#include "hidfd/tape.hpp"

namespace hidfd::theory {

double tvd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DomainError("tvd: support sizes differ (" + std::to_string(p.size()) + " vs " +
                      std::to_string(q.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

MixtureRecord mixture_identities(std::span<const double> p, std::span<const double> q,
                                 double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("mixture_identities: alpha outside [0, 1]");
  if (p.size() != q.size()) throw DomainError("mixture_identities: support sizes differ");
  MixtureRecord r;
  r.alpha = alpha;
  r.mixture.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) r.mixture[i] = alpha * p[i] + (1.0 - alpha) * q[i];
  r.tvd_up = tvd(r.mixture, p);
  r.tvd_qp = tvd(q, p);
  r.tvd_uq = tvd(r.mixture, q);
  r.bound = (2.0 - alpha) * r.tvd_qp;
  r.identity_residual = std::abs(r.tvd_up - (1.0 - alpha) * r.tvd_qp);
  r.bound_slack = r.bound - r.tvd_uq;
  return r;
}

DiscreteJoint::DiscreteJoint(std::size_t xs, std::size_t ys, std::vector<double> table)
    : xs_(xs), ys_(ys), table_(std::move(table)) {
  if (table_.size() != xs * ys) {
    throw DimensionError("DiscreteJoint", "table has " + std::to_string(table_.size()) +
                                              " entries, expected " + std::to_string(xs * ys));
  }
  double mass = 0.0;
  for (double v : table_) {
    if (!(v >= 0.0)) throw DomainError("DiscreteJoint: negative or NaN entry");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-12) {
    throw DomainError("DiscreteJoint: total mass " + std::to_string(mass) + " is not 1");
  }
}

double DiscreteJoint::marginal_x(std::size_t x) const {
  double s = 0.0;
  for (std::size_t y = 0; y < ys_; ++y) s += (*this)(x, y);
  return s;
}

std::vector<double> random_distribution(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) {
    v = -std::log(1.0 - rng.uniform());
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

DiscreteJoint random_joint(std::size_t xs, std::size_t ys, Rng& rng) {
  return DiscreteJoint(xs, ys, random_distribution(xs * ys, rng));
}

namespace {

void check_same_shape(const DiscreteJoint& p, const DiscreteJoint& q, const char* op) {
  if (p.xs() != q.xs() || p.ys() != q.ys()) {
    throw DimensionError(op, "joint tables differ in shape");
  }
}

}  // namespace

AdcTable optimal_adc_classifier(const DiscreteJoint& p, const DiscreteJoint& q) {
  check_same_shape(p, q, "optimal_adc_classifier");
  const std::size_t ys = p.ys();
  AdcTable out;
  for (std::size_t x = 0; x < p.xs(); ++x) {
    (p.marginal_x(x) + q.marginal_x(x) > 0.0 ? out.rows : out.dropped).push_back(x);
  }
  out.probs = Tensor({out.rows.size(), 2 * ys});
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const std::size_t x = out.rows[r];
    const double mass = p.marginal_x(x) + q.marginal_x(x);
    for (std::size_t y = 0; y < ys; ++y) {
      out.probs(r, y) = p(x, y) / mass;
      out.probs(r, ys + y) = q(x, y) / mass;
    }
  }
  return out;
}

AdcTable train_tabular_classifier(const DiscreteJoint& p, const DiscreteJoint& q,
                                  std::size_t steps, double lr) {
  check_same_shape(p, q, "train_tabular_classifier");
  const std::size_t ys = p.ys();
  AdcTable out;
  for (std::size_t x = 0; x < p.xs(); ++x) {
    (p.marginal_x(x) + q.marginal_x(x) > 0.0 ? out.rows : out.dropped).push_back(x);
  }
  const std::size_t rows = out.rows.size();

  // Row-normalised weights: the per-row optimum is unchanged and every row
  // sees a gradient of softmax - target.
  Tensor weights({rows, 2 * ys});
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t x = out.rows[r];
    const double mass = p.marginal_x(x) + q.marginal_x(x);
    for (std::size_t y = 0; y < ys; ++y) {
      weights(r, y) = p(x, y) / mass;
      weights(r, ys + y) = q(x, y) / mass;
    }
  }

  Parameter logits("tabular", Tensor({rows, 2 * ys}));
  for (std::size_t step = 0; step < steps; ++step) {
    Tape tape;
    Var objective = ops::sum(ops::mul(tape.constant(weights),
                                      adc_joint_log_probs(tape.param(logits))));
    Var loss = ops::scale(objective, -1.0);
    logits.zero_grad();
    tape.backward(loss);
    for (std::size_t i = 0; i < logits.value.size(); ++i) {
      logits.value[i] -= lr * logits.grad[i];
    }
  }

  out.probs = Tensor({rows, 2 * ys});
  Tape tape;
  const Tensor& lp = adc_joint_log_probs(tape.constant(logits.value)).value();
  for (std::size_t i = 0; i < lp.size(); ++i) out.probs[i] = std::exp(lp[i]);
  return out;
}

double kl_divergence(const DiscreteJoint& q, const DiscreteJoint& p) {
  check_same_shape(p, q, "kl_divergence");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.table().size(); ++i) {
    const double qi = q.table()[i];
    const double pi = p.table()[i];
    if (qi == 0.0) continue;
    if (pi == 0.0) throw DomainError("kl_divergence: q > 0 where p = 0");
    kl += qi * std::log(qi / pi);
  }
  return kl;
}

KlCheck kl_equivalence_check(const DiscreteJoint& p, const DiscreteJoint& q) {
  const double kl = kl_divergence(q, p);
  const AdcTable psi = optimal_adc_classifier(p, q);
  std::vector<std::size_t> row_of(p.xs(), 0);
  for (std::size_t r = 0; r < psi.rows.size(); ++r) row_of[psi.rows[r]] = r;
  const std::size_t ys = p.ys();
  KlCheck out;
  for (std::size_t x = 0; x < q.xs(); ++x) {
    for (std::size_t y = 0; y < ys; ++y) {
      const double w = q(x, y);
      if (w == 0.0) continue;
      const std::size_t r = row_of[x];
      out.lhs += w * (std::log(psi.probs(r, y)) - std::log(psi.probs(r, ys + y)));
    }
  }
  out.rhs = -kl;
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

double overfit_gradient_probe(double score) {
  if (!(score > 0.0 && score < 1.0)) throw DomainError("overfit_gradient_probe: score outside (0, 1)");
  // G(theta) = theta * w, s(x) = a * x + b with b chosen so sigmoid(s) = score.
  const double w = 0.8;
  const double a = 1.5;
  const double theta0 = 0.3;
  const double b = std::log(score) - std::log1p(-score) - a * theta0 * w;

  Parameter theta("theta", Tensor::scalar(theta0));
  Tape tape;
  Var x = ops::scale(tape.param(theta), w);
  Var s = ops::add(ops::scale(x, a), tape.constant(Tensor::scalar(b)));
  Var loss = ops::log_sigmoid(ops::scale(s, -1.0));
  tape.backward(loss);
  return std::abs(theta.grad.item());
}

std::vector<IdentityResult> verify_theory(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<IdentityResult> out;

  IdentityResult triangle{"tvd_triangle", true, 0.0, 1e-12, trials};
  IdentityResult identity{"mixture_identity", true, 0.0, 1e-12, trials};
  IdentityResult bound{"mixture_bound", true, 0.0, 1e-9, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.below(9);
    const auto p = random_distribution(n, rng);
    const auto q = random_distribution(n, rng);
    const double alpha = rng.uniform();
    const MixtureRecord rec = mixture_identities(p, q, alpha);
    const double tri = rec.tvd_uq - (rec.tvd_up + tvd(p, q));
    triangle.worst = t == 0 ? tri : std::max(triangle.worst, tri);
    identity.worst = std::max(identity.worst, rec.identity_residual);
    bound.worst = t == 0 ? -rec.bound_slack : std::max(bound.worst, -rec.bound_slack);
  }
  triangle.passed = triangle.worst <= triangle.tolerance;
  identity.passed = identity.worst < identity.tolerance;
  bound.passed = bound.worst <= bound.tolerance;
  out.push_back(triangle);
  out.push_back(identity);
  out.push_back(bound);

  const std::size_t kl_trials = std::max<std::size_t>(1, trials / 10);
  IdentityResult kl{"kl_equivalence", true, 0.0, 1e-10, kl_trials};
  for (std::size_t t = 0; t < kl_trials; ++t) {
    const std::size_t xs = 2 + rng.below(4);
    const std::size_t ys = 2 + rng.below(4);
    const DiscreteJoint p = random_joint(xs, ys, rng);
    const DiscreteJoint q = random_joint(xs, ys, rng);
    kl.worst = std::max(kl.worst, kl_equivalence_check(p, q).residual);
  }
  kl.passed = kl.worst < kl.tolerance;
  out.push_back(kl);

  const std::size_t tab_trials = std::min<std::size_t>(20, std::max<std::size_t>(1, trials));
  IdentityResult tab{"tabular_classifier", true, 0.0, 1e-3, tab_trials};
  for (std::size_t t = 0; t < tab_trials; ++t) {
    const DiscreteJoint p = random_joint(4, 3, rng);
    const DiscreteJoint q = random_joint(4, 3, rng);
    const AdcTable closed = optimal_adc_classifier(p, q);
    const AdcTable trained = train_tabular_classifier(p, q);
    for (std::size_t i = 0; i < closed.probs.size(); ++i) {
      tab.worst = std::max(tab.worst,
                           std::abs(closed.probs[i] - trained.probs[i]));
    }
  }
  tab.passed = tab.worst < tab.tolerance;
  out.push_back(tab);

  IdentityResult probe{"overfit_gradient_probe", true, 0.0, 1e-5, 1};
  probe.worst = overfit_gradient_probe(1e-6) / overfit_gradient_probe(0.5);
  probe.passed = probe.worst < probe.tolerance;
  out.push_back(probe);
  return out;
}

}  // namespace hidfd::theory

#include <cmath>
#include <limits>

#include "doctest.h"
#include "hidfd/checkpoint.hpp"
#include "hidfd/errors.hpp"
#include "hidfd/generation.hpp"
#include "hidfd/ops.hpp"
#include "loss_cases.hpp"

using namespace hidfd;

namespace {

FeatureNetwork tanh_net(const char* name, std::size_t in, std::size_t out, Rng& rng,
                        Activation last = Activation::tanh) {
  return FeatureNetwork(name, {in, 5, out}, {Activation::tanh, last}, rng);
}

AdcDiscriminator::Outputs constant_outputs(Tape& t, const Tensor& adv, const Tensor& cls) {
  return {t.constant(Tensor({adv.rows(), 1})), t.constant(adv), t.constant(cls)};
}

Dataset small_toy(std::size_t per_class, std::uint64_t seed) {
  GaussianMixtureSpec spec;
  spec.num_classes = 4;
  spec.per_class.assign(4, per_class);
  spec.means = default_means(4, 2, 1.0);
  spec.covariance_scale = 0.16;
  return make_gaussian_mixture(spec, seed);
}

Classifier quick_teacher(const Dataset& train, std::uint64_t seed) {
  Rng rng(seed);
  Classifier net(FeatureNetwork("t", {2, 16, 8}, {Activation::relu, Activation::relu}, rng),
                 ClassifierHead(8, 4, true, rng));
  DistillConfig c;
  c.epochs = 30;
  c.batch_size = 32;
  c.seed = seed;
  return train_cross_entropy(c, std::move(net), train, train);
}

GanArchitecture small_arch() {
  GanArchitecture a;
  a.generator_hidden = {16};
  a.discriminator_hidden = {16};
  a.feature_dim = 8;
  a.z_dim = 2;
  a.embed_dim = 2;
  return a;
}

}  // namespace

TEST_SUITE("generation") {
  TEST_CASE("frequency tracker arithmetic") {
    ClassFrequencyTracker t(1, 0.5, 10.0);
    t.update(std::vector<double>{20.0});
    CHECK(t.values()[0] == 15.0);
    CHECK(t.iterations() == 1);

    ClassFrequencyTracker frozen(3, 0.0, 4.0);
    frozen.update(std::vector<double>{1, 2, 3});
    CHECK(frozen.values() == std::vector<double>{4, 4, 4});

    ClassFrequencyTracker latest(3, 1.0, 4.0);
    latest.update(std::vector<double>{1, 2, 3});
    CHECK(latest.values() == std::vector<double>{1, 2, 3});

    CHECK_THROWS_AS(latest.update(std::vector<double>{1, 2}), DimensionError);
    CHECK_THROWS_AS(ClassFrequencyTracker(2, 1.5, 1.0), ConfigError);
  }

  TEST_CASE("normalized frequencies") {
    ClassFrequencyTracker uniform(4, 0.5, 1.0);
    CHECK(uniform.normalized() == std::vector<double>(4, 0.25));
    ClassFrequencyTracker two(2, 1.0, 1.0);
    two.update(std::vector<double>{3, 1});
    CHECK(two.normalized() == std::vector<double>{0.75, 0.25});
    CHECK_THROWS_AS(ClassFrequencyTracker(3, 0.5, 0.0).normalized(), DomainError);

    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      ClassFrequencyTracker t(5, 1.0, 1.0);
      std::vector<double> n(5);
      for (double& v : n) v = rng.uniform(0.0, 50.0);
      t.update(n);
      long double total = 0.0L;
      for (double v : n) total += v;
      double mass = 0.0;
      const auto h = t.normalized();
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(std::abs(h[c] - static_cast<double>(n[c] / total)) <= 1e-15);
        mass += h[c];
      }
      CHECK(std::abs(mass - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("count labels") {
    const std::vector<int> y{0, 2, 2, 1, 2};
    CHECK(count_labels(y, 3) == std::vector<double>{1, 1, 3});
    CHECK(class_histogram(y, 3) == std::vector<double>{0.2, 0.2, 0.6});
    CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK(entropy(std::vector<double>{1.0, 0.0}) == 0.0);
    const std::vector<int> bad{3};
    CHECK_THROWS_AS(count_labels(bad, 3), DomainError);
  }

  TEST_CASE("blend gate fires with probability 1 - q") {
    Rng rng(2024);
    const int n = 100000;
    int on = 0, inverted = 0;
    for (int i = 0; i < n; ++i) {
      const double p = rng.uniform();
      on += blend_gate(p, 0.7, false) ? 1 : 0;
      inverted += blend_gate(p, 0.7, true) ? 1 : 0;
    }
    CHECK(std::abs(on / double(n) - 0.30) <= 0.01);
    CHECK(std::abs(inverted / double(n) - 0.70) <= 0.01);
    CHECK(!blend_gate(0.7, 0.7, false));
  }

  TEST_CASE("adc_d closed form at an uninformative discriminator") {
    Rng rng(3);
    for (std::size_t c : {2u, 3u, 5u}) {
      // Zero heads: score logit 0 and uniform joint classifier.
      AdcDiscriminator d(tanh_net("d", 2, 4, rng), c);
      Tape t;
      const std::vector<int> y(4, 1);
      const auto real = d.forward(t, t.constant(testing::random_tensor(4, 2, rng)), Grad::track);
      const auto fake = d.forward(t, t.constant(testing::random_tensor(4, 2, rng)), Grad::track);
      const AdcDTerms terms = adc_d_terms(real, y, fake, y);
      CHECK(terms.adversarial.value().item() == doctest::Approx(2.0 * std::log(2.0)));
      CHECK(terms.classification.value().item() ==
            doctest::Approx(-2.0 * std::log(1.0 / (2.0 * double(c)))));
      CHECK(terms.total.value().item() ==
            doctest::Approx(terms.adversarial.value().item() + terms.classification.value().item()));

      const AdcGTerms g = adc_g_terms(fake, y);
      CHECK(g.adversarial.value().item() == doctest::Approx(std::log(0.5)));
      CHECK(g.classification.value().item() == doctest::Approx(0.0).epsilon(1e-15));
    }
  }

  TEST_CASE("adc_d vanishes for a perfect discriminator") {
    const std::size_t C = 3;
    const std::vector<int> y{0, 2};
    Tape t;
    Tensor real_cls({2, 2 * C}, 0.0), fake_cls({2, 2 * C}, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
      real_cls(i, y[i]) = 60.0;
      fake_cls(i, C + y[i]) = 60.0;
    }
    const auto real = constant_outputs(t, Tensor({2, 1}, 60.0), real_cls);
    const auto fake = constant_outputs(t, Tensor({2, 1}, -60.0), fake_cls);
    const double v = adc_d_terms(real, y, fake, y).total.value().item();
    CHECK(v > 0.0);
    CHECK(v < 1e-20);
  }

  TEST_CASE("empty batches are rejected") {
    Rng rng(4);
    AdcDiscriminator d(tanh_net("d", 2, 3, rng), 2, rng);
    Tape t;
    const std::vector<int> none;
    CHECK_THROWS(loss_adc_g(t, d, t.constant(Tensor({0, 2})), none));
    Var one = t.constant(Tensor({1, 2}));
    const std::vector<int> y{0};
    const std::vector<int> two{0, 1};
    CHECK_THROWS_AS(loss_adc_d(t, d, one, y, one, two), DimensionError);
  }

  TEST_CASE("blend is exactly zero with the gate off and for matched networks") {
    Rng rng(5);
    FeatureNetwork teacher = tanh_net("t", 2, 3, rng);
    AdcDiscriminator d(tanh_net("d", 2, 3, rng), 2, rng);
    Tape t;
    Var real = t.constant(testing::random_tensor(4, 2, rng));
    Var fake = t.constant(testing::random_tensor(4, 2, rng));
    CHECK(loss_blend(t, teacher, d, real, fake, 0.7, 0.7).value().item() == 0.0);
    CHECK(loss_blend(t, teacher, d, real, fake, 0.2, 0.7).value().item() == 0.0);
    CHECK(loss_blend(t, teacher, d, real, fake, 0.9, 0.7).value().item() > 0.0);
    CHECK(loss_blend(t, teacher, d, real, fake, 0.2, 0.7, true).value().item() > 0.0);

    AdcDiscriminator same(teacher, 2, rng);
    CHECK(loss_blend(t, teacher, same, real, real, 0.9, 0.7).value().item() == 0.0);
    CHECK(loss_trans(t, teacher, same, real, fake).value().item() == 0.0);
    CHECK_THROWS_AS(loss_blend(t, teacher, d, real, t.constant(testing::random_tensor(3, 2, rng)),
                               0.9, 0.7),
                    DimensionError);
  }

  TEST_CASE("trans against a doubled copy equals the teacher feature norm") {
    Rng rng(6);
    FeatureNetwork teacher = tanh_net("t", 2, 3, rng, Activation::identity);
    FeatureNetwork doubled = teacher;
    for (Parameter* p : {&doubled.layers().back().weight, &doubled.layers().back().bias}) {
      for (double& v : p->value.data()) v *= 2.0;
    }
    AdcDiscriminator d(doubled, 2, rng);
    const Tensor xr = testing::random_tensor(5, 2, rng);
    const Tensor xf = testing::random_tensor(5, 2, rng);
    const Tensor fr = teacher.infer(xr), ff = teacher.infer(xf);
    double expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double a = 0.0, b = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        a += fr(i, k) * fr(i, k);
        b += ff(i, k) * ff(i, k);
      }
      expected += std::sqrt(a) + std::sqrt(b);
    }
    expected /= 5.0;
    Tape t;
    CHECK(loss_trans(t, teacher, d, t.constant(xr), t.constant(xf)).value().item() ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("reg closed forms") {
    Rng rng(7);
    for (std::size_t C : {2u, 4u, 7u}) {
      Classifier flat(tanh_net("t", 2, 3, rng), ClassifierHead(3, C, true));
      const std::vector<double> n_hat(C, 1.0 / double(C));
      Tape t;
      const double v =
          loss_reg(t, flat, t.constant(testing::random_tensor(6, 2, rng)), n_hat).value().item();
      CHECK(v == doctest::Approx(-double(C) * std::log(double(C))));
    }
    // Uniform n_hat: reg = -C H(p_T) >= -C log C.
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t C = 2 + rng.below(5);
      Classifier teacher(tanh_net("t", 2, 3, rng), ClassifierHead(3, C, true, rng));
      const Tensor x = testing::random_tensor(1 + rng.below(8), 2, rng);
      const std::vector<double> n_hat(C, 1.0 / double(C));
      Tape t;
      const double v = loss_reg(t, teacher, t.constant(x), n_hat).value().item();
      const Tensor p = teacher.probabilities(x);
      std::vector<double> mean(C, 0.0);
      for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) mean[c] += p(r, c) / double(p.rows());
      CHECK(v == doctest::Approx(-double(C) * entropy(mean)).epsilon(1e-12));
      CHECK(v >= -double(C) * std::log(double(C)) - 1e-12);
    }
  }

  TEST_CASE("reg clamps tiny frequencies") {
    Rng rng(8);
    Classifier teacher(tanh_net("t", 2, 3, rng), ClassifierHead(3, 2, true, rng));
    const Tensor x = testing::random_tensor(3, 2, rng);
    Tape t;
    const double a = loss_reg(t, teacher, t.constant(x), std::vector<double>{0.0, 1.0}).value().item();
    const double b = loss_reg(t, teacher, t.constant(x), std::vector<double>{1e-6, 1.0}).value().item();
    CHECK(std::isfinite(a));
    CHECK(a == b);
    CHECK_THROWS_AS(loss_reg(t, teacher, t.constant(x), std::vector<double>{1.0}), DimensionError);
  }

  TEST_CASE("generate_synthetic conditions on labels") {
    Rng rng(9);
    ConditionalGenerator g = make_generator(small_arch(), rng);
    const std::vector<std::size_t> counts{10, 10, 10, 10};
    const Dataset s = generate_synthetic(g, counts, 3);
    CHECK(s.size() == 40);
    CHECK(s.class_counts() == counts);
    CHECK(s.provenance() == Provenance::synthetic);
    CHECK(dataset_checksum(generate_synthetic(g, counts, 3)) == dataset_checksum(s));
    const std::vector<std::size_t> zeros(4, 0);
    const Dataset none = generate_synthetic(g, zeros, 3);
    CHECK(none.empty());
    CHECK_THROWS_AS(mix(s, none, 1, 0), DomainError);
  }

  TEST_CASE("train_gan is deterministic per seed") {
    const Dataset data = small_toy(10, 1);
    const Classifier teacher = quick_teacher(data, 2);
    GanTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 77;
    cfg.eval_per_class = 8;
    const GanResult a = train_gan(cfg, small_arch(), teacher, data);
    const GanResult b = train_gan(cfg, small_arch(), teacher, data);
    REQUIRE(a.metrics.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a.metrics[e].loss_d == b.metrics[e].loss_d);
      CHECK(a.metrics[e].loss_g == b.metrics[e].loss_g);
      CHECK(a.metrics[e].histogram == b.metrics[e].histogram);
    }
    CHECK(parameter_hash(std::as_const(a.generator).parameters()) ==
          parameter_hash(std::as_const(b.generator).parameters()));
  }

  TEST_CASE("zero trade-off weights reduce to plain ADC-GAN") {
    const Dataset data = small_toy(10, 3);
    const Classifier teacher = quick_teacher(data, 4);
    GanTrainConfig zero;
    zero.epochs = 3;
    zero.batch_size = 8;
    zero.seed = 5;
    zero.eval_per_class = 8;
    zero.lambda_d = 0.0;
    zero.lambda_g = 0.0;
    GanTrainConfig plain = zero;
    plain.disable_blend = plain.disable_trans = plain.disable_reg = true;
    const GanResult a = train_gan(zero, small_arch(), teacher, data);
    const GanResult b = train_gan(plain, small_arch(), teacher, data);
    for (std::size_t e = 0; e < a.metrics.size(); ++e) {
      CHECK(a.metrics[e].adc_d == b.metrics[e].adc_d);
      CHECK(a.metrics[e].adc_g == b.metrics[e].adc_g);
      CHECK(a.metrics[e].loss_d == a.metrics[e].adc_d);
      CHECK(a.metrics[e].loss_g == a.metrics[e].adc_g);
    }
    CHECK(parameter_hash(std::as_const(a.generator).parameters()) ==
          parameter_hash(std::as_const(b.generator).parameters()));
    CHECK(parameter_hash(std::as_const(a.discriminator).parameters()) ==
          parameter_hash(std::as_const(b.discriminator).parameters()));
  }

  TEST_CASE("exploding losses abort with the epoch") {
    const Dataset data = small_toy(10, 5);
    const Classifier teacher = quick_teacher(data, 6);
    GanTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lambda_d = 1e9;
    cfg.q = 0.0;
    try {
      train_gan(cfg, small_arch(), teacher, data);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.phase() == "train_gan");
      CHECK(e.epoch() == 0);
    }
  }

  TEST_CASE("configuration checks") {
    GanTrainConfig cfg;
    cfg.q = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lr_g = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lambda_d = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("training raises teacher agreement on generated labels") {
    const Dataset data = small_toy(40, 7);
    const Classifier teacher = quick_teacher(data, 8);
    GanTrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 32;
    cfg.seed = 9;
    cfg.eval_per_class = 16;
    GanArchitecture arch;
    arch.data_dim = 2;
    arch.num_classes = 4;
    arch.feature_dim = 8;
    Rng init(10);
    const ConditionalGenerator untrained = make_generator(arch, init);
    const GanResult trained =
        train_gan(cfg, teacher, data, untrained, make_discriminator(arch, init));
    const std::vector<std::size_t> counts(4, 100);
    auto agreement = [&](const ConditionalGenerator& g) {
      const Dataset s = generate_synthetic(g, counts, 11);
      const auto pred = teacher.predict(s.features_tensor());
      double hit = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) hit += pred[i] == s.label(i) ? 1.0 : 0.0;
      return hit / double(s.size());
    };
    const double before = agreement(untrained);
    const double after = agreement(trained.generator);
    MESSAGE("teacher agreement before " << before << " after " << after);
    CHECK(after >= before);
  }
}

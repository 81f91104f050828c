#include <cmath>
#include <algorithm>
#include <utility>

#include "doctest.h"
#include "hidfd/checkpoint.hpp"
#include "hidfd/distillation.hpp"
#include "hidfd/errors.hpp"
#include "hidfd/generation.hpp"
#include "loss_cases.hpp"

using namespace hidfd;

namespace {

Dataset toy(std::size_t per_class, std::uint64_t seed) {
  GaussianMixtureSpec spec;
  spec.num_classes = 4;
  spec.per_class.assign(4, per_class);
  spec.means = default_means(4, 2, 1.0);
  spec.covariance_scale = 0.16;
  return make_gaussian_mixture(spec, seed);
}

Classifier teacher_net(std::uint64_t seed) {
  Rng rng(seed);
  Classifier net(FeatureNetwork("teacher", {2, 16, 8}, {Activation::relu, Activation::relu}, rng),
                 ClassifierHead(8, 4, true, rng));
  net.freeze_head();
  return net;
}

struct Fixture {
  Dataset collected = toy(5, 1);
  Dataset synthetic = toy(12, 2).with_provenance(Provenance::synthetic);
  Dataset test = toy(10, 3);
  Classifier teacher = teacher_net(4);
  HybridDataset hybrid() const {
    const std::size_t n = default_inflation(synthetic.size(), collected.size());
    return mix(inflate(collected, n), synthetic, n, 5);
  }
};

DistillConfig short_run() {
  DistillConfig c;
  c.epochs = 8;
  c.batch_size = 16;
  c.seed = 6;
  return c;
}

}  // namespace

TEST_SUITE("distillation") {
  TEST_CASE("step schedule") {
    const LrSchedule s;
    CHECK(s.milestones(240) == std::vector<std::size_t>{150, 180, 210});
    CHECK(s.lr_at(0, 240) == 0.05);
    CHECK(s.lr_at(149, 240) == 0.05);
    CHECK(s.lr_at(150, 240) == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(s.lr_at(179, 240) == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(s.lr_at(180, 240) == doctest::Approx(0.0005).epsilon(1e-15));
    CHECK(s.lr_at(210, 240) == doctest::Approx(0.00005).epsilon(1e-15));
    CHECK(s.lr_at(239, 240) == doctest::Approx(0.00005).epsilon(1e-15));
    CHECK(s.milestones(100) == std::vector<std::size_t>{62, 75, 87});
    CHECK_NOTHROW(s.validate(240));
    CHECK_THROWS_AS(s.validate(2), ConfigError);

    LrSchedule unsorted;
    unsorted.milestone_fractions = {0.5, 0.4};
    CHECK_THROWS_AS(unsorted.validate(100), ConfigError);
  }

  TEST_CASE("config validation") {
    DistillConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("student shares a frozen copy of the teacher head") {
    const Classifier teacher = teacher_net(7);
    Rng rng(8);
    Classifier student = make_student(teacher, {5}, rng);
    CHECK(student.head.frozen());
    CHECK(student.phi.feature_dim() == teacher.phi.feature_dim());
    CHECK(parameter_hash(std::as_const(student.head).parameters()) ==
          parameter_hash(teacher.head.parameters()));
    for (Parameter* p : student.trainable_parameters()) {
      for (const Parameter* h : std::as_const(student.head).parameters()) CHECK(p != h);
    }
    CHECK(student.trainable_parameters().size() == student.phi.parameters().size());
  }

  TEST_CASE("align loss value and gradient flow") {
    Rng rng(9);
    FeatureNetwork teacher("t", {2, 4, 3}, {Activation::tanh, Activation::tanh}, rng);
    FeatureNetwork student("s", {2, 6, 3}, {Activation::tanh, Activation::tanh}, rng);
    const Tensor x = testing::random_tensor(7, 2, rng);
    const Tensor ft = teacher.infer(x), fs = student.infer(x);
    double expected = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 3; ++k) d2 += (fs(i, k) - ft(i, k)) * (fs(i, k) - ft(i, k));
      expected += std::sqrt(d2);
    }
    expected /= 7.0;
    for (Parameter* p : teacher.parameters()) p->zero_grad();
    for (Parameter* p : student.parameters()) p->zero_grad();
    Tape t;
    Var loss = loss_align(t, teacher, student, t.constant(x));
    CHECK(loss.value().item() == doctest::Approx(expected).epsilon(1e-13));
    t.backward(loss);
    double teacher_grad = 0.0, student_grad = 0.0;
    for (Parameter* p : teacher.parameters())
      for (double g : p->grad.data()) teacher_grad += std::abs(g);
    for (Parameter* p : student.parameters())
      for (double g : p->grad.data()) student_grad += std::abs(g);
    CHECK(teacher_grad == 0.0);
    CHECK(student_grad > 0.0);

    FeatureNetwork copy = teacher;
    Tape t2;
    CHECK(loss_align(t2, teacher, copy, t2.constant(x)).value().item() == 0.0);
  }

  TEST_CASE("student training ignores hybrid labels") {
    Fixture f;
    const HybridDataset h = f.hybrid();
    std::vector<int> permuted = h.data.labels();
    std::rotate(permuted.begin(), permuted.begin() + 1, permuted.end());
    HybridDataset relabelled = h;
    relabelled.data = Dataset(h.data.dim(), h.data.num_classes(), h.data.provenance(),
                              h.data.flat_features(), permuted);
    REQUIRE(relabelled.data.labels() != h.data.labels());

    Rng a(10), b(10);
    const StudentResult r1 =
        train_student(short_run(), f.teacher, make_student(f.teacher, {6}, a), h, f.test);
    const StudentResult r2 =
        train_student(short_run(), f.teacher, make_student(f.teacher, {6}, b), relabelled, f.test);
    CHECK(parameter_hash(std::as_const(r1.student).parameters()) ==
          parameter_hash(std::as_const(r2.student).parameters()));
    CHECK(parameter_hash(std::as_const(r1.student.head).parameters()) ==
          parameter_hash(std::as_const(f.teacher.head).parameters()));
    REQUIRE(r1.metrics.size() == 8);
    CHECK(r1.metrics.back().align < r1.metrics.front().align);
  }

  TEST_CASE("student training rejects an unshared head") {
    Fixture f;
    Rng rng(11);
    Classifier own(FeatureNetwork("s", {2, 6, 8}, {Activation::relu, Activation::relu}, rng),
                   ClassifierHead(8, 4, true, rng));
    CHECK_THROWS_AS(train_student(short_run(), f.teacher, own, f.hybrid(), f.test), ConfigError);
  }

  TEST_CASE("student training reports divergence") {
    Fixture f;
    DistillConfig c = short_run();
    c.schedule.initial = 1e8;
    Rng rng(12);
    CHECK_THROWS_AS(
        train_student(c, f.teacher, make_student(f.teacher, {6}, rng), f.hybrid(), f.test),
        DivergenceError);
  }

  TEST_CASE("cross-entropy training learns separable data") {
    const Dataset train = toy(30, 13);
    const Dataset test = toy(20, 14);
    Rng rng(15);
    Classifier net(FeatureNetwork("n", {2, 16, 8}, {Activation::relu, Activation::relu}, rng),
                   ClassifierHead(8, 4, true, rng));
    DistillConfig c;
    c.epochs = 40;
    c.batch_size = 16;
    c.seed = 16;
    std::vector<ClassifierEpochMetrics> log;
    const Classifier trained =
        train_cross_entropy(c, net, train, test, [&](const ClassifierEpochMetrics& m) { log.push_back(m); });
    REQUIRE(log.size() == 40);
    CHECK(log.back().loss < log.front().loss);
    CHECK(evaluate(trained, test) > 0.8);
    CHECK(evaluate(trained, test) == log.back().accuracy);
  }

  TEST_CASE("evaluate") {
    const Classifier net = teacher_net(17);
    CHECK_THROWS_AS(evaluate(net, Dataset()), DomainError);
    const Dataset d = toy(5, 18);
    const auto pred = net.predict(d.features_tensor());
    double hits = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) hits += pred[i] == d.label(i);
    CHECK(evaluate(net, d) == hits / double(d.size()));
  }

  TEST_CASE("histogram tvd satisfies the mixture identity") {
    Fixture f;
    Rng rng(19);
    for (std::size_t bins : {4u, 16u, 32u}) {
      for (std::size_t n : {1u, 2u, 5u}) {
        const HybridDataset h = mix(inflate(f.collected, n), f.synthetic, n, rng.next_u64());
        const TvdRecord r = tvd_report(f.collected, f.synthetic, h, bins);
        CHECK(r.alpha == h.alpha);
        CHECK(r.identity_residual <= 1e-12);
        CHECK(r.bound_slack >= -1e-12);
        CHECK(std::abs(r.tvd_uq - r.alpha * r.tvd_pq) <= 1e-12);
        CHECK(r.tvd_pq > 0.0);
        CHECK(r.tvd_pq <= 1.0);
      }
    }
    const TvdRecord same = tvd_report(f.collected, f.collected, f.hybrid(), 8);
    CHECK(same.tvd_pq == 0.0);
  }
}

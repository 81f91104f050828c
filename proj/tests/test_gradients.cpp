#include "doctest.h"
#include "loss_cases.hpp"

using namespace hidfd;

TEST_SUITE("gradients") {
  TEST_CASE("training losses match central differences") {
    Rng rng(2024);
    for (const auto& c : testing::loss_cases()) {
      CAPTURE(c.name);
      for (int i = 0; i < 8; ++i) {
        const auto r = c.run(rng);
        CHECK(r.entries > 0);
        CHECK(r.analytic_norm > 0.0);
        CHECK(r.rel_error < 1e-6);
      }
    }
  }
}

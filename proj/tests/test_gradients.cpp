#include <gtest/gtest.h>

#include "gradient_suite.hpp"

TEST(GradientSuite, EveryLayerAndTheToyModelMatchFiniteDifferences) {
  const auto checks = fpt::run_gradient_suite();
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_GT(c.result.checked, 0u) << c.name;
    EXPECT_LT(c.result.max_rel_error, 1e-4) << c.name << " worst at " << c.result.worst;
    std::printf("%-45s checked %6zu  max rel err %.3e  (%s: analytic %.3e, numeric %.3e)  |g| in [%.1e, %.1e]\n",
                c.name.c_str(), c.result.checked, c.result.max_rel_error, c.result.worst.c_str(),
                c.result.worst_analytic, c.result.worst_numeric, c.result.min_abs_nonzero, c.result.max_abs);
  }
}

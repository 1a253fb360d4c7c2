#include "lrstep/distributions.hpp"
#include "lrstep/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace lrstep;

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-10));
  CHECK(std::isinf(normal_quantile(0.0)));
  CHECK_THROWS_AS(normal_quantile(1.5), ValidationError);
  // Round trip through the complementary error function.
  for (double p : {1e-8, 0.001, 0.2, 0.6, 0.999}) {
    const double z = normal_quantile(p);
    CHECK(0.5 * std::erfc(-z / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-9));
  }
}

TEST_CASE("chi-squared quantiles quoted in the paper") {
  CHECK(std::abs(chi2_quantile_df1(0.05) - 3.841) < 5e-4);
  CHECK(std::abs(chi2_quantile_df1(0.005) - 7.879) < 5e-4);
  CHECK(std::abs(chi2_quantile_df1(0.05 / 47) - 10.7130) < 5e-4);
}

TEST_CASE("chi-squared round trip") {
  for (double t : {0.5, 0.05, 0.005, 1e-4}) CHECK(std::abs(chi2_upper_tail_df1(chi2_quantile_df1(t)) - t) < 1e-8);
  CHECK_THROWS_AS(chi2_quantile_df1(0.0), ValidationError);
  CHECK_THROWS_AS(chi2_quantile_df1(1.0), ValidationError);
  CHECK(chi2_upper_tail_df1(0.0) == 1.0);
}

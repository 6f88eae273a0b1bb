#include <doctest.h>

#include <cmath>

#include "cfl/errors.hpp"
#include "cfl/law.hpp"
#include "cfl/noise.hpp"
#include "cfl/rng.hpp"
#include "cfl/stats.hpp"

using namespace cfl;

namespace {

Eigen::MatrixXd gaussian_sample(long n, double mean, double sd, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::MatrixXd out(n, 1);
  for (long i = 0; i < n; ++i) out(i, 0) = mean + sd * rng.gaussian01();
  return out;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("univariate fast path matches the direct energy statistic") {
    const Eigen::MatrixXd x = gaussian_sample(60, 0.0, 1.0, 1);
    const Eigen::MatrixXd y = gaussian_sample(45, 0.4, 1.2, 2);
    const double direct = energy_distance(x, y);
    const auto fast = energy_permutation_test(x, y, 10, 3, 4096);
    CHECK(fast.statistic == doctest::Approx(direct).epsilon(1e-12));
  }

  TEST_CASE("energy permutation test calibrates under the null") {
    int rejections = 0;
    const int trials = 60;
    for (int k = 0; k < trials; ++k) {
      const auto seeds = split_stream(900 + k, 2);
      const Eigen::MatrixXd x = gaussian_sample(200, 0.0, 1.0, seeds[0]);
      const Eigen::MatrixXd y = gaussian_sample(200, 0.0, 1.0, seeds[1]);
      const auto res = energy_permutation_test(x, y, 199, 4 + k, 512);
      if (res.p_value < 0.05) ++rejections;
    }
    // ~5% expected; allow a wide band.
    CHECK(rejections <= 10);
  }

  TEST_CASE("energy permutation test detects a mean shift") {
    const Eigen::MatrixXd x = gaussian_sample(10000, 0.0, 1.0, 7);
    const Eigen::MatrixXd y = gaussian_sample(10000, 0.5, 1.0, 8);
    const auto res = energy_permutation_test(x, y, 200, 9, 1024);
    CHECK(res.p_value < 0.01);
  }

  TEST_CASE("multivariate path detects a correlation flip") {
    RngStream rng(42);
    Eigen::MatrixXd a(300, 2), b(300, 2);
    for (long i = 0; i < 300; ++i) {
      const double u = rng.gaussian01();
      const double v = rng.gaussian01();
      a(i, 0) = u;
      a(i, 1) = u + 0.1 * v;   // corr ~ +1
      b(i, 0) = u;
      b(i, 1) = -u + 0.1 * v;  // corr ~ -1
    }
    const auto res = energy_permutation_test(a, b, 199, 11, 256);
    CHECK(res.p_value < 0.01);
  }

  TEST_CASE("test is symmetric in its arguments on the same seed") {
    const Eigen::MatrixXd x = gaussian_sample(150, 0.0, 1.0, 21);
    const Eigen::MatrixXd y = gaussian_sample(170, 0.3, 1.0, 22);
    const auto ab = energy_permutation_test(x, y, 99, 5, 512);
    const auto ba = energy_permutation_test(y, x, 99, 5, 512);
    CHECK(ab.statistic == doctest::Approx(ba.statistic).epsilon(1e-12));
  }

  TEST_CASE("dcov independence test") {
    RngStream rng(3);
    Eigen::MatrixXd x(400, 1), y_dep(400, 1), y_ind(400, 1);
    for (long i = 0; i < 400; ++i) {
      x(i, 0) = rng.gaussian01();
      y_dep(i, 0) = x(i, 0) * x(i, 0) + 0.2 * rng.gaussian01();  // dependent, uncorrelated
      y_ind(i, 0) = rng.gaussian01();
    }
    CHECK(dcov_independence_test(x, y_dep, 199, 6, 512).p_value < 0.01);
    CHECK(dcov_independence_test(x, y_ind, 199, 7, 512).p_value > 0.05);
  }

  TEST_CASE("holm adjustment") {
    const auto adj = holm_adjust({0.01, 0.04, 0.03, 0.005});
    CHECK(adj[3] == doctest::Approx(0.02));
    CHECK(adj[0] == doctest::Approx(0.03));
    CHECK(adj[2] == doctest::Approx(0.06));
    CHECK(adj[1] == doctest::Approx(0.06));
  }

  TEST_CASE("equal mass bins split ranks evenly") {
    Eigen::VectorXd v(10);
    v << 5, 1, 9, 3, 7, 2, 8, 4, 6, 0;
    const auto bins = equal_mass_bins(v, 5);
    std::vector<int> counts(5, 0);
    for (int b : bins) ++counts[static_cast<std::size_t>(b)];
    for (int c : counts) CHECK(c == 2);
    CHECK(bins[9] == 0);  // value 0 in the lowest bin
    CHECK(bins[2] == 4);  // value 9 in the highest bin
  }
}

TEST_SUITE("law") {
  TEST_CASE("identical tables are at distance zero") {
    Eigen::MatrixXd coords(2, 1);
    coords << 0.0, 1.0;
    Eigen::VectorXd probs(2);
    probs << 0.5, 0.5;
    const Law a = Law::exact_table({"y"}, coords, probs);
    const auto d = law_distance(a, a);
    CHECK(d.statistic == 0.0);
    CHECK_FALSE(d.p_value.has_value());
  }

  TEST_CASE("point masses at 0 and 1 have total variation 1") {
    Eigen::MatrixXd c0(1, 1), c1(1, 1);
    c0 << 0.0;
    c1 << 1.0;
    Eigen::VectorXd p(1);
    p << 1.0;
    const auto d = law_distance(Law::exact_table({"y"}, c0, p), Law::exact_table({"y"}, c1, p));
    CHECK(d.statistic == doctest::Approx(1.0));
    CHECK_FALSE(d.p_value.has_value());
  }

  TEST_CASE("empirical N(0,1) vs N(0.5,1) at n=1e4 rejects at 0.01") {
    const Law a = Law::empirical({"y"}, gaussian_sample(10000, 0.0, 1.0, 31), 31, "a");
    const Law b = Law::empirical({"y"}, gaussian_sample(10000, 0.5, 1.0, 32), 32, "b");
    const auto d = law_distance(a, b);
    REQUIRE(d.p_value.has_value());
    CHECK(*d.p_value < 0.01);
  }

  TEST_CASE("gaussian mixtures with matching labels compare analytically") {
    GaussComponent c;
    c.label = "U=0";
    c.weight = 1.0;
    c.mean = Eigen::VectorXd::Zero(2);
    c.cov = Eigen::MatrixXd::Identity(2, 2);
    const Law a = Law::gaussian_mixture({"u", "v"}, {c});
    GaussComponent c2 = c;
    c2.cov(0, 1) = c2.cov(1, 0) = 0.25;
    const Law b = Law::gaussian_mixture({"u", "v"}, {c2});
    const auto same = law_distance(a, a);
    CHECK(same.statistic == 0.0);
    CHECK_FALSE(same.p_value.has_value());
    const auto diff = law_distance(a, b);
    CHECK(diff.statistic == doctest::Approx(0.25));
  }

  TEST_CASE("table pseudo-samples apportion counts to probabilities") {
    Eigen::MatrixXd coords(3, 1);
    coords << 0.0, 1.0, 2.0;
    Eigen::VectorXd probs(3);
    probs << 0.5, 0.3, 0.2;
    const Law law = Law::exact_table({"y"}, coords, probs);
    const Eigen::MatrixXd s = law.pseudo_sample(10, 0);
    long c0 = 0, c1 = 0, c2 = 0;
    for (long i = 0; i < 10; ++i) {
      if (s(i, 0) == 0.0) ++c0;
      if (s(i, 0) == 1.0) ++c1;
      if (s(i, 0) == 2.0) ++c2;
    }
    CHECK(c0 == 5);
    CHECK(c1 == 3);
    CHECK(c2 == 2);
  }

  TEST_CASE("mixture pseudo-samples are seeded and reproducible") {
    GaussComponent c;
    c.label = "*";
    c.weight = 1.0;
    c.mean = Eigen::VectorXd::Zero(1);
    c.cov = Eigen::MatrixXd::Identity(1, 1);
    const Law law = Law::gaussian_mixture({"y"}, {c});
    const Eigen::MatrixXd a = law.pseudo_sample(500, 7);
    const Eigen::MatrixXd b = law.pseudo_sample(500, 7);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(a.col(0).mean()) < 0.2);
  }

  TEST_CASE("marginals project every representation") {
    Eigen::MatrixXd coords(2, 2);
    coords << 0.0, 5.0, 1.0, 6.0;
    Eigen::VectorXd probs(2);
    probs << 0.25, 0.75;
    const Law t = Law::exact_table({"a", "b"}, coords, probs);
    const Law tb = t.marginal({1});
    CHECK(tb.mean()(0) == doctest::Approx(0.25 * 5 + 0.75 * 6));
    CHECK(tb.dims() == std::vector<std::string>{"b"});
  }

  TEST_CASE("validation catches malformed laws") {
    Eigen::MatrixXd coords(2, 1);
    coords << 0.0, 1.0;
    Eigen::VectorXd bad(2);
    bad << 0.6, 0.6;
    CHECK_THROWS_AS(Law::exact_table({"y"}, coords, bad), ValidationError);
    Eigen::VectorXd prob(2);
    prob << 0.5, 0.5;
    CHECK_THROWS_AS(Law::exact_table({"y", "z"}, coords, prob), DimensionMismatch);
    const Law a = Law::exact_table({"y"}, coords, prob);
    Eigen::MatrixXd c2(1, 2);
    c2 << 0.0, 0.0;
    Eigen::VectorXd p1(1);
    p1 << 1.0;
    CHECK_THROWS_AS(law_distance(a, Law::exact_table({"y", "z"}, c2, p1)), DimensionMismatch);
  }
}

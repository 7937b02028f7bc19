#include <doctest.h>

#include <cmath>
#include <vector>

#include "causal_sdr/kernel_smooth.hpp"
#include "causal_sdr/rng.hpp"

using namespace causal_sdr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Brute-force references, written against the displayed formulas only.
double brute_nw1(const VectorXd& z, const VectorXd& v, double q, double h) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double u = (z[i] - q) / h;
    if (std::abs(u) >= 1.0) continue;
    const double k = 0.75 * (1.0 - u * u) / h;
    num += k * v[i];
    den += k;
  }
  if (den == 0.0) {
    // boundary fallback: recenter at the nearest training point
    Eigen::Index near = 0;
    for (Eigen::Index i = 1; i < z.size(); ++i)
      if (std::abs(z[i] - q) < std::abs(z[near] - q)) near = i;
    return brute_nw1(z, v, z[near], h);
  }
  return num / den;
}

// Direct 2x2 weighted least squares of y on (1, z - q).
void brute_wls(const VectorXd& z, const VectorXd& y, double q, double h,
               double* b0, double* b1) {
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double u = (z[i] - q) / h;
    if (std::abs(u) >= 1.0) continue;
    const double k = 0.75 * (1.0 - u * u) / h;
    const double d = z[i] - q;
    s0 += k;
    s1 += k * d;
    s2 += k * d * d;
    t0 += k * y[i];
    t1 += k * d * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  *b0 = (s2 * t0 - s1 * t1) / det;
  *b1 = (s0 * t1 - s1 * t0) / det;
}

}  // namespace

TEST_SUITE("kernel_smooth") {

TEST_CASE("kernel_eval pointwise") {
  CHECK(kernel_eval(0.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(kernel_eval(0.5) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(kernel_eval(1.5) == 0.0);
  CHECK(kernel_eval(-1.5) == 0.0);
  CHECK(kernel_eval(0.3) == kernel_eval(-0.3));
  CHECK(kernel_eval(1.0) == 0.0);
}

TEST_CASE("kernel unit mass by Simpson quadrature") {
  const int m = 2000;
  const double dx = 2.0 / m;
  double mass = 0.0, first = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double x = -1.0 + i * dx;
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    mass += w * kernel_eval(x);
    first += w * x * kernel_eval(x);
  }
  mass *= dx / 3.0;
  first *= dx / 3.0;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(first) < 1e-12);
}

TEST_CASE("resolve_bandwidth rule") {
  const VectorXd z = vec({1.0, 2.0, 3.0, 4.0, 5.0});
  const double sd = std::sqrt(2.5);  // (n-1) denominator
  const BandwidthConfig bw = resolve_bandwidth(0.7, z);
  CHECK(bw.c == 0.7);
  CHECK(bw.h == doctest::Approx(0.7 * sd * std::pow(5.0, -0.2)).epsilon(1e-14));
}

TEST_CASE("nw_mean constant targets") {
  const VectorXd z = vec({-1.0, 0.0, 0.5, 2.0});
  const VectorXd v = vec({3.25, 3.25, 3.25, 3.25});
  CHECK(nw_mean1(z, v, nullptr, 0.3, 1.0) == doctest::Approx(3.25).epsilon(1e-14));
}

TEST_CASE("nw_mean hand-computed window") {
  const VectorXd z = vec({0.0, 0.5, 2.0});
  const VectorXd v = vec({1.0, 2.0, 3.0});
  // K(0)=0.75, K(0.5)=0.5625, K(2)=0: (0.75 + 2*0.5625) / 1.3125
  CHECK(nw_mean1(z, v, nullptr, 0.0, 1.0) == doctest::Approx(1.4286).epsilon(1e-4));
}

TEST_CASE("nw_mean single point and strict window") {
  const VectorXd z1 = vec({0.7});
  const VectorXd v1 = vec({-2.0});
  CHECK(nw_mean1(z1, v1, nullptr, 0.7, 0.5) == doctest::Approx(-2.0));

  // |z - q| == h carries zero weight
  const VectorXd z2 = vec({0.0, 1.0});
  const VectorXd v2 = vec({5.0, 9.0});
  CHECK(nw_mean1(z2, v2, nullptr, 0.0, 1.0) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("nw_mean empty window: fallback and error") {
  const VectorXd z = vec({0.0, 0.1});
  const VectorXd v = vec({1.0, 2.0});
  // nearest masked training point hosts the window
  const double got = nw_mean1(z, v, nullptr, 5.0, 0.05);
  CHECK(got == doctest::Approx(2.0));
  CHECK_THROWS_AS(nw_mean1(z, v, nullptr, 5.0, 0.05, false), EmptyWindow);
}

TEST_CASE("nw_mean respects mask") {
  const VectorXd z = vec({0.0, 0.01, 0.02});
  const VectorXd v = vec({1.0, 100.0, 3.0});
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  const double got = nw_mean1(z, v, &mask, 0.01, 1.0);
  const double k0 = kernel_eval(-0.01);
  const double k2 = kernel_eval(0.01);
  CHECK(got == doctest::Approx((k0 * 1.0 + k2 * 3.0) / (k0 + k2)).epsilon(1e-12));
}

TEST_CASE("nw_mean matches brute force on random data") {
  Rng rng(31);
  const int n = 40;
  VectorXd z(n), v(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.normal();
    v[i] = rng.normal(1.0, 2.0);
  }
  for (double h : {0.4, 0.9, 2.5}) {
    for (double q : {-1.2, -0.3, 0.0, 0.7, 1.9}) {
      CHECK(nw_mean1(z, v, nullptr, q, h) ==
            doctest::Approx(brute_nw1(z, v, q, h)).epsilon(1e-12));
    }
  }
}

TEST_CASE("nw_mean product kernel matches brute force in two dimensions") {
  Rng rng(77);
  const int n = 30;
  MatrixXd z(n, 2), v(n, 1);
  for (int i = 0; i < n; ++i) {
    z(i, 0) = rng.normal();
    z(i, 1) = rng.normal();
    v(i, 0) = rng.normal();
  }
  const VectorXd q = vec({0.2, -0.4});
  const double h = 1.3;
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    const double k =
        kernel_eval((z(i, 0) - q[0]) / h) * kernel_eval((z(i, 1) - q[1]) / h);
    num += k * v(i, 0);
    den += k;
  }
  const VectorXd got = nw_mean(z, v, nullptr, q, h);
  CHECK(got[0] == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("loclin_fit reproduces linear data exactly") {
  const VectorXd z = vec({-1.0, -0.2, 0.3, 0.9, 1.7, 2.2});
  VectorXd y(6);
  for (int i = 0; i < 6; ++i) y[i] = 2.5 - 1.25 * z[i];
  for (double q : {-0.5, 0.0, 0.4, 1.1, 2.0}) {
    const SmoothQueryResult r = loclin_fit1(z, y, nullptr, q, 1.5);
    CHECK(r.value == doctest::Approx(2.5 - 1.25 * q).epsilon(1e-10));
    CHECK(r.derivative == doctest::Approx(-1.25).epsilon(1e-10));
    CHECK_FALSE(r.extrapolated);
  }
}

TEST_CASE("loclin_fit affine reproduction over random designs") {
  Rng rng(12);
  const int n = 50;
  VectorXd z(n), y(n);
  for (int i = 0; i < n; ++i) z[i] = rng.uniform(-2.0, 2.0);
  const double a = 0.7, b = -3.1;
  for (int i = 0; i < n; ++i) y[i] = a + b * z[i];
  for (double h : {0.5, 1.0, 3.0}) {
    for (double q : {-1.5, -0.4, 0.0, 0.8, 1.6}) {
      const SmoothQueryResult r = loclin_fit1(z, y, nullptr, q, h);
      CHECK(r.value == doctest::Approx(a + b * q).epsilon(1e-8));
      CHECK(r.derivative == doctest::Approx(b).epsilon(1e-8));
    }
  }
}

TEST_CASE("loclin_fit symmetric design has zero derivative") {
  const VectorXd z = vec({-0.5, 0.0, 0.5});
  const VectorXd y = vec({1.0, 0.0, 1.0});
  const SmoothQueryResult r = loclin_fit1(z, y, nullptr, 0.0, 1.0);
  CHECK(std::abs(r.derivative) < 1e-12);
}

TEST_CASE("loclin_fit matches direct weighted least squares") {
  const VectorXd z = vec({0.0, 1.0, 2.0});
  const VectorXd y = vec({0.0, 1.0, 4.0});
  double b0 = 0, b1 = 0;
  brute_wls(z, y, 1.0, 10.0, &b0, &b1);
  const SmoothQueryResult r = loclin_fit1(z, y, nullptr, 1.0, 10.0);
  CHECK(r.value == doctest::Approx(b0).epsilon(1e-12));
  CHECK(r.derivative == doctest::Approx(b1).epsilon(1e-12));
}

TEST_CASE("loclin_fit intercept-only window returns the local mean") {
  const VectorXd z = vec({0.4, 0.4, 0.4});
  const VectorXd y = vec({1.0, 2.0, 6.0});
  const SmoothQueryResult r = loclin_fit1(z, y, nullptr, 0.4, 1.0);
  CHECK(r.value == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(r.derivative == doctest::Approx(0.0));
}

TEST_CASE("loclin_fit extrapolates linearly beyond the hull") {
  Rng rng(5);
  const int n = 30;
  VectorXd z(n), y(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.uniform(-1.0, 1.0);
    y[i] = std::sin(2.0 * z[i]) + 0.05 * rng.normal();
  }
  const SmoothQueryResult inside = loclin_fit1(z, y, nullptr, 0.0, 0.6);
  CHECK_FALSE(inside.extrapolated);

  const SmoothQueryResult r1 = loclin_fit1(z, y, nullptr, 2.0, 0.6);
  const SmoothQueryResult r2 = loclin_fit1(z, y, nullptr, 2.5, 0.6);
  const SmoothQueryResult r3 = loclin_fit1(z, y, nullptr, 3.0, 0.6);
  CHECK(r1.extrapolated);
  CHECK(r2.extrapolated);
  CHECK(r3.extrapolated);
  // affine along the extrapolation direction: second difference vanishes
  CHECK(std::abs(r1.value - 2.0 * r2.value + r3.value) < 1e-9);
  CHECK(r1.derivative == doctest::Approx(r3.derivative).epsilon(1e-9));
}

TEST_CASE("loclin_logistic balanced degenerate window") {
  const VectorXd z = vec({0.3, 0.3, 0.3, 0.3});
  const std::vector<std::uint8_t> t = {1, 0, 1, 0};
  const SmoothQueryResult r = loclin_logistic1(z, t, 0.3, 1.0);
  CHECK(std::abs(r.value) < 1e-9);
  CHECK(r.derivative == doctest::Approx(0.0));
}

TEST_CASE("loclin_logistic single-class window saturates") {
  const VectorXd z = vec({0.0, 0.2, 0.4});
  const std::vector<std::uint8_t> ones = {1, 1, 1};
  const SmoothQueryResult r1 = loclin_logistic1(z, ones, 0.2, 1.0);
  CHECK(r1.saturated);
  CHECK(r1.value == doctest::Approx(logit(1.0 - 1e-4)).epsilon(1e-12));
  CHECK(r1.derivative == 0.0);

  const std::vector<std::uint8_t> zeros = {0, 0, 0};
  const SmoothQueryResult r0 = loclin_logistic1(z, zeros, 0.2, 1.0);
  CHECK(r0.saturated);
  CHECK(r0.value == doctest::Approx(-logit(1.0 - 1e-4)).epsilon(1e-12));
}

TEST_CASE("loclin_logistic solves the local score equations") {
  Rng rng(9);
  const int n = 200;
  VectorXd z(n);
  std::vector<std::uint8_t> t(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.uniform(-2.0, 2.0);
    t[i] = static_cast<std::uint8_t>(rng.bernoulli(expit(0.8 * z[i])));
  }
  for (double q : {-0.9, -0.2, 0.0, 0.5, 1.1}) {
    const SmoothQueryResult r = loclin_logistic1(z, t, q, 1.0);
    REQUIRE_FALSE(r.saturated);
    double g0 = 0, g1 = 0, sk = 0;
    for (int i = 0; i < n; ++i) {
      const double u = (z[i] - q) / 1.0;
      if (std::abs(u) >= 1.0) continue;
      const double k = 0.75 * (1.0 - u * u);
      const double resid = t[i] - expit(r.value + r.derivative * (z[i] - q));
      g0 += k * resid;
      g1 += k * resid * (z[i] - q);
      sk += k;
    }
    CHECK(std::abs(g0 / sk) < 1e-8);
    CHECK(std::abs(g1 / sk) < 1e-8);
  }
}

TEST_CASE("loclin_logistic recovers a linear link at the center") {
  Rng rng(2024);
  const int n = 4000;
  VectorXd z(n);
  std::vector<std::uint8_t> t(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.normal();
    t[i] = static_cast<std::uint8_t>(rng.bernoulli(expit(z[i])));
  }
  const double h = resolve_bandwidth(2.0, z).h;
  const SmoothQueryResult r = loclin_logistic1(z, t, 0.0, h);
  CHECK_FALSE(r.saturated);
  CHECK(std::abs(r.value) < 0.15);
}

TEST_CASE("batch smoothers agree with the pointwise operations") {
  Rng rng(44);
  const int n = 120;
  VectorXd z(n), y(n);
  std::vector<std::uint8_t> t(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.normal(0.0, 1.2);
    y[i] = std::cos(z[i]) + 0.1 * rng.normal();
    t[i] = static_cast<std::uint8_t>(rng.bernoulli(expit(0.5 * z[i])));
  }
  const double h = 0.8;
  VectorXd queries(7);
  queries << -2.5, -1.0, -0.3, 0.0, 0.6, 1.4, 3.0;

  MatrixXd targets(n, 2);
  targets.col(0) = y;
  targets.col(1) = z.array().square();
  const NwSmoother nw(z, targets, h);
  for (Eigen::Index k = 0; k < queries.size(); ++k) {
    double out[2];
    nw.at(queries[k], out);
    const VectorXd q1 = vec({queries[k]});
    const VectorXd want = nw_mean(z, targets, nullptr, q1, h);
    CHECK(out[0] == doctest::Approx(want[0]).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(want[1]).epsilon(1e-12));
  }

  const LoclinSmoother ll(z, y, h);
  for (Eigen::Index k = 0; k < queries.size(); ++k) {
    const SmoothQueryResult got = ll.at(queries[k]);
    const SmoothQueryResult want = loclin_fit1(z, y, nullptr, queries[k], h);
    CHECK(got.value == doctest::Approx(want.value).epsilon(1e-10));
    CHECK(got.derivative == doctest::Approx(want.derivative).epsilon(1e-10));
    CHECK(got.extrapolated == want.extrapolated);
  }

  const LoclinLogisticSmoother lg(z, t, h);
  VectorXd eta, etap;
  lg.at_all(queries, &eta, &etap);
  for (Eigen::Index k = 0; k < queries.size(); ++k) {
    const SmoothQueryResult want = loclin_logistic1(z, t, queries[k], h);
    CHECK(eta[k] == doctest::Approx(want.value).epsilon(1e-8));
    CHECK(etap[k] == doctest::Approx(want.derivative).epsilon(1e-8));
  }
}

}  // TEST_SUITE

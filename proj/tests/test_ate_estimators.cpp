#include <doctest.h>

#include <cmath>
#include <vector>

#include "causal_sdr/ate_estimators.hpp"
#include "causal_sdr/rng.hpp"

using namespace causal_sdr;
using Eigen::VectorXd;

namespace {

ObservationalDataset tiny(std::vector<std::uint8_t> t, std::vector<double> y) {
  ObservationalDataset data;
  const int n = static_cast<int>(t.size());
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t = std::move(t);
  data.y = Eigen::Map<const VectorXd>(y.data(), n);
  return data;
}

double cov_ub(const VectorXd& a, const VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  double s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

}  // namespace

TEST_SUITE("ate_estimators") {

TEST_CASE("method tags round trip") {
  for (Method m : {Method::Naive, Method::IMP, Method::IMP2, Method::IPW,
                   Method::AIPW, Method::IAIPW, Method::Shrinkage})
    CHECK(method_from_tag(method_tag(m)) == m);
  CHECK(method_tag(Method::IAIPW) == "iaipw");
  CHECK_THROWS_AS(method_from_tag("ols"), InvalidConfig);
}

TEST_CASE("naive difference of arm means") {
  const auto data = tiny({1, 1, 0, 0}, {3.0, 5.0, 1.0, 3.0});
  CHECK(naive_point(data) == doctest::Approx(2.0));
  const AteEstimate est = naive(data);
  CHECK(est.method == Method::Naive);
  CHECK(est.point == doctest::Approx(2.0));
  CHECK_FALSE(est.has_se);
}

TEST_CASE("naive requires both arms") {
  CHECK_THROWS_AS(naive_point(tiny({1, 1, 1}, {1.0, 2.0, 3.0})), EmptyArm);
  CHECK_THROWS_AS(naive_point(tiny({0, 0}, {1.0, 2.0})), EmptyArm);
}

TEST_CASE("imp imputes only the unobserved arm") {
  const auto data = tiny({1, 0, 0}, {5.0, 1.0, 2.0});
  VectorXd m1(3), m0(3);
  m1 << 9.0, 4.0, 6.0;  // m1[0] must be ignored: row 0 is treated
  m0 << 2.0, 8.0, 8.0;  // m0[1], m0[2] must be ignored
  // e1 = 5 + 4 + 6, e0 = 2 + 1 + 2
  CHECK(imp_point(data, m1, m0) == doctest::Approx((15.0 - 5.0) / 3.0));
}

TEST_CASE("imp2 ignores observed responses entirely") {
  const auto data = tiny({1, 0, 1, 0}, {100.0, -100.0, 50.0, -50.0});
  VectorXd m1(4), m0(4);
  m1 << 1.0, 2.0, 3.0, 4.0;
  m0 << 0.5, 0.5, 0.5, 0.5;
  CHECK(imp2_point(data, m1, m0) == doctest::Approx(2.5 - 0.5));
}

TEST_CASE("ipw with even odds doubles each arm") {
  const auto data = tiny({1, 0}, {4.0, 6.0});
  VectorXd eta = VectorXd::Zero(2);
  CHECK(ipw_point(data, eta) == doctest::Approx((8.0 - 12.0) / 2.0));
}

TEST_CASE("ipw hand-computed with uneven propensities") {
  const auto data = tiny({1, 0}, {3.0, 2.0});
  VectorXd eta(2);
  eta << std::log(3.0), std::log(0.25);  // p = 0.75, p = 0.2
  // treated: 3 / 0.75 = 4; control: 2 / 0.8 = 2.5
  CHECK(ipw_point(data, eta) == doctest::Approx((4.0 - 2.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("aipw equals ipw plus the augmentation means") {
  Rng rng(13);
  const int n = 60;
  ObservationalDataset data;
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t.resize(n);
  data.y.resize(n);
  VectorXd m1(n), m0(n), eta(n);
  for (int i = 0; i < n; ++i) {
    data.t[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
    data.y[i] = rng.normal(1.0, 2.0);
    m1[i] = rng.normal();
    m0[i] = rng.normal();
    eta[i] = rng.normal(0.0, 0.8);
  }
  double aug = 0;
  for (int i = 0; i < n; ++i) {
    const double ti = data.t[i];
    aug += (1.0 - ti * (1.0 + std::exp(-eta[i]))) * m1[i] -
           (1.0 - (1.0 - ti) * (1.0 + std::exp(eta[i]))) * m0[i];
  }
  aug /= n;
  CHECK(aipw_point(data, m1, m0, eta) ==
        doctest::Approx(ipw_point(data, eta) + aug).epsilon(1e-12));
}

TEST_CASE("aipw with zero imputations reduces to ipw") {
  Rng rng(14);
  const int n = 40;
  ObservationalDataset data;
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t.resize(n);
  data.y.resize(n);
  VectorXd zero = VectorXd::Zero(n), eta(n);
  for (int i = 0; i < n; ++i) {
    data.t[i] = static_cast<std::uint8_t>(rng.bernoulli(0.4));
    data.y[i] = rng.normal();
    eta[i] = rng.normal();
  }
  CHECK(aipw_point(data, zero, zero, eta) ==
        doctest::Approx(ipw_point(data, eta)).epsilon(1e-12));
}

TEST_CASE("aipw collapses to imp2 under perfect imputation") {
  Rng rng(15);
  const int n = 50;
  ObservationalDataset data;
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t.resize(n);
  data.y.resize(n);
  VectorXd m1(n), m0(n), eta(n);
  for (int i = 0; i < n; ++i) {
    data.t[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
    m1[i] = rng.normal(2.0, 1.0);
    m0[i] = rng.normal(-1.0, 1.0);
    data.y[i] = data.t[i] ? m1[i] : m0[i];
    eta[i] = rng.normal();
  }
  CHECK(aipw_point(data, m1, m0, eta) ==
        doctest::Approx(imp2_point(data, m1, m0)).epsilon(1e-12));
}

TEST_CASE("iaipw coefficients match the covariance-ratio oracle") {
  Rng rng(16);
  const int n = 30;
  ObservationalDataset data;
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t.resize(n);
  data.y.resize(n);
  VectorXd m1(n), m0(n), eta(n);
  for (int i = 0; i < n; ++i) {
    data.t[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
    data.y[i] = rng.normal(1.0, 1.5);
    m1[i] = rng.normal(1.0, 1.0);
    m0[i] = rng.normal(0.0, 1.0);
    eta[i] = rng.normal(0.0, 0.7);
  }

  VectorXd a1(n), b1(n), c1(n), a0(n), b0(n), c0(n);
  for (int i = 0; i < n; ++i) {
    const double ti = data.t[i];
    const double inv_p = 1.0 + std::exp(-eta[i]);
    const double inv_q = 1.0 + std::exp(eta[i]);
    a1[i] = m1[i] * ti * inv_p;
    b1[i] = (1.0 - ti * inv_p) * m1[i];
    c1[i] = ti * data.y[i] * inv_p;
    a0[i] = m0[i] * (1.0 - ti) * inv_q;
    b0[i] = (1.0 - (1.0 - ti) * inv_q) * m0[i];
    c0[i] = (1.0 - ti) * data.y[i] * inv_q;
  }
  const double g1 = cov_ub(c1, b1) / cov_ub(a1, b1);
  const double g0 = cov_ub(c0, b0) / cov_ub(a0, b0);
  double e1 = 0, e0 = 0;
  for (int i = 0; i < n; ++i) {
    e1 += c1[i] + g1 * b1[i];
    e0 += c0[i] + g0 * b0[i];
  }

  const IaipwResult got = iaipw_point(data, m1, m0, eta);
  CHECK_FALSE(got.degenerate1);
  CHECK_FALSE(got.degenerate0);
  CHECK(got.gamma1 == doctest::Approx(g1).epsilon(1e-12));
  CHECK(got.gamma0 == doctest::Approx(g0).epsilon(1e-12));
  CHECK(got.point == doctest::Approx((e1 - e0) / n).epsilon(1e-12));
}

TEST_CASE("iaipw with unit coefficients equals aipw") {
  // gamma1 = gamma0 = 1 recovers the aipw decomposition termwise, so the
  // degenerate fallback must return the aipw point exactly
  Rng rng(18);
  const int n = 40;
  ObservationalDataset data;
  data.X = Eigen::MatrixXd::Zero(n, 2);
  data.t.resize(n);
  data.y.resize(n);
  VectorXd zero = VectorXd::Zero(n), eta(n);
  for (int i = 0; i < n; ++i) {
    data.t[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
    data.y[i] = rng.normal();
    eta[i] = rng.normal();
  }
  const IaipwResult got = iaipw_point(data, zero, zero, eta);
  CHECK(got.degenerate1);
  CHECK(got.degenerate0);
  CHECK(got.gamma1 == 1.0);
  CHECK(got.gamma0 == 1.0);
  CHECK(got.point == doctest::Approx(aipw_point(data, zero, zero, eta)).epsilon(1e-12));
}

TEST_CASE("shrinkage weight and point estimate") {
  // w = {0.36 + 0} / {0.36 + 4.5/5} = 2/7, point = 6.5/7
  const ShrinkResult r = shrinkage_combine(0.5, 1.1, 5.5, 1.0, 1.0, 25);
  CHECK_FALSE(r.zero_denominator);
  CHECK(r.w_raw == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
  CHECK(r.w == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
  CHECK(r.point == doctest::Approx(13.0 / 14.0).epsilon(1e-12));
}

TEST_CASE("shrinkage clamps to the imputation side") {
  // negative numerator: v_ai far above v_imp with identical points
  const ShrinkResult r = shrinkage_combine(1.0, 1.0, 10.0, 1.0, 5.0, 100);
  CHECK(r.w_raw < 0.0);
  CHECK(r.w == 0.0);
  CHECK(r.point == doctest::Approx(1.0));
}

TEST_CASE("shrinkage clamps to the aipw side") {
  // v_aipw < v_ai makes the denominator smaller than the numerator
  const ShrinkResult r = shrinkage_combine(2.0, 1.0, 0.5, 3.0, 2.0, 100);
  CHECK(r.w_raw > 1.0);
  CHECK(r.w == 1.0);
  CHECK(r.point == doctest::Approx(2.0));
}

TEST_CASE("shrinkage zero denominator defaults to aipw") {
  const ShrinkResult r = shrinkage_combine(3.0, 3.0, 1.0, 1.0, 1.0, 50);
  CHECK(r.zero_denominator);
  CHECK(r.w == 1.0);
  CHECK(r.point == doctest::Approx(3.0));
}

TEST_CASE("shrinkage rejects an empty sample") {
  CHECK_THROWS_AS(shrinkage_combine(1.0, 0.0, 1.0, 1.0, 0.5, 0), InvalidConfig);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <vector>

#include "causal_sdr/rng.hpp"
#include "causal_sdr/sdr_response.hpp"

using namespace causal_sdr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Double-loop reimplementation of the displayed estimating function: local
// linear fit of y on z over masked rows (leave-self-in) and Nadaraya-Watson
// E(X_L | z) over all rows, assembled termwise.
VectorXd brute_response_score(const MatrixXd& beta, const MatrixXd& X,
                              const VectorXd& y,
                              const std::vector<std::uint8_t>& mask, double h) {
  const Eigen::Index n = X.rows();
  const int p = static_cast<int>(X.cols());
  const VectorXd z = X * beta.col(0);
  VectorXd score = VectorXd::Zero(p - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!mask[j]) continue;
      const double u = (z[j] - z[i]) / h;
      if (std::abs(u) >= 1.0) continue;
      const double k = 0.75 * (1.0 - u * u) / h;
      const double d = z[j] - z[i];
      s0 += k;
      s1 += k * d;
      s2 += k * d * d;
      t0 += k * y[j];
      t1 += k * d * y[j];
    }
    const double det = s0 * s2 - s1 * s1;
    const double m = (s2 * t0 - s1 * t1) / det;
    const double mp = (s0 * t1 - s1 * t0) / det;
    const double w = (y[i] - m) * mp;
    for (int l = 1; l < p; ++l) {
      double num = 0, den = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double u = (z[j] - z[i]) / h;
        if (std::abs(u) >= 1.0) continue;
        const double k = 0.75 * (1.0 - u * u) / h;
        num += k * X(j, l);
        den += k;
      }
      score[l - 1] += w * (X(i, l) - num / den);
    }
  }
  return score / static_cast<double>(n);
}

ObservationalDataset single_index_dataset(int n, double noise_sd, Rng* rng) {
  ObservationalDataset data;
  data.X.resize(n, 3);
  data.y.resize(n);
  data.t.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng->normal();
    data.X(i, 1) = rng->normal();
    data.X(i, 2) = rng->normal();
    const double z = data.X(i, 0) - 1.5 * data.X(i, 1) + 0.8 * data.X(i, 2);
    data.y[i] = z + std::sin(z) + noise_sd * rng->normal();
  }
  data.covariate_names = {"x1", "x2", "x3"};
  return data;
}

}  // namespace

TEST_SUITE("sdr_response") {

TEST_CASE("vecl round trip with identity top block") {
  VectorXd vecl(5);
  vecl << -0.7, 0.55, -0.18, -0.55, 0.37;
  const MatrixXd beta = beta_from_vecl(vecl, 6, 1);
  CHECK(beta.rows() == 6);
  CHECK(beta.cols() == 1);
  CHECK(beta(0, 0) == 1.0);
  for (int j = 0; j < 5; ++j) CHECK(beta(j + 1, 0) == vecl[j]);
  const VectorXd back = vecl_from_beta(beta);
  CHECK(back == vecl);
}

TEST_CASE("vecl round trip for a two-column index") {
  VectorXd vecl(6);
  vecl << 1, 2, 3, 4, 5, 6;
  const MatrixXd beta = beta_from_vecl(vecl, 5, 2);
  CHECK(beta.topRows(2) == MatrixXd::Identity(2, 2));
  CHECK(beta(2, 0) == 1);
  CHECK(beta(3, 0) == 2);
  CHECK(beta(4, 0) == 3);
  CHECK(beta(2, 1) == 4);
  CHECK(beta(3, 1) == 5);
  CHECK(beta(4, 1) == 6);
  CHECK(vecl_from_beta(beta) == vecl);
}

TEST_CASE("beta_from_vecl rejects a mismatched length") {
  VectorXd vecl(4);
  vecl << 1, 2, 3, 4;
  CHECK_THROWS_AS(beta_from_vecl(vecl, 6, 1), InvalidConfig);
}

TEST_CASE("init_beta normalizes within-group regression slopes") {
  Rng rng(3);
  const int n = 60;
  ObservationalDataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.t.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    const bool treated = i % 2 == 0;
    data.t[i] = treated ? 1 : 0;
    data.y[i] = treated ? 3.0 * data.X(i, 0) - 6.0 * data.X(i, 1)
                        : 100.0 + rng.normal();
  }
  std::vector<int> perm;
  const MatrixXd beta = init_beta(data, 1, 1, &perm);
  CHECK(beta(0, 0) == doctest::Approx(1.0));
  CHECK(beta(1, 0) == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(perm == std::vector<int>{0, 1});
}

TEST_CASE("init_beta permutes a covariate with zero slope into the tail") {
  Rng rng(8);
  const int n = 80;
  ObservationalDataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.t.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    data.y[i] = 2.0 * data.X(i, 1);
  }
  std::vector<int> perm;
  const MatrixXd beta = init_beta(data, 1, 1, &perm);
  CHECK(perm == std::vector<int>{1, 0});
  CHECK(beta(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(beta(1, 0)) < 1e-8);
}

TEST_CASE("init_beta requires more group rows than covariates") {
  ObservationalDataset data;
  data.X = MatrixXd::Random(8, 6);
  data.y = VectorXd::Random(8);
  data.t = {1, 1, 1, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(init_beta(data, 1, 1, nullptr), RankDeficient);
}

TEST_CASE("response_score matches the double-loop oracle") {
  Rng rng(21);
  const int n = 30;
  const int p = 4;
  MatrixXd X(n, p);
  VectorXd y(n);
  std::vector<std::uint8_t> mask(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    const double z = X(i, 0) + 0.4 * X(i, 1) - 0.9 * X(i, 2);
    y[i] = z * z + 0.3 * rng.normal();
    mask[i] = static_cast<std::uint8_t>(rng.bernoulli(0.7));
  }

  VectorXd vecl(3);
  vecl << 0.4, -0.9, 0.2;
  const MatrixXd beta = beta_from_vecl(vecl, p, 1);
  for (double h : {2.5, 3.5}) {
    // the plain 2x2 solve in the oracle needs two distinct masked points in
    // every masked window
    const VectorXd z = X * beta.col(0);
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      int in_window = 0;
      for (int j = 0; j < n; ++j)
        if (mask[j] && std::abs(z[j] - z[i]) < h && j != i) ++in_window;
      REQUIRE(in_window >= 1);
    }
    const VectorXd got = response_score(beta, X, y, mask, h);
    const VectorXd want = brute_response_score(beta, X, y, mask, h);
    REQUIRE(got.size() == want.size());
    for (int j = 0; j < got.size(); ++j)
      CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-10));
  }
}

TEST_CASE("response_score rejects d > 1") {
  MatrixXd X = MatrixXd::Random(30, 4);
  VectorXd y = VectorXd::Random(30);
  std::vector<std::uint8_t> mask(30, 1);
  const MatrixXd beta = beta_from_vecl(VectorXd::Zero(4), 4, 2);
  CHECK_THROWS_AS(response_score(beta, X, y, mask, 1.0), InvalidConfig);
}

TEST_CASE("noiseless single index is recovered") {
  Rng rng(17);
  const int n = 400;
  ObservationalDataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.t.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    const double z = data.X(i, 0) + 2.0 * data.X(i, 1);
    data.y[i] = z * z;
  }
  const ResponseIndexModel model = fit_response_index(data, 1);
  CHECK(model.beta(0, 0) == 1.0);
  CHECK(model.beta(1, 0) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(model.score_norm < 1e-6);
}

TEST_CASE("fitted beta is a root of the estimating equation") {
  Rng rng(29);
  ObservationalDataset data = single_index_dataset(300, 0.2, &rng);
  const ResponseIndexModel model = fit_response_index(data, 1);
  const VectorXd score = response_score(model.beta, data.X, data.y, model.mask,
                                        model.bandwidth.h);
  CHECK(score.norm() < 1e-6);
}

TEST_CASE("noisy single index direction estimate") {
  Rng rng(41);
  ObservationalDataset data = single_index_dataset(500, 0.3, &rng);
  const ResponseIndexModel model = fit_response_index(data, 1);
  VectorXd truth(3);
  truth << 1.0, -1.5, 0.8;
  const double cosine = model.beta.col(0).dot(truth) /
                        (model.beta.col(0).norm() * truth.norm());
  CHECK(cosine > 0.995);
}

TEST_CASE("predict_m reproduces an affine response exactly") {
  Rng rng(55);
  const int n = 200;
  ObservationalDataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.t.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    data.y[i] = 3.0 + 2.0 * (data.X(i, 0) + 0.5 * data.X(i, 1));
  }
  FitConfig config;
  config.c = 3.0;  // wide windows keep the hull-edge fits two-sided
  const ResponseIndexModel model = fit_response_index(data, 1, config);
  MatrixXd xnew(3, 2);
  xnew << 0.2, -0.4, 1.1, 0.3, -5.0, 2.0;  // last row far outside the hull
  const PredictResult pred = predict_m(model, xnew);
  for (int i = 0; i < 3; ++i) {
    const double z = model.index_of(xnew.row(i))[0];
    CHECK(pred.m[i] == doctest::Approx(3.0 + 2.0 * z).epsilon(1e-7));
    CHECK(pred.m_prime[i] == doctest::Approx(2.0).epsilon(1e-7));
  }
  CHECK_FALSE(pred.extrapolated[0]);
  CHECK(pred.extrapolated[2]);
}

TEST_CASE("permuted fit recovers a response that ignores the first covariate") {
  // y depends on x2 alone and exactly, so the OLS slope on x1 is zero and the
  // leading block is singular: the fit must reorder covariates and still
  // expose indices in the original covariate order.
  Rng rng(62);
  const int n = 40;
  ObservationalDataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.t.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    data.y[i] = 2.0 * data.X(i, 1);
  }
  const ResponseIndexModel model = fit_response_index(data, 1);
  CHECK(model.permutation == std::vector<int>{1, 0});
  CHECK(std::abs(model.beta(1, 0)) < 1e-8);
  // index_of must honor the permutation: the index is x2, not x1
  MatrixXd a(1, 2), b(1, 2);
  a << 9.9, 0.3;
  b << -4.2, 0.3;
  CHECK(model.index_of(a)[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(model.index_of(b)[0] == doctest::Approx(0.3).epsilon(1e-9));
  const PredictResult pred = predict_m(model, a);
  CHECK(pred.m[0] == doctest::Approx(0.6).epsilon(1e-7));
}

}  // TEST_SUITE

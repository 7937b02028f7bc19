#include <doctest.h>

#include <cmath>
#include <vector>

#include "causal_sdr/solver.hpp"

using namespace causal_sdr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

class LinearProblem : public ScoreProblem {
 public:
  LinearProblem(MatrixXd a, VectorXd b) : a_(std::move(a)), b_(std::move(b)) {}
  int dim() const override { return static_cast<int>(b_.size()); }
  void prepare(const VectorXd& x) override { prepare_points.push_back(x); }
  VectorXd score(const VectorXd& x) override { return a_ * x - b_; }
  std::vector<VectorXd> prepare_points;

 private:
  MatrixXd a_;
  VectorXd b_;
};

// f1 = 10 (x2 - x1^2), f2 = 1 - x1; unique root (1, 1)
class RosenbrockRoot : public ScoreProblem {
 public:
  int dim() const override { return 2; }
  VectorXd score(const VectorXd& x) override {
    VectorXd f(2);
    f << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
    return f;
  }
};

// scalar x (1 + 0.3 sin(40 x)): only root x = 0, slope oscillates in sign
class RippleProblem : public ScoreProblem {
 public:
  int dim() const override { return 1; }
  VectorXd score(const VectorXd& x) override {
    VectorXd f(1);
    f << x[0] * (1.0 + 0.3 * std::sin(40.0 * x[0]));
    return f;
  }
};

class RootlessProblem : public ScoreProblem {
 public:
  int dim() const override { return 1; }
  VectorXd score(const VectorXd& x) override {
    VectorXd f(1);
    f << x[0] * x[0] + 1.0;
    return f;
  }
};

class TwoByTwo : public ScoreProblem {
 public:
  int dim() const override { return 2; }
  VectorXd score(const VectorXd& x) override {
    VectorXd f(2);
    f << x[0] * x[0] + x[1], std::sin(x[0]) * x[1];
    return f;
  }
};

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("fd_jacobian matches the analytic derivative") {
  TwoByTwo problem;
  VectorXd x(2);
  x << 0.7, -0.3;
  const MatrixXd jac = fd_jacobian(problem, x, 1e-5);
  CHECK(jac(0, 0) == doctest::Approx(2.0 * x[0]).epsilon(1e-8));
  CHECK(jac(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(jac(1, 0) == doctest::Approx(x[1] * std::cos(x[0])).epsilon(1e-8));
  CHECK(jac(1, 1) == doctest::Approx(std::sin(x[0])).epsilon(1e-8));
}

TEST_CASE("linear system is solved to score tolerance") {
  MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 3, -1, 0, -1, 5;
  VectorXd b(3);
  b << 1, -2, 3;
  LinearProblem problem(a, b);
  const VectorXd x0 = VectorXd::Zero(3);
  const SolveResult sol = solve_score(problem, x0);
  REQUIRE(sol.converged);
  const VectorXd want = a.colPivHouseholderQr().solve(b);
  for (int j = 0; j < 3; ++j)
    CHECK(sol.x[j] == doctest::Approx(want[j]).epsilon(1e-6));
  CHECK(sol.score_norm < 1e-6);
  CHECK(sol.iterations < 25);
}

TEST_CASE("nonlinear root from a distant start") {
  RosenbrockRoot problem;
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  SolverOptions opts;
  opts.score_tol = 1e-10;
  opts.step_tol = 0.0;
  const SolveResult sol = solve_score(problem, x0, opts);
  REQUIRE(sol.converged);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.x[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("prepare runs once at the start and after each accepted step") {
  MatrixXd a(2, 2);
  a << 2, 0, 0, 3;
  VectorXd b(2);
  b << 2, -3;
  LinearProblem problem(a, b);
  const VectorXd x0 = VectorXd::Zero(2);
  SolverOptions opts;
  opts.step_tol = 0.0;
  const SolveResult sol = solve_score(problem, x0, opts);
  REQUIRE(sol.converged);
  // smooth problem: every outer iteration accepts its trial
  CHECK(static_cast<int>(problem.prepare_points.size()) == sol.iterations + 1);
  CHECK(problem.prepare_points.front() == x0);
  CHECK(problem.prepare_points.back() == sol.x);
}

TEST_CASE("monotone acceptance never increases the score norm") {
  RippleProblem problem;
  VectorXd x0(1);
  x0 << 0.8;
  SolverOptions opts;
  opts.step_tol = 0.0;
  opts.max_iterations = 40;
  struct Recorder : ScoreProblem {
    RippleProblem inner;
    std::vector<double> accepted;
    int dim() const override { return 1; }
    void prepare(const VectorXd& x) override {
      accepted.push_back(inner.score(x).norm());
    }
    VectorXd score(const VectorXd& x) override { return inner.score(x); }
  } rec;
  solve_score(rec, x0, opts);
  for (std::size_t i = 1; i < rec.accepted.size(); ++i)
    CHECK(rec.accepted[i] < rec.accepted[i - 1]);
}

TEST_CASE("non-monotone window permits uphill steps and keeps the best point") {
  struct Recorder : ScoreProblem {
    RippleProblem inner;
    std::vector<double> accepted;
    int dim() const override { return 1; }
    void prepare(const VectorXd& x) override {
      accepted.push_back(inner.score(x).norm());
    }
    VectorXd score(const VectorXd& x) override { return inner.score(x); }
  } rec;
  VectorXd x0(1);
  x0 << 0.8;
  SolverOptions opts;
  opts.step_tol = 0.0;
  opts.nm_window = 8;
  opts.max_iterations = 40;
  opts.score_tol = 1e-10;
  const SolveResult sol = solve_score(rec, x0, opts);

  bool uphill = false;
  double best = rec.accepted.front();
  for (std::size_t i = 1; i < rec.accepted.size(); ++i) {
    if (rec.accepted[i] > rec.accepted[i - 1]) uphill = true;
    best = std::min(best, rec.accepted[i]);
  }
  CHECK(uphill);
  if (!sol.converged) CHECK(sol.score_norm == doctest::Approx(best).epsilon(1e-14));
  CHECK(sol.score_norm <= rec.accepted.front());
}

TEST_CASE("rootless system reports failure and the best point") {
  RootlessProblem problem;
  VectorXd x0(1);
  x0 << 2.0;
  SolverOptions opts;
  opts.step_tol = 0.0;
  opts.max_iterations = 50;
  const SolveResult sol = solve_score(problem, x0, opts);
  CHECK_FALSE(sol.converged);
  // minimum of |x^2 + 1| sits at x = 0
  CHECK(std::abs(sol.x[0]) < 0.3);
  CHECK(sol.score_norm == doctest::Approx(sol.x[0] * sol.x[0] + 1.0));
  CHECK(sol.score_norm < 1.1);
}

TEST_CASE("iteration cap is honored") {
  RosenbrockRoot problem;
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  SolverOptions opts;
  opts.max_iterations = 1;
  opts.step_tol = 0.0;
  opts.score_tol = 1e-14;
  const SolveResult sol = solve_score(problem, x0, opts);
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations == 1);
}

TEST_CASE("step tolerance ends the solve near a stationary point") {
  MatrixXd a(1, 1);
  a << 5;
  VectorXd b(1);
  b << 10;
  LinearProblem problem(a, b);
  VectorXd x0(1);
  x0 << 0.0;
  SolverOptions opts;
  opts.step_tol = 1e-6;
  opts.score_tol = 0.0;  // force the step test to be the exit
  const SolveResult sol = solve_score(problem, x0, opts);
  REQUIRE(sol.converged);
  CHECK(sol.x[0] == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("already at the root returns immediately") {
  RosenbrockRoot problem;
  VectorXd x0(2);
  x0 << 1.0, 1.0;
  const SolveResult sol = solve_score(problem, x0);
  REQUIRE(sol.converged);
  CHECK(sol.iterations == 0);
  CHECK(sol.score_norm < 1e-12);
}

}  // TEST_SUITE

#include "causal_sdr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace causal_sdr {

MatrixXd fd_jacobian(ScoreProblem& problem, const VectorXd& x, double fd_step) {
  const int d = problem.dim();
  MatrixXd jac(d, d);
  VectorXd xp = x;
  for (int j = 0; j < d; ++j) {
    const double step = fd_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + step;
    const VectorXd fp = problem.score(xp);
    xp[j] = x[j] - step;
    const VectorXd fm = problem.score(xp);
    xp[j] = x[j];
    jac.col(j) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

SolveResult solve_score(ScoreProblem& problem, const VectorXd& x0,
                        const SolverOptions& opts) {
  const int d = problem.dim();
  VectorXd x = x0;
  problem.prepare(x);
  VectorXd f = problem.score(x);
  double fn = f.norm();

  VectorXd best_x = x;
  double best_fn = fn;
  double lambda = opts.lambda0;
  std::deque<double> recent{fn};

  SolveResult result;
  while (result.iterations < opts.max_iterations) {
    if (fn < opts.score_tol) {
      result.converged = true;
      break;
    }
    const MatrixXd jac = fd_jacobian(problem, x, opts.fd_step);
    const MatrixXd jtj = jac.transpose() * jac;
    const VectorXd g = jac.transpose() * f;

    const double ref = *std::max_element(recent.begin(), recent.end());
    bool accepted = false;
    VectorXd delta(d);
    while (lambda <= 1e12) {
      const MatrixXd damped = jtj + lambda * MatrixXd::Identity(d, d);
      delta = damped.ldlt().solve(-g);
      const VectorXd xc = x + delta;
      const VectorXd fc = problem.score(xc);
      const double fcn = fc.norm();
      if (fcn < ref) {
        x = xc;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    ++result.iterations;
    if (!accepted) break;

    const double step_norm = delta.cwiseAbs().maxCoeff();
    problem.prepare(x);
    f = problem.score(x);
    fn = f.norm();
    recent.push_back(fn);
    while (static_cast<int>(recent.size()) > std::max(1, opts.nm_window))
      recent.pop_front();
    if (fn < best_fn) {
      best_fn = fn;
      best_x = x;
    }
    if (step_norm < opts.step_tol || fn < opts.score_tol) {
      result.converged = true;
      break;
    }
  }

  if (result.converged) {
    result.x = x;
    result.score_norm = fn;
  } else {
    result.x = best_x;
    result.score_norm = best_fn;
  }
  return result;
}

}  // namespace causal_sdr

#pragma once

#include <Eigen/Dense>

#include "causal_sdr/types.hpp"

namespace causal_sdr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A system of estimating equations score(x) = 0. prepare(x) is called once per
// outer solver iteration at the accepted point; implementations refresh any
// state that is held fixed across the finite-difference evaluations of that
// iteration (bandwidths, warm starts).
class ScoreProblem {
 public:
  virtual ~ScoreProblem() = default;
  virtual int dim() const = 0;
  virtual void prepare(const VectorXd& x) { (void)x; }
  virtual VectorXd score(const VectorXd& x) = 0;
};

struct SolverOptions {
  int max_iterations = 100;
  double step_tol = 1e-6;   // max-norm of an accepted step
  double score_tol = 1e-6;  // l2 norm of the score
  double fd_step = 1e-5;    // relative central-difference step
  double lambda0 = 1e-3;    // initial Levenberg damping
  int nm_window = 1;        // accept a trial that beats the max norm of the
                            // last nm_window accepted iterates (1 = monotone)
};

struct SolveResult {
  VectorXd x;
  int iterations = 0;
  double score_norm = 0.0;
  bool converged = false;
};

// Central finite-difference Jacobian with per-coordinate step
// fd_step * max(1, |x_j|). Does not call prepare().
MatrixXd fd_jacobian(ScoreProblem& problem, const VectorXd& x, double fd_step = 1e-5);

// Levenberg-damped Gauss-Newton on the score system. Never throws on
// non-convergence; callers inspect SolveResult::converged.
SolveResult solve_score(ScoreProblem& problem, const VectorXd& x0,
                        const SolverOptions& opts = SolverOptions());

}  // namespace causal_sdr

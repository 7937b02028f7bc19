#include "causal_sdr/sdr_propensity.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "causal_sdr/rng.hpp"

namespace causal_sdr {

namespace {

VectorXd treatment_as_vector(const std::vector<std::uint8_t>& t) {
  VectorXd v(t.size());
  for (size_t i = 0; i < t.size(); ++i) v[i] = t[i];
  return v;
}

}  // namespace

VectorXd initial_alpha_score(const MatrixXd& alpha, const MatrixXd& X,
                             const std::vector<std::uint8_t>& t, double h) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const VectorXd z = X * alpha.col(0);
  const MatrixXd xl = X.rightCols(p - 1);
  const NwSmoother xls(z, xl, h);
  VectorXd score = VectorXd::Zero(p - 1);
  std::vector<double> ehat(p - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    xls.at(z[i], ehat.data());
    const double w = static_cast<double>(t[i]) - expit(z[i]);
    for (Eigen::Index j = 0; j < p - 1; ++j) score[j] += w * (xl(i, j) - ehat[j]);
  }
  return score / static_cast<double>(n);
}

namespace {

VectorXd step4_score(const MatrixXd& alpha, const MatrixXd& X,
                     const std::vector<std::uint8_t>& t, double h) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const VectorXd z = X * alpha.col(0);
  const LoclinLogisticSmoother sm(z, t, h);
  VectorXd eta, etap;
  sm.at_all(z, &eta, &etap);
  const MatrixXd xl = X.rightCols(p - 1);
  const NwSmoother xls(z, xl, h);
  VectorXd score = VectorXd::Zero(p - 1);
  std::vector<double> ehat(p - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    xls.at(z[i], ehat.data());
    const double w = (static_cast<double>(t[i]) - expit(eta[i])) * etap[i];
    for (Eigen::Index j = 0; j < p - 1; ++j) score[j] += w * (xl(i, j) - ehat[j]);
  }
  return score / static_cast<double>(n);
}

// Alternating profile iteration for Step 2: prepare() refits the conditional
// mean smoother at the current index, then score() evaluates the estimating
// equation with that smoother frozen. At a fixed point the frozen evaluation
// coincides with initial_alpha_score.
class InitialAlphaProblem : public ScoreProblem {
 public:
  InitialAlphaProblem(const MatrixXd& X, const std::vector<std::uint8_t>& t, double c)
      : x_(X), t_(t), c_(c), xl_(X.rightCols(X.cols() - 1)) {}

  int dim() const override { return static_cast<int>(x_.cols()) - 1; }

  void prepare(const VectorXd& vecl) override {
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(x_.cols()), 1);
    const VectorXd z = x_ * alpha.col(0);
    h_ = resolve_bandwidth(c_, z).h;
    xls_ = std::make_unique<NwSmoother>(z, xl_, h_);
  }

  VectorXd score(const VectorXd& vecl) override {
    const Eigen::Index n = x_.rows();
    const Eigen::Index p = x_.cols();
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(p), 1);
    const VectorXd q = x_ * alpha.col(0);
    VectorXd score = VectorXd::Zero(p - 1);
    std::vector<double> ehat(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      xls_->at(q[i], ehat.data());
      const double w = static_cast<double>(t_[i]) - expit(q[i]);
      for (Eigen::Index j = 0; j < p - 1; ++j)
        score[j] += w * (xl_(i, j) - ehat[j]);
    }
    return score / static_cast<double>(n);
  }

 private:
  const MatrixXd& x_;
  const std::vector<std::uint8_t>& t_;
  double c_;
  MatrixXd xl_;
  double h_ = 0.0;
  std::unique_ptr<NwSmoother> xls_;
};

// Step 2 with the conditional mean refitted at every trial evaluation; used
// as a fallback when the alternating iteration stalls.
class ReprofiledInitialAlphaProblem : public ScoreProblem {
 public:
  ReprofiledInitialAlphaProblem(const MatrixXd& X,
                                const std::vector<std::uint8_t>& t, double c)
      : x_(X), t_(t), c_(c) {}

  int dim() const override { return static_cast<int>(x_.cols()) - 1; }

  void prepare(const VectorXd& vecl) override {
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(x_.cols()), 1);
    h_ = resolve_bandwidth(c_, x_ * alpha.col(0)).h;
  }

  VectorXd score(const VectorXd& vecl) override {
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(x_.cols()), 1);
    return initial_alpha_score(alpha, x_, t_, h_);
  }

 private:
  const MatrixXd& x_;
  const std::vector<std::uint8_t>& t_;
  double c_;
  double h_ = 0.0;
};

// Step 4 with the link and conditional mean refitted at every trial value of
// alpha (full profiling). h_mult scales the bandwidth rule; with refresh_h
// the bandwidth follows the current index, otherwise it stays frozen at the
// value computed for the starting point.
class Step4Problem : public ScoreProblem {
 public:
  Step4Problem(const MatrixXd& X, const std::vector<std::uint8_t>& t, double c,
               double h_mult, bool refresh_h, const VectorXd& start)
      : x_(X), t_(t), c_(c), h_mult_(h_mult), refresh_h_(refresh_h) {
    set_h(start);
  }

  int dim() const override { return static_cast<int>(x_.cols()) - 1; }

  void prepare(const VectorXd& vecl) override {
    if (refresh_h_) set_h(vecl);
  }

  VectorXd score(const VectorXd& vecl) override {
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(x_.cols()), 1);
    return step4_score(alpha, x_, t_, h_);
  }

  double h() const { return h_; }

 private:
  void set_h(const VectorXd& vecl) {
    const MatrixXd alpha = beta_from_vecl(vecl, static_cast<int>(x_.cols()), 1);
    h_ = h_mult_ * resolve_bandwidth(c_, x_ * alpha.col(0)).h;
  }

  const MatrixXd& x_;
  const std::vector<std::uint8_t>& t_;
  double c_;
  double h_mult_;
  bool refresh_h_;
  double h_ = 0.0;
};

}  // namespace

VectorXd propensity_score_eq(const MatrixXd& alpha, const MatrixXd& X,
                             const std::vector<std::uint8_t>& t, double h) {
  return step4_score(alpha, X, t, h);
}

MatrixXd initial_alpha(const ObservationalDataset& data, const FitConfig& config) {
  if (data.n() <= data.p())
    throw RankDeficient("sample size must exceed covariate count");
  const VectorXd tv = treatment_as_vector(data.t);
  const Eigen::Index p = data.p();

  // OLS of T on [1, X] for the starting direction
  MatrixXd design(data.n(), p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = data.X;
  const VectorXd coef =
      (design.transpose() * design).ldlt().solve(design.transpose() * tv);
  const VectorXd slopes = coef.tail(p);
  if (std::abs(slopes[0]) < 1e-12)
    throw RankDeficient("leading propensity slope is zero");
  const VectorXd alpha0 = slopes / slopes[0];

  // The result is only the starting value for Step 4, so the solver's
  // standard convergence test (parameter step or score norm) is accepted.
  const VectorXd x0 = alpha0.tail(p - 1);
  InitialAlphaProblem alternating(data.X, data.t, config.c);
  SolveResult sol = solve_score(alternating, x0, config.solver);
  if (!sol.converged) {
    ReprofiledInitialAlphaProblem reprofiled(data.X, data.t, config.c);
    const SolveResult retry = solve_score(reprofiled, x0, config.solver);
    if (retry.converged || retry.score_norm < sol.score_norm) sol = retry;
    if (!sol.converged) {
      const SolveResult polish = solve_score(alternating, sol.x, config.solver);
      if (polish.converged || polish.score_norm < sol.score_norm) sol = polish;
    }
  }
  if (!sol.converged)
    throw NoConvergence("initial_alpha: score norm " +
                        std::to_string(sol.score_norm) + " after " +
                        std::to_string(sol.iterations) + " iterations");
  return beta_from_vecl(sol.x, static_cast<int>(p), 1);
}

PropensityIndexModel fit_propensity(const ObservationalDataset& data,
                                    const FitConfig& config) {
  const MatrixXd alpha0 = initial_alpha(data, config);
  const VectorXd x0 = vecl_from_beta(alpha0);
  const double tol = config.solver.score_tol;
  int total_iterations = 0;

  // The profiled equation's sample surface oscillates at the kernel scale,
  // so a single damped solve often parks in a local minimum away from the
  // root. Escalating attempts share the work, all gated on the equation
  // value at alpha-hat (the parameter-step exit is disabled): a non-monotone
  // run that can hop across the oscillation, the same run with wider
  // finite-difference steps whose secant Jacobian averages out the ripples
  // (two widths reach different roots), and finally restarts from perturbed
  // initial values.
  const auto attempt = [&](const VectorXd& start, double fd_step,
                           int max_iterations) {
    SolverOptions opt = config.solver;
    opt.step_tol = 0.0;
    opt.nm_window = 8;
    opt.fd_step = fd_step;
    opt.max_iterations = max_iterations;
    Step4Problem problem(data.X, data.t, config.c, 1.0, true, start);
    const SolveResult s = solve_score(problem, start, opt);
    total_iterations += s.iterations;
    return s;
  };

  SolveResult sol = attempt(x0, config.solver.fd_step, 40);
  if (!(sol.score_norm < tol)) {
    const SolveResult retry = attempt(x0, 5e-3, 40);
    if (retry.score_norm < sol.score_norm) sol = retry;
  }
  if (!(sol.score_norm < tol)) {
    SolveResult coarse = attempt(x0, 2e-2, 30);
    if (!(coarse.score_norm < tol)) {
      const SolveResult polish = attempt(coarse.x, config.solver.fd_step, 30);
      if (polish.score_norm < coarse.score_norm) coarse = polish;
    }
    if (coarse.score_norm < sol.score_norm) sol = coarse;
  }
  if (!(sol.score_norm < tol)) {
    Rng restart_rng(0x5D0A1FULL);
    for (int s = 0; s < 3 && !(sol.score_norm < tol); ++s) {
      VectorXd start = x0;
      for (Eigen::Index j = 0; j < start.size(); ++j)
        start[j] += 0.2 * restart_rng.normal();
      const SolveResult retry = attempt(start, config.solver.fd_step, 40);
      if (retry.score_norm < sol.score_norm) sol = retry;
    }
  }
  if (!(sol.score_norm < tol))
    throw NoConvergence("fit_propensity: score norm " +
                        std::to_string(sol.score_norm) + " after " +
                        std::to_string(total_iterations) + " iterations");

  PropensityIndexModel model;
  model.d_alpha = 1;
  model.alpha = beta_from_vecl(sol.x, static_cast<int>(data.p()), 1);
  model.train_index = data.X * model.alpha.col(0);
  model.bandwidth = resolve_bandwidth(config.c, model.train_index);
  model.t = data.t;
  model.iterations = total_iterations;
  model.score_norm = sol.score_norm;

  model.eta_smoother = std::make_shared<const LoclinLogisticSmoother>(
      model.train_index, model.t, model.bandwidth.h);
  std::vector<std::uint8_t> saturated;
  model.eta_smoother->at_all(model.train_index, &model.eta_hat,
                             &model.eta_prime_hat, &saturated);
  int sat = 0;
  for (auto s : saturated) sat += s;
  model.saturated_training_queries = sat;
  model.p_hat.resize(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    model.p_hat[i] = expit(model.eta_hat[i]);
  return model;
}

VectorXd predict_propensity(const PropensityIndexModel& model,
                            const MatrixXd& X_new) {
  const VectorXd z = model.index_of(X_new);
  VectorXd eta, etap;
  model.eta_smoother->at_all(z, &eta, &etap);
  VectorXd p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = expit(eta[i]);
  return p;
}

}  // namespace causal_sdr

#include "causal_sdr/sdr_response.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace causal_sdr {

MatrixXd beta_from_vecl(const VectorXd& vecl, int p, int d) {
  if (vecl.size() != static_cast<Eigen::Index>(p - d) * d)
    throw InvalidConfig("vecl length does not match (p-d)*d");
  MatrixXd beta(p, d);
  beta.topRows(d) = MatrixXd::Identity(d, d);
  for (int j = 0; j < d; ++j)
    beta.col(j).tail(p - d) = vecl.segment(static_cast<Eigen::Index>(j) * (p - d), p - d);
  return beta;
}

VectorXd vecl_from_beta(const MatrixXd& beta) {
  const int p = static_cast<int>(beta.rows());
  const int d = static_cast<int>(beta.cols());
  VectorXd vecl(static_cast<Eigen::Index>(p - d) * d);
  for (int j = 0; j < d; ++j)
    vecl.segment(static_cast<Eigen::Index>(j) * (p - d), p - d) = beta.col(j).tail(p - d);
  return vecl;
}

namespace {

std::vector<std::uint8_t> group_mask(const ObservationalDataset& data, int group) {
  std::vector<std::uint8_t> mask(data.t.size());
  for (size_t i = 0; i < data.t.size(); ++i)
    mask[i] = (data.t[i] == static_cast<std::uint8_t>(group)) ? 1 : 0;
  return mask;
}

MatrixXd apply_permutation(const MatrixXd& X, const std::vector<int>& perm) {
  MatrixXd out(X.rows(), X.cols());
  for (size_t j = 0; j < perm.size(); ++j) out.col(j) = X.col(perm[j]);
  return out;
}

// OLS slope coefficients of y on [1, X] restricted to masked rows.
VectorXd ols_slopes(const MatrixXd& X, const VectorXd& y,
                    const std::vector<std::uint8_t>& mask) {
  const Eigen::Index p = X.cols();
  Eigen::Index m = 0;
  for (auto v : mask) m += v;
  MatrixXd design(m, p + 1);
  VectorXd yy(m);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!mask[i]) continue;
    design(r, 0) = 1.0;
    design.row(r).tail(p) = X.row(i);
    yy[r] = y[i];
    ++r;
  }
  const VectorXd coef = (design.transpose() * design)
                            .ldlt()
                            .solve(design.transpose() * yy);
  return coef.tail(p);
}

}  // namespace

MatrixXd init_beta(const ObservationalDataset& data, int group, int d,
                   std::vector<int>* permutation) {
  const int p = static_cast<int>(data.p());
  const auto mask = group_mask(data, group);
  Eigen::Index m = 0;
  for (auto v : mask) m += v;
  if (m <= data.p())
    throw RankDeficient("within-group sample size must exceed covariate count");

  const VectorXd slopes = ols_slopes(data.X, data.y, mask);

  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  if (d == 1) {
    const double max_abs = slopes.cwiseAbs().maxCoeff();
    if (!(max_abs > 0)) throw RankDeficient("all fitted slopes are zero");
    if (std::abs(slopes[0]) < 1e-8 * max_abs) {
      int lead = 0;
      for (int j = 1; j < p; ++j)
        if (std::abs(slopes[j]) > std::abs(slopes[lead])) lead = j;
      std::swap(perm[0], perm[lead]);
    }
    if (permutation) *permutation = perm;
    VectorXd b(p);
    for (int j = 0; j < p; ++j) b[j] = slopes[perm[j]];
    VectorXd normalized = b / b[0];
    return normalized;
  }

  // d > 1: span the first d right-singular directions of the slope vector is
  // rank one, so use the slope plus trailing coordinate directions, then pivot
  // an invertible top block into place via column-pivoted QR of the top rows.
  MatrixXd dirs = MatrixXd::Zero(p, d);
  dirs.col(0) = slopes;
  for (int j = 1; j < d; ++j) dirs(p - j, j) = 1.0;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(dirs.transpose());
  const auto piv = qr.colsPermutation().indices();
  std::vector<int> lead(piv.data(), piv.data() + d);
  std::vector<std::uint8_t> taken(p, 0);
  std::vector<int> order;
  for (int j : lead) {
    order.push_back(j);
    taken[j] = 1;
  }
  for (int j = 0; j < p; ++j)
    if (!taken[j]) order.push_back(j);
  MatrixXd permuted(p, d);
  for (int j = 0; j < p; ++j) permuted.row(j) = dirs.row(order[j]);
  const MatrixXd top = permuted.topRows(d);
  Eigen::FullPivLU<MatrixXd> lu(top);
  if (!lu.isInvertible())
    throw RankDeficient("no covariate permutation yields an invertible top block");
  if (permutation) *permutation = order;
  return permuted * top.inverse();
}

VectorXd response_score(const MatrixXd& beta, const MatrixXd& X, const VectorXd& y,
                        const std::vector<std::uint8_t>& mask, double h) {
  const Eigen::Index n = X.rows();
  const int p = static_cast<int>(X.cols());
  const int d = static_cast<int>(beta.cols());
  if (d != 1) throw InvalidConfig("index dimension d > 1 is not supported");
  const MatrixXd xl = X.rightCols(p - d);

  {
    const VectorXd z = X * beta.col(0);
    VectorXd zg;
    VectorXd yg;
    {
      Eigen::Index m = 0;
      for (auto v : mask) m += v;
      zg.resize(m);
      yg.resize(m);
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        zg[r] = z[i];
        yg[r] = y[i];
        ++r;
      }
    }
    const LoclinSmoother msm(zg, yg, h);
    const NwSmoother xlsm(z, xl, h);
    VectorXd score = VectorXd::Zero(p - 1);
    std::vector<double> ehat(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      const SmoothQueryResult mi = msm.at(z[i]);
      xlsm.at(z[i], ehat.data());
      const double w = (y[i] - mi.value) * mi.derivative;
      for (int j = 0; j < p - 1; ++j) score[j] += w * (xl(i, j) - ehat[j]);
    }
    return score / static_cast<double>(n);
  }
}

namespace {

// Alternating profile iteration: prepare() refits the bandwidth and the
// group-restricted local linear smoother at the current index, then score()
// evaluates the estimating equation with that smoother frozen. At a fixed
// point the frozen evaluation coincides with response_score.
class ResponseScoreProblem : public ScoreProblem {
 public:
  ResponseScoreProblem(const MatrixXd& X, const VectorXd& y,
                       std::vector<std::uint8_t> mask, double c, int d)
      : x_(X),
        y_(y),
        mask_(std::move(mask)),
        c_(c),
        d_(d),
        xl_(X.rightCols(X.cols() - d)) {
    if (d != 1) throw InvalidConfig("index dimension d > 1 is not supported");
    for (Eigen::Index i = 0; i < x_.rows(); ++i)
      if (mask_[i]) rows_.push_back(i);
    yg_.resize(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r) yg_[r] = y_[rows_[r]];
  }

  int dim() const override {
    return static_cast<int>(x_.cols() - d_) * d_;
  }

  void prepare(const VectorXd& vecl) override {
    const MatrixXd beta = beta_from_vecl(vecl, static_cast<int>(x_.cols()), d_);
    const VectorXd z = x_ * beta.col(0);
    h_ = resolve_bandwidth(c_, z).h;
    VectorXd zg(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r) zg[r] = z[rows_[r]];
    msm_ = std::make_unique<LoclinSmoother>(zg, yg_, h_);
  }

  VectorXd score(const VectorXd& vecl) override {
    const Eigen::Index n = x_.rows();
    const int p = static_cast<int>(x_.cols());
    const MatrixXd beta = beta_from_vecl(vecl, p, d_);
    const VectorXd z = x_ * beta.col(0);
    const NwSmoother xls(z, xl_, h_);
    VectorXd score = VectorXd::Zero(p - 1);
    std::vector<double> ehat(static_cast<std::size_t>(p - 1));
    for (const Eigen::Index i : rows_) {
      const SmoothQueryResult mi = msm_->at(z[i]);
      xls.at(z[i], ehat.data());
      const double w = (y_[i] - mi.value) * mi.derivative;
      for (int j = 0; j < p - 1; ++j) score[j] += w * (xl_(i, j) - ehat[j]);
    }
    return score / static_cast<double>(n);
  }

  double h() const { return h_; }

 private:
  const MatrixXd& x_;
  const VectorXd& y_;
  std::vector<std::uint8_t> mask_;
  double c_;
  int d_;
  MatrixXd xl_;
  std::vector<Eigen::Index> rows_;
  VectorXd yg_;
  double h_ = 0.0;
  std::unique_ptr<LoclinSmoother> msm_;
};

// Same fixed point as ResponseScoreProblem but with the smoother refitted at
// every trial evaluation. Slower and rougher, yet it reaches the root from
// some starting points where the alternating iteration stalls (and vice
// versa), so the fit tries both.
class ReprofiledResponseProblem : public ScoreProblem {
 public:
  ReprofiledResponseProblem(const MatrixXd& X, const VectorXd& y,
                            std::vector<std::uint8_t> mask, double c, int d)
      : x_(X), y_(y), mask_(std::move(mask)), c_(c), d_(d) {}

  int dim() const override {
    return static_cast<int>(x_.cols() - d_) * d_;
  }

  void prepare(const VectorXd& vecl) override {
    const MatrixXd beta = beta_from_vecl(vecl, static_cast<int>(x_.cols()), d_);
    h_ = resolve_bandwidth(c_, x_ * beta.col(0)).h;
  }

  VectorXd score(const VectorXd& vecl) override {
    const MatrixXd beta = beta_from_vecl(vecl, static_cast<int>(x_.cols()), d_);
    return response_score(beta, x_, y_, mask_, h_);
  }

 private:
  const MatrixXd& x_;
  const VectorXd& y_;
  std::vector<std::uint8_t> mask_;
  double c_;
  int d_;
  double h_ = 0.0;
};

}  // namespace

ResponseIndexModel fit_response_index(const ObservationalDataset& data, int group,
                                      const FitConfig& config) {
  std::vector<int> perm;
  const MatrixXd beta0 = init_beta(data, group, config.d, &perm);
  const MatrixXd xperm = apply_permutation(data.X, perm);
  auto mask = group_mask(data, group);

  const double tol = config.solver.score_tol;
  const VectorXd x0 = vecl_from_beta(beta0);

  // Like the propensity equation, the profiled sample surface ripples at the
  // kernel scale, so escalating attempts share the work: the alternating
  // iteration, the reprofiled equation, the same with a wider
  // finite-difference step whose secant Jacobian averages out the ripples,
  // and an alternating polish from the best point found. All exits are gated
  // on the equation value.
  ResponseScoreProblem alternating(xperm, data.y, mask, config.c, config.d);
  ReprofiledResponseProblem reprofiled(xperm, data.y, mask, config.c, config.d);
  int total_iterations = 0;
  const auto attempt = [&](ScoreProblem& problem, const VectorXd& start,
                           double fd_step, int max_iterations) {
    SolverOptions opt = config.solver;
    opt.step_tol = 0.0;
    opt.nm_window = 8;
    opt.fd_step = fd_step;
    opt.max_iterations = max_iterations;
    const SolveResult s = solve_score(problem, start, opt);
    total_iterations += s.iterations;
    return s;
  };

  SolveResult sol = attempt(alternating, x0, config.solver.fd_step, 40);
  if (!(sol.score_norm < tol)) {
    const SolveResult retry = attempt(reprofiled, x0, config.solver.fd_step, 40);
    if (retry.score_norm < sol.score_norm) sol = retry;
  }
  if (!(sol.score_norm < tol)) {
    const SolveResult retry = attempt(reprofiled, x0, 5e-3, 40);
    if (retry.score_norm < sol.score_norm) sol = retry;
  }
  if (!(sol.score_norm < tol)) {
    const SolveResult polish = attempt(alternating, sol.x, config.solver.fd_step, 30);
    if (polish.score_norm < sol.score_norm) sol = polish;
  }
  if (!(sol.score_norm < tol))
    throw NoConvergence("fit_response_index: score norm " +
                        std::to_string(sol.score_norm) + " after " +
                        std::to_string(total_iterations) + " iterations");

  ResponseIndexModel model;
  model.group = group;
  model.d = config.d;
  model.beta = beta_from_vecl(sol.x, static_cast<int>(data.p()), config.d);
  model.permutation = perm;
  model.train_index = xperm * model.beta.col(0);
  model.bandwidth = resolve_bandwidth(config.c, model.train_index);
  model.train_y = data.y;
  model.mask = mask;
  model.iterations = total_iterations;
  model.score_norm = sol.score_norm;

  Eigen::Index m = 0;
  for (auto v : mask) m += v;
  VectorXd zg(m), yg(m);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!mask[i]) continue;
    zg[r] = model.train_index[i];
    yg[r] = data.y[i];
    ++r;
  }
  model.m_smoother =
      std::make_shared<const LoclinSmoother>(zg, yg, model.bandwidth.h);
  return model;
}

VectorXd ResponseIndexModel::index_of(const MatrixXd& X_new) const {
  return apply_permutation(X_new, permutation) * beta.col(0);
}

PredictResult predict_m(const ResponseIndexModel& model, const MatrixXd& X_new) {
  const VectorXd z = model.index_of(X_new);
  PredictResult out;
  model.m_smoother->at_all(z, &out.m, &out.m_prime, &out.extrapolated);
  return out;
}

}  // namespace causal_sdr

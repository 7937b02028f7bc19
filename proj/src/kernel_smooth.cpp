#include "causal_sdr/kernel_smooth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace causal_sdr {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kSatEps = 1e-4;
const double kSatEta = std::log((1.0 - kSatEps) / kSatEps);
constexpr double kNewtonTol = 1e-11;
constexpr int kNewtonMaxIter = 50;

double sample_sd(const VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = v[i] - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

// log(1 + exp(u)) without overflow
double log1pexp(double u) {
  if (u > 0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

}  // namespace

double kernel_eval(double u) {
  const double a = std::abs(u);
  if (a > 1.0) return 0.0;
  return 0.75 * (1.0 - u * u);
}

BandwidthConfig resolve_bandwidth(double c, const VectorXd& index) {
  if (!(c > 0)) throw InvalidConfig("bandwidth constant c must be positive");
  const double n = static_cast<double>(index.size());
  double h = c * sample_sd(index) * std::pow(n, -0.2);
  if (!(h > 0)) h = 1e-12;  // constant index: every point sits in every window
  return BandwidthConfig{c, h};
}

namespace detail {

SortedBase::SortedBase(const VectorXd& z) {
  const int n = static_cast<int>(z.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](int a, int b) { return z[a] < z[b]; });
  z_.resize(n);
  for (int k = 0; k < n; ++k) z_[k] = z[order_[k]];
}

std::pair<int, int> SortedBase::window(double lo, double hi) const {
  const auto first = std::upper_bound(z_.begin(), z_.end(), lo);
  const auto last = std::lower_bound(first, z_.end(), hi);
  return {static_cast<int>(first - z_.begin()), static_cast<int>(last - z_.begin())};
}

double SortedBase::eval_point(double query, double h, bool* moved) const {
  if (z_.empty()) throw EmptyWindow("no training points");
  *moved = false;
  const auto w = window(query - h, query + h);
  if (w.first < w.second) return query;
  *moved = true;
  const auto it = std::lower_bound(z_.begin(), z_.end(), query);
  if (it == z_.begin()) return z_.front();
  if (it == z_.end()) return z_.back();
  const double right = *it, left = *(it - 1);
  return (query - left <= right - query) ? left : right;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// NwSmoother
// ---------------------------------------------------------------------------

NwSmoother::NwSmoother(const VectorXd& z, const MatrixXd& targets, double h)
    : base_(z), h_(h) {
  v_.resize(targets.rows(), targets.cols());
  const auto& ord = base_.order();
  for (int k = 0; k < static_cast<int>(ord.size()); ++k) v_.row(k) = targets.row(ord[k]);
}

bool NwSmoother::at(double query, double* out) const {
  bool moved = false;
  const double e = base_.eval_point(query, h_, &moved);
  const auto w = base_.window(e - h_, e + h_);
  const int q = static_cast<int>(v_.cols());
  for (int j = 0; j < q; ++j) out[j] = 0.0;
  double den = 0.0;
  const auto& z = base_.z();
  for (int k = w.first; k < w.second; ++k) {
    const double kw = kernel_eval((z[k] - e) / h_) / h_;
    den += kw;
    for (int j = 0; j < q; ++j) out[j] += kw * v_(k, j);
  }
  if (den < kRidge) den += kRidge;
  for (int j = 0; j < q; ++j) out[j] /= den;
  return moved;
}

MatrixXd NwSmoother::at_all(const VectorXd& queries) const {
  MatrixXd out(queries.size(), v_.cols());
  std::vector<double> row(v_.cols());
  for (Eigen::Index i = 0; i < queries.size(); ++i) {
    at(queries[i], row.data());
    for (int j = 0; j < static_cast<int>(row.size()); ++j) out(i, j) = row[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// LoclinSmoother
// ---------------------------------------------------------------------------

LoclinSmoother::LoclinSmoother(const VectorXd& z, const VectorXd& y, double h)
    : base_(z), h_(h) {
  const auto& ord = base_.order();
  y_.resize(ord.size());
  for (size_t k = 0; k < ord.size(); ++k) y_[k] = y[ord[k]];
}

SmoothQueryResult LoclinSmoother::at(double query) const {
  bool moved = false;
  // queries outside the training hull are clamped to the boundary and the
  // fit is extended linearly from there
  double e = base_.eval_point(query, h_, &moved);
  if (query < base_.z().front()) {
    e = base_.z().front();
    moved = true;
  } else if (query > base_.z().back()) {
    e = base_.z().back();
    moved = true;
  }
  const auto w = base_.window(e - h_, e + h_);
  const auto& z = base_.z();
  double s0 = 0, sy = 0, sz = 0, szz = 0, szy = 0;
  for (int k = w.first; k < w.second; ++k) {
    const double dz = z[k] - e;
    const double kw = kernel_eval(dz / h_) / h_;
    s0 += kw;
    sy += kw * y_[k];
    sz += kw * dz;
    szz += kw * dz * dz;
    szy += kw * y_[k] * dz;
  }
  if (s0 < kRidge) s0 += kRidge;
  const double a11 = sy / s0, a12 = szy / s0, a13 = sz / s0, a14 = szz / s0;
  double s = a14 - a13 * a13;
  if (s < kRidge) s += kRidge;
  const double slope = (a12 - a13 * a11) / s;
  const double c0 = a11 - a13 * slope;
  SmoothQueryResult r;
  r.value = c0 + slope * (query - e);
  r.derivative = slope;
  r.extrapolated = moved;
  return r;
}

void LoclinSmoother::at_all(const VectorXd& queries, VectorXd* value, VectorXd* deriv,
                            std::vector<std::uint8_t>* extrapolated) const {
  const Eigen::Index n = queries.size();
  value->resize(n);
  deriv->resize(n);
  if (extrapolated) extrapolated->assign(n, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SmoothQueryResult r = at(queries[i]);
    (*value)[i] = r.value;
    (*deriv)[i] = r.derivative;
    if (extrapolated && r.extrapolated) (*extrapolated)[i] = 1;
  }
}

// ---------------------------------------------------------------------------
// LoclinLogisticSmoother
// ---------------------------------------------------------------------------

LoclinLogisticSmoother::LoclinLogisticSmoother(const VectorXd& z,
                                               const std::vector<std::uint8_t>& t,
                                               double h)
    : base_(z), h_(h) {
  const auto& ord = base_.order();
  t_.resize(ord.size());
  for (size_t k = 0; k < ord.size(); ++k) t_[k] = static_cast<double>(t[ord[k]]);
}

SmoothQueryResult LoclinLogisticSmoother::solve_at(double query, const double* warm_b0,
                                                   const double* warm_b1) const {
  bool moved = false;
  double e = base_.eval_point(query, h_, &moved);
  if (query < base_.z().front()) {
    e = base_.z().front();
    moved = true;
  } else if (query > base_.z().back()) {
    e = base_.z().back();
    moved = true;
  }
  const auto w = base_.window(e - h_, e + h_);
  const auto& z = base_.z();
  const int m = w.second - w.first;

  bool any0 = false, any1 = false;
  double sw = 0, swt = 0;
  for (int k = w.first; k < w.second; ++k) {
    const double kw = kernel_eval((z[k] - e) / h_) / h_;
    sw += kw;
    swt += kw * t_[k];
    (t_[k] > 0.5 ? any1 : any0) = true;
  }

  SmoothQueryResult r;
  r.extrapolated = moved;
  if (!any0 || !any1) {
    ++saturated_queries_;
    r.value = any1 ? kSatEta : -kSatEta;
    r.derivative = 0.0;
    r.saturated = true;
    return r;
  }

  const double tbar = std::clamp(swt / sw, kSatEps, 1.0 - kSatEps);
  double b0 = std::log(tbar / (1.0 - tbar)), b1 = 0.0;
  // The weighted log-likelihood is strictly concave in (b0, b1), so any
  // starting point reaches the same optimum; a warm start just gets there
  // in fewer iterations.
  if (warm_b0) {
    b0 = *warm_b0;
    b1 = *warm_b1;
  }

  std::vector<double> dzs(m), kws(m);
  for (int k = w.first; k < w.second; ++k) {
    const double dz = z[k] - e;
    dzs[k - w.first] = dz;
    kws[k - w.first] = kernel_eval(dz / h_) / h_;
  }

  auto loglik = [&](double c0, double c1) {
    double ll = 0.0;
    for (int k = 0; k < m; ++k) {
      const double u = c0 + c1 * dzs[k];
      ll += kws[k] * (t_[w.first + k] * u - log1pexp(u));
    }
    return ll;
  };
  auto score = [&](double c0, double c1, double* g0, double* g1, double* h00,
                   double* h01, double* h11) {
    *g0 = *g1 = *h00 = *h01 = *h11 = 0.0;
    for (int k = 0; k < m; ++k) {
      const double dz = dzs[k];
      const double kw = kws[k];
      const double p = expit(c0 + c1 * dz);
      const double res = kw * (t_[w.first + k] - p);
      const double info = kw * p * (1.0 - p);
      *g0 += res;
      *g1 += res * dz;
      *h00 += info;
      *h01 += info * dz;
      *h11 += info * dz * dz;
    }
  };

  double ll = loglik(b0, b1);
  for (int iter = 0; iter < kNewtonMaxIter; ++iter) {
    double g0, g1, h00, h01, h11;
    score(b0, b1, &g0, &g1, &h00, &h01, &h11);
    if (std::max(std::abs(g0), std::abs(g1)) / sw < kNewtonTol) break;
    double det = h00 * h11 - h01 * h01;
    if (!(det > 1e-30)) {
      h00 += kRidge;
      h11 += kRidge;
      det = h00 * h11 - h01 * h01;
    }
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    double step = 1.0;
    double nb0 = b0 + d0, nb1 = b1 + d1, nll = loglik(nb0, nb1);
    int halvings = 0;
    while (nll < ll && halvings < 30) {
      step *= 0.5;
      nb0 = b0 + step * d0;
      nb1 = b1 + step * d1;
      nll = loglik(nb0, nb1);
      ++halvings;
    }
    // Accept any non-decreasing step, then stop once the line search cannot
    // improve the likelihood beyond double-precision noise; the gradient test
    // above remains the governing tolerance whenever it is reachable.
    const double prev_ll = ll;
    if (nll >= ll) {
      b0 = nb0;
      b1 = nb1;
      ll = nll;
    }
    if (!(nll > prev_ll + (std::abs(prev_ll) + 1e-3) * 1e-14)) break;
  }

  r.value = b0 + b1 * (query - e);
  r.derivative = b1;
  // Quasi-separated windows drive the local MLE toward infinity; clamp the
  // fitted logit exactly as for single-class windows so propensities stay in
  // (1/10000, 9999/10000) and the estimating-equation weights stay bounded.
  if (std::abs(r.value) >= kSatEta) {
    ++saturated_queries_;
    r.value = r.value > 0 ? kSatEta : -kSatEta;
    r.derivative = 0.0;
    r.saturated = true;
  }
  return r;
}

SmoothQueryResult LoclinLogisticSmoother::at(double query) const {
  return solve_at(query, nullptr, nullptr);
}

void LoclinLogisticSmoother::at_all(const VectorXd& queries, VectorXd* eta,
                                    VectorXd* etap,
                                    std::vector<std::uint8_t>* saturated,
                                    const VectorXd* warm_eta,
                                    const VectorXd* warm_etap) const {
  const Eigen::Index n = queries.size();
  eta->resize(n);
  etap->resize(n);
  if (saturated) saturated->assign(n, 0);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return queries[a] < queries[b]; });

  bool have_prev = false;
  double prev_b0 = 0, prev_b1 = 0, prev_q = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const int i = order[k];
    const double q = queries[i];
    double wb0 = 0, wb1 = 0;
    const double* pb0 = nullptr;
    const double* pb1 = nullptr;
    if (warm_eta) {
      wb0 = (*warm_eta)[i];
      wb1 = (*warm_etap)[i];
      pb0 = &wb0;
      pb1 = &wb1;
    } else if (have_prev) {
      wb1 = prev_b1;
      wb0 = prev_b0 + prev_b1 * (q - prev_q);
      pb0 = &wb0;
      pb1 = &wb1;
    }
    const SmoothQueryResult r = solve_at(q, pb0, pb1);
    (*eta)[i] = r.value;
    (*etap)[i] = r.derivative;
    if (saturated && r.saturated) (*saturated)[i] = 1;
    if (!r.saturated) {
      have_prev = true;
      prev_b0 = r.value;
      prev_b1 = r.derivative;
      prev_q = q;
    }
  }
}

// ---------------------------------------------------------------------------
// Generic mask-aware reference operations
// ---------------------------------------------------------------------------

namespace {

std::vector<int> masked_rows(Eigen::Index n, const std::vector<std::uint8_t>* mask) {
  std::vector<int> rows;
  rows.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!mask || (*mask)[i]) rows.push_back(static_cast<int>(i));
  return rows;
}

double product_kernel(const MatrixXd& index, int row, const VectorXd& at, double h) {
  double kw = 1.0;
  for (Eigen::Index j = 0; j < index.cols(); ++j)
    kw *= kernel_eval((index(row, j) - at[j]) / h) / h;
  return kw;
}

// Shared fallback: if no masked point carries positive kernel weight at the
// query, move the query to the nearest masked point (ties to the earlier row).
VectorXd generic_eval_point(const MatrixXd& index, const std::vector<int>& rows,
                            const VectorXd& query, double h, bool clamp_box,
                            bool allow_fallback, bool* moved) {
  *moved = false;
  VectorXd at = query;
  if (clamp_box) {
    for (Eigen::Index j = 0; j < index.cols(); ++j) {
      double lo = index(rows[0], j), hi = lo;
      for (int r : rows) {
        lo = std::min(lo, index(r, j));
        hi = std::max(hi, index(r, j));
      }
      if (at[j] < lo) {
        at[j] = lo;
        *moved = true;
      } else if (at[j] > hi) {
        at[j] = hi;
        *moved = true;
      }
    }
  }
  for (int r : rows)
    if (product_kernel(index, r, at, h) > 0.0) return at;
  if (!allow_fallback)
    throw EmptyWindow("no masked training point within bandwidth of query");
  *moved = true;
  int best = rows[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (int r : rows) {
    const double d = (index.row(r).transpose() - at).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return index.row(best).transpose();
}

}  // namespace

VectorXd nw_mean(const MatrixXd& train_index, const MatrixXd& train_target,
                 const std::vector<std::uint8_t>* mask, const VectorXd& query,
                 double h, bool allow_fallback) {
  const auto rows = masked_rows(train_index.rows(), mask);
  if (rows.empty()) throw EmptyWindow("mask excludes every training point");
  bool moved = false;
  const VectorXd at =
      generic_eval_point(train_index, rows, query, h, false, allow_fallback, &moved);
  VectorXd num = VectorXd::Zero(train_target.cols());
  double den = 0.0;
  for (int r : rows) {
    const double kw = product_kernel(train_index, r, at, h);
    den += kw;
    num += kw * train_target.row(r).transpose();
  }
  if (den < kRidge) den += kRidge;
  return num / den;
}

SmoothQueryResult loclin_fit(const MatrixXd& train_index, const VectorXd& train_y,
                             const std::vector<std::uint8_t>* mask,
                             const VectorXd& query, double h) {
  const auto rows = masked_rows(train_index.rows(), mask);
  if (rows.empty()) throw EmptyWindow("mask excludes every training point");
  bool moved = false;
  const VectorXd at =
      generic_eval_point(train_index, rows, query, h, true, true, &moved);
  const Eigen::Index d = train_index.cols();

  double s0 = 0, a11 = 0;
  VectorXd a12 = VectorXd::Zero(d), a13 = VectorXd::Zero(d);
  MatrixXd a14 = MatrixXd::Zero(d, d);
  for (int r : rows) {
    const double kw = product_kernel(train_index, r, at, h);
    if (kw <= 0.0) continue;
    const VectorXd dz = train_index.row(r).transpose() - at;
    s0 += kw;
    a11 += kw * train_y[r];
    a12 += kw * train_y[r] * dz;
    a13 += kw * dz;
    a14 += kw * dz * dz.transpose();
  }
  if (s0 < kRidge) s0 += kRidge;
  a11 /= s0;
  a12 /= s0;
  a13 /= s0;
  a14 /= s0;

  MatrixXd s = a14 - a13 * a13.transpose();
  Eigen::LDLT<MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < kRidge) {
    s += kRidge * MatrixXd::Identity(d, d);
    ldlt.compute(s);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0)
      throw SingularLocalDesign("local design not invertible after ridge guard");
  }
  const VectorXd slope = ldlt.solve(a12 - a13 * a11);
  const double c0 = a11 - a13.dot(slope);

  SmoothQueryResult r;
  r.value = c0 + slope.dot(query - at);
  r.derivative = (d == 1) ? slope[0] : slope.norm();
  r.extrapolated = moved;
  return r;
}

SmoothQueryResult loclin_logistic(const MatrixXd& train_index,
                                  const std::vector<std::uint8_t>& train_t,
                                  const VectorXd& query, double h) {
  if (train_index.cols() == 1) {
    LoclinLogisticSmoother eng(train_index.col(0),train_t, h);
    return eng.at(query[0]);
  }
  // multi-index reference path: full Newton on (b0, b1) with product kernel
  const auto rows = masked_rows(train_index.rows(), nullptr);
  bool moved = false;
  const VectorXd at = generic_eval_point(train_index, rows, query, h, true, true, &moved);
  const Eigen::Index d = train_index.cols();

  bool any0 = false, any1 = false;
  double sw = 0, swt = 0;
  std::vector<std::pair<int, double>> win;
  for (int r : rows) {
    const double kw = product_kernel(train_index, r, at, h);
    if (kw <= 0.0) continue;
    win.emplace_back(r, kw);
    sw += kw;
    swt += kw * train_t[r];
    (train_t[r] ? any1 : any0) = true;
  }
  SmoothQueryResult res;
  res.extrapolated = moved;
  if (!any0 || !any1) {
    res.value = any1 ? kSatEta : -kSatEta;
    res.derivative = 0.0;
    res.saturated = true;
    return res;
  }
  const double tbar = std::clamp(swt / sw, kSatEps, 1.0 - kSatEps);
  VectorXd b = VectorXd::Zero(d + 1);
  b[0] = std::log(tbar / (1.0 - tbar));
  auto loglik = [&](const VectorXd& bb) {
    double ll = 0.0;
    for (const auto& [r, kw] : win) {
      const VectorXd dz = train_index.row(r).transpose() - at;
      double u = bb[0];
      for (Eigen::Index j = 0; j < d; ++j) u += bb[j + 1] * dz[j];
      ll += kw * (train_t[r] * u - log1pexp(u));
    }
    return ll;
  };
  double ll = loglik(b);
  for (int iter = 0; iter < kNewtonMaxIter; ++iter) {
    VectorXd g = VectorXd::Zero(d + 1);
    MatrixXd hmat = MatrixXd::Zero(d + 1, d + 1);
    for (const auto& [r, kw] : win) {
      VectorXd design(d + 1);
      design[0] = 1.0;
      design.tail(d) = train_index.row(r).transpose() - at;
      double u = b.dot(design);
      const double p = expit(u);
      g += kw * (train_t[r] - p) * design;
      hmat += kw * p * (1.0 - p) * design * design.transpose();
    }
    if (g.cwiseAbs().maxCoeff() / sw < kNewtonTol) break;
    Eigen::LDLT<MatrixXd> ldlt(hmat);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < kRidge) {
      hmat += kRidge * MatrixXd::Identity(d + 1, d + 1);
      ldlt.compute(hmat);
    }
    const VectorXd delta = ldlt.solve(g);
    double step = 1.0;
    VectorXd nb = b + delta;
    double nll = loglik(nb);
    int halvings = 0;
    while (nll < ll && halvings < 30) {
      step *= 0.5;
      nb = b + step * delta;
      nll = loglik(nb);
      ++halvings;
    }
    b = nb;
    ll = nll;
  }
  res.value = b[0] + b.tail(d).dot(query - at);
  res.derivative = (d == 1) ? b[1] : b.tail(d).norm();
  return res;
}

double nw_mean1(const VectorXd& z, const VectorXd& v,
                const std::vector<std::uint8_t>* mask, double query, double h,
                bool allow_fallback) {
  VectorXd q(1);
  q[0] = query;
  return nw_mean(z, v, mask, q, h, allow_fallback)[0];
}

SmoothQueryResult loclin_fit1(const VectorXd& z, const VectorXd& y,
                              const std::vector<std::uint8_t>* mask, double query,
                              double h) {
  VectorXd q(1);
  q[0] = query;
  return loclin_fit(z, y, mask, q, h);
}

SmoothQueryResult loclin_logistic1(const VectorXd& z,
                                   const std::vector<std::uint8_t>& t, double query,
                                   double h) {
  VectorXd q(1);
  q[0] = query;
  return loclin_logistic(z, t, q, h);
}

}  // namespace causal_sdr

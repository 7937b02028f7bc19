#pragma once

#include <atomic>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causal_sdr/types.hpp"

namespace causal_sdr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Second-order Epanechnikov kernel K(u) = 0.75 (1 - u^2) on [-1, 1].
struct KernelSpec {
  enum class Family { Epanechnikov };
  Family family = Family::Epanechnikov;
  int order = 2;
};

double kernel_eval(double u);

// h = c * sd(index) * n^(-1/5), sd over all supplied index values (n-1 denominator).
struct BandwidthConfig {
  double c = 1.0;
  double h = 0.0;
};

BandwidthConfig resolve_bandwidth(double c, const VectorXd& index);

struct SmoothQueryResult {
  double value = 0.0;
  double derivative = 0.0;
  bool extrapolated = false;
  bool saturated = false;
};

// Reference operations. Kernel weights K_h(z - q) = K((z - q)/h)/h use the
// strict open window |z - q| < h; points with zero weight are excluded. A mask
// (if given) restricts the training rows; targets/queries may be
// multi-column/multi-dimensional, with a product kernel across index columns.
// When no masked point has positive weight at the query, the query moves to
// the nearest masked training point (boundary fallback) unless allow_fallback
// is false, in which case EmptyWindow is thrown.
VectorXd nw_mean(const MatrixXd& train_index, const MatrixXd& train_target,
                 const std::vector<std::uint8_t>* mask, const VectorXd& query,
                 double h, bool allow_fallback = true);

// Local linear weighted least squares. Queries outside the masked bounding box
// are clamped to it and the fit extends linearly (extrapolated flag set). The
// centered second-moment matrix gets a 1e-10 ridge only when near-singular.
SmoothQueryResult loclin_fit(const MatrixXd& train_index, const VectorXd& train_y,
                             const std::vector<std::uint8_t>* mask,
                             const VectorXd& query, double h);

// Local linear logistic fit by Newton iteration with step halving.
// If every in-window label agrees, returns the saturated intercept
// +/- logit(1 - 1e-4) with zero slope and sets the saturated flag.
SmoothQueryResult loclin_logistic(const MatrixXd& train_index,
                                  const std::vector<std::uint8_t>& train_t,
                                  const VectorXd& query, double h);

double nw_mean1(const VectorXd& z, const VectorXd& v,
                const std::vector<std::uint8_t>* mask, double query, double h,
                bool allow_fallback = true);
SmoothQueryResult loclin_fit1(const VectorXd& z, const VectorXd& y,
                              const std::vector<std::uint8_t>* mask, double query,
                              double h);
SmoothQueryResult loclin_logistic1(const VectorXd& z,
                                   const std::vector<std::uint8_t>& t, double query,
                                   double h);

namespace detail {

// Sorted scalar index with binary-search kernel windows.
class SortedBase {
 public:
  explicit SortedBase(const VectorXd& z);

  int size() const { return static_cast<int>(z_.size()); }
  const std::vector<double>& z() const { return z_; }
  const std::vector<int>& order() const { return order_; }

  // Half-open range of sorted positions with lo < z < hi.
  std::pair<int, int> window(double lo, double hi) const;

  // Point at which to center the local fit: the query itself when its window
  // is nonempty, otherwise the nearest training point (ties to the left).
  double eval_point(double query, double h, bool* moved) const;

 private:
  std::vector<double> z_;
  std::vector<int> order_;
};

}  // namespace detail

// Batch Nadaraya-Watson smoother over a fixed scalar index.
class NwSmoother {
 public:
  NwSmoother(const VectorXd& z, const MatrixXd& targets, double h);

  double h() const { return h_; }
  int cols() const { return static_cast<int>(v_.cols()); }

  // Writes cols() values to out; returns true if the boundary fallback moved
  // the evaluation point.
  bool at(double query, double* out) const;
  MatrixXd at_all(const VectorXd& queries) const;

 private:
  detail::SortedBase base_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v_;
  double h_;
};

// Batch local linear smoother over a fixed scalar index.
class LoclinSmoother {
 public:
  LoclinSmoother(const VectorXd& z, const VectorXd& y, double h);

  double h() const { return h_; }
  SmoothQueryResult at(double query) const;
  void at_all(const VectorXd& queries, VectorXd* value, VectorXd* deriv,
              std::vector<std::uint8_t>* extrapolated = nullptr) const;

 private:
  detail::SortedBase base_;
  std::vector<double> y_;
  double h_;
};

// Batch local linear logistic smoother. at_all visits queries in sorted order
// and warm-starts each Newton solve from the previous solution (or from the
// caller-provided eta/etap of a nearby fit); by strict concavity of the local
// likelihood the solution does not depend on the start.
class LoclinLogisticSmoother {
 public:
  LoclinLogisticSmoother(const VectorXd& z, const std::vector<std::uint8_t>& t,
                         double h);

  double h() const { return h_; }
  int saturated_queries() const { return saturated_queries_.load(); }

  SmoothQueryResult at(double query) const;
  void at_all(const VectorXd& queries, VectorXd* eta, VectorXd* etap,
              std::vector<std::uint8_t>* saturated = nullptr,
              const VectorXd* warm_eta = nullptr,
              const VectorXd* warm_etap = nullptr) const;

 private:
  SmoothQueryResult solve_at(double query, const double* warm_b0,
                             const double* warm_b1) const;

  detail::SortedBase base_;
  std::vector<double> t_;
  double h_;
  mutable std::atomic<int> saturated_queries_{0};
};

}  // namespace causal_sdr

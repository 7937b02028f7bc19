#pragma once

#include <memory>
#include <vector>

#include "causal_sdr/kernel_smooth.hpp"
#include "causal_sdr/solver.hpp"
#include "causal_sdr/types.hpp"

namespace causal_sdr {

// p x d index matrix with exact identity top block; vecl holds the free lower
// block in column-major order.
MatrixXd beta_from_vecl(const VectorXd& vecl, int p, int d);
VectorXd vecl_from_beta(const MatrixXd& beta);

struct FitConfig {
  double c = 1.0;  // bandwidth constant
  int d = 1;       // index dimension
  SolverOptions solver;
};

struct ResponseIndexModel {
  int group = 1;  // treated = 1, control = 0
  int d = 1;
  MatrixXd beta;                 // in permuted covariate order
  std::vector<int> permutation;  // permuted_X.col(j) = X.col(permutation[j])
  BandwidthConfig bandwidth;

  VectorXd train_index;            // beta' x_i over all n, permuted order
  VectorXd train_y;                // all n observed responses
  std::vector<std::uint8_t> mask;  // group membership per row

  int iterations = 0;
  double score_norm = 0.0;

  std::shared_ptr<const LoclinSmoother> m_smoother;  // group-masked, d = 1

  // Index values for new covariate rows (applies the stored permutation).
  VectorXd index_of(const MatrixXd& X_new) const;
};

struct PredictResult {
  VectorXd m;
  VectorXd m_prime;
  std::vector<std::uint8_t> extrapolated;
};

// Within-group OLS slope of Y on X, normalized to an identity top block;
// permutes covariates when the leading block is singular.
MatrixXd init_beta(const ObservationalDataset& data, int group, int d,
                   std::vector<int>* permutation = nullptr);

// Sample average over the group of (y - m_hat) m_hat' (x_L - E_hat(X_L | z)),
// with E_hat a leave-self-in NW over all n and m_hat a group-masked local
// linear fit; z = beta' x. X columns are taken in the order given.
VectorXd response_score(const MatrixXd& beta, const MatrixXd& X, const VectorXd& y,
                        const std::vector<std::uint8_t>& mask, double h);

ResponseIndexModel fit_response_index(const ObservationalDataset& data, int group,
                                      const FitConfig& config = FitConfig());

PredictResult predict_m(const ResponseIndexModel& model, const MatrixXd& X_new);

}  // namespace causal_sdr

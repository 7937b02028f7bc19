#pragma once

#include <memory>
#include <vector>

#include "causal_sdr/sdr_response.hpp"

namespace causal_sdr {

struct PropensityIndexModel {
  int d_alpha = 1;
  MatrixXd alpha;  // p x d_alpha, identity top block, original covariate order
  BandwidthConfig bandwidth;

  VectorXd train_index;  // alpha' x_i over all n
  std::vector<std::uint8_t> t;
  VectorXd eta_hat;        // local linear logistic fit at training points
  VectorXd eta_prime_hat;
  VectorXd p_hat;          // expit(eta_hat)

  int saturated_training_queries = 0;
  int iterations = 0;
  double score_norm = 0.0;

  std::shared_ptr<const LoclinLogisticSmoother> eta_smoother;

  VectorXd index_of(const MatrixXd& X_new) const { return X_new * alpha.col(0); }
};

// Step-2 estimating function: (1/n) sum (x_L - E_hat(X_L | z)) (t - expit(z))
// with z = alpha' x and E_hat a leave-self-in NW over all n.
VectorXd initial_alpha_score(const MatrixXd& alpha, const MatrixXd& X,
                             const std::vector<std::uint8_t>& t, double h);

// Step-4 efficient estimating function:
// (1/n) sum (x_L - E_hat(X_L | z)) (t - expit(eta_hat(z))) eta_hat'(z),
// with eta_hat the local linear logistic fit at bandwidth h.
VectorXd propensity_score_eq(const MatrixXd& alpha, const MatrixXd& X,
                             const std::vector<std::uint8_t>& t, double h);

MatrixXd initial_alpha(const ObservationalDataset& data,
                       const FitConfig& config = FitConfig());

PropensityIndexModel fit_propensity(const ObservationalDataset& data,
                                    const FitConfig& config = FitConfig());

// Logistic of the local linear logistic eta fit at alpha_hat' x.
VectorXd predict_propensity(const PropensityIndexModel& model, const MatrixXd& X_new);

}  // namespace causal_sdr

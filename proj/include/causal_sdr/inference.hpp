#pragma once

#include <memory>
#include <utility>

#include "causal_sdr/sdr_propensity.hpp"
#include "causal_sdr/sdr_response.hpp"

namespace causal_sdr {

struct ModelBundle {
  ResponseIndexModel m1;
  ResponseIndexModel m0;
  PropensityIndexModel prop;
};

struct BMatrices {
  MatrixXd B;   // propensity estimating-equation Jacobian inverse
  MatrixXd B1;  // treated response equation
  MatrixXd B0;  // control response equation
};

// Per-observation influence values. phi is centered; v_hat = mean(phi^2).
// main + smoothing + index reconstructs the raw (uncentered) values.
struct InfluenceDecomposition {
  VectorXd phi;
  VectorXd main_term;
  VectorXd smoothing_term;  // conditional-expectation feedback
  VectorXd index_term;      // B-matrix index-estimation feedback
  double v_hat = 0.0;
  double raw_mean = 0.0;  // sample mean removed by centering
};

struct ShrinkageVariance {
  double w0 = 1.0;
  double v_shrinkage = 0.0;
};

/// Shared precomputation for the influence-function assembly: fitted-index
// predictions, NW conditional expectations, B matrices and the C/D moment
// vectors, all at the fitted parameters with each model's own bandwidth.
class InferenceEngine {
 public:
  InferenceEngine(const ObservationalDataset& data, const ModelBundle& bundle);
  ~InferenceEngine();

  const BMatrices& b_matrices();

  InfluenceDecomposition imp();
  InfluenceDecomposition imp2();
  InfluenceDecomposition ipw();
  InfluenceDecomposition aipw(bool assume_correct_models = false);

  // Centered sample mean of phi_aipw (simplified form) times the IMP factor
  // of the shrinkage covariance display.
  double covariance_ai();

  ShrinkageVariance shrinkage_variance(double v_imp, double v_aipw, double v_ai);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

BMatrices estimate_B_matrices(const ModelBundle& bundle,
                              const ObservationalDataset& data);
InfluenceDecomposition influence_imp(const ObservationalDataset& data,
                                     const ModelBundle& bundle);
InfluenceDecomposition influence_imp2(const ObservationalDataset& data,
                                      const ModelBundle& bundle);
InfluenceDecomposition influence_ipw(const ObservationalDataset& data,
                                     const ModelBundle& bundle);
InfluenceDecomposition influence_aipw(const ObservationalDataset& data,
                                      const ModelBundle& bundle,
                                      bool assume_correct_models = false);
double covariance_ai(const ObservationalDataset& data, const ModelBundle& bundle);

std::pair<double, double> confidence_interval(double point, double v_hat,
                                              Eigen::Index n);

}  // namespace causal_sdr

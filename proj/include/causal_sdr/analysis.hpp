#pragma once

#include <string>
#include <vector>

#include "causal_sdr/ate_estimators.hpp"
#include "causal_sdr/inference.hpp"

namespace causal_sdr {

struct AnalysisConfig {
  double c = 1.0;
  bool assume_correct_models = false;  // drop the misspecification feedback
                                       // terms from the AIPW variance
  double truncate_at = 0.0;            // 0 disables; else clip p_hat to
                                       // [truncate_at, 1 - truncate_at]
  std::vector<Method> methods;         // empty selects all seven
  SolverOptions solver;
};

struct AnalysisResult {
  std::vector<AteEstimate> estimates;  // in canonical method order
  ModelBundle models;
  double v_imp = 0.0;
  double v_aipw = 0.0;
  double v_ai = 0.0;
  std::vector<std::string> warnings;
};

// Fits whichever nuisance models the requested estimators need, computes the
// point estimates, and attaches influence-function standard errors and 95%
// confidence intervals. Shrinkage implies IMP and AIPW internally even when
// they are not requested for output.
AnalysisResult estimate_effects(const ObservationalDataset& data,
                                const AnalysisConfig& config = AnalysisConfig());

}  // namespace causal_sdr

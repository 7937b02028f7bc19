#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "causal_sdr/analysis.hpp"
#include "causal_sdr/rng.hpp"

namespace causal_sdr {

struct StudyConfig {
  int study = 1;  // 1..4
  Eigen::Index n = 1000;
  int replicates = 1000;
  double c = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<Method> estimators;  // empty selects all seven
};

// One row of the per-replicate log. se is NaN and covered is -1 for
// estimators that carry no interval (full, naive).
struct ReplicateRecord {
  int rep = 0;
  std::string estimator;
  double point = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();
  int covered = -1;
};

struct SummaryRow {
  std::string estimator;
  double mc_mean = 0.0;
  double mc_sd = std::numeric_limits<double>::quiet_NaN();
  double mean_est_sd = std::numeric_limits<double>::quiet_NaN();
  double coverage95 = std::numeric_limits<double>::quiet_NaN();
  double mse = 0.0;
};

struct StudyResult {
  int study = 1;
  Eigen::Index n = 0;
  int replicates_requested = 0;
  int replicates_used = 0;
  double truth = 0.0;
  std::vector<SummaryRow> summary;
  std::vector<ReplicateRecord> records;  // ordered by replicate index
  std::vector<std::string> failures;     // one message per failed replicate
};

// Covariate generator shared by all four studies. Draws, per row and in this
// order: x1 ~ N(1,1); x2 ~ N(0,1); x4 = 0.015 x1 + U(-0.5, 0.5);
// x3 ~ Bern(0.5 + 0.05 x2); x5 ~ Bern(0.4 + 0.2 x4);
// x6 = 0.04 x2 + 0.15 x3 + 0.05 x4 + N(0,1). Bernoulli means are clipped
// to [0, 1].
MatrixXd gen_covariates(Eigen::Index n, Rng& rng);

// Potential outcomes (Y1, Y0). Per row, the Y1 noise is drawn before the
// Y0 noise.
std::pair<VectorXd, VectorXd> gen_responses(const MatrixXd& X, int study,
                                            Rng& rng);

// Treatment indicator from the study's logistic propensity, one uniform
// draw per row.
std::vector<std::uint8_t> gen_treatment(const MatrixXd& X, int study,
                                        Rng& rng);

// Monte Carlo truth E(Y1 - Y0), 1e6 draws from a study-specific fixed
// stream, cached per study.
double study_truth(int study);

StudyResult run_study(const StudyConfig& config);

}  // namespace causal_sdr

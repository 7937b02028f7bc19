#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace causal_sdr {

// Typed error with a stable machine-readable code string.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

#define CAUSAL_SDR_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, what) {}         \
  }

CAUSAL_SDR_DEFINE_ERROR(EmptyWindow);
CAUSAL_SDR_DEFINE_ERROR(SingularLocalDesign);
CAUSAL_SDR_DEFINE_ERROR(RankDeficient);
CAUSAL_SDR_DEFINE_ERROR(NoConvergence);
CAUSAL_SDR_DEFINE_ERROR(SingularJacobian);
CAUSAL_SDR_DEFINE_ERROR(EmptyArm);
CAUSAL_SDR_DEFINE_ERROR(SchemaMismatch);
CAUSAL_SDR_DEFINE_ERROR(NonBinaryTreatment);
CAUSAL_SDR_DEFINE_ERROR(EmptyDataset);
CAUSAL_SDR_DEFINE_ERROR(UnsupportedRelease);
CAUSAL_SDR_DEFINE_ERROR(CorruptPayload);
CAUSAL_SDR_DEFINE_ERROR(InvalidConfig);
CAUSAL_SDR_DEFINE_ERROR(DegenerateCovariance);
CAUSAL_SDR_DEFINE_ERROR(ZeroDenominator);

#undef CAUSAL_SDR_DEFINE_ERROR

struct ObservationalDataset {
  Eigen::MatrixXd X;                        // n x p covariates
  Eigen::VectorXd y;                        // n outcomes
  std::vector<std::uint8_t> t;              // n binary treatment indicators
  std::vector<std::string> covariate_names;  // p names, may be empty

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  Eigen::Index treated_count() const {
    Eigen::Index c = 0;
    for (auto ti : t) c += ti;
    return c;
  }

  void validate() const {
    if (X.rows() == 0) throw EmptyDataset("dataset has no rows");
    if (y.size() != X.rows() || static_cast<Eigen::Index>(t.size()) != X.rows())
      throw SchemaMismatch("X, y, t row counts differ");
    if (!covariate_names.empty() &&
        static_cast<Eigen::Index>(covariate_names.size()) != X.cols())
      throw SchemaMismatch("covariate name count differs from X columns");
    for (auto ti : t)
      if (ti > 1) throw NonBinaryTreatment("treatment entries must be 0 or 1");
    const Eigen::Index n1 = treated_count();
    if (n1 == 0 || n1 == X.rows())
      throw EmptyArm("both treatment arms must be nonempty");
  }
};

inline double expit(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace causal_sdr

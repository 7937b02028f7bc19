#pragma once

#include <limits>
#include <string>
#include <utility>

#include "causal_sdr/sdr_propensity.hpp"
#include "causal_sdr/sdr_response.hpp"
#include "causal_sdr/types.hpp"

namespace causal_sdr {

enum class Method { Naive, IMP, IMP2, IPW, AIPW, IAIPW, Shrinkage };

std::string method_tag(Method method);
Method method_from_tag(const std::string& tag);

struct AteEstimate {
  Method method = Method::Naive;
  double point = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();
  std::pair<double, double> ci95{std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
  bool has_se = false;

  // auxiliary quantities, populated where applicable
  double w = std::numeric_limits<double>::quiet_NaN();
  double w0 = std::numeric_limits<double>::quiet_NaN();
  double gamma1 = std::numeric_limits<double>::quiet_NaN();
  double gamma0 = std::numeric_limits<double>::quiet_NaN();
};

struct IaipwResult {
  double point = 0.0;
  double gamma1 = 1.0;
  double gamma0 = 1.0;
  bool degenerate1 = false;  // var(B) = 0 forced the gamma = 1 fallback
  bool degenerate0 = false;
};

struct ShrinkResult {
  double point = 0.0;
  double w = 1.0;          // clamped to [0, 1]
  double w_raw = 1.0;      // as evaluated, before clamping
  bool zero_denominator = false;
};

/// Vector-based cores: m1, m0, eta are predictions at every observation.
double naive_point(const ObservationalDataset& data);
double imp_point(const ObservationalDataset& data, const VectorXd& m1,
                 const VectorXd& m0);
double imp2_point(const ObservationalDataset& data, const VectorXd& m1,
                  const VectorXd& m0);
double ipw_point(const ObservationalDataset& data, const VectorXd& eta);
double aipw_point(const ObservationalDataset& data, const VectorXd& m1,
                  const VectorXd& m0, const VectorXd& eta);
IaipwResult iaipw_point(const ObservationalDataset& data, const VectorXd& m1,
                        const VectorXd& m0, const VectorXd& eta);

// w = {d^2 + (v_imp - v_ai)/sqrt(n)} / {d^2 + (v_imp + v_aipw - 2 v_ai)/sqrt(n)}
// with d = d_aipw - d_imp, evaluated verbatim then clamped to [0, 1]; a zero
// or non-finite denominator yields w = 1 by convention.
ShrinkResult shrinkage_combine(double d_aipw, double d_imp, double v_aipw,
                               double v_imp, double v_ai, Eigen::Index n);

// Model-based wrappers.
AteEstimate naive(const ObservationalDataset& data);
double imp(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
           const ResponseIndexModel& m0_model);
double imp2(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
            const ResponseIndexModel& m0_model);
double ipw(const ObservationalDataset& data, const PropensityIndexModel& prop_model);
double aipw(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
            const ResponseIndexModel& m0_model,
            const PropensityIndexModel& prop_model);
IaipwResult iaipw(const ObservationalDataset& data,
                  const ResponseIndexModel& m1_model,
                  const ResponseIndexModel& m0_model,
                  const PropensityIndexModel& prop_model);

}  // namespace causal_sdr

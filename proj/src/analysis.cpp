#include "causal_sdr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "causal_sdr/sdr_propensity.hpp"
#include "causal_sdr/sdr_response.hpp"

namespace causal_sdr {

namespace {

const Method kCanonicalOrder[] = {Method::Naive, Method::IMP,   Method::IMP2,
                                  Method::IPW,   Method::AIPW,  Method::IAIPW,
                                  Method::Shrinkage};

bool wants(const std::vector<Method>& methods, Method m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

bool needs_response(const std::vector<Method>& methods) {
  for (Method m : methods) {
    if (m == Method::IMP || m == Method::IMP2 || m == Method::AIPW ||
        m == Method::IAIPW || m == Method::Shrinkage) {
      return true;
    }
  }
  return false;
}

bool needs_propensity(const std::vector<Method>& methods) {
  for (Method m : methods) {
    if (m == Method::IPW || m == Method::AIPW || m == Method::IAIPW ||
        m == Method::Shrinkage) {
      return true;
    }
  }
  return false;
}

AteEstimate with_se(Method method, double point, double v_hat,
                    Eigen::Index n) {
  AteEstimate est;
  est.method = method;
  est.point = point;
  est.se = std::sqrt(v_hat / static_cast<double>(n));
  est.ci95 = confidence_interval(point, v_hat, n);
  est.has_se = true;
  return est;
}

}  // namespace

AnalysisResult estimate_effects(const ObservationalDataset& data,
                                const AnalysisConfig& config) {
  data.validate();
  if (config.truncate_at < 0.0 || config.truncate_at >= 0.5) {
    throw InvalidConfig("truncate_at must lie in [0, 0.5)");
  }

  std::vector<Method> methods = config.methods;
  if (methods.empty()) {
    methods.assign(std::begin(kCanonicalOrder), std::end(kCanonicalOrder));
  }

  AnalysisResult result;
  const Eigen::Index n = data.n();

  FitConfig fit;
  fit.c = config.c;
  fit.solver = config.solver;

  const bool fit_response = needs_response(methods);
  const bool fit_prop = needs_propensity(methods);

  Eigen::VectorXd m1, m0, eta;
  if (fit_response) {
    result.models.m1 = fit_response_index(data, 1, fit);
    result.models.m0 = fit_response_index(data, 0, fit);
    m1 = predict_m(result.models.m1, data.X).m;
    m0 = predict_m(result.models.m0, data.X).m;
  }
  if (fit_prop) {
    result.models.prop = fit_propensity(data, fit);
    if (config.truncate_at > 0.0) {
      const double lo = logit(config.truncate_at);
      const double hi = logit(1.0 - config.truncate_at);
      for (Eigen::Index i = 0; i < n; ++i) {
        double e = result.models.prop.eta_hat[i];
        result.models.prop.eta_hat[i] = std::min(std::max(e, lo), hi);
        result.models.prop.p_hat[i] = expit(result.models.prop.eta_hat[i]);
      }
    }
    eta = result.models.prop.eta_hat;
  }

  std::unique_ptr<InferenceEngine> engine;
  auto get_engine = [&]() -> InferenceEngine& {
    if (!engine) {
      engine = std::make_unique<InferenceEngine>(data, result.models);
    }
    return *engine;
  };

  const bool want_shrinkage = wants(methods, Method::Shrinkage);
  double d_imp = 0.0;
  double d_aipw = 0.0;
  double v_aipw = 0.0;

  std::vector<AteEstimate> out;
  for (Method method : kCanonicalOrder) {
    const bool requested = wants(methods, method);
    switch (method) {
      case Method::Naive: {
        if (requested) out.push_back(naive(data));
        break;
      }
      case Method::IMP: {
        if (!requested && !want_shrinkage) break;
        d_imp = imp_point(data, m1, m0);
        result.v_imp = get_engine().imp().v_hat;
        if (requested) out.push_back(with_se(method, d_imp, result.v_imp, n));
        break;
      }
      case Method::IMP2: {
        if (!requested) break;
        const double point = imp2_point(data, m1, m0);
        out.push_back(with_se(method, point, get_engine().imp2().v_hat, n));
        break;
      }
      case Method::IPW: {
        if (!requested) break;
        const double point = ipw_point(data, eta);
        out.push_back(with_se(method, point, get_engine().ipw().v_hat, n));
        break;
      }
      case Method::AIPW: {
        if (!requested && !want_shrinkage && !wants(methods, Method::IAIPW)) {
          break;
        }
        d_aipw = aipw_point(data, m1, m0, eta);
        v_aipw = get_engine().aipw(config.assume_correct_models).v_hat;
        result.v_aipw = v_aipw;
        if (requested) out.push_back(with_se(method, d_aipw, v_aipw, n));
        break;
      }
      case Method::IAIPW: {
        if (!requested) break;
        const IaipwResult r = iaipw_point(data, m1, m0, eta);
        AteEstimate est = with_se(method, r.point, v_aipw, n);
        est.gamma1 = r.gamma1;
        est.gamma0 = r.gamma0;
        if (r.degenerate1) {
          result.warnings.push_back(
              "iaipw: degenerate covariance for the treated arm, gamma1 = 1");
        }
        if (r.degenerate0) {
          result.warnings.push_back(
              "iaipw: degenerate covariance for the control arm, gamma0 = 1");
        }
        out.push_back(est);
        break;
      }
      case Method::Shrinkage: {
        if (!requested) break;
        result.v_ai = get_engine().covariance_ai();
        const ShrinkResult sr =
            shrinkage_combine(d_aipw, d_imp, v_aipw, result.v_imp, result.v_ai, n);
        const ShrinkageVariance sv = get_engine().shrinkage_variance(
            result.v_imp, v_aipw, result.v_ai);
        AteEstimate est =
            with_se(method, sr.point, sv.v_shrinkage, n);
        est.w = sr.w;
        est.w0 = sv.w0;
        if (sr.zero_denominator) {
          result.warnings.push_back(
              "shrinkage: zero or non-finite weight denominator, w = 1");
        }
        out.push_back(est);
        break;
      }
    }
  }

  result.estimates = std::move(out);
  return result;
}

}  // namespace causal_sdr

#include "causal_sdr/ate_estimators.hpp"

#include <cmath>

namespace causal_sdr {

std::string method_tag(Method method) {
  switch (method) {
    case Method::Naive: return "naive";
    case Method::IMP: return "imp";
    case Method::IMP2: return "imp2";
    case Method::IPW: return "ipw";
    case Method::AIPW: return "aipw";
    case Method::IAIPW: return "iaipw";
    case Method::Shrinkage: return "shrinkage";
  }
  return "naive";
}

Method method_from_tag(const std::string& tag) {
  if (tag == "naive") return Method::Naive;
  if (tag == "imp") return Method::IMP;
  if (tag == "imp2") return Method::IMP2;
  if (tag == "ipw") return Method::IPW;
  if (tag == "aipw") return Method::AIPW;
  if (tag == "iaipw") return Method::IAIPW;
  if (tag == "shrinkage") return Method::Shrinkage;
  throw InvalidConfig("unknown estimator tag: " + tag);
}

double naive_point(const ObservationalDataset& data) {
  double s1 = 0, s0 = 0;
  Eigen::Index n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.t[i]) {
      s1 += data.y[i];
      ++n1;
    } else {
      s0 += data.y[i];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw EmptyArm("naive estimator needs both arms");
  return s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
}

double imp_point(const ObservationalDataset& data, const VectorXd& m1,
                 const VectorXd& m0) {
  const double n = static_cast<double>(data.n());
  double e1 = 0, e0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double ti = data.t[i];
    e1 += ti * data.y[i] + (1.0 - ti) * m1[i];
    e0 += (1.0 - ti) * data.y[i] + ti * m0[i];
  }
  return (e1 - e0) / n;
}

double imp2_point(const ObservationalDataset& data, const VectorXd& m1,
                  const VectorXd& m0) {
  const double n = static_cast<double>(data.n());
  return (m1.sum() - m0.sum()) / n;
}

double ipw_point(const ObservationalDataset& data, const VectorXd& eta) {
  const double n = static_cast<double>(data.n());
  double e1 = 0, e0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double ti = data.t[i];
    e1 += ti * data.y[i] * (1.0 + std::exp(-eta[i]));
    e0 += (1.0 - ti) * data.y[i] * (1.0 + std::exp(eta[i]));
  }
  return (e1 - e0) / n;
}

double aipw_point(const ObservationalDataset& data, const VectorXd& m1,
                  const VectorXd& m0, const VectorXd& eta) {
  const double n = static_cast<double>(data.n());
  double e1 = 0, e0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double ti = data.t[i];
    const double inv_p = 1.0 + std::exp(-eta[i]);
    const double inv_q = 1.0 + std::exp(eta[i]);
    e1 += ti * data.y[i] * inv_p + (1.0 - ti * inv_p) * m1[i];
    e0 += (1.0 - ti) * data.y[i] * inv_q + (1.0 - (1.0 - ti) * inv_q) * m0[i];
  }
  return (e1 - e0) / n;
}

namespace {

// Unbiased sample covariance of two sequences.
double sample_cov(const VectorXd& a, const VectorXd& b) {
  const Eigen::Index n = a.size();
  if (n < 2) return 0.0;
  const double ma = a.mean(), mb = b.mean();
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(n - 1);
}

}  // namespace

IaipwResult iaipw_point(const ObservationalDataset& data, const VectorXd& m1,
                        const VectorXd& m0, const VectorXd& eta) {
  const Eigen::Index n = data.n();
  VectorXd a1(n), b1(n), c1(n), a0(n), b0(n), c0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ti = data.t[i];
    const double inv_p = 1.0 + std::exp(-eta[i]);
    const double inv_q = 1.0 + std::exp(eta[i]);
    a1[i] = m1[i] * ti * inv_p;
    b1[i] = (1.0 - ti * inv_p) * m1[i];
    c1[i] = ti * data.y[i] * inv_p;
    a0[i] = m0[i] * (1.0 - ti) * inv_q;
    b0[i] = (1.0 - (1.0 - ti) * inv_q) * m0[i];
    c0[i] = (1.0 - ti) * data.y[i] * inv_q;
  }

  IaipwResult out;
  const double var_b1 = sample_cov(b1, b1);
  if (var_b1 > 0 && std::isfinite(var_b1)) {
    const double g = sample_cov(c1, b1) / sample_cov(a1, b1);
    if (std::isfinite(g)) {
      out.gamma1 = g;
    } else {
      out.degenerate1 = true;
    }
  } else {
    out.degenerate1 = true;
  }
  const double var_b0 = sample_cov(b0, b0);
  if (var_b0 > 0 && std::isfinite(var_b0)) {
    const double g = sample_cov(c0, b0) / sample_cov(a0, b0);
    if (std::isfinite(g)) {
      out.gamma0 = g;
    } else {
      out.degenerate0 = true;
    }
  } else {
    out.degenerate0 = true;
  }

  double e1 = 0, e0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    e1 += c1[i] + out.gamma1 * b1[i];
    e0 += c0[i] + out.gamma0 * b0[i];
  }
  out.point = (e1 - e0) / static_cast<double>(n);
  return out;
}

ShrinkResult shrinkage_combine(double d_aipw, double d_imp, double v_aipw,
                               double v_imp, double v_ai, Eigen::Index n) {
  if (n < 1) throw InvalidConfig("shrinkage needs n >= 1");
  const double delta = d_aipw - d_imp;
  const double root_n = std::sqrt(static_cast<double>(n));
  const double num = delta * delta + (v_imp - v_ai) / root_n;
  const double den = delta * delta + (v_imp + v_aipw - 2.0 * v_ai) / root_n;

  ShrinkResult out;
  if (den == 0.0 || !std::isfinite(num / den)) {
    out.zero_denominator = true;
    out.w_raw = 1.0;
    out.w = 1.0;
  } else {
    out.w_raw = num / den;
    out.w = std::min(1.0, std::max(0.0, out.w_raw));
  }
  out.point = out.w * d_aipw + (1.0 - out.w) * d_imp;
  return out;
}

AteEstimate naive(const ObservationalDataset& data) {
  AteEstimate est;
  est.method = Method::Naive;
  est.point = naive_point(data);
  return est;
}

namespace {

void predict_pair(const ObservationalDataset& data,
                  const ResponseIndexModel& m1_model,
                  const ResponseIndexModel& m0_model, VectorXd* m1, VectorXd* m0) {
  *m1 = predict_m(m1_model, data.X).m;
  *m0 = predict_m(m0_model, data.X).m;
}

VectorXd predict_eta(const ObservationalDataset& data,
                     const PropensityIndexModel& prop_model) {
  VectorXd eta, etap;
  prop_model.eta_smoother->at_all(prop_model.index_of(data.X), &eta, &etap);
  return eta;
}

}  // namespace

double imp(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
           const ResponseIndexModel& m0_model) {
  VectorXd m1, m0;
  predict_pair(data, m1_model, m0_model, &m1, &m0);
  return imp_point(data, m1, m0);
}

double imp2(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
            const ResponseIndexModel& m0_model) {
  VectorXd m1, m0;
  predict_pair(data, m1_model, m0_model, &m1, &m0);
  return imp2_point(data, m1, m0);
}

double ipw(const ObservationalDataset& data, const PropensityIndexModel& prop_model) {
  return ipw_point(data, predict_eta(data, prop_model));
}

double aipw(const ObservationalDataset& data, const ResponseIndexModel& m1_model,
            const ResponseIndexModel& m0_model,
            const PropensityIndexModel& prop_model) {
  VectorXd m1, m0;
  predict_pair(data, m1_model, m0_model, &m1, &m0);
  return aipw_point(data, m1, m0, predict_eta(data, prop_model));
}

IaipwResult iaipw(const ObservationalDataset& data,
                  const ResponseIndexModel& m1_model,
                  const ResponseIndexModel& m0_model,
                  const PropensityIndexModel& prop_model) {
  VectorXd m1, m0;
  predict_pair(data, m1_model, m0_model, &m1, &m0);
  return iaipw_point(data, m1, m0, predict_eta(data, prop_model));
}

}  // namespace causal_sdr

#include "causal_sdr/inference.hpp"

#include <cmath>
#include <optional>

#include "causal_sdr/ate_estimators.hpp"

namespace causal_sdr {

namespace {

MatrixXd permute_columns(const MatrixXd& X, const std::vector<int>& perm) {
  MatrixXd out(X.rows(), X.cols());
  for (size_t j = 0; j < perm.size(); ++j) out.col(j) = X.col(perm[j]);
  return out;
}

InfluenceDecomposition finalize(const VectorXd& main, const VectorXd& smoothing,
                                const VectorXd& index) {
  InfluenceDecomposition out;
  out.main_term = main;
  out.smoothing_term = smoothing;
  out.index_term = index;
  const VectorXd raw = main + smoothing + index;
  out.raw_mean = raw.mean();
  out.phi = raw.array() - out.raw_mean;
  out.v_hat = out.phi.squaredNorm() / static_cast<double>(raw.size());
  return out;
}

MatrixXd invert_or_throw(const MatrixXd& jac, const char* label) {
  Eigen::FullPivLU<MatrixXd> lu(jac);
  if (!lu.isInvertible())
    throw SingularJacobian(std::string(label) +
                           " estimating-equation Jacobian is singular");
  return lu.inverse();
}

}  // namespace

struct InferenceEngine::Impl {
  const ObservationalDataset& data;
  const ModelBundle& bundle;
  Eigen::Index n;
  Eigen::Index p;

  MatrixXd xperm1, xperm0;      // covariates in each response model's order
  MatrixXd xl1, xl0, xla;       // lower blocks
  VectorXd z1, z0, za;          // fitted indices
  VectorXd m1, m1p, m0, m0p;    // response fits and derivatives at all n
  VectorXd eta, etap, phat;
  VectorXd inv_p, inv_q;        // 1 + exp(-eta), 1 + exp(eta)

  MatrixXd ehat1, ehat0, ehata;  // NW E(X_L | index) per model
  VectorXd cond1;                // E[1 + exp(-eta) | z1_i]
  VectorXd cond0;                // E[1 + exp(eta) | z0_i]
  VectorXd em1a, em0a;           // E[m | za_i]

  MatrixXd xi1, xi0, xia;  // per-observation estimating-function rows

  std::optional<BMatrices> b;
  std::optional<Eigen::RowVectorXd> c1, c0, d1, d0;

  Impl(const ObservationalDataset& d_, const ModelBundle& b_)
      : data(d_), bundle(b_), n(d_.n()), p(d_.p()) {
    xperm1 = permute_columns(data.X, bundle.m1.permutation);
    xperm0 = permute_columns(data.X, bundle.m0.permutation);
    xl1 = xperm1.rightCols(p - 1);
    xl0 = xperm0.rightCols(p - 1);
    xla = data.X.rightCols(p - 1);

    z1 = bundle.m1.train_index;
    z0 = bundle.m0.train_index;
    za = bundle.prop.train_index;
    eta = bundle.prop.eta_hat;
    etap = bundle.prop.eta_prime_hat;
    phat = bundle.prop.p_hat;

    bundle.m1.m_smoother->at_all(z1, &m1, &m1p);
    bundle.m0.m_smoother->at_all(z0, &m0, &m0p);

    inv_p.resize(n);
    inv_q.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      inv_p[i] = 1.0 + std::exp(-eta[i]);
      inv_q[i] = 1.0 + std::exp(eta[i]);
    }

    const double h1 = bundle.m1.bandwidth.h;
    const double h0 = bundle.m0.bandwidth.h;
    const double ha = bundle.prop.bandwidth.h;

    ehat1 = NwSmoother(z1, xl1, h1).at_all(z1);
    ehat0 = NwSmoother(z0, xl0, h0).at_all(z0);
    ehata = NwSmoother(za, xla, ha).at_all(za);

    cond1 = NwSmoother(z1, inv_p, h1).at_all(z1).col(0);
    cond0 = NwSmoother(z0, inv_q, h0).at_all(z0).col(0);
    em1a = NwSmoother(za, m1, ha).at_all(za).col(0);
    em0a = NwSmoother(za, m0, ha).at_all(za).col(0);

    xi1.resize(n, p - 1);
    xi0.resize(n, p - 1);
    xia.resize(n, p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      const double w1 = ti * (data.y[i] - m1[i]) * m1p[i];
      const double w0 = (1.0 - ti) * (data.y[i] - m0[i]) * m0p[i];
      const double wa = (ti - phat[i]) * etap[i];
      xi1.row(i) = w1 * (xl1.row(i) - ehat1.row(i));
      xi0.row(i) = w0 * (xl0.row(i) - ehat0.row(i));
      xia.row(i) = wa * (xla.row(i) - ehata.row(i));
    }
  }

  const BMatrices& b_matrices() {
    if (b) return *b;
    const double h1 = bundle.m1.bandwidth.h;
    const double h0 = bundle.m0.bandwidth.h;
    const double ha = bundle.prop.bandwidth.h;

    auto response_jac = [&](const ResponseIndexModel& model, const MatrixXd& xperm,
                            double h) {
      const VectorXd vecl = vecl_from_beta(model.beta);
      MatrixXd jac(p - 1, p - 1);
      VectorXd v = vecl;
      for (Eigen::Index k = 0; k < p - 1; ++k) {
        const double step = 1e-5 * std::max(1.0, std::abs(vecl[k]));
        v[k] = vecl[k] + step;
        const VectorXd sp = response_score(beta_from_vecl(v, static_cast<int>(p), 1),
                                           xperm, data.y, model.mask, h);
        v[k] = vecl[k] - step;
        const VectorXd sm = response_score(beta_from_vecl(v, static_cast<int>(p), 1),
                                           xperm, data.y, model.mask, h);
        v[k] = vecl[k];
        jac.col(k) = (sp - sm) / (2.0 * step);
      }
      return jac;
    };

    BMatrices out;
    out.B1 = invert_or_throw(response_jac(bundle.m1, xperm1, h1), "treated response");
    out.B0 = invert_or_throw(response_jac(bundle.m0, xperm0, h0), "control response");

    const VectorXd vecl = vecl_from_beta(bundle.prop.alpha);
    MatrixXd jac(p - 1, p - 1);
    VectorXd v = vecl;
    for (Eigen::Index k = 0; k < p - 1; ++k) {
      const double step = 1e-5 * std::max(1.0, std::abs(vecl[k]));
      v[k] = vecl[k] + step;
      const VectorXd sp = propensity_score_eq(
          beta_from_vecl(v, static_cast<int>(p), 1), data.X, data.t, ha);
      v[k] = vecl[k] - step;
      const VectorXd sm = propensity_score_eq(
          beta_from_vecl(v, static_cast<int>(p), 1), data.X, data.t, ha);
      v[k] = vecl[k];
      jac.col(k) = (sp - sm) / (2.0 * step);
    }
    out.B = invert_or_throw(jac, "propensity");
    b = std::move(out);
    return *b;
  }

  // Central finite difference of the profiled local linear fit in vecl,
  // bandwidth held fixed; returns the n x (p-1) gradient of m at each
  // observation's own index value.
  MatrixXd profiled_m_gradient(const ResponseIndexModel& model,
                               const MatrixXd& xperm) {
    const double h = model.bandwidth.h;
    const double delta = 1e-4;
    const VectorXd vecl = vecl_from_beta(model.beta);
    Eigen::Index m = 0;
    for (auto v : model.mask) m += v;

    MatrixXd grad(n, p - 1);
    VectorXd v = vecl;
    for (Eigen::Index k = 0; k < p - 1; ++k) {
      VectorXd side[2];
      for (int s = 0; s < 2; ++s) {
        v[k] = vecl[k] + (s == 0 ? delta : -delta);
        const MatrixXd beta = beta_from_vecl(v, static_cast<int>(p), 1);
        const VectorXd z = xperm * beta.col(0);
        VectorXd zg(m), yg(m);
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!model.mask[i]) continue;
          zg[r] = z[i];
          yg[r] = data.y[i];
          ++r;
        }
        const LoclinSmoother sm(zg, yg, h);
        VectorXd val, der;
        sm.at_all(z, &val, &der);
        side[s] = val;
      }
      v[k] = vecl[k];
      grad.col(k) = (side[0] - side[1]) / (2.0 * delta);
    }
    return grad;
  }

  void ensure_cd() {
    if (c1) return;
    const MatrixXd grad1 = profiled_m_gradient(bundle.m1, xperm1);
    const MatrixXd grad0 = profiled_m_gradient(bundle.m0, xperm0);
    Eigen::RowVectorXd cc1 = Eigen::RowVectorXd::Zero(p - 1);
    Eigen::RowVectorXd cc0 = Eigen::RowVectorXd::Zero(p - 1);
    Eigen::RowVectorXd dd1 = Eigen::RowVectorXd::Zero(p - 1);
    Eigen::RowVectorXd dd0 = Eigen::RowVectorXd::Zero(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      cc1 += grad1.row(i) * (1.0 - ti * inv_p[i]);
      cc0 += grad0.row(i) * (1.0 - (1.0 - ti) * inv_q[i]);
      dd1 += (data.y[i] - m1[i]) * ti * std::exp(-eta[i]) * etap[i] * xla.row(i);
      dd0 += (data.y[i] - m0[i]) * (1.0 - ti) * std::exp(eta[i]) * etap[i] *
             xla.row(i);
    }
    const double dn = static_cast<double>(n);
    c1 = cc1 / dn;
    c0 = cc0 / dn;
    d1 = dd1 / dn;
    d0 = dd0 / dn;
  }

  // E(Y1), E(Y0) plug-ins per estimator, used as the centering constants the
  // displays subtract; phi is re-centered afterwards regardless.
  std::pair<double, double> ey_imp() const {
    double e1 = 0, e0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      e1 += ti * data.y[i] + (1.0 - ti) * m1[i];
      e0 += (1.0 - ti) * data.y[i] + ti * m0[i];
    }
    return {e1 / static_cast<double>(n), e0 / static_cast<double>(n)};
  }

  std::pair<double, double> ey_imp2() const {
    return {m1.mean(), m0.mean()};
  }

  std::pair<double, double> ey_ipw() const {
    double e1 = 0, e0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      e1 += ti * data.y[i] * inv_p[i];
      e0 += (1.0 - ti) * data.y[i] * inv_q[i];
    }
    return {e1 / static_cast<double>(n), e0 / static_cast<double>(n)};
  }

  std::pair<double, double> ey_aipw() const {
    double e1 = 0, e0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      e1 += ti * data.y[i] * inv_p[i] + (1.0 - ti * inv_p[i]) * m1[i];
      e0 += (1.0 - ti) * data.y[i] * inv_q[i] + (1.0 - (1.0 - ti) * inv_q[i]) * m0[i];
    }
    return {e1 / static_cast<double>(n), e0 / static_cast<double>(n)};
  }

  VectorXd imp_feedback(const VectorXd& pre1, const VectorXd& pre0) {
    const BMatrices& bm = b_matrices();
    const Eigen::RowVectorXd g1 = pre1.transpose() * bm.B1;
    const Eigen::RowVectorXd g0 = pre0.transpose() * bm.B0;
    return xi0 * g0.transpose() - xi1 * g1.transpose();
  }

  InfluenceDecomposition imp_family(bool weighted) {
    VectorXd pre1 = VectorXd::Zero(p - 1), pre0 = VectorXd::Zero(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w1 = weighted ? (1.0 - phat[i]) : 1.0;
      const double w0 = weighted ? phat[i] : 1.0;
      pre1 += w1 * m1p[i] * xl1.row(i).transpose();
      pre0 += w0 * m0p[i] * xl0.row(i).transpose();
    }
    pre1 /= static_cast<double>(n);
    pre0 /= static_cast<double>(n);

    const auto [ey1, ey0] = weighted ? ey_imp() : ey_imp2();
    VectorXd main(n), smoothing(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      main[i] = m1[i] - m0[i] - ey1 + ey0;
      smoothing[i] = cond1[i] * ti * (data.y[i] - m1[i]) -
                     cond0[i] * (1.0 - ti) * (data.y[i] - m0[i]);
    }
    return finalize(main, smoothing, imp_feedback(pre1, pre0));
  }

  InfluenceDecomposition ipw() {
    VectorXd pre = VectorXd::Zero(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::exp(eta[i]);
      pre += (m1[i] + e * m0[i]) / (1.0 + e) * etap[i] * xla.row(i).transpose();
    }
    pre /= static_cast<double>(n);

    const auto [ey1, ey0] = ey_ipw();
    VectorXd main(n), smoothing(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      main[i] = ti * data.y[i] * inv_p[i] - ey1 -
                (1.0 - ti) * data.y[i] * inv_q[i] + ey0;
      smoothing[i] = (1.0 - ti * inv_p[i]) * em1a[i] -
                     (ti - phat[i]) * inv_q[i] * em0a[i];
    }
    const Eigen::RowVectorXd g = pre.transpose() * b_matrices().B;
    const VectorXd index = xia * g.transpose();
    return finalize(main, smoothing, index);
  }

  InfluenceDecomposition aipw(bool assume_correct_models) {
    const auto [ey1, ey0] = ey_aipw();
    VectorXd main(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      main[i] = (data.y[i] - m1[i]) * ti * inv_p[i] + m1[i] - ey1 -
                (data.y[i] - m0[i]) * (1.0 - ti) * inv_q[i] - m0[i] + ey0;
    }
    const VectorXd zero = VectorXd::Zero(n);
    if (assume_correct_models) return finalize(main, zero, zero);

    ensure_cd();
    const BMatrices& bm = b_matrices();
    const Eigen::RowVectorXd g1 = (*c1) * bm.B1;
    const Eigen::RowVectorXd g0 = (*c0) * bm.B0;
    const Eigen::RowVectorXd ga = (*d1 + *d0) * bm.B;
    const VectorXd index = xi0 * g0.transpose() - xi1 * g1.transpose() +
                           xia * ga.transpose();
    return finalize(main, zero, index);
  }

  double covariance_ai() {
    // first factor: simplified AIPW influence
    const InfluenceDecomposition a = aipw(true);

    // second factor: the raw IMP expansion with E[exp(-eta)|z1],
    // E[exp(eta)|z0] weights (the conditional means minus one)
    VectorXd pre1 = VectorXd::Zero(p - 1), pre0 = VectorXd::Zero(p - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      pre1 += (1.0 - phat[i]) * m1p[i] * xl1.row(i).transpose();
      pre0 += phat[i] * m0p[i] * xl0.row(i).transpose();
    }
    pre1 /= static_cast<double>(n);
    pre0 /= static_cast<double>(n);

    const auto [ey1, ey0] = ey_imp();
    VectorXd raw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = data.t[i];
      raw[i] = ti * data.y[i] - (1.0 - ti) * data.y[i] + (1.0 - ti) * m1[i] -
               ti * m0[i] - ey1 + ey0 +
               (cond1[i] - 1.0) * ti * (data.y[i] - m1[i]) -
               (cond0[i] - 1.0) * (1.0 - ti) * (data.y[i] - m0[i]);
    }
    raw += imp_feedback(pre1, pre0);
    const VectorXd centered = raw.array() - raw.mean();
    return a.phi.dot(centered) / static_cast<double>(n);
  }
};

InferenceEngine::InferenceEngine(const ObservationalDataset& data,
                                 const ModelBundle& bundle)
    : impl_(std::make_unique<Impl>(data, bundle)) {}

InferenceEngine::~InferenceEngine() = default;

const BMatrices& InferenceEngine::b_matrices() { return impl_->b_matrices(); }

InfluenceDecomposition InferenceEngine::imp() { return impl_->imp_family(true); }

InfluenceDecomposition InferenceEngine::imp2() { return impl_->imp_family(false); }

InfluenceDecomposition InferenceEngine::ipw() { return impl_->ipw(); }

InfluenceDecomposition InferenceEngine::aipw(bool assume_correct_models) {
  return impl_->aipw(assume_correct_models);
}

double InferenceEngine::covariance_ai() { return impl_->covariance_ai(); }

ShrinkageVariance InferenceEngine::shrinkage_variance(double v_imp, double v_aipw,
                                                      double v_ai) {
  ShrinkageVariance out;
  const double den = v_imp + v_aipw - 2.0 * v_ai;
  if (den > 0 && std::isfinite(den)) {
    out.w0 = (v_imp - v_ai) / den;
    if (!std::isfinite(out.w0)) out.w0 = 1.0;
  } else {
    out.w0 = 1.0;
  }
  out.v_shrinkage = out.w0 * out.w0 * v_aipw +
                    (1.0 - out.w0) * (1.0 - out.w0) * v_imp +
                    2.0 * out.w0 * (1.0 - out.w0) * v_ai;
  return out;
}

BMatrices estimate_B_matrices(const ModelBundle& bundle,
                              const ObservationalDataset& data) {
  InferenceEngine engine(data, bundle);
  return engine.b_matrices();
}

InfluenceDecomposition influence_imp(const ObservationalDataset& data,
                                     const ModelBundle& bundle) {
  return InferenceEngine(data, bundle).imp();
}

InfluenceDecomposition influence_imp2(const ObservationalDataset& data,
                                      const ModelBundle& bundle) {
  return InferenceEngine(data, bundle).imp2();
}

InfluenceDecomposition influence_ipw(const ObservationalDataset& data,
                                     const ModelBundle& bundle) {
  return InferenceEngine(data, bundle).ipw();
}

InfluenceDecomposition influence_aipw(const ObservationalDataset& data,
                                      const ModelBundle& bundle,
                                      bool assume_correct_models) {
  return InferenceEngine(data, bundle).aipw(assume_correct_models);
}

double covariance_ai(const ObservationalDataset& data, const ModelBundle& bundle) {
  return InferenceEngine(data, bundle).covariance_ai();
}

std::pair<double, double> confidence_interval(double point, double v_hat,
                                              Eigen::Index n) {
  const double se = std::sqrt(v_hat / static_cast<double>(n));
  return {point - 1.96 * se, point + 1.96 * se};
}

}  // namespace causal_sdr

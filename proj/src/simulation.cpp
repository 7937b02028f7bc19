#include "causal_sdr/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

namespace causal_sdr {

namespace {

constexpr std::uint64_t kTruthSeed = 0x9E3779B97F4A7C15ULL;
constexpr Eigen::Index kTruthDraws = 1000000;

const double kBeta1[6] = {1.0, -1.0, 1.0, -2.0, -1.5, 0.5};
const double kBeta0[6] = {1.0, 1.0, 0.0, 0.0, 0.0, 0.0};
const double kAlpha[6] = {-0.27, 0.2, -0.15, 0.05, 0.15, -0.1};
const double kGamma1[6] = {0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
const double kGamma0[6] = {0.0, 1.0, -0.75, 0.0, -1.0, 0.0};
const double kGammaEta[6] = {1.0, 0.5, -1.0, 0.5, -1.0, -3.0};

double dot6(const double* w, const MatrixXd& X, Eigen::Index i) {
  double s = 0.0;
  for (int j = 0; j < 6; ++j) s += w[j] * X(i, j);
  return s;
}

void check_study(int study) {
  if (study < 1 || study > 4) throw InvalidConfig("study must be 1..4");
}

struct ReplicateOutcome {
  bool ok = false;
  std::string error;
  double full_point = 0.0;
  std::vector<AteEstimate> estimates;
};

ReplicateOutcome run_replicate(const StudyConfig& config, int rep) {
  ReplicateOutcome out;
  Rng rng = Rng::for_replicate(config.seed, static_cast<std::uint64_t>(rep));
  const MatrixXd X = gen_covariates(config.n, rng);
  const auto [y1, y0] = gen_responses(X, config.study, rng);
  const std::vector<std::uint8_t> t = gen_treatment(X, config.study, rng);

  ObservationalDataset data;
  data.X = X;
  data.t = t;
  data.y.resize(config.n);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    data.y[i] = t[static_cast<std::size_t>(i)] ? y1[i] : y0[i];
  }
  data.covariate_names = {"x1", "x2", "x3", "x4", "x5", "x6"};

  out.full_point = (y1 - y0).mean();

  AnalysisConfig acfg;
  acfg.c = config.c;
  acfg.methods = config.estimators;
  try {
    out.estimates = estimate_effects(data, acfg).estimates;
    out.ok = true;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

struct Accumulator {
  std::vector<double> points;
  std::vector<double> ses;
  long covered = 0;
  long with_interval = 0;
};

SummaryRow summarize(const std::string& tag, const Accumulator& acc,
                     double truth) {
  SummaryRow row;
  row.estimator = tag;
  const auto r = static_cast<double>(acc.points.size());
  double mean = 0.0;
  for (double v : acc.points) mean += v;
  mean /= r;
  row.mc_mean = mean;
  if (acc.points.size() > 1) {
    double ss = 0.0;
    for (double v : acc.points) ss += (v - mean) * (v - mean);
    row.mc_sd = std::sqrt(ss / (r - 1.0));
  }
  if (!acc.ses.empty()) {
    double s = 0.0;
    for (double v : acc.ses) s += v;
    row.mean_est_sd = s / static_cast<double>(acc.ses.size());
  }
  if (acc.with_interval > 0) {
    row.coverage95 = static_cast<double>(acc.covered) /
                     static_cast<double>(acc.with_interval);
  }
  double mse = 0.0;
  for (double v : acc.points) mse += (v - truth) * (v - truth);
  row.mse = mse / r;
  return row;
}

}  // namespace

MatrixXd gen_covariates(Eigen::Index n, Rng& rng) {
  MatrixXd X(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = rng.normal(1.0, 1.0);
    const double x2 = rng.normal();
    const double x4 = 0.015 * x1 + rng.uniform(-0.5, 0.5);
    const double p3 = std::min(std::max(0.5 + 0.05 * x2, 0.0), 1.0);
    const double x3 = rng.bernoulli(p3);
    const double p5 = std::min(std::max(0.4 + 0.2 * x4, 0.0), 1.0);
    const double x5 = rng.bernoulli(p5);
    const double x6 = 0.04 * x2 + 0.15 * x3 + 0.05 * x4 + rng.normal();
    X(i, 0) = x1;
    X(i, 1) = x2;
    X(i, 2) = x3;
    X(i, 3) = x4;
    X(i, 4) = x5;
    X(i, 5) = x6;
  }
  return X;
}

std::pair<VectorXd, VectorXd> gen_responses(const MatrixXd& X, int study,
                                            Rng& rng) {
  check_study(study);
  const Eigen::Index n = X.rows();
  VectorXd y1(n), y0(n);
  const double sd1 = std::sqrt(0.5);
  const double sd0 = std::sqrt(0.2);
  const bool augmented = (study == 2 || study == 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double b1x = dot6(kBeta1, X, i);
    const double b0x = dot6(kBeta0, X, i);
    const double e1 = rng.normal(0.0, sd1);
    const double e0 = rng.normal(0.0, sd0);
    if (augmented) {
      const double g1x = dot6(kGamma1, X, i);
      const double g0x = dot6(kGamma0, X, i);
      y1[i] = b1x * b1x + std::sin(b1x) + g1x * g1x + e1;
      y0[i] = b0x + std::sin(g0x) + e0;
    } else {
      y1[i] = 0.7 * b1x * b1x + std::sin(b1x) + e1;
      y0[i] = b0x + e0;
    }
  }
  return {y1, y0};
}

std::vector<std::uint8_t> gen_treatment(const MatrixXd& X, int study,
                                        Rng& rng) {
  check_study(study);
  const Eigen::Index n = X.rows();
  const bool bent = (study == 3 || study == 4);
  std::vector<std::uint8_t> t(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = dot6(kAlpha, X, i);
    if (bent) {
      const double gx = dot6(kGammaEta, X, i);
      eta += 0.45 / (gx * gx + 0.5);
    }
    t[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(rng.bernoulli(expit(eta)));
  }
  return t;
}

double study_truth(int study) {
  check_study(study);
  static std::mutex mu;
  static std::map<int, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(study);
  if (it != cache.end()) return it->second;
  Rng rng(kTruthSeed ^ static_cast<std::uint64_t>(study));
  const MatrixXd X = gen_covariates(kTruthDraws, rng);
  const auto [y1, y0] = gen_responses(X, study, rng);
  const double truth = (y1 - y0).mean();
  cache[study] = truth;
  return truth;
}

StudyResult run_study(const StudyConfig& config) {
  check_study(config.study);
  if (config.n < 10) throw InvalidConfig("n must be at least 10");
  if (config.replicates < 1) throw InvalidConfig("replicates must be >= 1");
  if (config.c <= 0.0) throw InvalidConfig("bandwidth constant must be > 0");

  StudyResult result;
  result.study = config.study;
  result.n = config.n;
  result.replicates_requested = config.replicates;
  result.truth = study_truth(config.study);

  std::vector<Method> selected = config.estimators;
  if (selected.empty()) {
    selected = {Method::Naive, Method::IMP,   Method::IMP2, Method::IPW,
                Method::AIPW,  Method::IAIPW, Method::Shrinkage};
  }

  const int reps = config.replicates;
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(reps));
  int threads = std::max(1, config.threads);
  threads = std::min(threads, reps);
  if (threads == 1) {
    for (int r = 0; r < reps; ++r) outcomes[static_cast<std::size_t>(r)] = run_replicate(config, r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int r = next.fetch_add(1);
          if (r >= reps) break;
          outcomes[static_cast<std::size_t>(r)] = run_replicate(config, r);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::map<std::string, Accumulator> acc;
  std::vector<std::string> tags;
  tags.push_back("full");
  for (Method m : selected) tags.push_back(method_tag(m));

  for (int r = 0; r < reps; ++r) {
    const ReplicateOutcome& o = outcomes[static_cast<std::size_t>(r)];
    if (!o.ok) {
      result.failures.push_back("replicate " + std::to_string(r) + ": " +
                                o.error);
      continue;
    }
    ++result.replicates_used;

    ReplicateRecord full;
    full.rep = r;
    full.estimator = "full";
    full.point = o.full_point;
    result.records.push_back(full);
    acc["full"].points.push_back(o.full_point);

    for (const AteEstimate& est : o.estimates) {
      ReplicateRecord rec;
      rec.rep = r;
      rec.estimator = method_tag(est.method);
      rec.point = est.point;
      Accumulator& a = acc[rec.estimator];
      a.points.push_back(est.point);
      if (est.has_se) {
        rec.se = est.se;
        rec.covered = (est.ci95.first <= result.truth &&
                       result.truth <= est.ci95.second)
                          ? 1
                          : 0;
        a.ses.push_back(est.se);
        a.covered += rec.covered;
        ++a.with_interval;
      }
      result.records.push_back(rec);
    }
  }

  for (const std::string& tag : tags) {
    auto it = acc.find(tag);
    if (it == acc.end() || it->second.points.empty()) continue;
    result.summary.push_back(summarize(tag, it->second, result.truth));
  }
  return result;
}

}  // namespace causal_sdr

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "causal_sdr/analysis.hpp"
#include "causal_sdr/data_io.hpp"
#include "causal_sdr/report.hpp"
#include "causal_sdr/simulation.hpp"
#include "causal_sdr/version.hpp"

namespace {

namespace fs = std::filesystem;
using causal_sdr::Error;
using causal_sdr::InvalidConfig;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitFailures = 3;
constexpr int kExitData = 4;

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// Canonical config string: command plus sorted key=value lines. Execution
// details (threads, timings) stay out so reruns hash identically.
std::string config_hash(const std::string& command,
                        const std::map<std::string, std::string>& config) {
  std::ostringstream ss;
  ss << "command=" << command << '\n';
  for (const auto& [key, value] : config) ss << key << '=' << value << '\n';
  return hex64(fnv1a64(ss.str()));
}

int env_threads() {
  const char* raw = std::getenv("CAUSAL_SDR_THREADS");
  if (!raw || !*raw) return 1;
  const int v = std::atoi(raw);
  return v >= 1 ? v : 1;
}

std::vector<causal_sdr::Method> parse_methods(const std::string& csv) {
  std::vector<causal_sdr::Method> out;
  if (csv.empty() || csv == "all") return out;
  std::istringstream ss(csv);
  std::string tag;
  while (std::getline(ss, tag, ',')) {
    if (tag.empty()) continue;
    out.push_back(causal_sdr::method_from_tag(tag));
  }
  if (out.empty()) throw InvalidConfig("no estimators selected");
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path.string());
  out << content;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::map<std::string, std::string>& config,
                    const std::string& hash, double wall_seconds,
                    const std::map<std::string, double>& timings,
                    const json& result) {
  json m;
  m["schema_version"] = causal_sdr::kOutputSchemaVersion;
  m["version"] = causal_sdr::kVersion;
  m["command"] = command;
  m["config"] = json::object();
  for (const auto& [key, value] : config) m["config"][key] = value;
  m["manifest_hash"] = hash;
  m["wall_clock_seconds"] = wall_seconds;
  m["timings"] = json::object();
  for (const auto& [key, value] : timings) m["timings"][key] = value;
  m["result"] = result;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string methods_csv(const std::vector<causal_sdr::Method>& methods) {
  if (methods.empty()) return "all";
  std::string out;
  for (const causal_sdr::Method m : methods) {
    if (!out.empty()) out += ',';
    out += causal_sdr::method_tag(m);
  }
  return out;
}

void print_summary(const std::vector<causal_sdr::SummaryRow>& rows) {
  std::printf("%-10s %10s %10s %10s %10s %12s\n", "estimator", "mean", "sd",
              "est_sd", "cvg95", "mse");
  for (const auto& row : rows) {
    auto cell = [](double v) {
      if (std::isnan(v)) return std::string(10, ' ');
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%10.4f", v);
      return std::string(buf);
    };
    std::printf("%-10s %s %s %s %s   %s\n", row.estimator.c_str(),
                cell(row.mc_mean).c_str(), cell(row.mc_sd).c_str(),
                cell(row.mean_est_sd).c_str(), cell(row.coverage95).c_str(),
                cell(row.mse).c_str());
  }
}

struct SimulateArgs {
  int study = 1;
  long n = 1000;
  int reps = 1000;
  double c = 1.0;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string estimators = "all";
  std::string out_dir;
};

int run_simulate(const SimulateArgs& args) {
  causal_sdr::StudyConfig config;
  config.study = args.study;
  config.n = args.n;
  config.replicates = args.reps;
  config.c = args.c;
  config.seed = args.seed;
  config.threads = args.threads > 0 ? args.threads : env_threads();
  config.estimators = parse_methods(args.estimators);

  std::map<std::string, std::string> echo{
      {"study", std::to_string(config.study)},
      {"n", std::to_string(config.n)},
      {"reps", std::to_string(config.replicates)},
      {"c", causal_sdr::format_g17(config.c)},
      {"seed", std::to_string(config.seed)},
      {"estimators", methods_csv(config.estimators)},
  };
  const std::string hash = config_hash("simulate", echo);

  const auto t0 = std::chrono::steady_clock::now();
  const causal_sdr::StudyResult result = causal_sdr::run_study(config);
  const double run_seconds = seconds_since(t0);

  const auto tw = std::chrono::steady_clock::now();
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_file(dir / "summary.csv",
             causal_sdr::render_summary_csv(result.summary, hash));
  write_file(dir / "replicates.csv",
             causal_sdr::render_replicates_csv(result.records, hash));
  const std::string title =
      "study " + std::to_string(config.study) + ", n = " +
      std::to_string(config.n) + ", " + std::to_string(result.replicates_used) +
      " replicates";
  write_file(dir / "boxplot.svg",
             causal_sdr::render_boxplot_svg(result.records, result.truth,
                                            title, hash));

  json res;
  res["truth"] = result.truth;
  res["replicates_used"] = result.replicates_used;
  res["replicates_failed"] = static_cast<int>(result.failures.size());
  write_manifest(dir, "simulate", echo, hash, seconds_since(t0),
                 {{"run", run_seconds}, {"write", seconds_since(tw)}}, res);

  print_summary(result.summary);
  std::printf("truth %.6f, %d/%d replicates used\n", result.truth,
              result.replicates_used, result.replicates_requested);
  for (const std::string& msg : result.failures) {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
  const double failure_share =
      static_cast<double>(result.failures.size()) /
      static_cast<double>(result.replicates_requested);
  return failure_share > 0.02 ? kExitFailures : 0;
}

struct EstimateArgs {
  std::string input;
  std::string schema;
  double c = 1.0;
  double truncate_at = 0.0;
  std::string methods = "all";
  std::string out_dir;
};

int run_estimate(const EstimateArgs& args) {
  causal_sdr::AnalysisConfig config;
  config.c = args.c;
  config.truncate_at = args.truncate_at;
  config.methods = parse_methods(args.methods);

  const causal_sdr::ColumnSchema schema =
      causal_sdr::ColumnSchema::from_json_file(args.schema);
  const std::string ext = fs::path(args.input).extension().string();
  causal_sdr::LoadResult loaded;
  if (ext == ".dta") {
    loaded = causal_sdr::to_dataset(causal_sdr::read_dta(args.input), schema);
  } else if (ext == ".csv") {
    loaded = causal_sdr::read_csv(args.input, schema);
  } else {
    throw InvalidConfig("input must be a .csv or .dta file: " + args.input);
  }

  std::map<std::string, std::string> echo{
      {"input", args.input},
      {"schema", args.schema},
      {"c", causal_sdr::format_g17(config.c)},
      {"truncate_at", causal_sdr::format_g17(config.truncate_at)},
      {"methods", methods_csv(config.methods)},
  };
  const std::string hash = config_hash("estimate", echo);

  const auto t0 = std::chrono::steady_clock::now();
  const causal_sdr::AnalysisResult result =
      causal_sdr::estimate_effects(loaded.dataset, config);
  const double run_seconds = seconds_since(t0);

  std::ostringstream csv;
  csv << "# manifest " << hash << "\n";
  csv << "estimator,point,se,ci_lo,ci_hi\n";
  for (const causal_sdr::AteEstimate& est : result.estimates) {
    csv << causal_sdr::method_tag(est.method) << ','
        << causal_sdr::format_g17(est.point) << ',';
    if (est.has_se) {
      csv << causal_sdr::format_g17(est.se) << ','
          << causal_sdr::format_g17(est.ci95.first) << ','
          << causal_sdr::format_g17(est.ci95.second);
    } else {
      csv << ",,";
    }
    csv << '\n';
  }

  const auto tw = std::chrono::steady_clock::now();
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_file(dir / "estimates.csv", csv.str());

  json res;
  res["n"] = static_cast<long long>(loaded.dataset.n());
  res["p"] = static_cast<long long>(loaded.dataset.p());
  res["treated"] = static_cast<long long>(loaded.dataset.treated_count());
  res["dropped_rows"] = static_cast<long long>(loaded.dropped_rows);
  write_manifest(dir, "estimate", echo, hash, seconds_since(t0),
                 {{"run", run_seconds}, {"write", seconds_since(tw)}}, res);

  std::printf("n = %lld (dropped %lld incomplete rows), treated = %lld\n",
              static_cast<long long>(loaded.dataset.n()),
              static_cast<long long>(loaded.dropped_rows),
              static_cast<long long>(loaded.dataset.treated_count()));
  std::printf("%-10s %12s %10s %24s\n", "estimator", "point", "se", "95% CI");
  for (const causal_sdr::AteEstimate& est : result.estimates) {
    if (est.has_se) {
      std::printf("%-10s %12.4f %10.4f   [%10.4f, %10.4f]\n",
                  causal_sdr::method_tag(est.method).c_str(), est.point,
                  est.se, est.ci95.first, est.ci95.second);
    } else {
      std::printf("%-10s %12.4f\n",
                  causal_sdr::method_tag(est.method).c_str(), est.point);
    }
  }
  for (const std::string& msg : result.warnings) {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
  return 0;
}

struct ReportArgs {
  std::string input;
  double truth = std::numeric_limits<double>::quiet_NaN();
  std::string title = "estimator comparison";
  std::string out_dir;
};

int run_report(const ReportArgs& args) {
  std::ifstream in(args.input, std::ios::binary);
  if (!in) throw causal_sdr::CorruptPayload("cannot open " + args.input);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::vector<causal_sdr::ReplicateRecord> records =
      causal_sdr::parse_replicates_csv(ss.str());
  if (records.empty()) {
    throw causal_sdr::CorruptPayload("no replicate records in " + args.input);
  }

  std::map<std::string, std::string> echo{
      {"input", args.input},
      {"truth", causal_sdr::format_g17(args.truth)},
      {"title", args.title},
  };
  const std::string hash = config_hash("report", echo);

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = causal_sdr::summarize_records(records, args.truth);
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_file(dir / "summary.csv", causal_sdr::render_summary_csv(rows, hash));
  write_file(dir / "boxplot.svg",
             causal_sdr::render_boxplot_svg(records, args.truth, args.title,
                                            hash));
  json res;
  res["records"] = static_cast<long long>(records.size());
  write_manifest(dir, "report", echo, hash, seconds_since(t0), {}, res);

  print_summary(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"average treatment effect estimation with "
               "sufficient-dimension-reduction nuisance models"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "run a Monte Carlo study and write summary artifacts");
  simulate->add_option("--study", sim.study, "study design, 1..4")
      ->required()
      ->check(CLI::Range(1, 4));
  simulate->add_option("--n", sim.n, "sample size per replicate")
      ->capture_default_str();
  simulate->add_option("--reps", sim.reps, "number of replicates")
      ->capture_default_str();
  simulate->add_option("--c", sim.c, "bandwidth constant")
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  simulate->add_option("--threads", sim.threads,
                       "worker threads (default: CAUSAL_SDR_THREADS or 1)");
  simulate->add_option("--estimators", sim.estimators,
                       "comma-separated estimator tags, or 'all'")
      ->capture_default_str();
  simulate->add_option("--out-dir", sim.out_dir, "output directory")
      ->required();

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand(
      "estimate", "estimate treatment effects from an observational dataset");
  estimate->add_option("--input", est.input, "input .csv or .dta file")
      ->required();
  estimate->add_option("--schema", est.schema, "column schema JSON")
      ->required();
  estimate->add_option("--c", est.c, "bandwidth constant")
      ->capture_default_str();
  estimate->add_option("--truncate-at", est.truncate_at,
                       "clip fitted propensities to [t, 1-t]; 0 disables")
      ->capture_default_str();
  estimate->add_option("--methods", est.methods,
                       "comma-separated estimator tags, or 'all'")
      ->capture_default_str();
  estimate->add_option("--out", est.out_dir, "output directory")->required();

  ReportArgs rep;
  CLI::App* report = app.add_subcommand(
      "report", "summarize a replicate log into a table and boxplot");
  report->add_option("--input", rep.input, "replicates.csv produced by simulate")
      ->required();
  report->add_option("--truth", rep.truth, "true effect for the mse column");
  report->add_option("--title", rep.title, "plot title")
      ->capture_default_str();
  report->add_option("--out", rep.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (estimate->parsed()) return run_estimate(est);
    return run_report(rep);
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}

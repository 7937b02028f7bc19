#include "causal_sdr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace causal_sdr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* kBoxOrder[] = {"full", "naive", "imp",   "imp2",
                           "ipw",  "aipw",  "iaipw", "shrinkage"};

std::string opt(double v) { return std::isnan(v) ? "" : format_g17(v); }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == sep) {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

// type-7 quantile on a sorted vector
double quantile(const std::vector<double>& sorted, double p) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BoxStats {
  std::string tag;
  double q1 = 0.0, med = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
  std::vector<double> outliers;
};

BoxStats box_stats(const std::string& tag, std::vector<double> points) {
  std::sort(points.begin(), points.end());
  BoxStats s;
  s.tag = tag;
  s.q1 = quantile(points, 0.25);
  s.med = quantile(points, 0.5);
  s.q3 = quantile(points, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = s.q3;
  s.whisker_hi = s.q1;
  for (double v : points) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_lo = std::min(s.whisker_lo, v);
      s.whisker_hi = std::max(s.whisker_hi, v);
    }
  }
  return s;
}

}  // namespace

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string render_summary_csv(const std::vector<SummaryRow>& rows,
                               const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest " << manifest_hash << "\n";
  out << "estimator,mc_mean,mc_sd,mean_est_sd,coverage95,mse\n";
  for (const SummaryRow& row : rows) {
    out << row.estimator << ',' << opt(row.mc_mean) << ',' << opt(row.mc_sd)
        << ',' << opt(row.mean_est_sd) << ',' << opt(row.coverage95) << ','
        << opt(row.mse) << '\n';
  }
  return out.str();
}

std::string render_replicates_csv(const std::vector<ReplicateRecord>& records,
                                  const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest " << manifest_hash << "\n";
  out << "rep,estimator,point,se,covered\n";
  for (const ReplicateRecord& rec : records) {
    out << rec.rep << ',' << rec.estimator << ',' << format_g17(rec.point)
        << ',' << (std::isnan(rec.se) ? "" : format_g17(rec.se)) << ','
        << (rec.covered < 0 ? "" : std::to_string(rec.covered)) << '\n';
  }
  return out.str();
}

std::vector<ReplicateRecord> parse_replicates_csv(const std::string& text) {
  std::vector<ReplicateRecord> records;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "rep,estimator,point,se,covered") {
        throw CorruptPayload("unexpected replicate CSV header: " + line);
      }
      saw_header = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 5) {
      throw CorruptPayload("replicate CSV line " + std::to_string(lineno) +
                           " has " + std::to_string(fields.size()) +
                           " fields, expected 5");
    }
    ReplicateRecord rec;
    try {
      rec.rep = std::stoi(fields[0]);
      rec.estimator = fields[1];
      rec.point = std::stod(fields[2]);
      rec.se = fields[3].empty() ? kNaN : std::stod(fields[3]);
      rec.covered = fields[4].empty() ? -1 : std::stoi(fields[4]);
    } catch (const std::exception&) {
      throw CorruptPayload("replicate CSV line " + std::to_string(lineno) +
                           " is not parseable");
    }
    records.push_back(std::move(rec));
  }
  if (!saw_header) throw CorruptPayload("replicate CSV has no header");
  return records;
}

std::vector<SummaryRow> summarize_records(
    const std::vector<ReplicateRecord>& records, double truth) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReplicateRecord*>> groups;
  for (const ReplicateRecord& rec : records) {
    auto& group = groups[rec.estimator];
    if (group.empty()) order.push_back(rec.estimator);
    group.push_back(&rec);
  }

  std::vector<std::string> canonical;
  for (const char* tag : kBoxOrder) {
    if (groups.count(tag)) canonical.push_back(tag);
  }
  for (const std::string& tag : order) {
    if (std::find(canonical.begin(), canonical.end(), tag) == canonical.end()) {
      canonical.push_back(tag);
    }
  }

  std::vector<SummaryRow> rows;
  for (const std::string& tag : canonical) {
    const auto& group = groups[tag];
    SummaryRow row;
    row.estimator = tag;
    const auto r = static_cast<double>(group.size());
    double mean = 0.0;
    for (const auto* rec : group) mean += rec->point;
    mean /= r;
    row.mc_mean = mean;
    if (group.size() > 1) {
      double ss = 0.0;
      for (const auto* rec : group) {
        ss += (rec->point - mean) * (rec->point - mean);
      }
      row.mc_sd = std::sqrt(ss / (r - 1.0));
    }
    double se_sum = 0.0;
    long se_count = 0;
    long covered = 0;
    long with_interval = 0;
    for (const auto* rec : group) {
      if (!std::isnan(rec->se)) {
        se_sum += rec->se;
        ++se_count;
      }
      if (rec->covered >= 0) {
        covered += rec->covered;
        ++with_interval;
      }
    }
    if (se_count > 0) row.mean_est_sd = se_sum / static_cast<double>(se_count);
    if (with_interval > 0) {
      row.coverage95 =
          static_cast<double>(covered) / static_cast<double>(with_interval);
    }
    if (std::isnan(truth)) {
      row.mse = kNaN;
    } else {
      double mse = 0.0;
      for (const auto* rec : group) {
        mse += (rec->point - truth) * (rec->point - truth);
      }
      row.mse = mse / r;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_boxplot_svg(const std::vector<ReplicateRecord>& records,
                               double truth, const std::string& title,
                               const std::string& manifest_hash) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  for (const ReplicateRecord& rec : records) {
    auto& group = groups[rec.estimator];
    if (group.empty()) order.push_back(rec.estimator);
    group.push_back(rec.point);
  }
  std::vector<BoxStats> boxes;
  for (const char* tag : kBoxOrder) {
    auto it = groups.find(tag);
    if (it != groups.end()) boxes.push_back(box_stats(tag, it->second));
  }
  for (const std::string& tag : order) {
    bool done = false;
    for (const BoxStats& b : boxes) done = done || b.tag == tag;
    if (!done) boxes.push_back(box_stats(tag, groups[tag]));
  }

  double lo = std::isnan(truth) ? 1e300 : truth;
  double hi = std::isnan(truth) ? -1e300 : truth;
  for (const BoxStats& b : boxes) {
    lo = std::min(lo, b.whisker_lo);
    hi = std::max(hi, b.whisker_hi);
    for (double v : b.outliers) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double x0 = 70.0;
  const double y0 = 40.0;
  const double plot_h = 360.0;
  const double slot = 90.0;
  const double box_w = 46.0;
  const double width = x0 + slot * static_cast<double>(boxes.size()) + 30.0;
  const double height = y0 + plot_h + 60.0;
  auto sy = [&](double v) { return y0 + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(width)
      << "\" height=\"" << fmt2(height) << "\" viewBox=\"0 0 " << fmt2(width)
      << " " << fmt2(height) << "\">\n"
      << "<!-- manifest " << manifest_hash << " -->\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt2(width / 2.0)
      << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << title << "</text>\n";

  svg << "<line x1=\"" << fmt2(x0) << "\" y1=\"" << fmt2(y0) << "\" x2=\""
      << fmt2(x0) << "\" y2=\"" << fmt2(y0 + plot_h)
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = lo + (hi - lo) * static_cast<double>(k) / 5.0;
    const double y = sy(v);
    svg << "<line x1=\"" << fmt2(x0 - 4.0) << "\" y1=\"" << fmt2(y)
        << "\" x2=\"" << fmt2(x0) << "\" y2=\"" << fmt2(y)
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << fmt2(x0 - 8.0) << "\" y=\"" << fmt2(y + 4.0)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt_tick(v) << "</text>\n";
  }

  if (!std::isnan(truth)) {
    svg << "<line x1=\"" << fmt2(x0) << "\" y1=\"" << fmt2(sy(truth))
        << "\" x2=\"" << fmt2(width - 20.0) << "\" y2=\"" << fmt2(sy(truth))
        << "\" stroke=\"#c62828\" stroke-dasharray=\"6 4\"/>\n"
        << "<text x=\"" << fmt2(width - 20.0) << "\" y=\""
        << fmt2(sy(truth) - 5.0)
        << "\" text-anchor=\"end\" fill=\"#c62828\" "
           "font-family=\"sans-serif\" font-size=\"11\">truth</text>\n";
  }

  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const BoxStats& box = boxes[b];
    const double cx = x0 + slot * (static_cast<double>(b) + 0.5);
    const double xl = cx - box_w / 2.0;
    const double xr = cx + box_w / 2.0;
    svg << "<line x1=\"" << fmt2(cx) << "\" y1=\"" << fmt2(sy(box.whisker_lo))
        << "\" x2=\"" << fmt2(cx) << "\" y2=\"" << fmt2(sy(box.q1))
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << fmt2(cx) << "\" y1=\"" << fmt2(sy(box.q3))
        << "\" x2=\"" << fmt2(cx) << "\" y2=\"" << fmt2(sy(box.whisker_hi))
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << fmt2(cx - box_w / 4.0) << "\" y1=\""
        << fmt2(sy(box.whisker_lo)) << "\" x2=\"" << fmt2(cx + box_w / 4.0)
        << "\" y2=\"" << fmt2(sy(box.whisker_lo)) << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << fmt2(cx - box_w / 4.0) << "\" y1=\""
        << fmt2(sy(box.whisker_hi)) << "\" x2=\"" << fmt2(cx + box_w / 4.0)
        << "\" y2=\"" << fmt2(sy(box.whisker_hi)) << "\" stroke=\"black\"/>\n"
        << "<rect x=\"" << fmt2(xl) << "\" y=\"" << fmt2(sy(box.q3))
        << "\" width=\"" << fmt2(box_w) << "\" height=\""
        << fmt2(sy(box.q1) - sy(box.q3))
        << "\" fill=\"#e3f2fd\" stroke=\"black\"/>\n"
        << "<line x1=\"" << fmt2(xl) << "\" y1=\"" << fmt2(sy(box.med))
        << "\" x2=\"" << fmt2(xr) << "\" y2=\"" << fmt2(sy(box.med))
        << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double v : box.outliers) {
      svg << "<circle cx=\"" << fmt2(cx) << "\" cy=\"" << fmt2(sy(v))
          << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
    }
    svg << "<text x=\"" << fmt2(cx) << "\" y=\"" << fmt2(y0 + plot_h + 20.0)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">"
        << box.tag << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace causal_sdr

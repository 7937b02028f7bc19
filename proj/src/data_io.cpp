#include "causal_sdr/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace causal_sdr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptPayload("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_double(const std::string& text, double* out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return false;
  *out = v;
  return true;
}

std::string format_numeric(double v) {
  if (std::isnan(v)) return "";
  if (v == std::floor(v) && std::abs(v) < 9.0e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- CSV ---------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv_records(
    const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&]() {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < n) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
        } else {
          field += c;
        }
        field_started = true;
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        end_record();
        ++i;
        break;
      case '\n':
        end_record();
        ++i;
        break;
      default:
        field += c;
        field_started = true;
        ++i;
        break;
    }
  }
  if (in_quotes) throw CorruptPayload("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

// --- Stata .dta --------------------------------------------------------

class DtaParser {
 public:
  explicit DtaParser(std::string bytes) : buf_(std::move(bytes)) {}

  ColumnTable parse() {
    expect("<stata_dta>");
    read_header();
    expect("<map>");
    take(14 * 8);
    expect("</map>");
    read_types();
    read_varnames();
    expect("<sortlist>");
    take(2 * (static_cast<std::size_t>(k_) + 1));
    expect("</sortlist>");
    skip_slots("<formats>", "</formats>", release_ == 117 ? 49 : 57);
    skip_slots("<value_label_names>", "</value_label_names>",
               release_ == 117 ? 33 : 129);
    skip_slots("<variable_labels>", "</variable_labels>",
               release_ == 117 ? 81 : 321);
    read_characteristics();
    return read_data();
  }

 private:
  void fail(const std::string& what) const {
    throw CorruptPayload(what + " at byte " + std::to_string(pos_));
  }

  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) fail("unexpected end of file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool peek(const char* tag) const {
    const std::size_t len = std::strlen(tag);
    return pos_ + len <= buf_.size() &&
           std::memcmp(buf_.data() + pos_, tag, len) == 0;
  }

  void expect(const char* tag) {
    if (!peek(tag)) fail(std::string("expected ") + tag);
    pos_ += std::strlen(tag);
  }

  std::uint64_t read_uint(std::size_t width) {
    const char* p = take(width);
    std::uint64_t v = 0;
    if (big_endian_) {
      for (std::size_t i = 0; i < width; ++i) {
        v = (v << 8) | static_cast<unsigned char>(p[i]);
      }
    } else {
      for (std::size_t i = width; i-- > 0;) {
        v = (v << 8) | static_cast<unsigned char>(p[i]);
      }
    }
    return v;
  }

  void read_header() {
    expect("<header>");
    expect("<release>");
    const std::string rel(take(3), 3);
    if (rel == "117") {
      release_ = 117;
    } else if (rel == "118") {
      release_ = 118;
    } else {
      throw UnsupportedRelease("release " + rel +
                               " is not supported (need 117 or 118)");
    }
    expect("</release>");
    expect("<byteorder>");
    const std::string order(take(3), 3);
    if (order == "MSF") {
      big_endian_ = true;
    } else if (order == "LSF") {
      big_endian_ = false;
    } else {
      fail("unknown byte order " + order);
    }
    expect("</byteorder>");
    expect("<K>");
    k_ = static_cast<int>(read_uint(2));
    expect("</K>");
    expect("<N>");
    n_ = read_uint(release_ == 117 ? 4 : 8);
    expect("</N>");
    expect("<label>");
    take(read_uint(release_ == 117 ? 1 : 2));
    expect("</label>");
    expect("<timestamp>");
    take(read_uint(1));
    expect("</timestamp>");
    expect("</header>");
  }

  void read_types() {
    expect("<variable_types>");
    types_.resize(static_cast<std::size_t>(k_));
    for (auto& t : types_) t = static_cast<std::uint16_t>(read_uint(2));
    expect("</variable_types>");
  }

  void read_varnames() {
    const std::size_t slot = release_ == 117 ? 33 : 129;
    expect("<varnames>");
    names_.reserve(static_cast<std::size_t>(k_));
    for (int j = 0; j < k_; ++j) {
      const char* p = take(slot);
      const std::size_t len = ::strnlen(p, slot);
      names_.emplace_back(p, len);
    }
    expect("</varnames>");
  }

  void skip_slots(const char* open, const char* close, std::size_t slot) {
    expect(open);
    take(slot * static_cast<std::size_t>(k_));
    expect(close);
  }

  void read_characteristics() {
    expect("<characteristics>");
    while (peek("<ch>")) {
      expect("<ch>");
      take(read_uint(4));
      expect("</ch>");
    }
    expect("</characteristics>");
  }

  static double decode_int(std::uint64_t raw, std::size_t width,
                           double missing_above) {
    std::int64_t v;
    switch (width) {
      case 1:
        v = static_cast<std::int8_t>(raw);
        break;
      case 2:
        v = static_cast<std::int16_t>(raw);
        break;
      default:
        v = static_cast<std::int32_t>(raw);
        break;
    }
    const double d = static_cast<double>(v);
    return d > missing_above ? kNaN : d;
  }

  ColumnTable read_data() {
    std::vector<std::size_t> widths(types_.size());
    for (std::size_t j = 0; j < types_.size(); ++j) {
      const std::uint16_t t = types_[j];
      if (t >= 1 && t <= 2045) {
        widths[j] = t;
      } else if (t == 32768) {
        throw UnsupportedRelease("strL variables are not supported");
      } else if (t == 65526) {
        widths[j] = 8;
      } else if (t == 65527) {
        widths[j] = 4;
      } else if (t == 65528) {
        widths[j] = 4;
      } else if (t == 65529) {
        widths[j] = 2;
      } else if (t == 65530) {
        widths[j] = 1;
      } else {
        fail("unknown variable type " + std::to_string(t));
      }
    }

    expect("<data>");
    ColumnTable table;
    table.rows = static_cast<std::size_t>(n_);
    table.columns.resize(types_.size());
    for (std::size_t j = 0; j < types_.size(); ++j) {
      Column& col = table.columns[j];
      col.name = names_[j];
      col.numeric = types_[j] > 2045;
      col.values.assign(table.rows, kNaN);
      col.raw.assign(table.rows, "");
    }

    for (std::size_t i = 0; i < table.rows; ++i) {
      for (std::size_t j = 0; j < types_.size(); ++j) {
        const std::uint16_t t = types_[j];
        Column& col = table.columns[j];
        if (t <= 2045) {
          const char* p = take(widths[j]);
          col.raw[i].assign(p, ::strnlen(p, widths[j]));
          continue;
        }
        double v;
        if (t == 65526) {
          const std::uint64_t raw = read_uint(8);
          double d;
          std::memcpy(&d, &raw, 8);
          v = d > 8.988e307 ? kNaN : d;
        } else if (t == 65527) {
          const auto raw = static_cast<std::uint32_t>(read_uint(4));
          float f;
          std::memcpy(&f, &raw, 4);
          v = f > 1.701e38f ? kNaN : static_cast<double>(f);
        } else if (t == 65528) {
          v = decode_int(read_uint(4), 4, 2147483620.0);
        } else if (t == 65529) {
          v = decode_int(read_uint(2), 2, 32740.0);
        } else {
          v = decode_int(read_uint(1), 1, 100.0);
        }
        col.values[i] = v;
        col.raw[i] = format_numeric(v);
      }
    }
    expect("</data>");
    return table;
  }

  std::string buf_;
  std::size_t pos_ = 0;
  int release_ = 0;
  bool big_endian_ = false;
  int k_ = 0;
  std::uint64_t n_ = 0;
  std::vector<std::uint16_t> types_;
  std::vector<std::string> names_;
};

}  // namespace

const Column* ColumnTable::find(const std::string& name) const {
  for (const Column& col : columns) {
    if (col.name == name) return &col;
  }
  return nullptr;
}

ColumnSchema ColumnSchema::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("schema: ") + e.what());
  }
  ColumnSchema schema;
  try {
    const auto& t = j.at("treatment");
    schema.treatment_column = t.at("column").get<std::string>();
    for (const auto& [key, value] : t.at("encoding").items()) {
      schema.treatment_encoding[key] = value.get<int>();
    }
    schema.outcome_column = j.at("outcome").get<std::string>();
    for (const auto& name : j.at("covariates")) {
      schema.covariates.push_back(name.get<std::string>());
    }
    if (j.contains("categoricals")) {
      for (const auto& [key, levels] : j.at("categoricals").items()) {
        std::vector<std::string>& out = schema.categoricals[key];
        for (const auto& level : levels) out.push_back(level.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

ColumnSchema ColumnSchema::from_json_file(const std::string& path) {
  return from_json(slurp(path));
}

void ColumnSchema::validate() const {
  if (treatment_column.empty()) throw InvalidConfig("schema: empty treatment column");
  if (outcome_column.empty()) throw InvalidConfig("schema: empty outcome column");
  if (outcome_column == treatment_column) {
    throw InvalidConfig("schema: outcome equals treatment column");
  }
  bool saw0 = false;
  bool saw1 = false;
  for (const auto& [key, value] : treatment_encoding) {
    if (value == 0) {
      saw0 = true;
    } else if (value == 1) {
      saw1 = true;
    } else {
      throw InvalidConfig("schema: treatment encoding must map to 0 or 1");
    }
  }
  if (!saw0 || !saw1) {
    throw InvalidConfig("schema: treatment encoding must cover both 0 and 1");
  }
  if (covariates.empty()) throw InvalidConfig("schema: no covariates");
  for (std::size_t a = 0; a < covariates.size(); ++a) {
    if (covariates[a] == treatment_column || covariates[a] == outcome_column) {
      throw InvalidConfig("schema: covariate reuses treatment or outcome");
    }
    for (std::size_t b = a + 1; b < covariates.size(); ++b) {
      if (covariates[a] == covariates[b]) {
        throw InvalidConfig("schema: duplicate covariate " + covariates[a]);
      }
    }
  }
  for (const auto& [name, levels] : categoricals) {
    if (std::find(covariates.begin(), covariates.end(), name) ==
        covariates.end()) {
      throw InvalidConfig("schema: categorical " + name +
                          " is not a covariate");
    }
    if (levels.size() < 2) {
      throw InvalidConfig("schema: categorical " + name +
                          " needs at least two levels");
    }
    for (std::size_t a = 0; a < levels.size(); ++a) {
      for (std::size_t b = a + 1; b < levels.size(); ++b) {
        if (levels[a] == levels[b]) {
          throw InvalidConfig("schema: duplicate level in " + name);
        }
      }
    }
  }
}

ColumnTable read_csv_table(const std::string& path) {
  const auto records = parse_csv_records(slurp(path));
  if (records.empty()) throw CorruptPayload("missing header row in " + path);
  const auto& header = records[0];

  ColumnTable table;
  table.rows = records.size() - 1;
  table.columns.resize(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      if (header[k] == header[j]) {
        throw CorruptPayload("duplicate column name " + header[j]);
      }
    }
    table.columns[j].name = header[j];
    table.columns[j].raw.reserve(table.rows);
  }

  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != header.size()) {
      throw CorruptPayload("row " + std::to_string(i) + " has " +
                           std::to_string(records[i].size()) +
                           " fields, expected " +
                           std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < header.size(); ++j) {
      table.columns[j].raw.push_back(records[i][j]);
    }
  }

  for (Column& col : table.columns) {
    bool numeric = false;
    bool all_numeric = true;
    std::vector<double> values(table.rows, kNaN);
    for (std::size_t i = 0; i < table.rows; ++i) {
      if (trim(col.raw[i]).empty()) continue;
      double v;
      if (parse_double(col.raw[i], &v)) {
        values[i] = v;
        numeric = true;
      } else {
        all_numeric = false;
        break;
      }
    }
    col.numeric = numeric && all_numeric;
    if (col.numeric) col.values = std::move(values);
  }
  return table;
}

ColumnTable read_dta(const std::string& path) {
  return DtaParser(slurp(path)).parse();
}

LoadResult to_dataset(const ColumnTable& table, const ColumnSchema& schema) {
  schema.validate();

  const Column* treatment = table.find(schema.treatment_column);
  if (!treatment) {
    throw SchemaMismatch("treatment column " + schema.treatment_column +
                         " not found");
  }
  const Column* outcome = table.find(schema.outcome_column);
  if (!outcome) {
    throw SchemaMismatch("outcome column " + schema.outcome_column +
                         " not found");
  }
  if (!outcome->numeric) {
    throw SchemaMismatch("outcome column " + schema.outcome_column +
                         " is not numeric");
  }

  struct CovariateSource {
    const Column* column;
    const std::vector<std::string>* levels;  // null for numeric passthrough
  };
  std::vector<CovariateSource> sources;
  std::vector<std::string> names;
  for (const std::string& name : schema.covariates) {
    const Column* col = table.find(name);
    if (!col) throw SchemaMismatch("covariate column " + name + " not found");
    const auto cat = schema.categoricals.find(name);
    if (cat != schema.categoricals.end()) {
      sources.push_back({col, &cat->second});
      for (std::size_t k = 1; k < cat->second.size(); ++k) {
        names.push_back(name + "_" + cat->second[k]);
      }
    } else {
      if (!col->numeric) {
        throw SchemaMismatch("covariate column " + name +
                             " is not numeric; declare it categorical");
      }
      sources.push_back({col, nullptr});
      names.push_back(name);
    }
  }

  const auto p = static_cast<Eigen::Index>(names.size());
  std::vector<std::uint8_t> t_keep;
  std::vector<double> y_keep;
  std::vector<double> x_keep;  // row-major staging
  Eigen::Index dropped = 0;

  std::vector<double> xrow(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < table.rows; ++i) {
    const std::string traw = trim(treatment->raw[i]);
    if (traw.empty()) {
      ++dropped;
      continue;
    }
    const auto enc = schema.treatment_encoding.find(traw);
    if (enc == schema.treatment_encoding.end()) {
      throw NonBinaryTreatment("unmapped treatment value '" + traw + "'");
    }

    const double y = outcome->values[i];
    bool complete = !std::isnan(y);

    std::size_t offset = 0;
    for (const CovariateSource& src : sources) {
      if (!complete) break;
      if (src.levels) {
        const std::string raw = trim(src.column->raw[i]);
        if (raw.empty()) {
          complete = false;
          break;
        }
        const auto it =
            std::find(src.levels->begin(), src.levels->end(), raw);
        if (it == src.levels->end()) {
          throw SchemaMismatch("unknown level '" + raw + "' in column " +
                               src.column->name);
        }
        const auto idx =
            static_cast<std::size_t>(it - src.levels->begin());
        for (std::size_t k = 1; k < src.levels->size(); ++k) {
          xrow[offset++] = (idx == k) ? 1.0 : 0.0;
        }
      } else {
        const double v = src.column->values[i];
        if (std::isnan(v)) {
          complete = false;
          break;
        }
        xrow[offset++] = v;
      }
    }
    if (!complete) {
      ++dropped;
      continue;
    }

    t_keep.push_back(static_cast<std::uint8_t>(enc->second));
    y_keep.push_back(y);
    x_keep.insert(x_keep.end(), xrow.begin(), xrow.end());
  }

  if (t_keep.empty()) throw EmptyDataset("no complete rows after filtering");

  LoadResult result;
  const auto n = static_cast<Eigen::Index>(t_keep.size());
  result.dataset.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      result.dataset.X(i, j) =
          x_keep[static_cast<std::size_t>(i * p + j)];
    }
  }
  result.dataset.y =
      Eigen::Map<const Eigen::VectorXd>(y_keep.data(), n);
  result.dataset.t = std::move(t_keep);
  result.dataset.covariate_names = std::move(names);
  result.dropped_rows = dropped;
  result.dataset.validate();
  return result;
}

LoadResult read_csv(const std::string& path, const ColumnSchema& schema) {
  return to_dataset(read_csv_table(path), schema);
}

}  // namespace causal_sdr

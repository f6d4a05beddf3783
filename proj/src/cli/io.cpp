#include "pfnlab/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace pfnlab {
namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(std::uint64_t v, int) { return std::to_string(v); }
std::string fmt(double v) { return format_double(v); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_csv(const CsvTable& table, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw IoError("row width does not match header while writing " + path.string());
    }
    write_row(row);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  table.header = split(line, ',');
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split(line, ',');
    if (row.size() != table.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> csv_column(const CsvTable& table, const std::string& name) {
  std::size_t col = table.header.size();
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) col = i;
  }
  if (col == table.header.size()) throw IoError("no CSV column named '" + name + "'");
  std::vector<double> out;
  for (const auto& row : table.rows) {
    char* end = nullptr;
    const double v = std::strtod(row[col].c_str(), &end);
    if (end == row[col].c_str() || *end != '\0') {
      throw IoError("non-numeric value '" + row[col] + "' in column " + name);
    }
    out.push_back(v);
  }
  return out;
}

CsvTable to_csv(const BiasVarianceReport& report) {
  CsvTable t{{"n", "mean_sq_bias", "variance", "mse", "replicates", "test_points", "seed"}, {}};
  for (const auto& r : report.rows) {
    t.rows.push_back({fmt(r.n), fmt(r.mean_sq_bias), fmt(r.variance), fmt(r.mse),
                      fmt(r.replicates), fmt(r.test_points), fmt(r.seed, 0)});
  }
  return t;
}

CsvTable to_csv(const SensitivityEstimate& estimate) {
  CsvTable t{{"n", "max_change", "mean_change", "trials"}, {}};
  for (const auto& r : estimate.rows) {
    t.rows.push_back({fmt(r.n), fmt(r.max_change), fmt(r.mean_change), fmt(r.trials)});
  }
  return t;
}

CsvTable sensitivity_fit_csv(const SensitivityEstimate& estimate) {
  CsvTable t{{"fit_defined", "alpha", "lipschitz", "r_squared"}, {}};
  t.rows.push_back({estimate.fit_defined ? "1" : "0", fmt(estimate.alpha),
                    fmt(estimate.lipschitz), fmt(estimate.r_squared)});
  return t;
}

CsvTable to_csv(const LocalityProbeReport& report) {
  CsvTable t{{"n", "epsilon", "mean_change", "max_change", "replicates"}, {}};
  for (const auto& r : report.rows) {
    t.rows.push_back({fmt(r.n), fmt(r.epsilon), fmt(r.mean_change), fmt(r.max_change),
                      fmt(r.replicates)});
  }
  return t;
}

CsvTable to_csv(const TiltReport& report) {
  CsvTable t{{"n", "median_discrepancy", "mean_discrepancy", "replicates"}, {}};
  for (const auto& r : report.rows) {
    t.rows.push_back({fmt(r.n), fmt(r.median_discrepancy), fmt(r.mean_discrepancy),
                      fmt(r.replicates)});
  }
  return t;
}

CsvTable to_csv(const SymmetrizeReport& report) {
  CsvTable t{{"replicates", "exact", "mean_f", "variance_f", "mean_symmetrized",
              "variance_symmetrized", "variance_gap_se"},
             {}};
  t.rows.push_back({fmt(report.replicates), report.exact ? "1" : "0", fmt(report.mean_f),
                    fmt(report.variance_f), fmt(report.mean_symmetrized),
                    fmt(report.variance_symmetrized), fmt(report.variance_gap_se)});
  return t;
}

CsvTable to_csv(const OptimalityReport& report) {
  CsvTable t{{"name", "mean_loglik", "se_loglik", "mean_gap", "se_gap", "draws"}, {}};
  t.rows.push_back({"ppd", fmt(report.ppd_mean_loglik), fmt(report.ppd_se_loglik), fmt(0.0),
                    fmt(0.0), fmt(report.draws)});
  for (const auto& c : report.challengers) {
    t.rows.push_back({c.name, fmt(c.mean_loglik), fmt(c.se_loglik), fmt(c.mean_gap),
                      fmt(c.se_gap), fmt(report.draws)});
  }
  return t;
}

CsvTable to_csv(std::span<const TrainingLogRow> log) {
  CsvTable t{{"epoch", "batch", "loss"}, {}};
  for (const auto& r : log) t.rows.push_back({fmt(r.epoch), fmt(r.batch), fmt(r.loss)});
  return t;
}

// Container -----------------------------------------------------------------------

const NamedArray& ParamContainer::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw IoError("parameter container has no array '" + name + "'");
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  const unsigned char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError("truncated parameter container: " + path_);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    const auto* b = take(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* b = take(n);
    return std::string(reinterpret_cast<const char*>(b), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NamedArray from_matrix(std::string name, const Eigen::MatrixXd& m) {
  return {std::move(name), static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()),
          std::vector<double>(m.data(), m.data() + m.size())};
}

NamedArray from_vector(std::string name, std::vector<double> v) {
  const auto n = static_cast<std::uint32_t>(v.size());
  return {std::move(name), n, 1, std::move(v)};
}

Eigen::MatrixXd to_matrix(const NamedArray& a) {
  Eigen::MatrixXd m(a.rows, a.cols);
  std::copy(a.values.begin(), a.values.end(), m.data());
  return m;
}

}  // namespace

void write_container(const ParamContainer& container, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kContainerMagic, 8);
  put_u32(out, kContainerVersion);
  put_string(out, container.family);
  put_u32(out, static_cast<std::uint32_t>(container.arrays.size()));
  for (const auto& a : container.arrays) {
    if (a.values.size() != static_cast<std::size_t>(a.rows) * a.cols) {
      throw IoError("array '" + a.name + "' has inconsistent shape");
    }
    put_string(out, a.name);
    put_u32(out, a.rows);
    put_u32(out, a.cols);
    for (double v : a.values) put_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ParamContainer read_container(const fs::path& path) {
  Reader in(read_bytes(path), path.string());
  if (std::memcmp(in.take(8), kContainerMagic, 8) != 0) {
    throw IoError("not a parameter container (bad magic): " + path.string());
  }
  const std::uint32_t version = in.u32();
  if (version != kContainerVersion) {
    throw IoError("unsupported container version " + std::to_string(version) + ": " + path.string());
  }
  ParamContainer c;
  c.family = in.str();
  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = in.str();
    a.rows = in.u32();
    a.cols = in.u32();
    a.values.resize(static_cast<std::size_t>(a.rows) * a.cols);
    for (double& v : a.values) v = in.f64();
    c.arrays.push_back(std::move(a));
  }
  if (!in.done()) throw IoError("trailing bytes in parameter container: " + path.string());
  return c;
}

ParamContainer to_container(const FittedParams& params) {
  ParamContainer c;
  if (const auto* w = std::get_if<WindowSmootherParams>(&params)) {
    c.family = "window";
    c.arrays.push_back(from_vector("bandwidth", {w->bandwidth}));
    c.arrays.push_back(
        from_vector("scaled", {w->scaling == BandwidthScaling::Scaled ? 1.0 : 0.0}));
  } else if (const auto* t = std::get_if<TreeParams>(&params)) {
    c.family = "tree";
    c.arrays.push_back(from_vector("splits", t->splits));
  } else if (const auto* e = std::get_if<EnsembleParams>(&params)) {
    c.family = "ensemble";
    for (std::size_t k = 0; k < e->members.size(); ++k) {
      c.arrays.push_back(from_vector("member." + std::to_string(k), e->members[k].splits));
    }
  } else {
    const auto& p = std::get<TransformerParams>(params);
    c.family = "transformer";
    c.arrays.push_back(from_vector("shape", {static_cast<double>(p.dim), static_cast<double>(p.classes),
                                             static_cast<double>(p.hidden),
                                             static_cast<double>(p.heads())}));
    for (std::size_t h = 0; h < p.heads(); ++h) {
      c.arrays.push_back(from_matrix("query." + std::to_string(h), p.query[h]));
    }
    for (std::size_t h = 0; h < p.heads(); ++h) {
      c.arrays.push_back(from_matrix("value." + std::to_string(h), p.value[h]));
    }
    c.arrays.push_back(from_matrix("ff_in", p.ff_in));
    c.arrays.push_back(from_matrix("ff_out", p.ff_out));
    c.arrays.push_back(from_matrix("readout", p.readout));
    c.arrays.push_back(from_vector("gamma", {p.gamma[0], p.gamma[1], p.gamma[2]}));
  }
  return c;
}

FittedParams from_container(const ParamContainer& c) {
  if (c.family == "window") {
    return WindowSmootherParams{c.get("bandwidth").values.at(0),
                                c.get("scaled").values.at(0) != 0.0 ? BandwidthScaling::Scaled
                                                                    : BandwidthScaling::Fixed};
  }
  if (c.family == "tree") {
    TreeParams t{c.get("splits").values};
    validate(t);
    return t;
  }
  if (c.family == "ensemble") {
    EnsembleParams e;
    for (std::size_t k = 0;; ++k) {
      const std::string name = "member." + std::to_string(k);
      bool found = false;
      for (const auto& a : c.arrays) found = found || a.name == name;
      if (!found) break;
      e.members.push_back(TreeParams{c.get(name).values});
    }
    validate(e);
    return e;
  }
  if (c.family == "transformer") {
    const auto& shape = c.get("shape").values;
    if (shape.size() != 4) throw IoError("transformer shape array must have 4 entries");
    const auto dim = static_cast<std::size_t>(shape[0]);
    const auto classes = static_cast<std::size_t>(shape[1]);
    const auto hidden = static_cast<std::size_t>(shape[2]);
    const auto heads = static_cast<std::size_t>(shape[3]);
    TransformerParams p = zero_transformer(dim, classes, hidden, heads);
    for (std::size_t h = 0; h < heads; ++h) {
      p.query[h] = to_matrix(c.get("query." + std::to_string(h)));
      p.value[h] = to_matrix(c.get("value." + std::to_string(h)));
    }
    p.ff_in = to_matrix(c.get("ff_in"));
    p.ff_out = to_matrix(c.get("ff_out"));
    p.readout = to_matrix(c.get("readout"));
    const auto& g = c.get("gamma").values;
    if (g.size() != 3) throw IoError("gamma array must have 3 entries");
    p.gamma = {g[0], g[1], g[2]};
    validate(p);
    return p;
  }
  throw IoError("unknown parameter family '" + c.family + "'");
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace pfnlab

#pragma once

// File formats: dataset CSV (`y,z1,...,zp`), coefficient CSV, experiment
// results CSV, key=value experiment configs, and SVG line charts.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "core.hpp"
#include "experiment.hpp"

namespace tlqr {

//! Malformed file content; the message names the offending line.
class parse_error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! I/O failure (unreadable or unwritable path).
class io_error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal that round-trips (17 significant digits).
inline std::string format_double(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline bool parse_double(const std::string& s, double& out)
{
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t'))
    ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t'))
    --e;
  if (b < e && *b == '+')
    ++b;
  if (b == e)
    return false;
  const auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

// ---------------------------------------------------------------------------
// RFC-4180 style CSV.

inline std::string csv_quote(const std::string& field)
{
  if (field.find_first_of(",\"\r\n") == std::string::npos)
    return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

//! Records of a CSV text with the 1-based line each record starts on.
struct CsvRecord
{
  std::vector<std::string> fields;
  int line = 0;
};

inline std::vector<CsvRecord> parse_csv(const std::string& text)
{
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  int line = 1;
  rec.line = 1;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n')
          ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      rec.fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      if (any || !field.empty()) {
        rec.fields.push_back(std::move(field));
        out.push_back(std::move(rec));
      }
      rec = CsvRecord{};
      field.clear();
      any = false;
      rec.line = ++line;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted)
    throw parse_error("line " + std::to_string(rec.line) +
                      ": unterminated quoted field");
  if (any || !field.empty()) {
    rec.fields.push_back(std::move(field));
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw io_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw io_error("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out)
    throw io_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Datasets.

inline std::string dataset_csv(const DomainDataset& d)
{
  std::string s = "y";
  for (Eigen::Index j = 1; j <= d.p(); ++j)
    s += ",z" + std::to_string(j);
  s += '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    s += format_double(d.y()(i));
    for (Eigen::Index j = 0; j < d.p(); ++j)
      s += "," + format_double(d.Z()(i, j));
    s += '\n';
  }
  return s;
}

inline void write_dataset_csv(const DomainDataset& d, const std::string& path)
{
  write_file(path, dataset_csv(d));
}

inline DomainDataset parse_dataset_csv(const std::string& text, int domain_id,
                                       const std::string& name = "dataset")
{
  const auto recs = parse_csv(text);
  if (recs.empty())
    throw parse_error(name + ": empty file");
  const auto& head = recs.front().fields;
  if (head.size() < 2 || head[0] != "y")
    throw parse_error(name + " line 1: header must be y,z1,...,zp");
  for (std::size_t j = 1; j < head.size(); ++j)
    if (head[j] != "z" + std::to_string(j))
      throw parse_error(name + " line 1: expected column 'z" +
                        std::to_string(j) + "', found '" + head[j] + "'");
  const auto p = static_cast<Eigen::Index>(head.size() - 1);
  const auto n = static_cast<Eigen::Index>(recs.size() - 1);
  if (n < 1)
    throw parse_error(name + ": no data rows");
  Vector y(n);
  Matrix Z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CsvRecord& r = recs[static_cast<std::size_t>(i + 1)];
    const std::string where = name + " line " + std::to_string(r.line);
    if (static_cast<Eigen::Index>(r.fields.size()) != p + 1)
      throw parse_error(where + ": expected " + std::to_string(p + 1) +
                        " fields, found " + std::to_string(r.fields.size()));
    for (Eigen::Index j = 0; j <= p; ++j) {
      double v;
      const std::string& f = r.fields[static_cast<std::size_t>(j)];
      if (!parse_double(f, v))
        throw parse_error(where + ": '" + f + "' is not a number");
      if (!std::isfinite(v))
        throw parse_error(where + ": non-finite value '" + f + "'");
      if (j == 0)
        y(i) = v;
      else
        Z(i, j - 1) = v;
    }
  }
  return DomainDataset(std::move(y), std::move(Z), domain_id);
}

inline DomainDataset load_dataset_csv(const std::string& path, int domain_id)
{
  return parse_dataset_csv(read_file(path), domain_id, path);
}

//! `j,beta` with 1-based j.
inline std::string coefficients_csv(const CoefVector& beta)
{
  std::string s = "j,beta\n";
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    s += std::to_string(j + 1) + "," + format_double(beta(j)) + "\n";
  return s;
}

inline CoefVector parse_coefficients_csv(const std::string& text,
                                         const std::string& name = "coefficients")
{
  const auto recs = parse_csv(text);
  if (recs.empty() || recs.front().fields != std::vector<std::string>{ "j", "beta" })
    throw parse_error(name + " line 1: header must be j,beta");
  CoefVector b(static_cast<Eigen::Index>(recs.size() - 1));
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const std::string where = name + " line " + std::to_string(r.line);
    double v;
    if (r.fields.size() != 2 || r.fields[0] != std::to_string(i) ||
        !parse_double(r.fields[1], v) || !std::isfinite(v))
      throw parse_error(where + ": expected '" + std::to_string(i) + ",<number>'");
    b(static_cast<Eigen::Index>(i - 1)) = v;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Experiment results.

inline const char* results_header()
{
  return "method,tau,h,num_transferable,replication,l2_error,"
         "detection_correct,runtime_ms";
}

inline std::string results_csv(const std::vector<ExperimentRow>& rows)
{
  std::string s = results_header();
  s += '\n';
  for (const auto& r : rows) {
    s += csv_quote(r.method) + "," + format_double(r.tau) + "," +
         format_double(r.h) + "," + std::to_string(r.num_transferable) + "," +
         std::to_string(r.replication) + "," +
         (std::isnan(r.l2_error) ? std::string("NA") : format_double(r.l2_error)) +
         "," +
         (r.detection_correct ? (*r.detection_correct ? "true" : "false") : "") +
         "," + (r.runtime_ms ? format_double(*r.runtime_ms) : std::string()) +
         "\n";
  }
  return s;
}

inline void emit_csv(const std::vector<ExperimentRow>& rows,
                     const std::string& path)
{
  write_file(path, results_csv(rows));
}

inline std::vector<ExperimentRow> parse_results_csv(const std::string& text,
                                                    const std::string& name = "results")
{
  const auto recs = parse_csv(text);
  if (recs.empty())
    throw parse_error(name + ": empty file");
  std::string head;
  for (std::size_t j = 0; j < recs.front().fields.size(); ++j)
    head += (j ? "," : "") + recs.front().fields[j];
  if (head != results_header())
    throw parse_error(name + " line 1: unexpected header");
  std::vector<ExperimentRow> rows;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto& f = recs[i].fields;
    const std::string where = name + " line " + std::to_string(recs[i].line);
    if (f.size() != 8)
      throw parse_error(where + ": expected 8 fields");
    ExperimentRow r;
    r.method = f[0];
    double v;
    if (!parse_double(f[1], r.tau) || !parse_double(f[2], r.h))
      throw parse_error(where + ": bad tau or h");
    if (!parse_double(f[3], v) || v != std::floor(v))
      throw parse_error(where + ": bad num_transferable");
    r.num_transferable = static_cast<int>(v);
    if (!parse_double(f[4], v) || v != std::floor(v))
      throw parse_error(where + ": bad replication");
    r.replication = static_cast<int>(v);
    if (f[5] != "NA" && !parse_double(f[5], r.l2_error))
      throw parse_error(where + ": bad l2_error '" + f[5] + "'");
    if (f[6] == "true" || f[6] == "false")
      r.detection_correct = f[6] == "true";
    else if (!f[6].empty())
      throw parse_error(where + ": bad detection_correct '" + f[6] + "'");
    if (!f[7].empty()) {
      if (!parse_double(f[7], v))
        throw parse_error(where + ": bad runtime_ms");
      r.runtime_ms = v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// key=value configuration.

//! Keys to raw values, with the line each key was read from.
struct KeyValues
{
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;
};

inline std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline KeyValues parse_key_values(const std::string& text,
                                  const std::string& name = "config")
{
  KeyValues kv;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty())
      continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw parse_error(name + " line " + std::to_string(line) +
                        ": expected key=value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty())
      throw parse_error(name + " line " + std::to_string(line) + ": empty key");
    if (kv.values.count(key))
      throw parse_error(name + " line " + std::to_string(line) +
                        ": duplicate key '" + key + "'");
    kv.values[key] = trim(s.substr(eq + 1));
    kv.lines[key] = line;
  }
  return kv;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct ConfigReader
{
  const KeyValues& kv;
  std::string name;

  std::string where(const std::string& key) const
  {
    auto it = kv.lines.find(key);
    return it != kv.lines.end() && it->second > 0
             ? name + " line " + std::to_string(it->second) + ": "
             : "override '" + key + "': ";
  }

  double real(const std::string& key, const std::string& v) const
  {
    double x;
    if (!parse_double(v, x) || !std::isfinite(x))
      throw parse_error(where(key) + key + " expects a number, got '" + v + "'");
    return x;
  }

  long long integer(const std::string& key, const std::string& v) const
  {
    const double x = real(key, v);
    if (x != std::floor(x) || std::abs(x) > 9.0e15)
      throw parse_error(where(key) + key + " expects an integer, got '" + v + "'");
    return static_cast<long long>(x);
  }

  bool boolean(const std::string& key, const std::string& v) const
  {
    if (v == "true" || v == "1" || v == "yes")
      return true;
    if (v == "false" || v == "0" || v == "no")
      return false;
    throw parse_error(where(key) + key + " expects true/false, got '" + v + "'");
  }
};

} // namespace detail

//! Keys accepted in experiment configs.
inline const std::vector<std::string>& config_keys()
{
  static const std::vector<std::string> keys{
    "p",        "n0",        "nk",        "K",          "s0",
    "h",        "num_transferable",       "taus",       "error_family",
    "heterogeneous",         "seed",      "methods",    "replications",
    "output_dir",            "threads",   "epsilon0",   "cv_folds",
    "grid_size",             "timing"
  };
  return keys;
}

//! Builds a config from parsed key=value pairs; unknown keys and missing
//! `output_dir` are errors.
inline ExperimentConfig config_from_key_values(const KeyValues& kv,
                                               const std::string& name = "config")
{
  const auto& keys = config_keys();
  for (const auto& [k, v] : kv.values)
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      auto it = kv.lines.find(k);
      const std::string at =
        it != kv.lines.end() && it->second > 0
          ? name + " line " + std::to_string(it->second) + ": "
          : "override: ";
      throw parse_error(at + "unknown key '" + k + "'");
    }
  if (!kv.values.count("output_dir") || kv.values.at("output_dir").empty())
    throw parse_error(name + ": required key 'output_dir' is missing");

  detail::ConfigReader rd{ kv, name };
  ExperimentConfig c;
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.values.find(k);
    return it == kv.values.end() ? nullptr : &it->second;
  };
  auto as_int = [&](const std::string& k, int& dst) {
    if (auto v = get(k))
      dst = static_cast<int>(rd.integer(k, *v));
  };
  as_int("p", c.design.p);
  as_int("n0", c.design.n0);
  as_int("nk", c.design.nk);
  as_int("K", c.design.K);
  as_int("s0", c.design.s0);
  as_int("replications", c.replications);
  as_int("threads", c.threads);
  as_int("cv_folds", c.cv_folds);
  as_int("grid_size", c.grid_size);
  if (auto v = get("seed")) {
    const long long s = rd.integer("seed", *v);
    if (s < 0)
      throw parse_error(rd.where("seed") + "seed must be non-negative");
    c.design.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("h")) {
    c.hs.clear();
    for (const auto& x : detail::split_list(*v))
      c.hs.push_back(rd.real("h", x));
  }
  if (auto v = get("num_transferable")) {
    c.num_transferable.clear();
    for (const auto& x : detail::split_list(*v))
      c.num_transferable.push_back(static_cast<int>(rd.integer("num_transferable", x)));
  }
  if (auto v = get("taus")) {
    c.taus.clear();
    for (const auto& x : detail::split_list(*v))
      c.taus.push_back(rd.real("taus", x));
  }
  if (auto v = get("methods")) {
    c.methods.clear();
    for (const auto& x : detail::split_list(*v)) {
      try {
        c.methods.push_back(parse_method(x));
      } catch (const invalid_input& e) {
        throw parse_error(rd.where("methods") + e.what());
      }
    }
  }
  if (auto v = get("error_family")) {
    try {
      c.design.error_family = parse_error_family(*v);
    } catch (const invalid_input& e) {
      throw parse_error(rd.where("error_family") + e.what());
    }
  }
  if (auto v = get("heterogeneous"))
    c.design.heterogeneous = rd.boolean("heterogeneous", *v);
  if (auto v = get("timing"))
    c.timing = rd.boolean("timing", *v);
  if (auto v = get("epsilon0"))
    c.epsilon0 = rd.real("epsilon0", *v);
  c.output_dir = kv.values.at("output_dir");
  try {
    c.validate();
  } catch (const invalid_input& e) {
    throw parse_error(name + ": " + e.what());
  }
  return c;
}

//! Config file plus `key=value` overrides (applied last, fail-closed).
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::vector<std::string>& overrides = {},
                                     const std::string& name = "config")
{
  KeyValues kv = parse_key_values(text, name);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || trim(o.substr(0, eq)).empty())
      throw parse_error("override '" + o + "': expected key=value");
    const std::string key = trim(o.substr(0, eq));
    kv.values[key] = trim(o.substr(eq + 1));
    kv.lines[key] = 0;
  }
  return config_from_key_values(kv, name);
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {})
{
  return parse_config(read_file(path), overrides, path);
}

// ---------------------------------------------------------------------------
// SVG chart of mean l2 error against the number of transferable sources.

namespace detail {

inline std::string fmt(double x, const char* spec = "%.2f")
{
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

inline std::string xml_escape(const std::string& s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Round step for about `target` ticks over [lo, hi].
inline double nice_step(double lo, double hi, int target)
{
  const double raw = (hi - lo) / std::max(1, target);
  if (!(raw > 0.0))
    return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : { 1.0, 2.0, 2.5, 5.0, 10.0 })
    if (m * mag >= raw)
      return m * mag;
  return 10.0 * mag;
}

} // namespace detail

//! Means of the successful rows per (panel, method, num_transferable).
//! `group_by` splits the chart into panels: "none", "tau" or "h".
inline std::string svg_plot(const std::vector<ExperimentRow>& rows,
                            const std::string& group_by = "none")
{
  if (rows.empty())
    throw invalid_input("nothing to plot");
  if (group_by != "none" && group_by != "tau" && group_by != "h")
    throw invalid_input("group_by must be none, tau or h");

  auto panel_of = [&](const ExperimentRow& r) {
    return group_by == "tau" ? r.tau : group_by == "h" ? r.h : 0.0;
  };
  std::vector<std::string> methods;
  std::set<double> panels;
  std::set<int> xs;
  struct Acc
  {
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::tuple<double, std::string, int>, Acc> acc;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    panels.insert(panel_of(r));
    xs.insert(r.num_transferable);
    if (std::isnan(r.l2_error))
      continue;
    Acc& a = acc[{ panel_of(r), r.method, r.num_transferable }];
    a.sum += r.l2_error;
    ++a.n;
  }

  double ymax = 0.0;
  for (const auto& [k, a] : acc)
    ymax = std::max(ymax, a.sum / a.n);
  if (!(ymax > 0.0))
    ymax = 1.0;
  const double ystep = detail::nice_step(0.0, ymax, 5);
  ymax = std::ceil(ymax / ystep) * ystep;
  const double xlo = *xs.begin();
  const double xhi = *xs.rbegin() > xlo ? *xs.rbegin() : xlo + 1.0;

  static const char* colors[] = { "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f" };
  const double W = 640, PH = 360, L = 70, R = 170, T = 40, B = 50;
  const double H = PH * static_cast<double>(panels.size());
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
       detail::fmt(W, "%.0f") + "\" height=\"" + detail::fmt(H, "%.0f") +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  std::size_t pi = 0;
  for (double panel : panels) {
    const double top = PH * static_cast<double>(pi++) + T;
    const double bottom = top + PH - T - B;
    const double left = L, right = W - R;
    auto X = [&](double x) { return left + (x - xlo) / (xhi - xlo) * (right - left); };
    auto Y = [&](double y) { return bottom - y / ymax * (bottom - top); };

    std::string title = "Mean l2 estimation error";
    if (group_by == "tau")
      title += " (tau = " + detail::fmt(panel, "%g") + ")";
    else if (group_by == "h")
      title += " (h = " + detail::fmt(panel, "%g") + ")";
    s += "<text x=\"" + detail::fmt((left + right) / 2) + "\" y=\"" +
         detail::fmt(top - 15) + "\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::xml_escape(title) + "</text>\n";

    // Axes, grid and ticks.
    s += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(bottom) +
         "\" x2=\"" + detail::fmt(right) + "\" y2=\"" + detail::fmt(bottom) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top) +
         "\" x2=\"" + detail::fmt(left) + "\" y2=\"" + detail::fmt(bottom) +
         "\" stroke=\"black\"/>\n";
    for (double y = 0.0; y <= ymax * (1 + 1e-9); y += ystep) {
      s += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(Y(y)) +
           "\" x2=\"" + detail::fmt(right) + "\" y2=\"" + detail::fmt(Y(y)) +
           "\" stroke=\"#dddddd\"/>\n";
      s += "<text x=\"" + detail::fmt(left - 6) + "\" y=\"" +
           detail::fmt(Y(y) + 4) + "\" text-anchor=\"end\">" +
           detail::fmt(y, "%g") + "</text>\n";
    }
    for (int x : xs)
      s += "<text x=\"" + detail::fmt(X(x)) + "\" y=\"" +
           detail::fmt(bottom + 18) + "\" text-anchor=\"middle\">" +
           std::to_string(x) + "</text>\n";
    s += "<text x=\"" + detail::fmt((left + right) / 2) + "\" y=\"" +
         detail::fmt(bottom + 38) +
         "\" text-anchor=\"middle\">number of transferable sources</text>\n";
    s += "<text transform=\"translate(" + detail::fmt(left - 48) + "," +
         detail::fmt((top + bottom) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">mean l2 error</text>\n";

    // One polyline per method.
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const char* col = colors[mi % 8];
      std::string pts;
      std::string marks;
      for (int x : xs) {
        auto it = acc.find({ panel, methods[mi], x });
        if (it == acc.end())
          continue;
        const double m = it->second.sum / it->second.n;
        const std::string px = detail::fmt(X(x)), py = detail::fmt(Y(m));
        pts += (pts.empty() ? "" : " ") + px + "," + py;
        marks += "<circle cx=\"" + px + "\" cy=\"" + py + "\" r=\"3.5\" fill=\"" +
                 col + "\"/>\n";
      }
      if (!pts.empty())
        s += "<polyline fill=\"none\" stroke=\"" + std::string(col) +
             "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n" + marks;
      const double ly = top + 10 + 20 * static_cast<double>(mi);
      s += "<line x1=\"" + detail::fmt(right + 15) + "\" y1=\"" +
           detail::fmt(ly) + "\" x2=\"" + detail::fmt(right + 40) + "\" y2=\"" +
           detail::fmt(ly) + "\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + detail::fmt(right + 46) + "\" y=\"" +
           detail::fmt(ly + 4) + "\">" + detail::xml_escape(methods[mi]) +
           "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

inline void emit_svg_plot(const std::vector<ExperimentRow>& rows,
                          const std::string& group_by, const std::string& path)
{
  write_file(path, svg_plot(rows, group_by));
}

} // namespace tlqr

#include "sbm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sbm::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dump_into(std::ostringstream& os, const json& j, int indent, int depth) {
  const auto pad = [&](int d) {
    if (indent > 0) os << '\n' << std::string(static_cast<std::size_t>(d * indent), ' ');
  };
  // Arrays of scalars stay on one line.
  const auto flat = [](const json& a) {
    for (const auto& e : a)
      if (e.is_structured()) return false;
    return true;
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',';
        first = false;
        pad(depth + 1);
        os << json(it.key()).dump() << (indent > 0 ? ": " : ":");
        dump_into(os, it.value(), indent, depth + 1);
      }
      pad(depth);
      os << '}';
      return;
    }
    case json::value_t::array: {
      const bool one_line = flat(j);
      os << '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) os << (one_line && indent > 0 ? ", " : ",");
        first = false;
        if (!one_line) pad(depth + 1);
        dump_into(os, e, indent, depth + 1);
      }
      if (!one_line && !j.empty()) pad(depth);
      os << ']';
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      os << (std::isfinite(v) ? format_double(v) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::Validation, what); }

Eigen::MatrixXd matrix_from_json(const json& j, const char* name) {
  if (!j.is_array()) fail(std::string(name) + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw Error(ErrorKind::Shape, std::string(name) + " rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

SbmParams raw_params(const json& j) {
  try {
    SbmParams p;
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    p.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    p.pi = matrix_from_json(j.at("pi"), "pi");
    if (j.contains("q") && j.at("q").get<int>() != p.q())
      throw Error(ErrorKind::Shape, "q does not match the length of alpha");
    if (p.pi.rows() != p.q() || p.pi.cols() != p.q()) throw Error(ErrorKind::Shape, "pi must be QxQ");
    return p;
  } catch (const json::exception& e) {
    fail(std::string("malformed parameter JSON: ") + e.what());
  }
}

}  // namespace

std::string dump(const json& j, int indent) {
  std::ostringstream os;
  dump_into(os, j, indent, 0);
  return os.str();
}

json params_to_json(const SbmParams& p) {
  return json{{"q", p.q()}, {"alpha", vector_to_json(p.alpha)}, {"pi", matrix_to_json(p.pi)}};
}

SbmParams params_from_json(const json& j) {
  SbmParams p = raw_params(j);
  p.validate();
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

SbmParams read_params(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(path + ": " + e.what());
  }
  return params_from_json(j);
}

void write_params(const std::string& path, const SbmParams& p) {
  write_file(path, dump(params_to_json(p)) + "\n");
}

void write_graph(std::ostream& os, const LabeledGraph& g) {
  const int n = g.n();
  os << "n=" << n << " q=" << g.q << '\n';
  for (int i = 0; i < n; ++i) {
    const auto row = g.adjacency.row(i);
    for (int j = 0; j < n; ++j)
      if (row[j]) os << i + 1 << '\t' << j + 1 << '\n';
  }
  if (g.labels) {
    os << "labels:\n";
    for (std::size_t i = 0; i < g.labels->size(); ++i) os << (i ? " " : "") << (*g.labels)[i] + 1;
    os << '\n';
  }
}

LabeledGraph read_graph(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail("empty graph file");
  int n = -1, q = -1;
  if (std::sscanf(line.c_str(), "n=%d q=%d", &n, &q) != 2 || n < 0 || q < 0)
    fail("graph header must read 'n=<int> q=<int>'");
  LabeledGraph g;
  g.q = q;
  g.adjacency = Adjacency(n);
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("labels:", 0) == 0) {
      std::istringstream rest(line.substr(7));
      Labels z;
      int v;
      while (rest >> v) z.push_back(v - 1);
      while (is >> v) z.push_back(v - 1);
      if (static_cast<int>(z.size()) != n) fail("labels section must hold exactly n integers");
      for (int x : z)
        if (x < 0 || (q > 0 && x >= q)) fail("label outside 1..q");
      g.labels = std::move(z);
      break;
    }
    int i = 0, j = 0;
    char extra = 0;
    if (std::sscanf(line.c_str(), "%d\t%d %c", &i, &j, &extra) != 2)
      fail("line " + std::to_string(line_no) + ": expected 'i<TAB>j'");
    if (i < 1 || j < 1 || i > n || j > n) fail("line " + std::to_string(line_no) + ": vertex out of range");
    if (i == j) fail("line " + std::to_string(line_no) + ": self-loop");
    g.adjacency.set(i - 1, j - 1, true);
  }
  return g;
}

void write_graph(const std::string& path, const LabeledGraph& g) {
  std::ostringstream os;
  write_graph(os, g);
  write_file(path, os.str());
}

LabeledGraph read_graph(const std::string& path) {
  std::istringstream is(read_file(path));
  return read_graph(is);
}

Labels read_labels(const std::string& path) {
  const std::string text = read_file(path);
  if (text.rfind("n=", 0) == 0) {
    std::istringstream is(text);
    auto g = read_graph(is);
    if (!g.labels) fail(path + " has no labels section");
    return *g.labels;
  }
  std::istringstream is(text);
  Labels z;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size() || v < 1) fail("bad label '" + tok + "'");
      z.push_back(v - 1);
    } catch (const std::logic_error&) {
      fail("bad label '" + tok + "'");
    }
  }
  return z;
}

json fit_to_json(const FitResult& fit, const std::string& method) {
  json j = params_to_json(fit.params);
  j["method"] = method;
  j["j_final"] = fit.objective_trace.empty() ? 0.0 : fit.objective_trace.back();
  j["trace"] = fit.objective_trace;
  j["iterations"] = fit.iterations;
  j["restarts_used"] = fit.restarts_used;
  j["converged"] = fit.converged;
  j["flags"] = fit.flags;
  return j;
}

SbmParams fit_params_from_json(const json& j) { return raw_params(j); }

json moments_to_json(const MomentSet& m) {
  json j{{"q", m.q},
         {"u", m.u},
         {"U", matrix_to_json(m.big_u)},
         {"d", m.d ? json(*m.d) : json(nullptr)},
         {"c", m.c ? json(*m.c) : json(nullptr)},
         {"source", m.source == MomentSource::Analytic ? "analytic" : "empirical"},
         {"sample_count", m.sample_count},
         {"orientation", m.orientation == Orientation::Row ? "row" : "column"}};
  if (m.source == MomentSource::Empirical) {
    j["u_se"] = m.u_se;
    j["U_se"] = matrix_to_json(m.big_u_se);
    j["d_se"] = m.d_se ? json(*m.d_se) : json(nullptr);
    j["c_se"] = m.c_se ? json(*m.c_se) : json(nullptr);
  }
  return j;
}

MomentSet moments_from_json(const json& j) {
  try {
    MomentSet m;
    m.q = j.at("q").get<int>();
    m.u = j.at("u").get<std::vector<double>>();
    m.big_u = matrix_from_json(j.at("U"), "U");
    if (j.contains("d") && !j["d"].is_null()) m.d = j["d"].get<double>();
    if (j.contains("c") && !j["c"].is_null()) m.c = j["c"].get<double>();
    const auto src = j.value("source", std::string("analytic"));
    if (src != "analytic" && src != "empirical") fail("source must be analytic or empirical");
    m.source = src == "analytic" ? MomentSource::Analytic : MomentSource::Empirical;
    m.sample_count = j.value("sample_count", std::int64_t{0});
    m.orientation = j.value("orientation", std::string("row")) == "column" ? Orientation::Column : Orientation::Row;
    if (j.contains("u_se")) m.u_se = j["u_se"].get<std::vector<double>>();
    if (j.contains("U_se")) m.big_u_se = matrix_from_json(j["U_se"], "U_se");
    if (j.contains("d_se") && !j["d_se"].is_null()) m.d_se = j["d_se"].get<double>();
    if (j.contains("c_se") && !j["c_se"].is_null()) m.c_se = j["c_se"].get<double>();
    return m;
  } catch (const json::exception& e) {
    fail(std::string("malformed moment JSON: ") + e.what());
  }
}

json recovery_to_json(const RecoveryResult& r) {
  json j = params_to_json(r.params);
  j["r"] = r.r_roots;
  j["residuals"] = r.residuals;
  j["flags"] = r.condition_flags;
  return j;
}

void write_posterior_csv(std::ostream& os, const PosteriorTable& t) {
  os << "labels,probability\n";
  for (std::uint64_t idx = 0; idx < t.size(); ++idx)
    os << t.label_string(idx) << ',' << format_double(t.probability(idx)) << '\n';
}

}  // namespace sbm::io

#include "mfcmc/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "mfcmc/errors.hpp"

namespace mfcmc::io {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw StructuralError("csv line " + std::to_string(line) + ": not a number '" + s + "'");
  }
  return v;
}

std::size_t to_index(double v) {
  if (!(v >= 0.0) || v != std::floor(v)) throw StructuralError("expected a nonnegative integer index");
  return static_cast<std::size_t>(v);
}

std::string coord_header(int dim) {
  std::string h;
  for (int i = 0; i < dim; ++i) h += "x_" + std::to_string(i + 1) + ",";
  return h;
}

int coord_columns(const CsvTable& t) {
  int d = 0;
  while (static_cast<std::size_t>(d) < t.header.size() && t.header[d] == "x_" + std::to_string(d + 1)) ++d;
  return d;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) { return json::parse(read_text(path)); }

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw StructuralError("csv has no column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header && line[0] == '#') {
      t.comments.push_back(trim(line.substr(1)));
      continue;
    }
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw StructuralError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " fields");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, lineno));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw StructuralError("csv without header");
  return t;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text(path)); }

std::string cloud_csv(const WeightedCloud& m) {
  std::string s = coord_header(m.dim()) + "w\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (double x : m.point(i)) s += format_double(x) + ",";
    s += format_double(m.weight(i)) + "\n";
  }
  return s;
}

WeightedCloud cloud_from_csv(const CsvTable& t) {
  const int d = coord_columns(t);
  if (d == 0 || t.header.size() != static_cast<std::size_t>(d + 1) || t.header.back() != "w") {
    throw StructuralError("cloud csv must have columns x_1..x_d, w");
  }
  std::vector<double> coords, weights;
  for (const auto& r : t.rows) {
    coords.insert(coords.end(), r.begin(), r.begin() + d);
    weights.push_back(r.back());
  }
  return WeightedCloud(d, std::move(coords), std::move(weights));
}

void write_cloud(const std::string& path, const WeightedCloud& m) { write_text(path, cloud_csv(m)); }

WeightedCloud read_cloud(const std::string& path) { return cloud_from_csv(read_csv(path)); }

json cloud_to_json(const WeightedCloud& m) {
  json points = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto p = m.point(i);
    points.push_back(std::vector<double>(p.begin(), p.end()));
  }
  return {{"dim", m.dim()}, {"points", points}, {"weights", m.weights()}};
}

WeightedCloud cloud_from_json(const json& j) {
  const int d = j.at("dim").get<int>();
  std::vector<double> coords;
  for (const auto& p : j.at("points")) {
    const auto v = p.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d) throw StructuralError("cloud point has the wrong dimension");
    coords.insert(coords.end(), v.begin(), v.end());
  }
  return WeightedCloud(d, std::move(coords), j.at("weights").get<std::vector<double>>());
}

std::string lattice_csv(const LatticeDistribution& mu, const LatticeGrid& grid) {
  if (mu.size() != grid.size()) throw ArgumentError("distribution and grid sizes differ");
  std::string s = coord_header(grid.dim()) + "w\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double x : grid.node(i)) s += format_double(x) + ",";
    s += format_double(mu[i]) + "\n";
  }
  return s;
}

LatticeDistribution lattice_from_csv(const CsvTable& t, const LatticeGrid& grid) {
  const int d = coord_columns(t);
  if (d != grid.dim() || t.rows.size() != grid.size()) throw StructuralError("lattice csv does not match the grid");
  std::vector<double> mu;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto node = grid.node(i);
    for (int a = 0; a < d; ++a) {
      if (t.rows[i][a] != node[a]) throw StructuralError("lattice csv row " + std::to_string(i) + " is not node " +
                                                         std::to_string(i));
    }
    mu.push_back(t.rows[i].back());
  }
  return LatticeDistribution(std::move(mu));
}

json lattice_to_json(const LatticeDistribution& mu) { return {{"mass", mu.values()}}; }

LatticeDistribution lattice_from_json(const json& j) {
  return LatticeDistribution(j.at("mass").get<std::vector<double>>());
}

std::string grid_csv(const LatticeGrid& grid) {
  std::string s = "node_id," + coord_header(grid.dim());
  s.pop_back();
  s += "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s += std::to_string(i);
    for (double x : grid.node(i)) s += "," + format_double(x);
    s += "\n";
  }
  return s;
}

std::string plan_csv(const TransportPlan& plan) {
  std::string s = "# source=" + plan.source_ref + "\n# target=" + plan.target_ref + "\ni,j,mass\n";
  for (const auto& e : plan.entries) {
    s += std::to_string(e.source) + "," + std::to_string(e.target) + "," + format_double(e.mass) + "\n";
  }
  return s;
}

TransportPlan plan_from_csv(const CsvTable& t) {
  TransportPlan plan;
  for (const auto& c : t.comments) {
    if (c.rfind("source=", 0) == 0) plan.source_ref = c.substr(7);
    if (c.rfind("target=", 0) == 0) plan.target_ref = c.substr(7);
  }
  const auto ci = t.column("i"), cj = t.column("j"), cm = t.column("mass");
  for (const auto& r : t.rows) {
    plan.entries.push_back({to_index(r[ci]), to_index(r[cj]), r[cm]});
    plan.n_source = std::max(plan.n_source, plan.entries.back().source + 1);
    plan.n_target = std::max(plan.n_target, plan.entries.back().target + 1);
  }
  return plan;
}

json control_to_json(const RelaxedControl& xi) {
  std::vector<std::size_t> ids(xi.n_atoms());
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
  json cells = json::array();
  for (std::size_t k = 0; k < xi.cell_count(); ++k) {
    const auto c = xi.cell(k);
    cells.push_back(std::vector<double>(c.begin(), c.end()));
  }
  return {{"time_grid", xi.time_grid()}, {"atom_ids", ids}, {"cells", cells}};
}

RelaxedControl control_from_json(const json& j) {
  const auto grid = j.at("time_grid").get<std::vector<double>>();
  const auto ids = j.at("atom_ids").get<std::vector<std::size_t>>();
  std::vector<double> flat;
  for (const auto& c : j.at("cells")) {
    const auto row = c.get<std::vector<double>>();
    if (row.size() != ids.size()) throw StructuralError("control cell length differs from atom_ids");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return RelaxedControl(grid, ids.size(), std::move(flat));
}

json distribution_to_json(const ControlDistribution& alpha, const std::string& cloud_file) {
  json items = json::array();
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const auto& it = alpha.item(i);
    items.push_back({{"point", i}, {"weight", it.weight}, {"control", control_to_json(it.control)}});
  }
  return {{"cloud", cloud_file}, {"items", items}};
}

ControlDistribution distribution_from_json(const json& j, const WeightedCloud& cloud) {
  std::vector<ControlItem> items;
  for (const auto& it : j.at("items")) {
    const auto p = it.at("point").get<std::size_t>();
    if (p >= cloud.size()) throw StructuralError("distribution item references a missing point");
    const auto x = cloud.point(p);
    items.push_back({it.at("weight").get<double>(), std::vector<double>(x.begin(), x.end()),
                     control_from_json(it.at("control"))});
  }
  return ControlDistribution(cloud.dim(), std::move(items));
}

json policy_to_json(const FeedbackPolicy& policy) {
  json nodes = json::array();
  for (const auto& xi : policy.controls()) nodes.push_back(control_to_json(xi));
  return {{"nodes", nodes}};
}

FeedbackPolicy policy_from_json(const json& j) {
  std::vector<RelaxedControl> controls;
  for (const auto& c : j.at("nodes")) controls.push_back(control_from_json(c));
  return FeedbackPolicy(std::move(controls));
}

std::string flow_csv(const MFCFlow& flow) {
  std::string s = "t,item_id," + coord_header(flow.dim()) + "w\n";
  for (std::size_t k = 0; k < flow.times().size(); ++k) {
    const std::string t = format_double(flow.times()[k]) + ",";
    for (std::size_t i = 0; i < flow.item_count(); ++i) {
      s += t + std::to_string(i) + ",";
      for (double x : flow.state(k, i)) s += format_double(x) + ",";
      s += format_double(flow.weights()[i]) + "\n";
    }
  }
  return s;
}

std::string flow_csv(const SegmentedFlow& flow, const std::vector<double>& times) {
  const int d = flow.start_clouds.front().dim();
  std::string s = "t,item_id," + coord_header(d) + "w\n";
  for (double t : times) {
    const auto m = flow.cloud_at(t);
    const std::string ts = format_double(t) + ",";
    for (std::size_t i = 0; i < m.size(); ++i) {
      s += ts + std::to_string(i) + ",";
      for (double x : m.point(i)) s += format_double(x) + ",";
      s += format_double(m.weight(i)) + "\n";
    }
  }
  return s;
}

json flow_summary(const MFCFlow& flow) {
  std::vector<double> moments;
  for (std::size_t k = 0; k < flow.times().size(); ++k) moments.push_back(second_moment(flow.cloud(k)));
  return {{"times", flow.times()}, {"second_moments", moments}, {"items", flow.item_count()}};
}

std::string chain_flow_csv(const ChainFlow& flow) {
  std::string s = "t,node_id,mass\n";
  for (std::size_t k = 0; k < flow.times().size(); ++k) {
    const std::string t = format_double(flow.times()[k]) + ",";
    const auto& mu = flow.raw(k);
    for (std::size_t i = 0; i < mu.size(); ++i) s += t + std::to_string(i) + "," + format_double(mu[i]) + "\n";
  }
  return s;
}

ChainFlowTable chain_flow_from_csv(const CsvTable& t) {
  const auto ct = t.column("t"), cn = t.column("node_id"), cm = t.column("mass");
  ChainFlowTable out;
  for (const auto& r : t.rows) {
    if (out.times.empty() || r[ct] != out.times.back()) {
      out.times.push_back(r[ct]);
      out.mu.emplace_back();
    }
    if (to_index(r[cn]) != out.mu.back().size()) throw StructuralError("chain flow csv nodes out of order");
    out.mu.back().push_back(r[cm]);
  }
  return out;
}

json report_to_json(const AssumptionReport& r) {
  return {{"B_Q", r.rate_bound_declared},
          {"B_Q_sampled", r.rate_bound_sampled},
          {"eps", r.approx_error_declared},
          {"eps_space", r.eps_space},
          {"eps_drift_interior", r.eps_drift_interior},
          {"eps_drift_boundary", r.eps_drift_boundary},
          {"eps_var", r.eps_var},
          {"row_sum_error", r.row_sum_error},
          {"min_off_diagonal", r.min_off_diagonal},
          {"samples", r.samples}};
}

json trace_to_json(const CouplingTrace& trace, const DiscrepancyReport& report) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"time", s.time},
                     {"plan_entries", s.plan.entries.size()},
                     {"plan_cost", s.plan.cost},
                     {"w2", s.w2},
                     {"particles", s.particles},
                     {"nodes", s.nodes},
                     {"zero_mass_nodes", s.zero_mass_nodes}});
  }
  return {{"steps", steps}, {"times", report.times}, {"w2", report.w2}, {"sup_w2", report.sup}};
}

std::string discrepancy_csv(const DiscrepancyReport& report) {
  std::string s = "t,W2\n";
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    s += format_double(report.times[k]) + "," + format_double(report.w2[k]) + "\n";
  }
  return s;
}

json bound_sheet(const DiscrepancyReport& report) {
  return {{"eps", report.eps},
          {"B_Q", report.rate_bound},
          {"d_Delta", report.fineness},
          {"W2_0", report.w2_initial},
          {"sup_W2", report.sup}};
}

}  // namespace mfcmc::io

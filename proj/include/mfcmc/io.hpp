#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mfcmc/controls.hpp"
#include "mfcmc/dynamics.hpp"
#include "mfcmc/markov_chain.hpp"
#include "mfcmc/measures.hpp"
#include "mfcmc/mpc_coupling.hpp"
#include "mfcmc/transport.hpp"

namespace mfcmc::io {

// %.17g: enough digits for strtod to give back the same double.
std::string format_double(double x);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
// Pretty-printed with a trailing newline.
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// Numeric CSV: one header row, '#' comment lines before it.
struct CsvTable {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

// Clouds: x_1..x_d, w
std::string cloud_csv(const WeightedCloud& m);
WeightedCloud cloud_from_csv(const CsvTable& t);
void write_cloud(const std::string& path, const WeightedCloud& m);
WeightedCloud read_cloud(const std::string& path);
nlohmann::json cloud_to_json(const WeightedCloud& m);
WeightedCloud cloud_from_json(const nlohmann::json& j);

// Lattice distributions: every node in grid order, x_1..x_d, w.
std::string lattice_csv(const LatticeDistribution& mu, const LatticeGrid& grid);
// Node coordinates must match grid exactly.
LatticeDistribution lattice_from_csv(const CsvTable& t, const LatticeGrid& grid);
nlohmann::json lattice_to_json(const LatticeDistribution& mu);
LatticeDistribution lattice_from_json(const nlohmann::json& j);

std::string grid_csv(const LatticeGrid& grid);

// Plans: comment lines "source=..." and "target=...", columns i, j, mass.
std::string plan_csv(const TransportPlan& plan);
TransportPlan plan_from_csv(const CsvTable& t);

nlohmann::json control_to_json(const RelaxedControl& xi);
RelaxedControl control_from_json(const nlohmann::json& j);
// Items reference atoms of a cloud file by index.
nlohmann::json distribution_to_json(const ControlDistribution& alpha, const std::string& cloud_file);
ControlDistribution distribution_from_json(const nlohmann::json& j, const WeightedCloud& cloud);
nlohmann::json policy_to_json(const FeedbackPolicy& policy);
FeedbackPolicy policy_from_json(const nlohmann::json& j);

// t, item_id, x_1..x_d, w
std::string flow_csv(const MFCFlow& flow);
std::string flow_csv(const SegmentedFlow& flow, const std::vector<double>& times);
nlohmann::json flow_summary(const MFCFlow& flow);

// t, node_id, mass
std::string chain_flow_csv(const ChainFlow& flow);
struct ChainFlowTable {
  std::vector<double> times;
  std::vector<std::vector<double>> mu;
};
ChainFlowTable chain_flow_from_csv(const CsvTable& t);

nlohmann::json report_to_json(const AssumptionReport& r);
nlohmann::json trace_to_json(const CouplingTrace& trace, const DiscrepancyReport& report);
// t, W2
std::string discrepancy_csv(const DiscrepancyReport& report);
nlohmann::json bound_sheet(const DiscrepancyReport& report);

}  // namespace mfcmc::io

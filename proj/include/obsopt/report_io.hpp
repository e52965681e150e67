#pragma once

#include "obsopt/solver.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace obsopt {

enum class SolverPath { Barrier, Penalty };

std::string to_string(SolverPath path);
SolverPath solver_path_from_string(const std::string& name);

std::string to_string(WeightingMode mode);
WeightingMode weighting_from_string(const std::string& name);

/// One benchmark run: grid size, smoothing family, alpha schedule, solver
/// path and the numerical knobs. Round-trips through JSON.
struct RunSpec {
  int n = 20;
  SmoothingKind theta = SmoothingKind::Fractional;
  std::vector<double> alphas = {1e-3};
  SolverPath path = SolverPath::Barrier;
  WeightingMode weighting = WeightingMode::NodeSum;
  double tol = 1e-3;
  int max_iter = 1000;
  unsigned seed = 0;
  bool deterministic = false;
  std::string out;

  bool operator==(const RunSpec&) const = default;
};

std::string runspec_to_json(const RunSpec& spec);
RunSpec runspec_from_json(const std::string& text);

/// One line of the benchmark table, mirroring the SolveReport metrics.
struct TableRow {
  double alpha = 0.0;
  double state_residual_2 = 0.0;
  double comp_error = 0.0;
  double objective = 0.0;
  int iterations = 0;
  double wall_time_ms = 0.0;
  std::string status = "converged";
};

TableRow make_table_row(double alpha, const SolveReport& report,
                        double wall_time_ms);

/// Comma-separated table, scientific notation with 6 significant digits.
void write_table_csv(std::ostream& os, const std::vector<TableRow>& rows);
void write_table_csv_file(const std::string& path,
                          const std::vector<TableRow>& rows);
std::vector<TableRow> parse_table_csv(std::istream& is);

/// Per-stage entry of the structured report: the table metrics plus the
/// multiplier certificate.
struct ReportStage {
  TableRow row;
  double stationarity_y = 0.0;
  double stationarity_v = 0.0;
  double stationarity_xi = 0.0;
  double r_complementarity = 0.0;
  double r = 0.0;
  double kkt_scale = 1.0;
};

ReportStage make_report_stage(double alpha, const SolveReport& report,
                              double wall_time_ms);

/// Structured JSON report: full config echo plus per-stage metrics, written
/// with round-trip-exact doubles.
struct RunReport {
  RunSpec spec;
  std::string calibrated_weighting; // set by the calibrate command
  std::vector<ReportStage> stages;
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);
void write_report_file(const std::string& path, const RunReport& report);

/// Plain dump of a grid function for external plotting: one "x1 x2 value"
/// line per lattice node, boundary included (zeros).
void write_field_dump(std::ostream& os, const FieldVector& field);
void write_field_dump_file(const std::string& path, const FieldVector& field);

} // namespace obsopt

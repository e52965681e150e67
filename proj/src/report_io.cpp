#include "obsopt/report_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace obsopt {

using nlohmann::json;

std::string to_string(SolverPath path) {
  return path == SolverPath::Barrier ? "barrier" : "penalty";
}

SolverPath solver_path_from_string(const std::string& name) {
  if (name == "barrier") return SolverPath::Barrier;
  if (name == "penalty") return SolverPath::Penalty;
  throw std::invalid_argument("unknown solver path: " + name);
}

std::string to_string(WeightingMode mode) {
  return mode == WeightingMode::NodeSum ? "node-sum" : "cell";
}

WeightingMode weighting_from_string(const std::string& name) {
  if (name == "node-sum") return WeightingMode::NodeSum;
  if (name == "cell" || name == "cell-weighted") return WeightingMode::CellWeighted;
  throw std::invalid_argument("unknown weighting mode: " + name);
}

namespace {

json spec_to_json_obj(const RunSpec& spec) {
  return json{{"n", spec.n},
              {"theta", to_string(spec.theta)},
              {"alphas", spec.alphas},
              {"solver", to_string(spec.path)},
              {"weighting", to_string(spec.weighting)},
              {"tol", spec.tol},
              {"max_iter", spec.max_iter},
              {"seed", spec.seed},
              {"deterministic", spec.deterministic},
              {"out", spec.out}};
}

RunSpec spec_from_json_obj(const json& j) {
  RunSpec spec;
  spec.n = j.at("n").get<int>();
  spec.theta = smoothing_kind_from_string(j.at("theta").get<std::string>());
  spec.alphas = j.at("alphas").get<std::vector<double>>();
  spec.path = solver_path_from_string(j.at("solver").get<std::string>());
  spec.weighting = weighting_from_string(j.at("weighting").get<std::string>());
  spec.tol = j.at("tol").get<double>();
  spec.max_iter = j.at("max_iter").get<int>();
  spec.seed = j.at("seed").get<unsigned>();
  spec.deterministic = j.at("deterministic").get<bool>();
  spec.out = j.at("out").get<std::string>();
  return spec;
}

std::string sci6(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(5) << x;
  return os.str();
}

} // namespace

std::string runspec_to_json(const RunSpec& spec) {
  return spec_to_json_obj(spec).dump(2);
}

RunSpec runspec_from_json(const std::string& text) {
  return spec_from_json_obj(json::parse(text));
}

TableRow make_table_row(double alpha, const SolveReport& report,
                        double wall_time_ms) {
  TableRow row;
  row.alpha = alpha;
  row.state_residual_2 = report.state_residual_2;
  row.comp_error = report.comp_error;
  row.objective = report.objective;
  row.iterations = report.iterations;
  row.wall_time_ms = wall_time_ms;
  row.status = to_string(report.status);
  return row;
}

void write_table_csv(std::ostream& os, const std::vector<TableRow>& rows) {
  os << "alpha,state_residual_2,comp_error,objective,iterations,"
        "wall_time_ms,status\n";
  for (const auto& row : rows) {
    os << sci6(row.alpha) << ',' << sci6(row.state_residual_2) << ','
       << sci6(row.comp_error) << ',' << sci6(row.objective) << ','
       << row.iterations << ',' << sci6(row.wall_time_ms) << ',' << row.status
       << '\n';
  }
}

void write_table_csv_file(const std::string& path,
                          const std::vector<TableRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_table_csv(os, rows);
}

std::vector<TableRow> parse_table_csv(std::istream& is) {
  std::vector<TableRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string item;
    TableRow row;
    auto next = [&]() {
      if (!std::getline(ls, item, ',')) {
        throw std::runtime_error("malformed table row: " + line);
      }
      return item;
    };
    row.alpha = std::stod(next());
    row.state_residual_2 = std::stod(next());
    row.comp_error = std::stod(next());
    row.objective = std::stod(next());
    row.iterations = std::stoi(next());
    row.wall_time_ms = std::stod(next());
    row.status = next();
    rows.push_back(std::move(row));
  }
  return rows;
}

ReportStage make_report_stage(double alpha, const SolveReport& report,
                              double wall_time_ms) {
  ReportStage stage;
  stage.row = make_table_row(alpha, report, wall_time_ms);
  stage.stationarity_y = report.kkt.stationarity_y;
  stage.stationarity_v = report.kkt.stationarity_v;
  stage.stationarity_xi = report.kkt.stationarity_xi;
  stage.r_complementarity = report.kkt.r_complementarity;
  stage.r = report.r;
  stage.kkt_scale = report.kkt.scale;
  return stage;
}

std::string report_to_json(const RunReport& report) {
  json stages = json::array();
  for (const auto& st : report.stages) {
    stages.push_back(json{{"alpha", st.row.alpha},
                          {"state_residual_2", st.row.state_residual_2},
                          {"comp_error", st.row.comp_error},
                          {"objective", st.row.objective},
                          {"iterations", st.row.iterations},
                          {"wall_time_ms", st.row.wall_time_ms},
                          {"status", st.row.status},
                          {"kkt",
                           {{"stationarity_y", st.stationarity_y},
                            {"stationarity_v", st.stationarity_v},
                            {"stationarity_xi", st.stationarity_xi},
                            {"r_complementarity", st.r_complementarity},
                            {"r", st.r},
                            {"scale", st.kkt_scale}}}});
  }
  json j{{"spec", spec_to_json_obj(report.spec)},
         {"calibrated_weighting", report.calibrated_weighting},
         {"stages", stages}};
  return j.dump(2);
}

RunReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunReport report;
  report.spec = spec_from_json_obj(j.at("spec"));
  report.calibrated_weighting = j.at("calibrated_weighting").get<std::string>();
  for (const auto& st : j.at("stages")) {
    ReportStage stage;
    stage.row.alpha = st.at("alpha").get<double>();
    stage.row.state_residual_2 = st.at("state_residual_2").get<double>();
    stage.row.comp_error = st.at("comp_error").get<double>();
    stage.row.objective = st.at("objective").get<double>();
    stage.row.iterations = st.at("iterations").get<int>();
    stage.row.wall_time_ms = st.at("wall_time_ms").get<double>();
    stage.row.status = st.at("status").get<std::string>();
    const auto& kkt = st.at("kkt");
    stage.stationarity_y = kkt.at("stationarity_y").get<double>();
    stage.stationarity_v = kkt.at("stationarity_v").get<double>();
    stage.stationarity_xi = kkt.at("stationarity_xi").get<double>();
    stage.r_complementarity = kkt.at("r_complementarity").get<double>();
    stage.r = kkt.at("r").get<double>();
    stage.kkt_scale = kkt.at("scale").get<double>();
    report.stages.push_back(std::move(stage));
  }
  return report;
}

void write_report_file(const std::string& path, const RunReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << report_to_json(report) << '\n';
}

void write_field_dump(std::ostream& os, const FieldVector& field) {
  const Grid& grid = field.grid();
  os << std::setprecision(17);
  for (int j = 0; j <= grid.n; ++j) {
    for (int i = 0; i <= grid.n; ++i) {
      const bool interior = i >= 1 && i < grid.n && j >= 1 && j < grid.n;
      const double value = interior ? field[grid.index(i, j)] : 0.0;
      os << grid.x1(i) << ' ' << grid.x2(j) << ' ' << value << '\n';
    }
    os << '\n'; // blank line between grid rows, gnuplot-friendly
  }
}

void write_field_dump_file(const std::string& path, const FieldVector& field) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_field_dump(os, field);
}

} // namespace obsopt

#include "pftransport/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pft::io {

namespace {

constexpr const char* kMagic = "PFTMODEL 1";

static_assert(std::endian::native == std::endian::little, "model payload assumes little-endian host");

void append_array(std::vector<char>& payload, nlohmann::json& arrays, const std::string& name,
                  const Matrix& m) {
  const RowMatrix rm = m;
  arrays.push_back({{"name", name},
                    {"rows", rm.rows()},
                    {"cols", rm.cols()},
                    {"offset", payload.size()}});
  const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(rm.size());
  const std::size_t at = payload.size();
  payload.resize(at + bytes);
  if (bytes > 0) std::memcpy(payload.data() + at, rm.data(), bytes);
}

Matrix read_array(const std::vector<char>& payload, const nlohmann::json& entry) {
  const auto rows = entry.at("rows").get<Eigen::Index>();
  const auto cols = entry.at("cols").get<Eigen::Index>();
  const auto offset = entry.at("offset").get<std::size_t>();
  require(rows >= 0 && cols >= 0, "model file: negative array shape");
  const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(rows * cols);
  require(offset + bytes <= payload.size(), "model file: truncated payload");
  RowMatrix rm(rows, cols);
  if (bytes > 0) std::memcpy(rm.data(), payload.data() + offset, bytes);
  return rm;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void save_model(const GeneratorModel& model, const std::filesystem::path& path) {
  model.validate();
  std::vector<char> payload;
  nlohmann::json arrays = nlohmann::json::array();
  append_array(payload, arrays, "L0", model.l0);
  for (int i = 0; i < model.control_dim(); ++i)
    append_array(payload, arrays, "B" + std::to_string(i), model.b[i]);
  append_array(payload, arrays, "C", model.c);

  const nlohmann::json header = {{"format", "pftransport-model"},
                                 {"version", 1},
                                 {"dictionary", model.dictionary->to_json()},
                                 {"dt_data", model.dt_data},
                                 {"control_dim", model.control_dim()},
                                 {"byte_order", "little"},
                                 {"layout", "row-major"},
                                 {"arrays", arrays}};
  std::ofstream out = open_out(path, true);
  out << kMagic << '\n' << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

GeneratorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("model file not found: " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  require(magic == kMagic, "model file: bad magic in " + path.string());
  std::getline(in, header_line);
  const nlohmann::json header = nlohmann::json::parse(header_line);
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  GeneratorModel model;
  model.dictionary = std::make_shared<const Dictionary>(Dictionary::from_json(header.at("dictionary")));
  model.dt_data = header.at("dt_data").get<double>();
  const int nc = header.at("control_dim").get<int>();
  model.b.resize(nc);
  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    if (name == "L0") {
      model.l0 = read_array(payload, entry);
    } else if (name == "C") {
      model.c = read_array(payload, entry);
    } else if (name.size() > 1 && name[0] == 'B') {
      const int i = std::stoi(name.substr(1));
      require(i >= 0 && i < nc, "model file: control generator index out of range");
      model.b[i] = read_array(payload, entry);
    }
  }
  model.validate();
  return model;
}

std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<std::string> moment_column_names(int dim, const std::string& prefix) {
  std::vector<std::string> names;
  for (int a = 0; a < dim; ++a) names.push_back(prefix + "m1_" + std::to_string(a + 1));
  for (int a = 0; a < dim; ++a)
    for (int b = a; b < dim; ++b)
      names.push_back(prefix + "m2_" + std::to_string(a + 1) + std::to_string(b + 1));
  return names;
}

void write_trajectory_csv(const Trajectory& traj, const std::vector<std::string>& output_names,
                          const std::filesystem::path& path) {
  require(static_cast<Eigen::Index>(output_names.size()) == traj.outputs.cols(),
          "write_trajectory_csv: output name count mismatch");
  std::ofstream out = open_out(path);
  out << "t";
  for (Eigen::Index i = 0; i < traj.controls.cols(); ++i) out << ",u" << i + 1;
  for (const auto& n : output_names) out << ',' << n;
  out << '\n';
  for (Eigen::Index t = 0; t < traj.outputs.rows(); ++t) {
    out << format_double(traj.dt * static_cast<double>(t));
    for (Eigen::Index i = 0; i < traj.controls.cols(); ++i) {
      out << ',';
      if (t < traj.controls.rows()) out << format_double(traj.controls(t, i));
    }
    for (Eigen::Index j = 0; j < traj.outputs.cols(); ++j) out << ',' << format_double(traj.outputs(t, j));
    out << '\n';
  }
}

void write_moment_series_csv(const MomentSeries& series, const std::filesystem::path& path) {
  write_moment_comparison_csv({{"", &series}}, path);
}

void write_moment_comparison_csv(const std::vector<std::pair<std::string, const MomentSeries*>>& series,
                                 const std::filesystem::path& path) {
  require(!series.empty(), "write_moment_comparison_csv: no series");
  const MomentSeries& first = *series.front().second;
  for (const auto& [label, s] : series)
    require(s->length() == first.length(), "write_moment_comparison_csv: series lengths differ");
  std::ofstream out = open_out(path);
  out << "t";
  for (const auto& [label, s] : series)
    for (const auto& n : moment_column_names(s->dim(), label.empty() ? "" : label + "_")) out << ',' << n;
  out << '\n';
  for (int t = 0; t < first.length(); ++t) {
    out << format_double(first.times[t]);
    for (const auto& [label, s] : series) {
      for (Eigen::Index j = 0; j < s->m1.cols(); ++j) out << ',' << format_double(s->m1(t, j));
      for (Eigen::Index j = 0; j < s->m2.cols(); ++j) out << ',' << format_double(s->m2(t, j));
    }
    out << '\n';
  }
}

void write_controls_csv(const RowMatrix& controls, double dt, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "t";
  for (Eigen::Index i = 0; i < controls.cols(); ++i) out << ",u" << i + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < controls.rows(); ++t) {
    out << format_double(dt * static_cast<double>(t));
    for (Eigen::Index i = 0; i < controls.cols(); ++i) out << ',' << format_double(controls(t, i));
    out << '\n';
  }
}

RowMatrix read_controls_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("controls file not found: " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  require(header.size() >= 2 && header.front() == "t", "controls file: bad header");
  const Eigen::Index nc = static_cast<Eigen::Index>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(static_cast<Eigen::Index>(cells.size()) == nc + 1, "controls file: ragged row");
    std::vector<double> r;
    for (Eigen::Index i = 1; i <= nc; ++i) r.push_back(std::stod(cells[i]));
    rows.push_back(std::move(r));
  }
  RowMatrix u(rows.size(), nc);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (Eigen::Index i = 0; i < nc; ++i) u(t, i) = rows[t][i];
  return u;
}

void write_cost_history_csv(const std::vector<double>& history, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "iteration,cost\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << format_double(history[i]) << '\n';
}

nlohmann::json solve_report_summary(const SolveReport& report) {
  return {{"iterations", report.iterations},
          {"converged", report.converged},
          {"initial_cost", report.cost_history.front()},
          {"final_cost", report.cost_history.back()},
          {"regularization_final", report.regularization_final},
          {"message", report.message}};
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("file not found: " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace pft::io

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pftransport/ddp.hpp"
#include "pftransport/edmd.hpp"
#include "pftransport/validation.hpp"

namespace pft::io {

/// Model file layout:
///   line 1  "PFTMODEL 1"
///   line 2  single-line JSON header: {"dictionary": {...}, "dt_data": ...,
///           "arrays": [{"name", "rows", "cols", "offset"}...]}
///   rest    little-endian IEEE-754 float64 payload, each array row-major,
///           offsets in bytes from the start of the payload.
/// Arrays are named "L0", "B0".."B{nc-1}", "C". Round trips are bit-exact.
void save_model(const GeneratorModel& model, const std::filesystem::path& path);
GeneratorModel load_model(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Column names "m1_1".."m1_d", "m2_11", "m2_12", ... in output order.
std::vector<std::string> moment_column_names(int dim, const std::string& prefix = "");

/// Header: t, u1..u_nc, then output columns; the final row leaves the
/// control columns empty.
void write_trajectory_csv(const Trajectory& traj, const std::vector<std::string>& output_names,
                          const std::filesystem::path& path);

/// Header: t, m1_*, m2_*.
void write_moment_series_csv(const MomentSeries& series, const std::filesystem::path& path);

/// Header: t, then each labelled series' m1/m2 columns prefixed with its label.
void write_moment_comparison_csv(const std::vector<std::pair<std::string, const MomentSeries*>>& series,
                                 const std::filesystem::path& path);

/// Header: t, u1..u_nc (one row per control interval).
void write_controls_csv(const RowMatrix& controls, double dt, const std::filesystem::path& path);
RowMatrix read_controls_csv(const std::filesystem::path& path);

/// Header: iteration, cost.
void write_cost_history_csv(const std::vector<double>& history, const std::filesystem::path& path);

nlohmann::json solve_report_summary(const SolveReport& report);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace pft::io

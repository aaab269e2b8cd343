#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "msm/pde/problem.hpp"

namespace msm::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tensor lattice over the spatial box and a set of times, with trapezoid weights.
/// Point index = ((k * n_1 + i_1) * n_2 + i_2) ... with time slowest.
struct Lattice {
  std::vector<std::vector<double>> axes;
  std::vector<double> times;

  static Lattice uniform(const pde::Box& box, int nodes_per_axis, int n_times, double horizon);

  int dim() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  /// (x, t) for every lattice point, (dim + 1) x size.
  Matrix spacetime() const;
  /// Product trapezoid weights in space and time.
  Vector weights() const;
};

struct ErrorPair {
  double rel_l2 = 0.0;
  double l_inf = 0.0;
};

/// sqrt(sum w (u - ref)^2 / sum w ref^2). Throws NumericError when the reference norm is 0.
double rel_l2(const Vector& u, const Vector& ref, const Vector& weights);
/// max |u - ref|.
double l_inf(const Vector& u, const Vector& ref);
ErrorPair lattice_errors(const Vector& u, const Vector& ref, const Lattice& lattice);

/// Unit-weight relative L2 and max error over a point cloud (the weighting lives
/// in how the points were drawn).
ErrorPair weighted_errors(const Vector& u, const Vector& ref);

/// Space-time points drawn proportionally to exp(-sum_i (x_i - t)^2 / alpha) on
/// box x [0, T]: t by rejection against its exact marginal, then each axis by
/// per-axis rejection. (dim + 1) x n.
Matrix sample_gaussian_track(const pde::Box& box, double alpha, double horizon, std::size_t n,
                             std::uint64_t seed);

/// Largest distance in s = x + y between the `level` crossing of u along lines of fixed
/// x - y and the true front s = t, over every time in `times`. `u` maps (3 x P) (x, y, t)
/// points to values. A line with no crossing contributes its full admissible s-range.
double diagonal_front_error(const std::function<Vector(const Matrix&)>& u, const pde::Box& box,
                            const std::vector<double>& times, double level, int n_lines,
                            int n_scan);

struct ReportRow {
  std::string problem;
  std::string method;
  std::string seed;  // a number, or "median"
  double rel_l2 = 0.0;
  double l_inf = 0.0;
  double wall_s = 0.0;
};

double median(std::vector<double> values);

/// Input rows plus one median row per (problem, method), in first-seen order.
std::vector<ReportRow> build_report(const std::vector<ReportRow>& rows);
std::string report_csv(const std::vector<ReportRow>& rows);
nlohmann::json report_json(const std::vector<ReportRow>& rows);

}  // namespace msm::metrics

#include "msm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/sampling/rng.hpp"

namespace msm::metrics {

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  v.back() = b;
  return v;
}

std::vector<double> trapezoid(const std::vector<double>& g) {
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const double h = 0.5 * (g[i + 1] - g[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  if (g.size() == 1) w[0] = 1.0;
  return w;
}

}  // namespace

Lattice Lattice::uniform(const pde::Box& box, int nodes_per_axis, int n_times, double horizon) {
  if (nodes_per_axis < 2 || n_times < 2) throw ConfigError("lattice needs at least two nodes per axis");
  Lattice l;
  for (int i = 0; i < box.dim(); ++i) l.axes.push_back(linspace(box.lo[i], box.hi[i], nodes_per_axis));
  l.times = linspace(0.0, horizon, n_times);
  return l;
}

std::size_t Lattice::size() const {
  std::size_t n = times.size();
  for (const auto& a : axes) n *= a.size();
  return n;
}

Matrix Lattice::spacetime() const {
  const int d = dim();
  Matrix m(d + 1, static_cast<Eigen::Index>(size()));
  std::vector<std::size_t> idx(d, 0);
  Eigen::Index col = 0;
  for (double t : times) {
    std::fill(idx.begin(), idx.end(), 0);
    const std::size_t per_slice = size() / times.size();
    for (std::size_t p = 0; p < per_slice; ++p, ++col) {
      for (int i = 0; i < d; ++i) m(i, col) = axes[i][idx[i]];
      m(d, col) = t;
      for (int i = d - 1; i >= 0; --i) {
        if (++idx[i] < axes[i].size()) break;
        idx[i] = 0;
      }
    }
  }
  return m;
}

Vector Lattice::weights() const {
  const int d = dim();
  std::vector<std::vector<double>> aw;
  for (const auto& a : axes) aw.push_back(trapezoid(a));
  const std::vector<double> tw = trapezoid(times);
  Vector w(static_cast<Eigen::Index>(size()));
  std::vector<std::size_t> idx(d, 0);
  Eigen::Index col = 0;
  const std::size_t per_slice = size() / times.size();
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t p = 0; p < per_slice; ++p, ++col) {
      double v = tw[k];
      for (int i = 0; i < d; ++i) v *= aw[i][idx[i]];
      w[col] = v;
      for (int i = d - 1; i >= 0; --i) {
        if (++idx[i] < axes[i].size()) break;
        idx[i] = 0;
      }
    }
  }
  return w;
}

double rel_l2(const Vector& u, const Vector& ref, const Vector& weights) {
  if (u.size() != ref.size() || u.size() != weights.size()) {
    throw ContractError("error vectors differ in length");
  }
  const double den = (weights.array() * ref.array().square()).sum();
  if (!(den > 0.0)) throw NumericError("reference has zero norm on the lattice");
  const double num = (weights.array() * (u - ref).array().square()).sum();
  return std::sqrt(num / den);
}

double l_inf(const Vector& u, const Vector& ref) {
  if (u.size() != ref.size()) throw ContractError("error vectors differ in length");
  if (u.size() == 0) return 0.0;
  return (u - ref).cwiseAbs().maxCoeff();
}

ErrorPair lattice_errors(const Vector& u, const Vector& ref, const Lattice& lattice) {
  return {rel_l2(u, ref, lattice.weights()), l_inf(u, ref)};
}

ErrorPair weighted_errors(const Vector& u, const Vector& ref) {
  return {rel_l2(u, ref, Vector::Ones(u.size())), l_inf(u, ref)};
}

Matrix sample_gaussian_track(const pde::Box& box, double alpha, double horizon, std::size_t n,
                             std::uint64_t seed) {
  const int d = box.dim();
  const double s = std::sqrt(alpha);
  // Per-axis mass of exp(-(x - t)^2 / alpha) on [lo, hi], up to sqrt(pi alpha) / 2.
  auto axis_mass = [&](int i, double t) {
    return std::erf((box.hi[i] - t) / s) - std::erf((box.lo[i] - t) / s);
  };
  auto marginal = [&](double t) {
    double z = 1.0;
    for (int i = 0; i < d; ++i) z *= axis_mass(i, t);
    return z;
  };
  double zmax = 0.0;
  for (int k = 0; k <= 1000; ++k) zmax = std::max(zmax, marginal(horizon * k / 1000.0));
  zmax *= 1.05;

  sampling::Rng rng(seed);
  Matrix out(d + 1, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    double t;
    do {
      t = rng.uniform(0.0, horizon);
    } while (rng.uniform() * zmax >= marginal(t));
    for (int i = 0; i < d; ++i) {
      double x;
      do {
        x = rng.uniform(box.lo[i], box.hi[i]);
      } while (rng.uniform() >= std::exp(-(x - t) * (x - t) / alpha));
      out(i, j) = x;
    }
    out(d, j) = t;
  }
  return out;
}

double diagonal_front_error(const std::function<Vector(const Matrix&)>& u, const pde::Box& box,
                            const std::vector<double>& times, double level, int n_lines,
                            int n_scan) {
  if (box.dim() != 2) throw ContractError("front error is defined for planar problems");
  if (n_lines < 2 || n_scan < 2) throw ConfigError("front error needs at least two lines and scan nodes");
  // Lines x - y = c over the central part of the square so every line crosses s = t.
  const double half = 0.5 * std::min(box.extent(0), box.extent(1));
  const double cx = 0.5 * (box.lo[0] + box.hi[0]);
  const double cy = 0.5 * (box.lo[1] + box.hi[1]);
  const double c_max = 0.4 * half;
  double worst = 0.0;
  for (double t : times) {
    for (int l = 0; l < n_lines; ++l) {
      const double c = (cx - cy) - c_max + 2.0 * c_max * l / (n_lines - 1);
      // Admissible s range: both coordinates inside the box.
      const double s_lo = std::max(2.0 * box.lo[0] - c, 2.0 * box.lo[1] + c);
      const double s_hi = std::min(2.0 * box.hi[0] - c, 2.0 * box.hi[1] + c);
      Matrix pts(3, n_scan);
      for (int q = 0; q < n_scan; ++q) {
        const double s = s_lo + (s_hi - s_lo) * q / (n_scan - 1);
        pts(0, q) = 0.5 * (s + c);
        pts(1, q) = 0.5 * (s - c);
        pts(2, q) = t;
      }
      const Vector v = u(pts);
      double err = std::max(std::abs(s_hi - t), std::abs(t - s_lo));
      for (int q = 0; q + 1 < n_scan; ++q) {
        const double a = v[q] - level;
        const double b = v[q + 1] - level;
        if ((a >= 0.0) != (b >= 0.0)) {
          const double sa = s_lo + (s_hi - s_lo) * q / (n_scan - 1);
          const double sb = s_lo + (s_hi - s_lo) * (q + 1) / (n_scan - 1);
          const double s_star = sa + (sb - sa) * a / (a - b);
          err = std::abs(s_star - t);
          break;
        }
      }
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<ReportRow> build_report(const std::vector<ReportRow>& rows) {
  std::vector<ReportRow> out = rows;
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& r : rows) {
    const auto key = std::pair{r.problem, r.method};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [problem, method] : keys) {
    std::vector<double> l2, linf, wall;
    for (const auto& r : rows) {
      if (r.problem == problem && r.method == method) {
        l2.push_back(r.rel_l2);
        linf.push_back(r.l_inf);
        wall.push_back(r.wall_s);
      }
    }
    out.push_back({problem, method, "median", median(l2), median(linf), median(wall)});
  }
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "problem,method,seed,rel_l2,l_inf,wall_s\n";
  for (const auto& r : rows) {
    out << r.problem << ',' << r.method << ',' << r.seed << ',' << io::format_double(r.rel_l2) << ','
        << io::format_double(r.l_inf) << ',' << io::format_double(r.wall_s) << '\n';
  }
  return out.str();
}

nlohmann::json report_json(const std::vector<ReportRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"problem", r.problem},
                 {"method", r.method},
                 {"seed", r.seed},
                 {"rel_l2", r.rel_l2},
                 {"l_inf", r.l_inf},
                 {"wall_s", r.wall_s}});
  }
  return j;
}

}  // namespace msm::metrics

#include "specring/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace specring {

namespace {

double detector_offset(const ScanGeometry& g, int d) {
  return (d - 0.5 * (g.num_detectors - 1)) * g.pixel_size;
}

}  // namespace

std::vector<std::pair<int, double>> trace_ray(const ScanGeometry& g, double angle_deg,
                                              double offset) {
  const int n = g.grid_side;
  const double delta = g.pixel_size;
  const double half = 0.5 * n * delta;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double x0 = offset * std::cos(theta);
  const double y0 = offset * std::sin(theta);
  const double ux = -std::sin(theta);
  const double uy = std::cos(theta);
  constexpr double kParallel = 1e-14;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  auto clip = [&](double origin, double dir, double& lo, double& hi) {
    if (std::abs(dir) > kParallel) {
      const double a1 = (-half - origin) / dir;
      const double a2 = (half - origin) / dir;
      lo = std::min(a1, a2);
      hi = std::max(a1, a2);
    } else if (origin >= -half && origin <= half) {
      lo = -kInf;
      hi = kInf;
    } else {
      lo = kInf;
      hi = -kInf;
    }
  };
  double xlo, xhi, ylo, yhi;
  clip(x0, ux, xlo, xhi);
  clip(y0, uy, ylo, yhi);
  const double amin = std::max(xlo, ylo);
  const double amax = std::min(xhi, yhi);
  std::vector<std::pair<int, double>> out;
  if (!(amax - amin > 1e-12 * delta)) return out;

  std::vector<double> alphas{amin, amax};
  alphas.reserve(2 * n + 4);
  auto add_planes = [&](double origin, double dir) {
    if (std::abs(dir) <= kParallel) return;
    for (int k = 0; k <= n; ++k) {
      const double a = (-half + k * delta - origin) / dir;
      if (a > amin && a < amax) alphas.push_back(a);
    }
  };
  add_planes(x0, ux);
  add_planes(y0, uy);
  std::sort(alphas.begin(), alphas.end());

  for (std::size_t k = 0; k + 1 < alphas.size(); ++k) {
    const double len = alphas[k + 1] - alphas[k];
    if (len <= 1e-12 * delta) continue;
    const double mid = 0.5 * (alphas[k] + alphas[k + 1]);
    const double x = x0 + mid * ux;
    const double y = y0 + mid * uy;
    const int col = std::clamp(static_cast<int>(std::floor((x + half) / delta)), 0, n - 1);
    const int row = std::clamp(static_cast<int>(std::floor((half - y) / delta)), 0, n - 1);
    out.emplace_back(row * n + col, len);
  }
  return out;
}

SystemMatrix build_system_matrix(const ScanGeometry& geom) {
  geom.validate();
  const int r = geom.num_detectors;
  const int p = geom.num_angles;
  const Eigen::Index rows = static_cast<Eigen::Index>(r) * p;

  std::vector<int> outer(rows + 1, 0);
  std::vector<int> inner;
  std::vector<double> values;
  inner.reserve(static_cast<std::size_t>(rows) * 2 * geom.grid_side);
  values.reserve(inner.capacity());

  for (int a = 0; a < p; ++a) {
    for (int d = 0; d < r; ++d) {
      auto entries = trace_ray(geom, geom.angles_deg[a], detector_offset(geom, d));
      std::sort(entries.begin(), entries.end());
      for (std::size_t e = 0; e < entries.size(); ++e) {
        if (e > 0 && entries[e].first == entries[e - 1].first) {
          values.back() += entries[e].second;
          continue;
        }
        inner.push_back(entries[e].first);
        values.push_back(entries[e].second);
      }
      if (inner.size() > static_cast<std::size_t>(std::numeric_limits<int>::max()))
        throw std::runtime_error("build_system_matrix: too many nonzeros");
      outer[static_cast<std::size_t>(a) * r + d + 1] = static_cast<int>(inner.size());
    }
  }

  SystemMatrix out;
  out.geometry = geom;
  out.matrix = Eigen::Map<const SparseRowMatrix>(rows, geom.num_pixels(),
                                                 static_cast<Eigen::Index>(inner.size()),
                                                 outer.data(), inner.data(), values.data());
  return out;
}

Eigen::MatrixXd forward_project(const SystemMatrix& a, const Eigen::VectorXd& pixels) {
  if (pixels.size() != a.matrix.cols())
    throw std::invalid_argument("forward_project: pixel count mismatch");
  const Eigen::VectorXd y = a.matrix * pixels;
  const int p = a.geometry.num_angles;
  const int r = a.geometry.num_detectors;
  Eigen::MatrixXd sino(p, r);
  for (int i = 0; i < p; ++i)
    for (int d = 0; d < r; ++d) sino(i, d) = y(static_cast<Eigen::Index>(i) * r + d);
  return sino;
}

Eigen::VectorXd back_project(const SystemMatrix& a, const Eigen::MatrixXd& sino) {
  const int p = a.geometry.num_angles;
  const int r = a.geometry.num_detectors;
  if (sino.rows() != p || sino.cols() != r)
    throw std::invalid_argument("back_project: sinogram shape mismatch");
  Eigen::VectorXd y(static_cast<Eigen::Index>(p) * r);
  for (int i = 0; i < p; ++i)
    for (int d = 0; d < r; ++d) y(static_cast<Eigen::Index>(i) * r + d) = sino(i, d);
  return a.matrix.transpose() * y;
}

}  // namespace specring

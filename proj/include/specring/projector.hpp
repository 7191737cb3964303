#pragma once

#include "specring/core.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace specring {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

/// Ray-pixel intersection lengths. Row a*r + d is the ray of detector d at
/// angle a; column row*grid_side + col is a pixel. Read-only once built.
struct SystemMatrix {
  ScanGeometry geometry;
  SparseRowMatrix matrix;
};

/// Exact (Siddon) traversal of every ray through the pixel grid. Angle theta
/// integrates along the line x cos(theta) + y sin(theta) = t, with x to the
/// right, y up and the origin at the grid centre.
SystemMatrix build_system_matrix(const ScanGeometry& geom);

/// Row of intersection lengths for a single ray, as (pixel, length) pairs.
std::vector<std::pair<int, double>> trace_ray(const ScanGeometry& geom, double angle_deg,
                                              double offset);

/// A x reshaped to angles x detectors.
Eigen::MatrixXd forward_project(const SystemMatrix& a, const Eigen::VectorXd& pixels);

/// A^T applied to an angles x detectors array.
Eigen::VectorXd back_project(const SystemMatrix& a, const Eigen::MatrixXd& sino);

}  // namespace specring

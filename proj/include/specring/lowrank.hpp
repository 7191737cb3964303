#pragma once

#include "specring/core.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace specring {

/// s spectral flat-fields (each detectors x channels) stacked vertically:
/// rows j*r .. j*r+r-1 hold flat j.
class FlatFieldStack {
 public:
  FlatFieldStack(Eigen::MatrixXd data, int num_flats);

  int num_flats() const { return num_flats_; }
  int num_detectors() const { return static_cast<int>(data_.rows()) / num_flats_; }
  int num_channels() const { return static_cast<int>(data_.cols()); }
  const Eigen::MatrixXd& data() const { return data_; }

  Eigen::MatrixXd block(int j) const;
  /// The first `count` flats, still stacked.
  Eigen::MatrixXd leading(int count) const;

 private:
  Eigen::MatrixXd data_;
  int num_flats_;
};

FlatFieldStack stack_flats(const std::vector<Eigen::MatrixXd>& flats);

FlatEstimate conventional_flat_estimate(const FlatFieldStack& stack,
                                        std::optional<int> use_first = std::nullopt);

/// Leading singular triplets; column i of each factor pairs with value i.
struct SingularTriplets {
  Eigen::MatrixXd left_vectors;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd right_vectors;

  int rank() const { return static_cast<int>(singular_values.size()); }
  /// sum_i sigma_i u_i v_i^T
  Eigen::MatrixXd reconstruct() const;
};

struct JacobiOptions {
  /// Columns p, q count as orthogonal once |a_p . a_q| <= tolerance * |a_p| |a_q|.
  double tolerance{1e-12};
  int max_sweeps{100};
};

/// Thin SVD by one-sided (Hestenes) Jacobi rotations, i.e. Jacobi
/// diagonalisation of the Gram matrix M^T M carried out on the columns of M
/// without forming the product. Tall inputs are first reduced to their
/// triangular QR factor. Each right vector's largest-magnitude entry is
/// positive.
SingularTriplets thin_svd(const Eigen::MatrixXd& m, const JacobiOptions& opts = {});

/// The `rank` leading triplets of m; their reconstruction is the best
/// rank-`rank` approximation in both the spectral and Frobenius norms.
SingularTriplets truncated_svd(const Eigen::MatrixXd& m, int rank,
                               const JacobiOptions& opts = {});

/// Rank-`rank` truncation of the first `use_first` flats, averaged over those
/// blocks and clamped to 1e-6 times its median.
FlatEstimate lowrank_flat_estimate(const FlatFieldStack& stack, int rank = 1,
                                   std::optional<int> use_first = std::nullopt);

enum class ErrorNorm { spectral, frobenius };

/// Relative error of the rank-`rank` truncation given all singular values:
/// sigma_{l+1}/sigma_1 (spectral) or the tail energy ratio (Frobenius).
double approximation_error(std::span<const double> singular_values, int rank, ErrorNorm norm);

/// All min(r*s, m) singular values of the stack, nonincreasing.
std::vector<double> singular_value_profile(const FlatFieldStack& stack);

}  // namespace specring

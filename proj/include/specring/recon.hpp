#pragma once

#include "specring/core.hpp"
#include "specring/destripe.hpp"
#include "specring/projector.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace specring {

enum class FbpFilter { ramp, hann };

/// Frequency response of the projection filter for a zero-padded length
/// `padded` (power of two): twice the band-limited ramp, optionally tapered
/// by a Hann window that vanishes at Nyquist.
Eigen::VectorXd fbp_filter_response(int padded, double detector_spacing, FbpFilter filter);

/// Filters every projection (row) of an angles x detectors sinogram.
Eigen::MatrixXd filter_projections(const Eigen::MatrixXd& sino, double detector_spacing,
                                   FbpFilter filter);

/// Filtered back projection through the transpose of `a`, scaled by
/// pi / (2 p pixel_size).
Eigen::VectorXd fbp(const Eigen::MatrixXd& sino, const SystemMatrix& a,
                    FbpFilter filter = FbpFilter::hann);
Eigen::VectorXd fbp(const Eigen::MatrixXd& sino, const ScanGeometry& geom,
                    FbpFilter filter = FbpFilter::hann);

struct TvConfig {
  double lambda{0.005};
  int max_iter{1000};
  double tv_smoothing_eps{1e-6};
  double step_tolerance{1e-7};

  void validate() const;
};

/// 0.5 ||W^(1/2) (A x - b)||^2 + lambda * sum sqrt(|grad x|^2 + eps^2), with
/// forward differences that vanish across the last row and column.
class WlsTvObjective {
 public:
  WlsTvObjective(const SystemMatrix& a, const Eigen::MatrixXd& sino,
                 const Eigen::MatrixXd& weights, double lambda, double eps);

  double value(const Eigen::VectorXd& x) const;
  double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

  double data_term(const Eigen::VectorXd& residual) const;
  double tv_term(const Eigen::VectorXd& x) const;

  /// Largest eigenvalue of A^T W A by power iteration.
  double data_lipschitz(int iterations = 50) const;

  const SparseRowMatrix& matrix() const { return a_.matrix; }
  const Eigen::VectorXd& rhs() const { return b_; }
  const Eigen::VectorXd& weights() const { return w_; }
  int grid_side() const { return a_.geometry.grid_side; }

 private:
  void add_tv_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

  const SystemMatrix& a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd w_;
  double lambda_;
  double eps_;
};

struct TvResult {
  Eigen::VectorXd pixels;
  /// Objective at the start and after every accepted iteration.
  std::vector<double> objective;
  int iterations{0};
  bool converged{false};
};

/// Gradient descent with Armijo backtracking (step halving). The first trial
/// step is 1/L from power iteration on A^T W A; later trials use the
/// Barzilai-Borwein step. Every accepted step lowers the objective.
TvResult wls_tv(const Eigen::MatrixXd& sino, const Eigen::MatrixXd& weights,
                const SystemMatrix& a, const TvConfig& cfg);

enum class ReconMethod { fbp, wls_tv };
enum class RingFilter { none, wf, sortsmooth };

const char* to_string(ReconMethod m);
const char* to_string(RingFilter f);
const char* to_string(FbpFilter f);
ReconMethod recon_method_from_string(const std::string& s);
RingFilter ring_filter_from_string(const std::string& s);
FbpFilter fbp_filter_from_string(const std::string& s);

struct ReconOptions {
  ReconMethod method{ReconMethod::fbp};
  FbpFilter filter{FbpFilter::hann};
  RingFilter ring_filter{RingFilter::none};
  WfParams wf;
  SortSmoothParams sort_smooth;
  TvConfig tv;
  std::optional<double> count_floor;
  /// Worker threads across channels; values below 1 mean one.
  int threads{1};
};

/// One channel: correct, optionally destripe, reconstruct.
Eigen::VectorXd reconstruct_channel(const Eigen::MatrixXd& counts, const Eigen::VectorXd& flat,
                                    double floor, const SystemMatrix& a,
                                    const ReconOptions& opts);

SpectralVolume reconstruct_channels(const SpectralSinogram& counts, const FlatEstimate& flat,
                                    const SystemMatrix& a, const ReconOptions& opts);

}  // namespace specring

#pragma once

#include <Eigen/Dense>

namespace specring {

enum class WaveletFamily { db5 };

/// Wavelet-Fourier destriping. `damping_sigma` is the Gaussian width in
/// 1 - exp(-u^2 / (2 sigma^2)) applied to angular frequency index u.
struct WfParams {
  WaveletFamily wavelet{WaveletFamily::db5};
  int levels{3};
  double damping_sigma{0.9};

  void validate(int num_angles) const;
};

enum class Smoother { median, mean };

struct SortSmoothParams {
  int window{31};
  Smoother smoother{Smoother::median};

  void validate(int num_detectors) const;
};

/// Suppresses structures that are constant along the angle axis of a single
/// angle x detector sinogram. Both axes are reflect-padded to a power of two
/// before the transform and cropped afterwards.
Eigen::MatrixXd wf_destripe(const Eigen::MatrixXd& sino, const WfParams& params = {});

/// Sorts each detector column along the angle axis, smooths every sorted row
/// across detectors and undoes the sort.
Eigen::MatrixXd sort_smooth_destripe(const Eigen::MatrixXd& sino,
                                     const SortSmoothParams& params = {});

}  // namespace specring

#pragma once

#include "specring/core.hpp"

#include <Eigen/Dense>

namespace specring {

/// Rectangular region of an image, rows [row0, row0+height) and columns
/// [col0, col0+width).
struct Roi {
  int row0{0};
  int col0{0};
  int height{0};
  int width{0};

  int count() const { return height * width; }
  bool overlaps(const Roi& other) const;
  /// Throws unless the ROI holds at least two pixels inside a rows x cols image.
  void validate(Eigen::Index rows, Eigen::Index cols) const;
};

/// |mu_s - mu_b| / sqrt(sigma_s^2 + sigma_b^2) with sample (n-1) deviations.
/// Two constant regions give 0 when their means agree and an error otherwise.
double cnr(const Eigen::MatrixXd& image, const Roi& signal, const Roi& background);

/// ||x_ref_free - x_lr|| / ||x_lr||
double rd(const Eigen::VectorXd& x_ref_free, const Eigen::VectorXd& x_lr);

struct ChannelSelection {
  int k_min{0};
  int k_median{0};
  int k_max{0};
};

/// Per-channel rd between the volumes; the median is the ceil(m/2)-th order
/// statistic. Ties go to the lowest channel index.
ChannelSelection select_channels_by_rd(const SpectralVolume& fbp_vol, const SpectralVolume& lr_vol);

/// Per-channel rd values.
Eigen::VectorXd rd_profile(const SpectralVolume& fbp_vol, const SpectralVolume& lr_vol);

/// Radial ring indicator. The largest disk about (center_row, center_col)
/// that fits in the image is cut into n_annuli equal-width annuli. Pixels are
/// binned by floor of their distance to the centre; inside each annulus the
/// population variance of the bin means is taken, and the variances summed.
double ring_energy(const Eigen::MatrixXd& image, double center_row, double center_col,
                   int n_annuli);

}  // namespace specring

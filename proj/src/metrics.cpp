#include "specring/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace specring {

bool Roi::overlaps(const Roi& o) const {
  return row0 < o.row0 + o.height && o.row0 < row0 + height && col0 < o.col0 + o.width &&
         o.col0 < col0 + width;
}

void Roi::validate(Eigen::Index rows, Eigen::Index cols) const {
  if (height < 1 || width < 1 || count() < 2)
    throw std::invalid_argument("roi: needs at least two pixels");
  if (row0 < 0 || col0 < 0 || row0 + height > rows || col0 + width > cols)
    throw std::invalid_argument("roi: region leaves the image");
}

namespace {

struct Moments {
  double mean;
  double variance;
};

Moments roi_moments(const Eigen::MatrixXd& image, const Roi& roi) {
  const auto block = image.block(roi.row0, roi.col0, roi.height, roi.width);
  const double mean = block.mean();
  const double ss = (block.array() - mean).square().sum();
  return {mean, ss / (roi.count() - 1)};
}

}  // namespace

double cnr(const Eigen::MatrixXd& image, const Roi& signal, const Roi& background) {
  signal.validate(image.rows(), image.cols());
  background.validate(image.rows(), image.cols());
  if (signal.overlaps(background)) throw std::invalid_argument("cnr: ROIs overlap");
  if (!image.allFinite()) throw std::invalid_argument("cnr: non-finite image");
  const Moments s = roi_moments(image, signal);
  const Moments b = roi_moments(image, background);
  const double contrast = std::abs(s.mean - b.mean);
  const double noise = std::sqrt(s.variance + b.variance);
  if (noise == 0.0) {
    if (contrast == 0.0) return 0.0;
    throw std::domain_error("cnr: both ROIs are constant with different means");
  }
  return contrast / noise;
}

double rd(const Eigen::VectorXd& x_ref_free, const Eigen::VectorXd& x_lr) {
  if (x_ref_free.size() != x_lr.size()) throw std::invalid_argument("rd: size mismatch");
  const double denom = x_lr.norm();
  if (!(denom > 0.0)) throw std::domain_error("rd: reference image has zero norm");
  return (x_ref_free - x_lr).norm() / denom;
}

Eigen::VectorXd rd_profile(const SpectralVolume& fbp_vol, const SpectralVolume& lr_vol) {
  if (fbp_vol.grid_side() != lr_vol.grid_side() ||
      fbp_vol.num_channels() != lr_vol.num_channels())
    throw std::invalid_argument("select_channels_by_rd: volume shapes differ");
  const int m = fbp_vol.num_channels();
  Eigen::VectorXd out(m);
  for (int k = 0; k < m; ++k) out(k) = rd(fbp_vol.data().col(k), lr_vol.data().col(k));
  return out;
}

ChannelSelection select_channels_by_rd(const SpectralVolume& fbp_vol, const SpectralVolume& lr_vol) {
  const Eigen::VectorXd values = rd_profile(fbp_vol, lr_vol);
  const int m = static_cast<int>(values.size());
  if (m < 1) throw std::invalid_argument("select_channels_by_rd: no channels");
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values(a) < values(b); });
  ChannelSelection sel;
  sel.k_min = order.front();
  sel.k_median = order[(m + 1) / 2 - 1];
  sel.k_max = 0;
  for (int k = 1; k < m; ++k)
    if (values(k) > values(sel.k_max)) sel.k_max = k;
  return sel;
}

double ring_energy(const Eigen::MatrixXd& image, double cr, double cc, int n_annuli) {
  if (n_annuli < 1) throw std::invalid_argument("ring_energy: n_annuli must be positive");
  const double rows = static_cast<double>(image.rows());
  const double cols = static_cast<double>(image.cols());
  if (!(cr >= 0.0 && cr <= rows - 1 && cc >= 0.0 && cc <= cols - 1))
    throw std::invalid_argument("ring_energy: centre outside the grid");
  const double radius = std::min({cr + 0.5, rows - 0.5 - cr, cc + 0.5, cols - 0.5 - cc});
  const double width = radius / n_annuli;

  // bin -> (sum of offsets from ref, count); a constant image sums to exactly zero
  const double ref = image(static_cast<Eigen::Index>(std::lround(cr)), static_cast<Eigen::Index>(std::lround(cc)));
  std::map<int, std::pair<double, int>> bins;
  for (Eigen::Index i = 0; i < image.rows(); ++i)
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      const double rho = std::hypot(i - cr, j - cc);
      if (rho >= radius) continue;
      auto& b = bins[static_cast<int>(std::floor(rho))];
      b.first += image(i, j) - ref;
      b.second += 1;
    }

  std::vector<std::vector<double>> annuli(n_annuli);
  for (const auto& [bin, acc] : bins) {
    // Bins straddling an annulus boundary go with their inner edge.
    const int a = std::min(n_annuli - 1, static_cast<int>(std::floor(bin / width)));
    annuli[a].push_back(acc.first / acc.second);
  }
  double total = 0.0;
  for (const auto& means : annuli) {
    if (means.size() < 2) continue;
    const double mu = std::accumulate(means.begin(), means.end(), 0.0) / means.size();
    double var = 0.0;
    for (double v : means) var += (v - mu) * (v - mu);
    total += var / means.size();
  }
  return total;
}

}  // namespace specring

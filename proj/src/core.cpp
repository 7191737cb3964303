#include "specring/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace specring {

void ScanGeometry::validate() const {
  if (num_detectors < 1 || num_angles < 1 || grid_side < 1)
    throw std::invalid_argument("geometry: dimensions must be positive");
  if (!(pixel_size > 0.0) || !std::isfinite(pixel_size))
    throw std::invalid_argument("geometry: pixel_size must be positive");
  if (static_cast<int>(angles_deg.size()) != num_angles)
    throw std::invalid_argument("geometry: angle count does not match num_angles");
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    const double a = angles_deg[i];
    if (!std::isfinite(a) || a < 0.0 || a >= 180.0)
      throw std::invalid_argument("geometry: angles must lie in [0, 180)");
    if (i > 0 && !(a > angles_deg[i - 1]))
      throw std::invalid_argument("geometry: angles must be strictly increasing");
  }
}

ScanGeometry make_geometry(int num_detectors, int num_angles, double start_deg,
                           double increment_deg, int grid_side, double pixel_size) {
  if (num_detectors < 1 || num_angles < 1 || grid_side < 1)
    throw std::invalid_argument("geometry: dimensions must be positive");
  if (num_angles > 1 && !(increment_deg > 0.0))
    throw std::invalid_argument("geometry: increment must be positive");
  if (num_angles * increment_deg > 180.0 + 1e-9)
    throw std::invalid_argument("geometry: angular schedule exceeds 180 degrees");
  ScanGeometry g;
  g.num_detectors = num_detectors;
  g.num_angles = num_angles;
  g.grid_side = grid_side;
  g.pixel_size = pixel_size;
  g.angles_deg.resize(num_angles);
  for (int i = 0; i < num_angles; ++i) g.angles_deg[i] = start_deg + i * increment_deg;
  g.validate();
  return g;
}

const char* to_string(SinogramKind kind) {
  return kind == SinogramKind::counts ? "counts" : "attenuation";
}

SinogramKind sinogram_kind_from_string(const std::string& s) {
  if (s == "counts") return SinogramKind::counts;
  if (s == "attenuation") return SinogramKind::attenuation;
  throw std::invalid_argument("unknown sinogram kind: " + s);
}

SpectralSinogram::SpectralSinogram(int num_angles, int num_detectors, int num_channels,
                                   SinogramKind kind, std::vector<double> data,
                                   std::vector<std::string> channel_labels)
    : angles_(num_angles),
      detectors_(num_detectors),
      channels_(num_channels),
      kind_(kind),
      data_(std::move(data)),
      labels_(std::move(channel_labels)) {
  if (angles_ < 1 || detectors_ < 1 || channels_ < 1)
    throw std::invalid_argument("sinogram: dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(angles_) * detectors_ * channels_)
    throw std::invalid_argument("sinogram: data length does not match shape");
  if (labels_.empty()) {
    labels_.reserve(channels_);
    for (int k = 0; k < channels_; ++k) labels_.push_back(std::to_string(k));
  }
  if (static_cast<int>(labels_.size()) != channels_)
    throw std::invalid_argument("sinogram: one label per channel required");
  for (double v : data_) {
    if (!std::isfinite(v)) throw std::invalid_argument("sinogram: non-finite entry");
    if (kind_ == SinogramKind::counts && v < 0.0)
      throw std::invalid_argument("sinogram: negative count");
  }
}

SpectralSinogram SpectralSinogram::from_channels(const std::vector<Eigen::MatrixXd>& channels,
                                                 SinogramKind kind,
                                                 std::vector<std::string> channel_labels) {
  if (channels.empty()) throw std::invalid_argument("sinogram: no channels");
  const auto p = static_cast<int>(channels.front().rows());
  const auto r = static_cast<int>(channels.front().cols());
  const auto m = static_cast<int>(channels.size());
  std::vector<double> data(static_cast<std::size_t>(p) * r * m);
  for (int k = 0; k < m; ++k) {
    if (channels[k].rows() != p || channels[k].cols() != r)
      throw std::invalid_argument("sinogram: channel slices differ in shape");
    for (int a = 0; a < p; ++a)
      for (int d = 0; d < r; ++d)
        data[(static_cast<std::size_t>(a) * r + d) * m + k] = channels[k](a, d);
  }
  return SpectralSinogram(p, r, m, kind, std::move(data), std::move(channel_labels));
}

Eigen::MatrixXd SpectralSinogram::channel(int k) const {
  if (k < 0 || k >= channels_) throw std::out_of_range("sinogram: channel index");
  Eigen::MatrixXd out(angles_, detectors_);
  for (int a = 0; a < angles_; ++a)
    for (int d = 0; d < detectors_; ++d) out(a, d) = at(a, d, k);
  return out;
}

SpectralVolume::SpectralVolume(int grid_side, Eigen::MatrixXd data)
    : grid_side_(grid_side), data_(std::move(data)) {
  if (grid_side_ < 1) throw std::invalid_argument("volume: grid_side must be positive");
  if (data_.rows() != static_cast<Eigen::Index>(grid_side_) * grid_side_)
    throw std::invalid_argument("volume: pixel count does not match grid_side");
  if (data_.cols() < 1) throw std::invalid_argument("volume: no channels");
  if (!data_.allFinite()) throw std::invalid_argument("volume: non-finite entry");
}

Eigen::MatrixXd SpectralVolume::image(int k) const {
  return pixels_to_image(data_.col(k), grid_side_);
}

FlatEstimate::FlatEstimate(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.size() == 0) throw std::invalid_argument("flat: empty");
  if (!values_.allFinite()) throw std::invalid_argument("flat: non-finite entry");
  if (!(values_.minCoeff() > 0.0))
    throw std::invalid_argument("flat: entries must be strictly positive");
}

Eigen::MatrixXd pixels_to_image(const Eigen::VectorXd& pixels, int grid_side) {
  if (pixels.size() != static_cast<Eigen::Index>(grid_side) * grid_side)
    throw std::invalid_argument("pixels_to_image: size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(pixels.data(), grid_side, grid_side);
}

Eigen::VectorXd image_to_pixels(const Eigen::MatrixXd& image) {
  Eigen::VectorXd out(image.size());
  const auto cols = image.cols();
  for (Eigen::Index i = 0; i < image.rows(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i * cols + j) = image(i, j);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  const auto mid = values.begin() + (values.size() - 1) / 2;
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

double default_count_floor(const FlatEstimate& flat, int channel) {
  const Eigen::VectorXd col = flat.values().col(channel);
  return 1e-6 * median(std::vector<double>(col.data(), col.data() + col.size()));
}

Eigen::MatrixXd transmission_correct_channel(const Eigen::MatrixXd& counts,
                                             const Eigen::VectorXd& flat, double floor) {
  if (counts.cols() != flat.size())
    throw std::invalid_argument("transmission_correct: detector count mismatch");
  if (!(floor > 0.0)) throw std::invalid_argument("transmission_correct: floor must be positive");
  if (!(flat.minCoeff() > 0.0))
    throw std::invalid_argument("transmission_correct: flat must be strictly positive");
  Eigen::MatrixXd out(counts.rows(), counts.cols());
  for (Eigen::Index d = 0; d < counts.cols(); ++d)
    for (Eigen::Index a = 0; a < counts.rows(); ++a)
      out(a, d) = -std::log(std::max(counts(a, d), floor) / flat(d));
  return out;
}

SpectralSinogram transmission_correct(const SpectralSinogram& counts, const FlatEstimate& flat,
                                      std::optional<double> floor) {
  if (counts.kind() != SinogramKind::counts)
    throw std::invalid_argument("transmission_correct: expected a counts sinogram");
  if (counts.num_detectors() != flat.num_detectors() ||
      counts.num_channels() != flat.num_channels())
    throw std::invalid_argument("transmission_correct: counts and flat shapes differ");
  if (floor && !(*floor > 0.0))
    throw std::invalid_argument("transmission_correct: floor must be positive");

  const int p = counts.num_angles();
  const int r = counts.num_detectors();
  const int m = counts.num_channels();
  std::vector<double> floors(m);
  for (int k = 0; k < m; ++k) floors[k] = floor ? *floor : default_count_floor(flat, k);

  std::vector<double> out(counts.data().size());
  const auto& z = flat.values();
  for (int a = 0; a < p; ++a)
    for (int d = 0; d < r; ++d)
      for (int k = 0; k < m; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(a) * r + d) * m + k;
        out[idx] = -std::log(std::max(counts.data()[idx], floors[k]) / z(d, k));
      }
  return SpectralSinogram(p, r, m, SinogramKind::attenuation, std::move(out),
                          counts.channel_labels());
}

}  // namespace specring

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace specring {

/// Parallel-beam acquisition for a single detector row.
///
/// Detector spacing equals `pixel_size` and the detector array is centred on
/// the rotation axis, which passes through the centre of the square
/// `grid_side` x `grid_side` image grid.
struct ScanGeometry {
  int num_detectors{0};
  int num_angles{0};
  std::vector<double> angles_deg;
  int grid_side{0};
  double pixel_size{1.0};

  int num_pixels() const { return grid_side * grid_side; }

  /// Throws std::invalid_argument when a field breaks the invariants.
  void validate() const;
};

ScanGeometry make_geometry(int num_detectors, int num_angles, double start_deg,
                           double increment_deg, int grid_side,
                           double pixel_size = 1.0);

enum class SinogramKind { counts, attenuation };

const char* to_string(SinogramKind kind);
SinogramKind sinogram_kind_from_string(const std::string& s);

/// Per-channel measurements laid out as (angle, detector, channel), channel
/// fastest. Immutable after construction.
class SpectralSinogram {
 public:
  SpectralSinogram(int num_angles, int num_detectors, int num_channels,
                   SinogramKind kind, std::vector<double> data,
                   std::vector<std::string> channel_labels = {});

  /// Assembles a sinogram from m angle x detector slices.
  static SpectralSinogram from_channels(const std::vector<Eigen::MatrixXd>& channels,
                                        SinogramKind kind,
                                        std::vector<std::string> channel_labels = {});

  int num_angles() const { return angles_; }
  int num_detectors() const { return detectors_; }
  int num_channels() const { return channels_; }
  SinogramKind kind() const { return kind_; }
  const std::vector<double>& data() const { return data_; }
  const std::vector<std::string>& channel_labels() const { return labels_; }

  double at(int angle, int detector, int channel) const {
    return data_[(static_cast<std::size_t>(angle) * detectors_ + detector) * channels_ + channel];
  }

  /// num_angles x num_detectors slice of one channel.
  Eigen::MatrixXd channel(int k) const;

 private:
  int angles_;
  int detectors_;
  int channels_;
  SinogramKind kind_;
  std::vector<double> data_;
  std::vector<std::string> labels_;
};

/// Reconstructed attenuation, one column per channel. Pixel index is
/// row * grid_side + col.
class SpectralVolume {
 public:
  SpectralVolume(int grid_side, Eigen::MatrixXd data);

  int grid_side() const { return grid_side_; }
  int num_pixels() const { return static_cast<int>(data_.rows()); }
  int num_channels() const { return static_cast<int>(data_.cols()); }
  const Eigen::MatrixXd& data() const { return data_; }

  Eigen::VectorXd pixels(int k) const { return data_.col(k); }
  /// grid_side x grid_side image of channel k, indexed (row, col).
  Eigen::MatrixXd image(int k) const;

 private:
  int grid_side_;
  Eigen::MatrixXd data_;
};

/// Incident intensity per detector (rows) and channel (columns); every entry
/// strictly positive.
class FlatEstimate {
 public:
  explicit FlatEstimate(Eigen::MatrixXd values);

  int num_detectors() const { return static_cast<int>(values_.rows()); }
  int num_channels() const { return static_cast<int>(values_.cols()); }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
};

Eigen::MatrixXd pixels_to_image(const Eigen::VectorXd& pixels, int grid_side);
Eigen::VectorXd image_to_pixels(const Eigen::MatrixXd& image);

double median(std::vector<double> values);

/// 1e-6 times the median of flat column k.
double default_count_floor(const FlatEstimate& flat, int channel);

/// -ln(max(counts, floor) / flat) for one channel; `counts` is angle x detector.
Eigen::MatrixXd transmission_correct_channel(const Eigen::MatrixXd& counts,
                                             const Eigen::VectorXd& flat,
                                             double floor);

/// Converts counts to attenuation line integrals. Without an explicit floor
/// each channel uses default_count_floor.
SpectralSinogram transmission_correct(const SpectralSinogram& counts,
                                      const FlatEstimate& flat,
                                      std::optional<double> floor = std::nullopt);

}  // namespace specring

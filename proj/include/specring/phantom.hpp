#pragma once

#include "specring/core.hpp"
#include "specring/metrics.hpp"
#include "specring/projector.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace specring {

/// Disk in pixel units, centre measured from the grid centre (x right, y up).
struct Cylinder {
  double center_x{0.0};
  double center_y{0.0};
  double radius{0.0};
  int material{0};
};

struct PhantomSpec {
  int grid_side{0};
  std::vector<Cylinder> cylinders;
  /// One attenuation curve (per pixel length, one value per channel) per material.
  std::vector<Eigen::VectorXd> material_spectra;

  int num_channels() const;
  void validate() const;
};

/// Wavelengths in angstrom, evenly spaced over [1, 5].
std::vector<double> default_wavelengths(int num_channels);
std::vector<std::string> wavelength_labels(const std::vector<double>& wavelengths);

/// Six cylinders on a hexagon of radius grid_side/4 around an empty centre.
/// Five hold materials with smoothly decaying spectra and one step edge each
/// at distinct wavelengths; the sixth is empty.
PhantomSpec default_phantom_spec(int grid_side, int num_channels);

SpectralVolume make_phantom(const PhantomSpec& spec);

/// Signal ROI inside the first cylinder and background ROI at the empty centre.
std::pair<Roi, Roi> default_rois(int grid_side);

enum class GainMode { achromatic, spectral };
const char* to_string(GainMode mode);
GainMode gain_mode_from_string(const std::string& s);

/// Multiplicative detector response errors 1 + amplitude * eta, eta uniform
/// on [-1, 1], on round(fraction * r) randomly chosen detectors. Achromatic
/// errors share eta across channels; spectral errors draw eta per channel.
/// Unless `consistent`, the errors enter the flats only.
struct GainError {
  double fraction{0.0};
  double amplitude{0.0};
  GainMode mode{GainMode::spectral};
  bool consistent{false};
};

struct SimConfig {
  ScanGeometry geometry;
  int num_flats{8};
  Eigen::VectorXd flux_profile;
  Eigen::VectorXd spectrum;
  std::vector<std::string> channel_labels;
  GainError gain;
  /// Expected counts at unit intensity.
  double poisson_scale{1e4};
  bool noise{true};
  std::uint64_t seed{7};

  int num_channels() const { return static_cast<int>(spectrum.size()); }
  void validate() const;
};

Eigen::VectorXd default_flux_profile(int num_detectors);
Eigen::VectorXd default_spectrum(const std::vector<double>& wavelengths);

/// The ring scenario: r = 128, p = 90 at 2 degrees, m = 16, s = 8, 128^2
/// grid, 5% of detectors with 0.05 spectral gain errors in the flats, seed 7.
SimConfig default_sim_config();

/// Z* = g c^T
FlatEstimate make_true_flat(const SimConfig& cfg);

struct SimResult {
  SpectralSinogram counts;
  std::vector<Eigen::MatrixXd> flats;
  FlatEstimate true_flat;
  SpectralVolume phantom;
  /// Detector response applied to the flats and to the scan (r x m).
  Eigen::MatrixXd flat_gain;
  Eigen::MatrixXd scan_gain;
};

/// Random draws, in order: affected detectors (partial Fisher-Yates), eta
/// (detector-major, channel fastest for spectral errors), flats (flat,
/// detector, channel), scan (angle, detector, channel). Flat readings are
/// floored at one count so the stack stays positive.
SimResult simulate_measurements(const SpectralVolume& phantom, const SimConfig& cfg,
                                const SystemMatrix& a);
SimResult simulate_measurements(const SpectralVolume& phantom, const SimConfig& cfg);

}  // namespace specring

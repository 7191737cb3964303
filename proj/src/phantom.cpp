#include "specring/phantom.hpp"

#include "specring/random.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace specring {

int PhantomSpec::num_channels() const {
  return material_spectra.empty() ? 0 : static_cast<int>(material_spectra.front().size());
}

void PhantomSpec::validate() const {
  if (grid_side < 1) throw std::invalid_argument("phantom: grid_side must be positive");
  if (material_spectra.empty()) throw std::invalid_argument("phantom: no material spectra");
  const int m = num_channels();
  if (m < 1) throw std::invalid_argument("phantom: empty spectra");
  for (const auto& s : material_spectra) {
    if (s.size() != m) throw std::invalid_argument("phantom: spectra differ in length");
    if (!s.allFinite() || s.minCoeff() < 0.0)
      throw std::invalid_argument("phantom: spectra must be finite and nonnegative");
  }
  const double fov = 0.5 * grid_side;
  for (std::size_t i = 0; i < cylinders.size(); ++i) {
    const auto& c = cylinders[i];
    if (!(c.radius >= 0.0)) throw std::invalid_argument("phantom: negative radius");
    if (c.material < 0 || c.material >= static_cast<int>(material_spectra.size()))
      throw std::invalid_argument("phantom: unknown material");
    if (std::hypot(c.center_x, c.center_y) + c.radius > fov)
      throw std::invalid_argument("phantom: cylinder leaves the field of view");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = cylinders[j];
      if (std::hypot(c.center_x - o.center_x, c.center_y - o.center_y) < c.radius + o.radius)
        throw std::invalid_argument("phantom: cylinders overlap");
    }
  }
}

std::vector<double> default_wavelengths(int m) {
  if (m < 1) throw std::invalid_argument("wavelengths: need at least one channel");
  std::vector<double> out(m);
  for (int k = 0; k < m; ++k) out[k] = m == 1 ? 3.0 : 1.0 + 4.0 * k / (m - 1);
  return out;
}

std::vector<std::string> wavelength_labels(const std::vector<double>& wavelengths) {
  std::vector<std::string> out;
  char buf[32];
  for (double w : wavelengths) {
    std::snprintf(buf, sizeof buf, "%.3fA", w);
    out.emplace_back(buf);
  }
  return out;
}

PhantomSpec default_phantom_spec(int grid_side, int m) {
  PhantomSpec spec;
  spec.grid_side = grid_side;
  const auto lambda = default_wavelengths(m);
  const double amplitude[5] = {0.020, 0.035, 0.045, 0.030, 0.040};
  const double edge[5] = {2.0, 2.6, 3.2, 3.8, 4.4};
  const double scale = 128.0 / grid_side;
  for (int mat = 0; mat < 5; ++mat) {
    Eigen::VectorXd s(m);
    for (int k = 0; k < m; ++k) {
      const double smooth = 1.0 + 0.5 * std::exp(-(lambda[k] - 1.0) / 1.5);
      s(k) = scale * amplitude[mat] * smooth * (lambda[k] >= edge[mat] ? 0.65 : 1.0);
    }
    spec.material_spectra.push_back(s);
  }
  spec.material_spectra.push_back(Eigen::VectorXd::Zero(m));
  const double ring = 0.25 * grid_side;
  const double radius = 0.09 * grid_side;
  for (int i = 0; i < 6; ++i) {
    const double phi = i * std::numbers::pi / 3.0;
    spec.cylinders.push_back({ring * std::cos(phi), ring * std::sin(phi), radius, i});
  }
  return spec;
}

SpectralVolume make_phantom(const PhantomSpec& spec) {
  spec.validate();
  const int n = spec.grid_side;
  const int m = spec.num_channels();
  const double mid = 0.5 * (n - 1);
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * n, m);
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const double x = col - mid;
      const double y = mid - row;
      for (const auto& c : spec.cylinders) {
        const double dx = x - c.center_x;
        const double dy = y - c.center_y;
        if (dx * dx + dy * dy < c.radius * c.radius) {
          data.row(static_cast<Eigen::Index>(row) * n + col) =
              spec.material_spectra[c.material].transpose();
          break;
        }
      }
    }
  return SpectralVolume(n, std::move(data));
}

std::pair<Roi, Roi> default_rois(int n) {
  const int side = std::max(2, static_cast<int>(std::lround(0.08 * n)));
  const double mid = 0.5 * (n - 1);
  // First cylinder sits at x = n/4, y = 0.
  const int row = static_cast<int>(std::lround(mid - 0.5 * (side - 1)));
  const int col_signal = static_cast<int>(std::lround(mid + 0.25 * n - 0.5 * (side - 1)));
  Roi signal{row, col_signal, side, side};
  Roi background{row, row, side, side};
  return {signal, background};
}

const char* to_string(GainMode mode) { return mode == GainMode::spectral ? "spectral" : "achromatic"; }

GainMode gain_mode_from_string(const std::string& s) {
  if (s == "spectral") return GainMode::spectral;
  if (s == "achromatic") return GainMode::achromatic;
  throw std::invalid_argument("unknown gain mode: " + s);
}

void SimConfig::validate() const {
  geometry.validate();
  if (num_flats < 1) throw std::invalid_argument("sim: num_flats must be positive");
  if (flux_profile.size() != geometry.num_detectors)
    throw std::invalid_argument("sim: flux profile length must equal num_detectors");
  if (spectrum.size() < 1) throw std::invalid_argument("sim: empty spectrum");
  if (!flux_profile.allFinite() || !(flux_profile.minCoeff() > 0.0) || !spectrum.allFinite() ||
      !(spectrum.minCoeff() > 0.0))
    throw std::invalid_argument("sim: flux profile and spectrum must be positive");
  if (!channel_labels.empty() && static_cast<int>(channel_labels.size()) != num_channels())
    throw std::invalid_argument("sim: channel label count mismatch");
  if (!(gain.fraction >= 0.0 && gain.fraction <= 1.0))
    throw std::invalid_argument("sim: gain fraction must lie in [0, 1]");
  if (!(gain.amplitude >= 0.0 && gain.amplitude < 1.0))
    throw std::invalid_argument("sim: gain amplitude must lie in [0, 1)");
  if (!(poisson_scale > 0.0) || !std::isfinite(poisson_scale))
    throw std::invalid_argument("sim: poisson_scale must be positive");
}

Eigen::VectorXd default_flux_profile(int r) {
  Eigen::VectorXd g(r);
  for (int d = 0; d < r; ++d) {
    const double t = (d - 0.5 * (r - 1)) / (0.5 * r);
    g(d) = 0.4 + 0.6 * std::exp(-t * t / 0.5);
  }
  return g;
}

Eigen::VectorXd default_spectrum(const std::vector<double>& wavelengths) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(wavelengths.size()));
  for (std::size_t k = 0; k < wavelengths.size(); ++k) {
    const double l = wavelengths[k];
    c(static_cast<Eigen::Index>(k)) = 0.3 + (l / 2.0) * (l / 2.0) * std::exp(1.0 - (l / 2.0) * (l / 2.0));
  }
  return c;
}

SimConfig default_sim_config() {
  SimConfig cfg;
  cfg.geometry = make_geometry(128, 90, 0.0, 2.0, 128);
  cfg.num_flats = 8;
  const auto lambda = default_wavelengths(16);
  cfg.flux_profile = default_flux_profile(128);
  cfg.spectrum = default_spectrum(lambda);
  cfg.channel_labels = wavelength_labels(lambda);
  cfg.gain = {0.05, 0.05, GainMode::spectral, false};
  cfg.poisson_scale = 1e4;
  cfg.noise = true;
  cfg.seed = 7;
  return cfg;
}

FlatEstimate make_true_flat(const SimConfig& cfg) {
  if (cfg.flux_profile.size() < 1 || cfg.spectrum.size() < 1 ||
      !(cfg.flux_profile.minCoeff() > 0.0) || !(cfg.spectrum.minCoeff() > 0.0))
    throw std::invalid_argument("make_true_flat: curves must be nonempty and positive");
  return FlatEstimate(cfg.flux_profile * cfg.spectrum.transpose());
}

SimResult simulate_measurements(const SpectralVolume& phantom, const SimConfig& cfg) {
  cfg.validate();
  return simulate_measurements(phantom, cfg, build_system_matrix(cfg.geometry));
}

SimResult simulate_measurements(const SpectralVolume& phantom, const SimConfig& cfg,
                                const SystemMatrix& a) {
  cfg.validate();
  const auto& g = cfg.geometry;
  const int r = g.num_detectors;
  const int p = g.num_angles;
  const int m = cfg.num_channels();
  if (phantom.grid_side() != g.grid_side || phantom.num_channels() != m)
    throw std::invalid_argument("simulate: phantom does not match the configuration");
  if (a.geometry.num_detectors != r || a.geometry.num_angles != p ||
      a.geometry.grid_side != g.grid_side)
    throw std::invalid_argument("simulate: system matrix does not match the geometry");

  Rng rng(cfg.seed);
  const FlatEstimate truth = make_true_flat(cfg);
  const Eigen::MatrixXd& z = truth.values();

  Eigen::MatrixXd gain = Eigen::MatrixXd::Ones(r, m);
  const int affected = static_cast<int>(std::lround(cfg.gain.fraction * r));
  std::vector<int> detectors(r);
  std::iota(detectors.begin(), detectors.end(), 0);
  for (int i = 0; i < affected; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(r - i)));
    std::swap(detectors[i], detectors[j]);
  }
  std::vector<int> chosen(detectors.begin(), detectors.begin() + affected);
  std::sort(chosen.begin(), chosen.end());
  for (int d : chosen) {
    if (cfg.gain.mode == GainMode::achromatic) {
      gain.row(d).setConstant(1.0 + cfg.gain.amplitude * rng.uniform(-1.0, 1.0));
    } else {
      for (int k = 0; k < m; ++k) gain(d, k) = 1.0 + cfg.gain.amplitude * rng.uniform(-1.0, 1.0);
    }
  }
  const Eigen::MatrixXd scan_gain = cfg.gain.consistent ? gain : Eigen::MatrixXd::Ones(r, m);

  auto sample = [&](double expected) {
    if (!cfg.noise) return expected;
    return rng.poisson(cfg.poisson_scale * expected) / cfg.poisson_scale;
  };

  std::vector<Eigen::MatrixXd> flats;
  for (int j = 0; j < cfg.num_flats; ++j) {
    Eigen::MatrixXd f(r, m);
    for (int d = 0; d < r; ++d)
      for (int k = 0; k < m; ++k)
        f(d, k) = std::max(sample(gain(d, k) * z(d, k)), 1.0 / cfg.poisson_scale);
    flats.push_back(std::move(f));
  }

  std::vector<Eigen::MatrixXd> line_integrals;
  line_integrals.reserve(m);
  for (int k = 0; k < m; ++k) line_integrals.push_back(forward_project(a, phantom.pixels(k)));

  std::vector<double> counts(static_cast<std::size_t>(p) * r * m);
  std::size_t idx = 0;
  for (int i = 0; i < p; ++i)
    for (int d = 0; d < r; ++d)
      for (int k = 0; k < m; ++k)
        counts[idx++] = sample(scan_gain(d, k) * z(d, k) * std::exp(-line_integrals[k](i, d)));

  return SimResult{SpectralSinogram(p, r, m, SinogramKind::counts, std::move(counts), cfg.channel_labels),
                   std::move(flats), truth, phantom, gain, scan_gain};
}

}  // namespace specring

#include "specring/recon.hpp"

#include <unsupported/Eigen/FFT>

#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace specring {

namespace {

int padded_fft_length(int detectors) {
  int len = 64;
  while (len < 2 * detectors) len *= 2;
  return len;
}

}  // namespace

Eigen::VectorXd fbp_filter_response(int padded, double tau, FbpFilter filter) {
  if (padded < 2 || (padded & (padded - 1)) != 0)
    throw std::invalid_argument("fbp: padded length must be a power of two");
  // Band-limited ramp kernel sampled at spacing tau.
  std::vector<std::complex<double>> kernel(padded, 0.0), response;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  kernel[0] = 1.0 / (4.0 * tau * tau);
  for (int n = 1; n < padded / 2; ++n) {
    if (n % 2 == 1) {
      const double v = -1.0 / (n * n * pi2 * tau * tau);
      kernel[n] = v;
      kernel[padded - n] = v;
    }
  }
  Eigen::FFT<double> fft;
  fft.fwd(response, kernel);

  Eigen::VectorXd out(padded);
  for (int j = 0; j < padded; ++j) {
    double value = 2.0 * tau * response[j].real();
    if (filter == FbpFilter::hann) {
      const int f = j <= padded / 2 ? j : padded - j;
      const double omega = 2.0 * std::numbers::pi * f / padded;
      value *= 0.5 * (1.0 + std::cos(omega));
    }
    out(j) = value;
  }
  return out;
}

Eigen::MatrixXd filter_projections(const Eigen::MatrixXd& sino, double tau, FbpFilter filter) {
  const int r = static_cast<int>(sino.cols());
  const int padded = padded_fft_length(r);
  const Eigen::VectorXd response = fbp_filter_response(padded, tau, filter);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> line(padded), freq(padded);
  Eigen::MatrixXd out(sino.rows(), sino.cols());
  for (Eigen::Index a = 0; a < sino.rows(); ++a) {
    std::fill(line.begin(), line.end(), 0.0);
    for (int d = 0; d < r; ++d) line[d] = sino(a, d);
    fft.fwd(freq, line);
    for (int j = 0; j < padded; ++j) freq[j] *= response(j);
    fft.inv(line, freq);
    for (int d = 0; d < r; ++d) out(a, d) = line[d].real();
  }
  return out;
}

Eigen::VectorXd fbp(const Eigen::MatrixXd& sino, const SystemMatrix& a, FbpFilter filter) {
  const auto& g = a.geometry;
  if (sino.rows() != g.num_angles || sino.cols() != g.num_detectors)
    throw std::invalid_argument("fbp: sinogram shape does not match geometry");
  if (!sino.allFinite()) throw std::invalid_argument("fbp: non-finite sinogram");
  const Eigen::MatrixXd filtered = filter_projections(sino, g.pixel_size, filter);
  const double scale = std::numbers::pi / (2.0 * g.num_angles * g.pixel_size);
  return scale * back_project(a, filtered);
}

Eigen::VectorXd fbp(const Eigen::MatrixXd& sino, const ScanGeometry& geom, FbpFilter filter) {
  return fbp(sino, build_system_matrix(geom), filter);
}

void TvConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("tv: lambda must be positive");
  if (max_iter < 1) throw std::invalid_argument("tv: max_iter must be positive");
  if (!(tv_smoothing_eps > 0.0)) throw std::invalid_argument("tv: smoothing eps must be positive");
  if (!(step_tolerance >= 0.0)) throw std::invalid_argument("tv: step tolerance must be nonnegative");
}

WlsTvObjective::WlsTvObjective(const SystemMatrix& a, const Eigen::MatrixXd& sino,
                               const Eigen::MatrixXd& weights, double lambda, double eps)
    : a_(a), lambda_(lambda), eps_(eps) {
  const auto& g = a.geometry;
  if (sino.rows() != g.num_angles || sino.cols() != g.num_detectors ||
      weights.rows() != sino.rows() || weights.cols() != sino.cols())
    throw std::invalid_argument("wls_tv: sinogram or weight shape mismatch");
  if (!sino.allFinite() || !weights.allFinite())
    throw std::invalid_argument("wls_tv: non-finite input");
  if (weights.minCoeff() < 0.0) throw std::invalid_argument("wls_tv: negative weight");
  if (!(lambda >= 0.0) || !(eps > 0.0))
    throw std::invalid_argument("wls_tv: lambda must be nonnegative and eps positive");
  const int p = g.num_angles;
  const int r = g.num_detectors;
  b_.resize(static_cast<Eigen::Index>(p) * r);
  w_.resize(b_.size());
  for (int i = 0; i < p; ++i)
    for (int d = 0; d < r; ++d) {
      b_(static_cast<Eigen::Index>(i) * r + d) = sino(i, d);
      w_(static_cast<Eigen::Index>(i) * r + d) = weights(i, d);
    }
}

double WlsTvObjective::data_term(const Eigen::VectorXd& residual) const {
  return 0.5 * residual.cwiseProduct(residual).dot(w_);
}

double WlsTvObjective::tv_term(const Eigen::VectorXd& x) const {
  const int n = grid_side();
  const double eps2 = eps_ * eps_;
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Index p = static_cast<Eigen::Index>(i) * n + j;
      const double gx = j + 1 < n ? x(p + 1) - x(p) : 0.0;
      const double gy = i + 1 < n ? x(p + n) - x(p) : 0.0;
      total += std::sqrt(gx * gx + gy * gy + eps2);
    }
  return lambda_ * total;
}

void WlsTvObjective::add_tv_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  const int n = grid_side();
  const double eps2 = eps_ * eps_;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Index p = static_cast<Eigen::Index>(i) * n + j;
      const double gx = j + 1 < n ? x(p + 1) - x(p) : 0.0;
      const double gy = i + 1 < n ? x(p + n) - x(p) : 0.0;
      const double psi = std::sqrt(gx * gx + gy * gy + eps2);
      const double wx = lambda_ * gx / psi;
      const double wy = lambda_ * gy / psi;
      if (j + 1 < n) {
        grad(p + 1) += wx;
        grad(p) -= wx;
      }
      if (i + 1 < n) {
        grad(p + n) += wy;
        grad(p) -= wy;
      }
    }
}

double WlsTvObjective::value(const Eigen::VectorXd& x) const {
  return data_term(a_.matrix * x - b_) + tv_term(x);
}

double WlsTvObjective::value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  const Eigen::VectorXd residual = a_.matrix * x - b_;
  grad = a_.matrix.transpose() * residual.cwiseProduct(w_);
  add_tv_gradient(x, grad);
  return data_term(residual) + tv_term(x);
}

double WlsTvObjective::data_lipschitz(int iterations) const {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a_.matrix.cols()).normalized();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd av = a_.matrix * v;
    const Eigen::VectorXd next = a_.matrix.transpose() * av.cwiseProduct(w_);
    estimate = next.norm();
    if (estimate == 0.0) return 0.0;
    v = next / estimate;
  }
  return estimate;
}

TvResult wls_tv(const Eigen::MatrixXd& sino, const Eigen::MatrixXd& weights, const SystemMatrix& a,
                const TvConfig& cfg) {
  cfg.validate();
  const WlsTvObjective obj(a, sino, weights, cfg.lambda, cfg.tv_smoothing_eps);
  const auto& mat = obj.matrix();

  // Power iteration can underestimate slightly; the line search absorbs it.
  const double lipschitz = obj.data_lipschitz();
  const double base_step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 100;

  TvResult out;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(mat.cols());
  Eigen::VectorXd residual = -obj.rhs();
  Eigen::VectorXd grad;
  double phi = obj.value_and_gradient(x, grad);
  out.objective.push_back(phi);

  Eigen::VectorXd prev_x, prev_grad;
  for (int it = 0; it < cfg.max_iter; ++it) {
    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 == 0.0) {
      out.converged = true;
      break;
    }

    double step = base_step;
    if (it > 0) {
      const Eigen::VectorXd s = x - prev_x;
      const double sy = s.dot(grad - prev_grad);
      if (sy > 0.0) step = std::min(s.squaredNorm() / sy, 1e6 * base_step);
    }

    const Eigen::VectorXd ag = mat * grad;
    bool accepted = false;
    double next_phi = phi;
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      const Eigen::VectorXd trial_res = residual - step * ag;
      next_phi = obj.data_term(trial_res) + obj.tv_term(x - step * grad);
      if (next_phi <= phi - kArmijo * step * gnorm2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.converged = true;
      break;
    }

    prev_x = x;
    prev_grad = grad;
    x -= step * grad;
    residual = mat * x - obj.rhs();
    phi = obj.value_and_gradient(x, grad);
    out.objective.push_back(phi);
    out.iterations = it + 1;

    const double rel_step = (x - prev_x).norm() / std::max(x.norm(), std::numeric_limits<double>::min());
    if (rel_step < cfg.step_tolerance) {
      out.converged = true;
      break;
    }
  }
  out.pixels = std::move(x);
  return out;
}

const char* to_string(ReconMethod m) { return m == ReconMethod::fbp ? "fbp" : "tv"; }

const char* to_string(RingFilter f) {
  switch (f) {
    case RingFilter::none: return "none";
    case RingFilter::wf: return "wf";
    case RingFilter::sortsmooth: return "sortsmooth";
  }
  return "none";
}

const char* to_string(FbpFilter f) { return f == FbpFilter::ramp ? "ramp" : "hann"; }

ReconMethod recon_method_from_string(const std::string& s) {
  if (s == "fbp") return ReconMethod::fbp;
  if (s == "tv" || s == "wls_tv") return ReconMethod::wls_tv;
  throw std::invalid_argument("unknown reconstruction method: " + s);
}

RingFilter ring_filter_from_string(const std::string& s) {
  if (s == "none") return RingFilter::none;
  if (s == "wf") return RingFilter::wf;
  if (s == "sortsmooth") return RingFilter::sortsmooth;
  throw std::invalid_argument("unknown ring filter: " + s);
}

FbpFilter fbp_filter_from_string(const std::string& s) {
  if (s == "ramp") return FbpFilter::ramp;
  if (s == "hann") return FbpFilter::hann;
  throw std::invalid_argument("unknown fbp filter: " + s);
}

Eigen::VectorXd reconstruct_channel(const Eigen::MatrixXd& counts, const Eigen::VectorXd& flat,
                                    double floor, const SystemMatrix& a, const ReconOptions& opts) {
  Eigen::MatrixXd sino = transmission_correct_channel(counts, flat, floor);
  switch (opts.ring_filter) {
    case RingFilter::none: break;
    case RingFilter::wf: sino = wf_destripe(sino, opts.wf); break;
    case RingFilter::sortsmooth: sino = sort_smooth_destripe(sino, opts.sort_smooth); break;
  }
  if (opts.method == ReconMethod::fbp) return fbp(sino, a, opts.filter);
  const Eigen::MatrixXd weights = counts.cwiseMax(floor);
  return wls_tv(sino, weights, a, opts.tv).pixels;
}

SpectralVolume reconstruct_channels(const SpectralSinogram& counts, const FlatEstimate& flat,
                                    const SystemMatrix& a, const ReconOptions& opts) {
  if (counts.kind() != SinogramKind::counts)
    throw std::invalid_argument("reconstruct_channels: expected a counts sinogram");
  if (counts.num_detectors() != flat.num_detectors() || counts.num_channels() != flat.num_channels())
    throw std::invalid_argument("reconstruct_channels: counts and flat shapes differ");
  if (counts.num_angles() != a.geometry.num_angles ||
      counts.num_detectors() != a.geometry.num_detectors)
    throw std::invalid_argument("reconstruct_channels: counts do not match the system geometry");
  if (opts.method == ReconMethod::wls_tv) opts.tv.validate();
  if (opts.count_floor && !(*opts.count_floor > 0.0))
    throw std::invalid_argument("reconstruct_channels: count floor must be positive");
  if (opts.ring_filter == RingFilter::wf) opts.wf.validate(counts.num_angles());
  if (opts.ring_filter == RingFilter::sortsmooth) opts.sort_smooth.validate(counts.num_detectors());

  const int m = counts.num_channels();
  Eigen::MatrixXd out(a.geometry.num_pixels(), m);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (int k = next++; k < m; k = next++) {
      try {
        const double floor = opts.count_floor ? *opts.count_floor : default_count_floor(flat, k);
        out.col(k) = reconstruct_channel(counts.channel(k), flat.values().col(k), floor, a, opts);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const int threads = std::clamp(opts.threads, 1, m);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return SpectralVolume(a.geometry.grid_side, std::move(out));
}

}  // namespace specring

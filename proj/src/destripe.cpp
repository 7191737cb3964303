#include "specring/destripe.hpp"

#include "specring/wavelet.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace specring {

void WfParams::validate(int num_angles) const {
  if (levels < 1) throw std::invalid_argument("wf_destripe: levels must be positive");
  if (!(damping_sigma > 0.0) || !std::isfinite(damping_sigma))
    throw std::invalid_argument("wf_destripe: damping_sigma must be positive");
  if (levels >= 31 || (1 << levels) > num_angles)
    throw std::invalid_argument("wf_destripe: levels exceed log2(num_angles)");
}

void SortSmoothParams::validate(int num_detectors) const {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("sort_smooth_destripe: window must be odd and >= 3");
  if (window > num_detectors)
    throw std::invalid_argument("sort_smooth_destripe: window exceeds detector count");
}

namespace {

// Half-sample symmetric index into [0, n).
Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  Eigen::Index m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Eigen::Index padded_length(Eigen::Index n, int levels) {
  constexpr Eigen::Index kMargin = 32;
  const Eigen::Index want = std::max<Eigen::Index>(n + 2 * std::min(n, kMargin), Eigen::Index{1} << levels);
  Eigen::Index len = 1;
  while (len < want) len *= 2;
  return len;
}

// Removes the zero and low angular frequencies from each column of `band`.
void damp_angular_frequencies(Eigen::MatrixXd& band, double sigma) {
  const Eigen::Index n = band.rows();
  std::vector<double> gain(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double u = static_cast<double>(j <= n / 2 ? j : j - n);
    gain[j] = 1.0 - std::exp(-u * u / (2.0 * sigma * sigma));
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time(n), freq(n);
  for (Eigen::Index c = 0; c < band.cols(); ++c) {
    for (Eigen::Index j = 0; j < n; ++j) time[j] = band(j, c);
    fft.fwd(freq, time);
    for (Eigen::Index j = 0; j < n; ++j) freq[j] *= gain[j];
    fft.inv(time, freq);
    for (Eigen::Index j = 0; j < n; ++j) band(j, c) = time[j].real();
  }
}

std::vector<double> smooth_line(const std::vector<double>& line, int window, Smoother smoother) {
  const auto n = static_cast<Eigen::Index>(line.size());
  const int half = window / 2;
  std::vector<double> out(line.size()), buf(window);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int t = -half; t <= half; ++t) buf[t + half] = line[reflect(j + t, n)];
    if (smoother == Smoother::median) {
      std::nth_element(buf.begin(), buf.begin() + half, buf.end());
      out[j] = buf[half];
    } else {
      out[j] = std::accumulate(buf.begin(), buf.end(), 0.0) / window;
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd wf_destripe(const Eigen::MatrixXd& sino, const WfParams& params) {
  params.validate(static_cast<int>(sino.rows()));
  if (!sino.allFinite()) throw std::invalid_argument("wf_destripe: non-finite input");

  const Eigen::Index p = sino.rows();
  const Eigen::Index r = sino.cols();
  const Eigen::Index rows = padded_length(p, params.levels);
  const Eigen::Index cols = padded_length(r, params.levels);
  const Eigen::Index top = (rows - p) / 2;
  const Eigen::Index left = (cols - r) / 2;

  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = sino(reflect(i - top, p), reflect(j - left, r));

  const auto h = wavelet::db5_lowpass();
  std::vector<wavelet::Bands2d> pyramid;
  for (int lev = 0; lev < params.levels; ++lev) {
    wavelet::Bands2d bands = wavelet::analyse_2d(x, h);
    damp_angular_frequencies(bands.low_high, params.damping_sigma);
    x = std::move(bands.low_low);
    pyramid.push_back(std::move(bands));
  }
  for (auto it = pyramid.rbegin(); it != pyramid.rend(); ++it) {
    it->low_low = std::move(x);
    x = wavelet::synthesise_2d(*it, h);
  }
  return x.block(top, left, p, r);
}

Eigen::MatrixXd sort_smooth_destripe(const Eigen::MatrixXd& sino, const SortSmoothParams& params) {
  params.validate(static_cast<int>(sino.cols()));
  if (!sino.allFinite()) throw std::invalid_argument("sort_smooth_destripe: non-finite input");

  const Eigen::Index p = sino.rows();
  const Eigen::Index r = sino.cols();
  std::vector<std::vector<Eigen::Index>> order(r, std::vector<Eigen::Index>(p));
  Eigen::MatrixXd sorted(p, r);
  for (Eigen::Index d = 0; d < r; ++d) {
    auto& idx = order[d];
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return sino(a, d) < sino(b, d); });
    for (Eigen::Index i = 0; i < p; ++i) sorted(i, d) = sino(idx[i], d);
  }

  Eigen::MatrixXd out(p, r);
  std::vector<double> line(r);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index d = 0; d < r; ++d) line[d] = sorted(i, d);
    const auto smoothed = smooth_line(line, params.window, params.smoother);
    for (Eigen::Index d = 0; d < r; ++d) out(order[d][i], d) = smoothed[d];
  }
  return out;
}

}  // namespace specring

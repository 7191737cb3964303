#include "specring/wavelet.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace specring::wavelet {

namespace {

constexpr std::array<double, 10> kDb5 = {
    0.16010239797419291448, 0.60382926979718967054, 0.72430852843777292773,
    0.13842814590132073151, -0.24229488706638203186, -0.032244869584638374648,
    0.077571493840045713523, -0.0062414902127982742742, -0.012580751999081999469,
    0.003335725285473771278,
};

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace

std::span<const double> db5_lowpass() { return kDb5; }

std::vector<double> highpass_from_lowpass(std::span<const double> lowpass) {
  const std::size_t len = lowpass.size();
  std::vector<double> g(len);
  for (std::size_t n = 0; n < len; ++n)
    g[n] = (n % 2 == 0 ? 1.0 : -1.0) * lowpass[len - 1 - n];
  return g;
}

void analyse(std::span<const double> signal, std::span<const double> lowpass,
             std::span<double> approx, std::span<double> detail) {
  const std::size_t n = signal.size();
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("wavelet: signal length must be even");
  if (approx.size() != n / 2 || detail.size() != n / 2)
    throw std::invalid_argument("wavelet: band length must be half the signal length");
  const auto highpass = highpass_from_lowpass(lowpass);
  for (std::size_t k = 0; k < n / 2; ++k) {
    double a = 0.0;
    double d = 0.0;
    for (std::size_t t = 0; t < lowpass.size(); ++t) {
      const double x = signal[wrap(static_cast<std::ptrdiff_t>(2 * k + t), n)];
      a += lowpass[t] * x;
      d += highpass[t] * x;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

void synthesise(std::span<const double> approx, std::span<const double> detail,
                std::span<const double> lowpass, std::span<double> signal) {
  const std::size_t n = signal.size();
  if (approx.size() != n / 2 || detail.size() != n / 2 || n % 2 != 0)
    throw std::invalid_argument("wavelet: band length must be half the signal length");
  const auto highpass = highpass_from_lowpass(lowpass);
  std::fill(signal.begin(), signal.end(), 0.0);
  for (std::size_t k = 0; k < n / 2; ++k)
    for (std::size_t t = 0; t < lowpass.size(); ++t) {
      const std::size_t j = wrap(static_cast<std::ptrdiff_t>(2 * k + t), n);
      signal[j] += lowpass[t] * approx[k] + highpass[t] * detail[k];
    }
}

namespace {

// Applies `analyse` to every row; returns (low, high) halves.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> analyse_rows(const Eigen::MatrixXd& x,
                                                         std::span<const double> h) {
  const auto half = x.cols() / 2;
  Eigen::MatrixXd lo(x.rows(), half), hi(x.rows(), half);
  std::vector<double> in(x.cols()), a(half), d(half);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) in[j] = x(i, j);
    analyse(in, h, a, d);
    for (Eigen::Index j = 0; j < half; ++j) {
      lo(i, j) = a[j];
      hi(i, j) = d[j];
    }
  }
  return {lo, hi};
}

Eigen::MatrixXd synthesise_rows(const Eigen::MatrixXd& lo, const Eigen::MatrixXd& hi,
                                std::span<const double> h) {
  const auto half = lo.cols();
  Eigen::MatrixXd out(lo.rows(), 2 * half);
  std::vector<double> a(half), d(half), sig(2 * half);
  for (Eigen::Index i = 0; i < lo.rows(); ++i) {
    for (Eigen::Index j = 0; j < half; ++j) {
      a[j] = lo(i, j);
      d[j] = hi(i, j);
    }
    synthesise(a, d, h, sig);
    for (Eigen::Index j = 0; j < 2 * half; ++j) out(i, j) = sig[j];
  }
  return out;
}

}  // namespace

Bands2d analyse_2d(const Eigen::MatrixXd& image, std::span<const double> lowpass) {
  if (image.rows() % 2 != 0 || image.cols() % 2 != 0)
    throw std::invalid_argument("wavelet: 2-D input needs even dimensions");
  auto [col_lo, col_hi] = analyse_rows(image, lowpass);
  auto [ll_t, hl_t] = analyse_rows(col_lo.transpose(), lowpass);
  auto [lh_t, hh_t] = analyse_rows(col_hi.transpose(), lowpass);
  return Bands2d{ll_t.transpose(), lh_t.transpose(), hl_t.transpose(), hh_t.transpose()};
}

Eigen::MatrixXd synthesise_2d(const Bands2d& b, std::span<const double> lowpass) {
  const Eigen::MatrixXd col_lo =
      synthesise_rows(b.low_low.transpose(), b.high_low.transpose(), lowpass).transpose();
  const Eigen::MatrixXd col_hi =
      synthesise_rows(b.low_high.transpose(), b.high_high.transpose(), lowpass).transpose();
  return synthesise_rows(col_lo, col_hi, lowpass);
}

}  // namespace specring::wavelet

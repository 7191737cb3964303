#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace specring::wavelet {

/// Daubechies scaling filter with 5 vanishing moments (10 taps), sum sqrt(2).
std::span<const double> db5_lowpass();

/// Quadrature mirror of a lowpass filter: g[n] = (-1)^n h[L-1-n].
std::vector<double> highpass_from_lowpass(std::span<const double> lowpass);

/// One level of the periodised orthogonal DWT of an even-length signal.
void analyse(std::span<const double> signal, std::span<const double> lowpass,
             std::span<double> approx, std::span<double> detail);

/// Exact inverse (adjoint) of analyse.
void synthesise(std::span<const double> approx, std::span<const double> detail,
                std::span<const double> lowpass, std::span<double> signal);

/// One 2-D level split into four half-size bands. Rows and columns are
/// transformed separately; the first letter names the filter along rows
/// (vertical axis), the second along columns.
struct Bands2d {
  Eigen::MatrixXd low_low;
  Eigen::MatrixXd low_high;  // lowpass vertically, highpass horizontally
  Eigen::MatrixXd high_low;
  Eigen::MatrixXd high_high;
};

Bands2d analyse_2d(const Eigen::MatrixXd& image, std::span<const double> lowpass);
Eigen::MatrixXd synthesise_2d(const Bands2d& bands, std::span<const double> lowpass);

}  // namespace specring::wavelet

#include "helpers.hpp"

#include "specring/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace specring;

namespace {

std::vector<double> region(const Eigen::MatrixXd& img, const Roi& r) {
  std::vector<double> v;
  for (int i = r.row0; i < r.row0 + r.height; ++i)
    for (int j = r.col0; j < r.col0 + r.width; ++j) v.push_back(img(i, j));
  return v;
}

double loop_cnr(const Eigen::MatrixXd& img, const Roi& s, const Roi& b) {
  auto stats = [](const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::pair{mu, ss / (v.size() - 1)};
  };
  const auto [ms, vs] = stats(region(img, s));
  const auto [mb, vb] = stats(region(img, b));
  return std::abs(ms - mb) / std::sqrt(vs + vb);
}

double loop_rd(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    num += (x(i) - y(i)) * (x(i) - y(i));
    den += y(i) * y(i);
  }
  return std::sqrt(num / den);
}

// Bins kept in a flat array, annulus membership decided by interval tests.
double loop_ring_energy(const Eigen::MatrixXd& img, double cr, double cc, int n) {
  const double radius =
      std::min({cr + 0.5, img.rows() - 0.5 - cr, cc + 0.5, img.cols() - 0.5 - cc});
  const int nbins = static_cast<int>(std::ceil(radius)) + 1;
  std::vector<double> sum(nbins, 0.0);
  std::vector<int> cnt(nbins, 0);
  for (int i = 0; i < img.rows(); ++i)
    for (int j = 0; j < img.cols(); ++j) {
      const double rho = std::sqrt((i - cr) * (i - cr) + (j - cc) * (j - cc));
      if (rho < radius) {
        sum[static_cast<int>(rho)] += img(i, j);
        cnt[static_cast<int>(rho)] += 1;
      }
    }
  const double width = radius / n;
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    std::vector<double> means;
    for (int b = 0; b < nbins; ++b) {
      if (cnt[b] == 0) continue;
      const bool inside = b >= a * width && (a == n - 1 || b < (a + 1) * width);
      if (inside) means.push_back(sum[b] / cnt[b]);
    }
    if (means.size() < 2) continue;
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= means.size();
    double v = 0.0;
    for (double m : means) v += (m - mu) * (m - mu);
    total += v / means.size();
  }
  return total;
}

SpectralVolume volume_from(const std::vector<Eigen::VectorXd>& cols, int side) {
  Eigen::MatrixXd data(side * side, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) data.col(k) = cols[k];
  return SpectralVolume(side, data);
}

// Channel k of the FBP volume differs from the LR volume by a relative amount v[k].
std::pair<SpectralVolume, SpectralVolume> volumes_with_rd(const std::vector<double>& v,
                                                          std::mt19937_64& gen) {
  std::vector<Eigen::VectorXd> fbp, lr;
  const Eigen::VectorXd base = testing::random_matrix(16, 1, gen, 0.5, 1.5);
  for (double target : v) {
    fbp.push_back((1.0 + target) * base);
    lr.push_back(base);
  }
  return {volume_from(fbp, 4), volume_from(lr, 4)};
}

}  // namespace

TEST_CASE("cnr hand fixtures") {
  Eigen::MatrixXd img(1, 6);
  img << 0, 1, 2, 2, 2, 2;
  CHECK(cnr(img, {0, 0, 1, 3}, {0, 3, 1, 3}) == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::MatrixXd sq(2, 4);
  sq << 0, 2, 2, 2, 0, 2, 2, 2;
  // Signal {0, 2, 0, 2}: mean 1, sample variance 4/3; background constant 2.
  CHECK(cnr(sq, {0, 0, 2, 2}, {0, 2, 2, 2}) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("cnr degenerate and invalid regions") {
  Eigen::MatrixXd img = Eigen::MatrixXd::Constant(4, 4, 3.0);
  CHECK(cnr(img, {0, 0, 2, 2}, {2, 2, 2, 2}) == 0.0);
  img.block(0, 0, 2, 2).setConstant(5.0);
  CHECK_THROWS_AS(cnr(img, {0, 0, 2, 2}, {2, 2, 2, 2}), std::domain_error);
  CHECK_THROWS_AS(cnr(img, {0, 0, 2, 2}, {1, 1, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(cnr(img, {0, 0, 1, 1}, {2, 2, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(cnr(img, {3, 3, 2, 2}, {0, 0, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(cnr(img, {-1, 0, 2, 2}, {2, 2, 2, 2}), std::invalid_argument);
}

TEST_CASE("cnr matches a scalar oracle and is affine invariant") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> coef(-5.0, 5.0);
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd img = testing::random_matrix(12, 12, gen);
    const Roi s{1, 1, 4, 5}, b{7, 6, 4, 4};
    const double ref = cnr(img, s, b);
    CHECK(ref == doctest::Approx(loop_cnr(img, s, b)).epsilon(1e-12));
    double alpha = coef(gen);
    if (std::abs(alpha) < 0.1) alpha = 0.1;
    const Eigen::MatrixXd moved = (alpha * img).array() + coef(gen);
    CHECK(cnr(moved, s, b) == doctest::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("rd examples and properties") {
  Eigen::VectorXd x(3);
  x << 1, 2, 2;
  CHECK(rd(x, x) == 0.0);
  CHECK(rd(2.0 * x, x) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rd(Eigen::VectorXd::Zero(3), x) == doctest::Approx(1.0).epsilon(1e-15));
  Eigen::VectorXd y(3);
  y << 1, 2, 5;
  CHECK(rd(y, x) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(rd(x, Eigen::VectorXd::Zero(3)), std::domain_error);
  CHECK_THROWS_AS(rd(x, Eigen::VectorXd::Ones(2)), std::invalid_argument);

  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd a = testing::random_matrix(50, 1, gen);
    const Eigen::VectorXd b = testing::random_matrix(50, 1, gen);
    const double c = scale(gen);
    CHECK(rd(a, b) == doctest::Approx(loop_rd(a, b)).epsilon(1e-12));
    CHECK(rd(c * a, c * b) == doctest::Approx(rd(a, b)).epsilon(1e-12));
    CHECK(rd(a, b) >= 0.0);
  }
}

TEST_CASE("channel selection by rd") {
  std::mt19937_64 gen(12);
  {
    const auto [f, l] = volumes_with_rd({0.1, 0.5, 0.9}, gen);
    const auto sel = select_channels_by_rd(f, l);
    CHECK(sel.k_min == 0);
    CHECK(sel.k_median == 1);
    CHECK(sel.k_max == 2);
    const Eigen::VectorXd prof = rd_profile(f, l);
    CHECK(prof(0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(prof(2) == doctest::Approx(0.9).epsilon(1e-12));
  }
  {
    const auto [f, l] = volumes_with_rd({0.3}, gen);
    const auto sel = select_channels_by_rd(f, l);
    CHECK(sel.k_min == 0);
    CHECK(sel.k_median == 0);
    CHECK(sel.k_max == 0);
  }
  {
    // Sorted order 2, 0, 1, 3; the second order statistic is channel 0.
    const auto [f, l] = volumes_with_rd({0.5, 0.5, 0.2, 0.9}, gen);
    const auto sel = select_channels_by_rd(f, l);
    CHECK(sel.k_min == 2);
    CHECK(sel.k_median == 0);
    CHECK(sel.k_max == 3);
  }
  {
    const auto [f, l] = volumes_with_rd({0.9, 0.1, 0.9, 0.1}, gen);
    const auto sel = select_channels_by_rd(f, l);
    CHECK(sel.k_min == 1);
    CHECK(sel.k_max == 0);
  }
  {
    const std::vector<double> v{0.7, 0.2, 0.4, 0.8, 0.1};
    const auto [f, l] = volumes_with_rd(v, gen);
    const auto base = select_channels_by_rd(f, l);
    CHECK(base.k_min == 4);
    CHECK(base.k_median == 2);
    CHECK(base.k_max == 3);
    for (double c : {1e-3, 7.5, 1e4}) {
      const auto sel = select_channels_by_rd(SpectralVolume(4, c * f.data()), SpectralVolume(4, c * l.data()));
      CHECK(sel.k_min == base.k_min);
      CHECK(sel.k_median == base.k_median);
      CHECK(sel.k_max == base.k_max);
    }
  }
  const auto [f, l] = volumes_with_rd({0.1, 0.2}, gen);
  const auto [g, m] = volumes_with_rd({0.1, 0.2, 0.3}, gen);
  CHECK_THROWS_AS(select_channels_by_rd(f, m), std::invalid_argument);
}

TEST_CASE("ring energy of flat and ringed images") {
  const int n = 64;
  const double c = 0.5 * (n - 1);
  Eigen::MatrixXd img = Eigen::MatrixXd::Constant(n, n, 2.5);
  CHECK(ring_energy(img, c, c, 16) == 0.0);

  Eigen::MatrixXd ringed = img;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double rho = std::hypot(i - c, j - c);
      if (rho >= 17.0 && rho < 18.0) ringed(i, j) += 0.3;
    }
  const double e = ring_energy(ringed, c, c, 16);
  CHECK(e > 1e-3);
  CHECK(ring_energy(ringed - (ringed - img), c, c, 16) < 1e-24);

  std::mt19937_64 gen(5);
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd r = testing::random_matrix(40, 37, gen);
    std::uniform_real_distribution<double> pos(5.0, 30.0);
    const double cr = pos(gen), cc = pos(gen);
    for (int annuli : {1, 4, 9}) {
      const double oracle = loop_ring_energy(r, cr, cc, annuli);
      CHECK(ring_energy(r, cr, cc, annuli) == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
  CHECK(ring_energy(ringed, c, c, 16) == doctest::Approx(loop_ring_energy(ringed, c, c, 16)).epsilon(1e-12));

  CHECK_THROWS_AS(ring_energy(img, -1.0, c, 8), std::invalid_argument);
  CHECK_THROWS_AS(ring_energy(img, c, n + 0.5, 8), std::invalid_argument);
  CHECK_THROWS_AS(ring_energy(img, c, c, 0), std::invalid_argument);
}

TEST_CASE("ring energy responds to added rings, not to their sign") {
  const int n = 48;
  const double c = 0.5 * (n - 1);
  std::mt19937_64 gen(77);
  const Eigen::MatrixXd base = 0.01 * testing::random_matrix(n, n, gen);
  Eigen::MatrixXd up = base, down = base;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double rho = std::hypot(i - c, j - c);
      if (rho >= 9.0 && rho < 10.0) {
        up(i, j) += 0.5;
        down(i, j) -= 0.5;
      }
    }
  const double e0 = ring_energy(base, c, c, 12);
  CHECK(ring_energy(up, c, c, 12) > 10.0 * e0);
  CHECK(ring_energy(down, c, c, 12) > 10.0 * e0);
}

#include "helpers.hpp"

#include "specring/core.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace specring;

TEST_CASE("make_geometry builds the angular schedule") {
  const auto g = make_geometry(460, 120, 0.0, 1.5, 460);
  CHECK(g.num_detectors == 460);
  CHECK(g.num_pixels() == 460 * 460);
  REQUIRE(g.angles_deg.size() == 120);
  CHECK(g.angles_deg.front() == 0.0);
  CHECK(g.angles_deg[1] == doctest::Approx(1.5));
  CHECK(g.angles_deg.back() == doctest::Approx(178.5));

  const auto single = make_geometry(4, 1, 0.0, 1.0, 4);
  REQUIRE(single.angles_deg.size() == 1);
  CHECK(single.angles_deg[0] == 0.0);

  const auto desk = make_geometry(128, 90, 0.0, 2.0, 128);
  CHECK(desk.angles_deg.back() == doctest::Approx(178.0));
}

TEST_CASE("make_geometry rejects bad schedules") {
  CHECK_THROWS_AS(make_geometry(0, 10, 0.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 0, 0.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 10, 0.0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 120, 0.0, 1.6, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 10, -5.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 10, 175.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_geometry(4, 3, 0.0, 0.0, 4), std::invalid_argument);
  ScanGeometry g = make_geometry(4, 3, 0.0, 10.0, 4);
  g.angles_deg = {0.0, 20.0, 10.0};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("sinogram layout is angle, detector, channel with channel fastest") {
  std::vector<double> data(2 * 3 * 4);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(i);
  SpectralSinogram s(2, 3, 4, SinogramKind::counts, data);
  CHECK(s.at(1, 2, 3) == 23.0);
  CHECK(s.at(0, 1, 2) == 6.0);
  const Eigen::MatrixXd c = s.channel(2);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 3);
  CHECK(c(1, 0) == 14.0);
  CHECK(s.channel_labels().size() == 4);

  std::vector<Eigen::MatrixXd> chans;
  for (int k = 0; k < 4; ++k) chans.push_back(s.channel(k));
  const auto back = SpectralSinogram::from_channels(chans, SinogramKind::counts);
  CHECK(back.data() == s.data());
}

TEST_CASE("sinogram invariants are enforced") {
  CHECK_THROWS_AS(SpectralSinogram(1, 1, 2, SinogramKind::counts, {1.0, -1.0}), std::invalid_argument);
  CHECK_NOTHROW(SpectralSinogram(1, 1, 2, SinogramKind::attenuation, {1.0, -1.0}));
  CHECK_THROWS_AS(SpectralSinogram(1, 1, 2, SinogramKind::attenuation, {1.0, NAN}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SpectralSinogram(1, 1, 2, SinogramKind::counts, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(SpectralSinogram(1, 1, 2, SinogramKind::counts, {1.0, 2.0}, {"a"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(FlatEstimate(Eigen::MatrixXd::Zero(2, 2)), std::invalid_argument);
}

namespace {

SpectralSinogram counts_from(const std::vector<Eigen::MatrixXd>& chans) {
  return SpectralSinogram::from_channels(chans, SinogramKind::counts);
}

}  // namespace

TEST_CASE("transmission_correct on trivial inputs") {
  Eigen::MatrixXd flat(3, 2);
  flat << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  const FlatEstimate z(flat);
  std::vector<Eigen::MatrixXd> same, dimmed;
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd c(4, 3);
    for (int a = 0; a < 4; ++a) c.row(a) = flat.col(k).transpose();
    same.push_back(c);
    dimmed.push_back(c * std::exp(-1.0));
  }
  const auto zero = transmission_correct(counts_from(same), z);
  CHECK(zero.kind() == SinogramKind::attenuation);
  for (double v : zero.data()) CHECK(std::abs(v) == 0.0);
  const auto one = transmission_correct(counts_from(dimmed), z);
  for (double v : one.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("transmission_correct matches a scalar loop") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  const int p = 2, r = 3, m = 2;
  std::vector<double> data(p * r * m);
  for (auto& v : data) v = u(gen);
  Eigen::MatrixXd flat(r, m);
  for (int d = 0; d < r; ++d)
    for (int k = 0; k < m; ++k) flat(d, k) = u(gen);
  const SpectralSinogram counts(p, r, m, SinogramKind::counts, data);
  const auto b = transmission_correct(counts, FlatEstimate(flat));
  for (int a = 0; a < p; ++a)
    for (int d = 0; d < r; ++d)
      for (int k = 0; k < m; ++k) {
        const double expect = -std::log(data[(a * r + d) * m + k] / flat(d, k));
        CHECK(b.at(a, d, k) == doctest::Approx(expect).epsilon(1e-15));
      }
}

TEST_CASE("transmission_correct inverts the noiseless model") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int p = 5, r = 4, m = 3;
    const Eigen::MatrixXd flat = testing::random_matrix(r, m, gen, 0.5, 50.0);
    std::vector<Eigen::MatrixXd> atten, counts;
    for (int k = 0; k < m; ++k) {
      Eigen::MatrixXd bk = testing::random_matrix(p, r, gen, -1.0, 6.0);
      Eigen::MatrixXd yk(p, r);
      for (int a = 0; a < p; ++a)
        for (int d = 0; d < r; ++d) yk(a, d) = flat(d, k) * std::exp(-bk(a, d));
      atten.push_back(bk);
      counts.push_back(yk);
    }
    const auto out = transmission_correct(counts_from(counts), FlatEstimate(flat));
    for (int k = 0; k < m; ++k)
      CHECK((out.channel(k) - atten[k]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("transmission_correct is monotone and scale invariant") {
  Eigen::MatrixXd flat(2, 1);
  flat << 10.0, 20.0;
  std::vector<double> y{5.0, 8.0, 4.0, 1.0};
  const SpectralSinogram base(2, 2, 1, SinogramKind::counts, y);
  auto y2 = y;
  y2[1] -= 0.5;
  const SpectralSinogram lower(2, 2, 1, SinogramKind::counts, y2);
  const auto b1 = transmission_correct(base, FlatEstimate(flat));
  const auto b2 = transmission_correct(lower, FlatEstimate(flat));
  CHECK(b2.at(0, 1, 0) > b1.at(0, 1, 0));
  CHECK(b2.at(0, 0, 0) == b1.at(0, 0, 0));

  std::vector<double> ys;
  for (double v : y) ys.push_back(v * 7.5);
  const auto b3 = transmission_correct(SpectralSinogram(2, 2, 1, SinogramKind::counts, ys),
                                       FlatEstimate(flat * 7.5), 1e-9);
  const auto b4 = transmission_correct(base, FlatEstimate(flat), 1e-9);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(b3.data()[i] == doctest::Approx(b4.data()[i]).epsilon(1e-14));
}

TEST_CASE("transmission_correct clamps zero counts to the floor") {
  Eigen::MatrixXd flat(2, 1);
  flat << 100.0, 300.0;
  const SpectralSinogram c(1, 2, 1, SinogramKind::counts, {0.0, 300.0});
  const auto b = transmission_correct(c, FlatEstimate(flat));
  const double floor = default_count_floor(FlatEstimate(flat), 0);
  CHECK(floor == doctest::Approx(1e-6 * 100.0));
  CHECK(b.at(0, 0, 0) == doctest::Approx(-std::log(floor / 100.0)));
  CHECK(std::isfinite(b.at(0, 0, 0)));
  CHECK(b.at(0, 1, 0) == 0.0);
}

TEST_CASE("transmission_correct rejects inconsistent inputs") {
  const SpectralSinogram c(1, 2, 1, SinogramKind::counts, {1.0, 2.0});
  CHECK_THROWS_AS(transmission_correct(c, FlatEstimate(Eigen::MatrixXd::Ones(3, 1))),
                  std::invalid_argument);
  CHECK_THROWS_AS(transmission_correct(c, FlatEstimate(Eigen::MatrixXd::Ones(2, 2))),
                  std::invalid_argument);
  CHECK_THROWS_AS(transmission_correct(c, FlatEstimate(Eigen::MatrixXd::Ones(2, 1)), 0.0),
                  std::invalid_argument);
  const SpectralSinogram att(1, 2, 1, SinogramKind::attenuation, {1.0, 2.0});
  CHECK_THROWS_AS(transmission_correct(att, FlatEstimate(Eigen::MatrixXd::Ones(2, 1))),
                  std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << 1.0, -1.0;
  CHECK_THROWS_AS(transmission_correct_channel(Eigen::MatrixXd::Ones(1, 2), bad, 1e-6),
                  std::invalid_argument);
}

TEST_CASE("pixel vectors map to row-major images") {
  Eigen::VectorXd px(6);
  px << 0, 1, 2, 3, 4, 5;
  CHECK_THROWS_AS(pixels_to_image(px, 2), std::invalid_argument);
  Eigen::VectorXd sq(4);
  sq << 0, 1, 2, 3;
  const auto img = pixels_to_image(sq, 2);
  CHECK(img(0, 1) == 1.0);
  CHECK(img(1, 0) == 2.0);
  CHECK(image_to_pixels(img) == sq);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.0);
}

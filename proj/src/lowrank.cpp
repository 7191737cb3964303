#include "specring/lowrank.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace specring {

FlatFieldStack::FlatFieldStack(Eigen::MatrixXd data, int num_flats)
    : data_(std::move(data)), num_flats_(num_flats) {
  if (num_flats_ < 1) throw std::invalid_argument("flat stack: need at least one flat");
  if (data_.rows() == 0 || data_.cols() == 0 || data_.rows() % num_flats_ != 0)
    throw std::invalid_argument("flat stack: rows must split into equal blocks");
  if (!data_.allFinite() || !(data_.minCoeff() > 0.0))
    throw std::invalid_argument("flat stack: entries must be finite and strictly positive");
}

Eigen::MatrixXd FlatFieldStack::block(int j) const {
  if (j < 0 || j >= num_flats_) throw std::out_of_range("flat stack: block index");
  const int r = num_detectors();
  return data_.middleRows(static_cast<Eigen::Index>(j) * r, r);
}

Eigen::MatrixXd FlatFieldStack::leading(int count) const {
  if (count < 1 || count > num_flats_)
    throw std::invalid_argument("flat stack: use_first must lie in [1, s]");
  return data_.topRows(static_cast<Eigen::Index>(count) * num_detectors());
}

FlatFieldStack stack_flats(const std::vector<Eigen::MatrixXd>& flats) {
  if (flats.empty()) throw std::invalid_argument("stack_flats: empty list");
  const auto r = flats.front().rows();
  const auto m = flats.front().cols();
  Eigen::MatrixXd data(r * static_cast<Eigen::Index>(flats.size()), m);
  for (std::size_t j = 0; j < flats.size(); ++j) {
    if (flats[j].rows() != r || flats[j].cols() != m)
      throw std::invalid_argument("stack_flats: flats differ in shape");
    data.middleRows(static_cast<Eigen::Index>(j) * r, r) = flats[j];
  }
  return FlatFieldStack(std::move(data), static_cast<int>(flats.size()));
}

namespace {

int resolve_use_first(const FlatFieldStack& stack, std::optional<int> use_first) {
  const int s = use_first.value_or(stack.num_flats());
  if (s < 1 || s > stack.num_flats())
    throw std::invalid_argument("flat estimate: use_first must lie in [1, s]");
  return s;
}

Eigen::MatrixXd block_average(const Eigen::MatrixXd& stacked, int blocks) {
  const auto r = stacked.rows() / blocks;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(r, stacked.cols());
  for (int j = 0; j < blocks; ++j) sum += stacked.middleRows(j * r, r);
  return sum / blocks;
}

// Rotates column pairs of `a` until all are mutually orthogonal, applying the
// same rotations to `v`.
void orthogonalise_columns(Eigen::MatrixXd& a, Eigen::MatrixXd& v, const JacobiOptions& opts) {
  const Eigen::Index n = a.cols();
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
        if (std::abs(gamma) <= opts.tolerance * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::abs(zeta) > 1e150
                             ? 0.5 / zeta
                             : std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw std::runtime_error("thin_svd: Jacobi sweeps did not converge");
}

// Replaces column j of u by a unit vector orthogonal to every other column.
void complete_basis(Eigen::MatrixXd& u, Eigen::Index j) {
  for (Eigen::Index e = 0; e < u.rows(); ++e) {
    Eigen::VectorXd cand = Eigen::VectorXd::Unit(u.rows(), e);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < u.cols(); ++k)
        if (k != j) cand -= u.col(k).dot(cand) * u.col(k);
    const double nrm = cand.norm();
    if (nrm > 0.5) {
      u.col(j) = cand / nrm;
      return;
    }
  }
  throw std::runtime_error("thin_svd: cannot complete left basis");
}

// Thin SVD for rows >= cols; values sorted, no sign normalisation.
SingularTriplets svd_tall(const Eigen::MatrixXd& m, const JacobiOptions& opts) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index n = m.cols();

  Eigen::MatrixXd work;
  Eigen::MatrixXd q_factor;
  const bool reduce = rows >= 2 * n;
  if (reduce) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    work = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    q_factor = qr.householderQ() * Eigen::MatrixXd::Identity(rows, n);
  } else {
    work = m;
  }

  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  orthogonalise_columns(work, v, opts);

  Eigen::VectorXd norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = work.col(j).norm();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SingularTriplets out;
  out.singular_values.resize(n);
  out.right_vectors.resize(n, n);
  Eigen::MatrixXd u(work.rows(), n);
  std::vector<Eigen::Index> zero_cols;
  const double tiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[j];
    const double sigma = norms(src);
    out.singular_values(j) = sigma;
    out.right_vectors.col(j) = v.col(src);
    if (sigma > tiny) {
      u.col(j) = work.col(src) / sigma;
    } else {
      out.singular_values(j) = 0.0;
      u.col(j).setZero();
      zero_cols.push_back(j);
    }
  }
  for (auto j : zero_cols) complete_basis(u, j);

  out.left_vectors = reduce ? Eigen::MatrixXd(q_factor * u) : u;
  return out;
}

}  // namespace

Eigen::MatrixXd SingularTriplets::reconstruct() const {
  return left_vectors * singular_values.asDiagonal() * right_vectors.transpose();
}

SingularTriplets thin_svd(const Eigen::MatrixXd& m, const JacobiOptions& opts) {
  if (m.size() == 0) throw std::invalid_argument("thin_svd: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("thin_svd: non-finite input");

  SingularTriplets out;
  if (m.rows() >= m.cols()) {
    out = svd_tall(m, opts);
  } else {
    SingularTriplets t = svd_tall(m.transpose(), opts);
    out.singular_values = std::move(t.singular_values);
    out.left_vectors = std::move(t.right_vectors);
    out.right_vectors = std::move(t.left_vectors);
  }

  for (Eigen::Index j = 0; j < out.right_vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    out.right_vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.right_vectors(arg, j) < 0.0) {
      out.right_vectors.col(j) *= -1.0;
      out.left_vectors.col(j) *= -1.0;
    }
  }
  return out;
}

SingularTriplets truncated_svd(const Eigen::MatrixXd& m, int rank, const JacobiOptions& opts) {
  const auto max_rank = std::min(m.rows(), m.cols());
  if (rank < 1 || rank > max_rank)
    throw std::invalid_argument("truncated_svd: rank must lie in [1, min(rows, cols)]");
  SingularTriplets full = thin_svd(m, opts);
  SingularTriplets out;
  out.left_vectors = full.left_vectors.leftCols(rank);
  out.singular_values = full.singular_values.head(rank);
  out.right_vectors = full.right_vectors.leftCols(rank);
  return out;
}

FlatEstimate conventional_flat_estimate(const FlatFieldStack& stack, std::optional<int> use_first) {
  const int s = resolve_use_first(stack, use_first);
  return FlatEstimate(block_average(stack.leading(s), s));
}

FlatEstimate lowrank_flat_estimate(const FlatFieldStack& stack, int rank,
                                   std::optional<int> use_first) {
  const int s = resolve_use_first(stack, use_first);
  const Eigen::MatrixXd sub = stack.leading(s);
  if (rank < 1 || rank > std::min(sub.rows(), sub.cols()))
    throw std::invalid_argument("lowrank_flat_estimate: rank must lie in [1, min(r*s, m)]");

  Eigen::MatrixXd z = block_average(truncated_svd(sub, rank).reconstruct(), s);
  const double med = median(std::vector<double>(z.data(), z.data() + z.size()));
  if (!(med > 0.0))
    throw std::runtime_error("lowrank_flat_estimate: non-positive median after truncation");
  return FlatEstimate(z.cwiseMax(1e-6 * med));
}

double approximation_error(std::span<const double> sv, int rank, ErrorNorm norm) {
  if (rank < 0 || rank >= static_cast<int>(sv.size()))
    throw std::invalid_argument("approximation_error: rank must lie in [0, len(sv))");
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (!(sv[i] >= 0.0)) throw std::invalid_argument("approximation_error: negative singular value");
    if (i > 0 && sv[i] > sv[i - 1])
      throw std::invalid_argument("approximation_error: singular values must be nonincreasing");
  }
  if (sv[0] == 0.0) return 0.0;
  if (norm == ErrorNorm::spectral) return sv[rank] / sv[0];

  double tail = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    total += sv[i] * sv[i];
    if (static_cast<int>(i) >= rank) tail += sv[i] * sv[i];
  }
  return std::sqrt(tail) / std::sqrt(total);
}

std::vector<double> singular_value_profile(const FlatFieldStack& stack) {
  const Eigen::VectorXd sv = thin_svd(stack.data()).singular_values;
  return {sv.data(), sv.data() + sv.size()};
}

}  // namespace specring

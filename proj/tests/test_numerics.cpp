#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ntkdip/numerics.hpp"

using namespace ntkdip;

namespace {

ComplexSignal random_signal(Eigen::Index n, RngStream& rng) {
  return {rng.normal_vector(n), rng.normal_vector(n)};
}

}  // namespace

TEST_CASE("fft: delta transforms to a constant") {
  ComplexSignal s = ComplexSignal::zeros(4);
  s.re[0] = 1.0;
  const ComplexSignal f = fft(s);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(f.re[i] == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(std::abs(f.im[i]) < 1e-14);
  }
}

TEST_CASE("fft: constant concentrates at DC") {
  ComplexSignal s{RealVector::Ones(4), RealVector::Zero(4)};
  const ComplexSignal f = fft(s);
  CHECK(f.re[0] == doctest::Approx(2.0).epsilon(1e-13));
  for (Eigen::Index i = 1; i < 4; ++i) {
    CHECK(std::abs(f.re[i]) < 1e-14);
    CHECK(std::abs(f.im[i]) < 1e-14);
  }
}

TEST_CASE("fft: ifft inverts and the transform is unitary") {
  RngStream rng(7, 0);
  const ComplexSignal s = random_signal(16, rng);
  const ComplexSignal f = fft(s);
  CHECK(std::abs(f.norm() - s.norm()) < 1e-12);
  const ComplexSignal back = ifft(f);
  CHECK((back - s).norm() < 1e-12);
}

TEST_CASE("fft: rejects non-power-of-two lengths") {
  CHECK_THROWS_AS(fft(ComplexSignal::zeros(6)), SizeError);
  CHECK_THROWS_AS(ifft(ComplexSignal::zeros(0)), SizeError);
}

TEST_CASE("pinv: identity and diagonal cases") {
  CHECK((pinv(RealMatrix::Identity(3, 3)) - RealMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
        1e-14);
  RealMatrix d = RealMatrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const RealMatrix dp = pinv(d);
  CHECK(dp(0, 0) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(dp(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("pinv: right inverse for full-row-rank matrices") {
  RngStream rng(11, 0);
  RealMatrix m(4, 8);
  for (Eigen::Index i = 0; i < 4; ++i) m.row(i) = rng.normal_vector(8).transpose();
  const RealMatrix prod = m * pinv(m);
  CHECK((prod - RealMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pinv: Penrose conditions on rank-deficient matrices") {
  RngStream rng(13, 0);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd left(6, 3), right(3, 5);
    for (Eigen::Index j = 0; j < 3; ++j) {
      left.col(j) = rng.normal_vector(6);
      right.row(j) = rng.normal_vector(5).transpose();
    }
    const RealMatrix m = left * right;  // rank 3, 6x5
    const RealMatrix mp = pinv(m);
    CHECK((m * mp * m - m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((mp * m * mp - mp).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("projector_onto_range: full rank gives identity, rank one gives u u^T") {
  RngStream rng(17, 0);
  RealMatrix full(3, 3);
  for (Eigen::Index i = 0; i < 3; ++i) full.row(i) = rng.normal_vector(3).transpose();
  CHECK((projector_onto_range(full) - RealMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

  RealVector u = rng.normal_vector(4);
  u /= u.norm();
  const RealMatrix rank1 = u * u.transpose();
  CHECK((projector_onto_range(rank1) - rank1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projector_onto_range: random rank-2 kernel") {
  // expected projector assembled from an orthonormal basis
  RngStream rng(19, 0);
  Eigen::MatrixXd basis(5, 2);
  basis.col(0) = rng.normal_vector(5).normalized();
  RealVector second = rng.normal_vector(5);
  second -= basis.col(0).dot(second) * basis.col(0);
  basis.col(1) = second.normalized();
  const RealMatrix w = basis.col(0) * basis.col(0).transpose() * 2.0 +
                       basis.col(1) * basis.col(1).transpose() * 0.3;
  const RealMatrix p = projector_onto_range(w);
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((p * w - w).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(numerical_rank(p) == 2);
}

TEST_CASE("projector algebra: complement sums to identity") {
  RngStream rng(23, 0);
  Eigen::MatrixXd g(6, 3);
  for (Eigen::Index j = 0; j < 3; ++j) g.col(j) = rng.normal_vector(6);
  const RealMatrix b = g * g.transpose();
  const RealMatrix p = projector_onto_range(b);
  const RealMatrix p_perp = RealMatrix::Identity(6, 6) - p;
  CHECK((p + p_perp - RealMatrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p * p_perp).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("psd_sqrt: diagonal, identity, and random PSD") {
  RealMatrix d = RealMatrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const PsdSqrtResult r = psd_sqrt(d);
  CHECK(r.root(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.root(1, 1) == doctest::Approx(3.0).epsilon(1e-12));

  const PsdSqrtResult id = psd_sqrt(RealMatrix::Identity(4, 4));
  CHECK((id.root - RealMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

  RngStream rng(29, 0);
  Eigen::MatrixXd g(6, 6);
  for (Eigen::Index j = 0; j < 6; ++j) g.col(j) = rng.normal_vector(6);
  const Eigen::MatrixXd w0 = g.transpose() * g;
  const RealMatrix w = 0.5 * (w0 + w0.transpose());
  const PsdSqrtResult rr = psd_sqrt(w);
  CHECK((rr.root * rr.root - w).cwiseAbs().maxCoeff() < 1e-9);
  const RealMatrix p = projector_onto_range(w);
  CHECK((rr.root * rr.pinv_root - p).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("psd_sqrt: rejects indefinite and asymmetric inputs") {
  RealMatrix neg = RealMatrix::Identity(2, 2);
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(psd_sqrt(neg), NotPsdError);
  RealMatrix asym = RealMatrix::Zero(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(psd_sqrt(asym), DimensionError);
}

TEST_CASE("subspace intersection projector recovers a shared line") {
  // span{e0, e1} and span{e1, e2} intersect in span{e1}
  RealMatrix p1 = RealMatrix::Zero(3, 3), p2 = RealMatrix::Zero(3, 3);
  p1(0, 0) = p1(1, 1) = 1.0;
  p2(1, 1) = p2(2, 2) = 1.0;
  const RealMatrix cap = subspace_intersection_projector(p1, p2);
  RealMatrix expect = RealMatrix::Zero(3, 3);
  expect(1, 1) = 1.0;
  CHECK((cap - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rng: identical streams agree for 1e4 draws, distinct streams differ") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  bool all_equal = true;
  bool any_differ = false;
  for (int i = 0; i < 10000; ++i) {
    const double da = a.uniform01();
    all_equal = all_equal && (da == b.uniform01());
    any_differ = any_differ || (da != c.uniform01());
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("rng: normals have the requested variance") {
  RngStream rng(5, 0);
  const RealVector draws = rng.normal_vector(10000);
  const double mean = draws.mean();
  const double var = (draws.array() - mean).square().sum() / (draws.size() - 1);
  CHECK(var > 0.94);
  CHECK(var < 1.06);
}

TEST_CASE("rng: weighted sampling without replacement returns distinct indices") {
  RngStream rng(31, 0);
  RealVector w = RealVector::Ones(10);
  w[3] = 100.0;
  const auto picks = rng.weighted_sample_without_replacement(w, 5);
  CHECK(picks.size() == 5);
  for (std::size_t i = 0; i < picks.size(); ++i)
    for (std::size_t j = i + 1; j < picks.size(); ++j) CHECK(picks[i] != picks[j]);
}

TEST_CASE("pairwise_sum matches naive summation") {
  RngStream rng(37, 0);
  const RealVector xs = rng.normal_vector(1000);
  const double naive = xs.sum();
  const double pw = pairwise_sum(std::span<const double>(xs.data(), 1000));
  CHECK(pw == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("matrix_power: binary exponentiation") {
  RealMatrix m = RealMatrix::Zero(2, 2);
  m(0, 0) = 2.0;
  m(1, 1) = 3.0;
  const RealMatrix m5 = matrix_power(m, 5);
  CHECK(m5(0, 0) == doctest::Approx(32.0));
  CHECK(m5(1, 1) == doctest::Approx(243.0));
  CHECK((matrix_power(m, 0) - RealMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("complex signal: stacked round trip and inner product") {
  RngStream rng(41, 0);
  const ComplexSignal s = random_signal(8, rng);
  const ComplexSignal back = ComplexSignal::from_stacked(s.stacked());
  CHECK((back - s).norm() == 0.0);
  const auto [re, im] = inner(s, s);
  CHECK(re == doctest::Approx(s.norm() * s.norm()).epsilon(1e-12));
  CHECK(std::abs(im) < 1e-12);
}

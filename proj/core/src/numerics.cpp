#include "ntkdip/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <numbers>

namespace ntkdip {

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

ComplexSignal::ComplexSignal(RealVector r, RealVector i) : re(std::move(r)), im(std::move(i)) {
  require(re.size() == im.size(), "ComplexSignal: re/im length mismatch");
}

ComplexSignal ComplexSignal::zeros(Eigen::Index n) {
  return {RealVector::Zero(n), RealVector::Zero(n)};
}

ComplexSignal ComplexSignal::from_real(const RealVector& r) {
  return {r, RealVector::Zero(r.size())};
}

ComplexSignal ComplexSignal::from_stacked(const RealVector& s) {
  require(s.size() % 2 == 0, "from_stacked: length must be even");
  const Eigen::Index q = s.size() / 2;
  return {s.head(q), s.tail(q)};
}

RealVector ComplexSignal::stacked() const {
  RealVector out(2 * len());
  out.head(len()) = re;
  out.tail(len()) = im;
  return out;
}

RealVector ComplexSignal::magnitudes() const {
  return (re.array().square() + im.array().square()).sqrt();
}

double ComplexSignal::norm() const {
  return std::sqrt(re.squaredNorm() + im.squaredNorm());
}

ComplexSignal ComplexSignal::operator+(const ComplexSignal& o) const {
  require(len() == o.len(), "signal length mismatch");
  return {re + o.re, im + o.im};
}

ComplexSignal ComplexSignal::operator-(const ComplexSignal& o) const {
  require(len() == o.len(), "signal length mismatch");
  return {re - o.re, im - o.im};
}

ComplexSignal ComplexSignal::scaled(double a) const { return {re * a, im * a}; }

std::pair<double, double> inner(const ComplexSignal& a, const ComplexSignal& b) {
  require(a.len() == b.len(), "inner: length mismatch");
  const double real = a.re.dot(b.re) + a.im.dot(b.im);
  const double imag = a.re.dot(b.im) - a.im.dot(b.re);
  return {real, imag};
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream_id * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x165667B19E3779F9ULL + (a << 6) + (a >> 2));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix_seed(seed, stream_id)) {}

double RngStream::uniform01() {
  // 53 random bits -> double in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

RealVector RngStream::normal_vector(Eigen::Index n, double stddev) {
  RealVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * normal();
  return v;
}

RealVector RngStream::uniform_vector(Eigen::Index n, double lo, double hi) {
  RealVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
  return v;
}

std::vector<Eigen::Index> RngStream::weighted_sample_without_replacement(
    const RealVector& weights, Eigen::Index k) {
  require(k <= weights.size(), "sample: k exceeds population");
  std::vector<double> w(weights.data(), weights.data() + weights.size());
  std::vector<Eigen::Index> picked;
  picked.reserve(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double x : w) {
    require(x >= 0.0, "sample: negative weight");
    total += x;
  }
  for (Eigen::Index draw = 0; draw < k; ++draw) {
    double u = uniform01() * total;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (w[static_cast<std::size_t>(i)] <= 0.0) continue;
      u -= w[static_cast<std::size_t>(i)];
      if (u <= 0.0) {
        chosen = i;
        break;
      }
      chosen = i;  // fallback against rounding at the tail
    }
    picked.push_back(chosen);
    total -= w[static_cast<std::size_t>(chosen)];
    w[static_cast<std::size_t>(chosen)] = 0.0;
  }
  return picked;
}

namespace {

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform; sign = -1 forward, +1 inverse.
void fft_core(RealVector& re, RealVector& im, int sign) {
  const Eigen::Index n = re.size();
  // bit-reversal permutation
  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (Eigen::Index i = 0; i < n; i += len) {
      for (Eigen::Index j = 0; j < len / 2; ++j) {
        const double wr = std::cos(ang * static_cast<double>(j));
        const double wi = std::sin(ang * static_cast<double>(j));
        const Eigen::Index a = i + j;
        const Eigen::Index b = i + j + len / 2;
        const double tr = re[b] * wr - im[b] * wi;
        const double ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  re *= scale;
  im *= scale;
}

}  // namespace

ComplexSignal fft(const ComplexSignal& s) {
  if (!is_power_of_two(s.len()))
    throw SizeError("fft: length must be a power of two");
  ComplexSignal out = s;
  fft_core(out.re, out.im, -1);
  return out;
}

ComplexSignal ifft(const ComplexSignal& s) {
  if (!is_power_of_two(s.len()))
    throw SizeError("ifft: length must be a power of two");
  ComplexSignal out = s;
  fft_core(out.re, out.im, +1);
  return out;
}

double rank_cutoff(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon() * sigma_max;
}

Eigen::Index numerical_rank(const RealMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double tau = rank_cutoff(m.rows(), m.cols(), sv[0]);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tau) ++r;
  return r;
}

RealMatrix pinv(const RealMatrix& m) {
  require(m.allFinite(), "pinv: non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tau = sv.size() ? rank_cutoff(m.rows(), m.cols(), sv[0]) : 0.0;
  Eigen::VectorXd inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    inv_sv[i] = sv[i] > tau ? 1.0 / sv[i] : 0.0;
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

RealMatrix projector_onto_range(const RealMatrix& m) {
  require(m.allFinite(), "projector_onto_range: non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double tau = sv.size() ? rank_cutoff(m.rows(), m.cols(), sv[0]) : 0.0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tau) ++r;
  const Eigen::MatrixXd ur = svd.matrixU().leftCols(r);
  return ur * ur.transpose();
}

RealMatrix projector_onto_nullspace(const RealMatrix& m) {
  RealMatrix row_space = projector_onto_range(RealMatrix(m.transpose()));
  return RealMatrix::Identity(m.cols(), m.cols()) - row_space;
}

PsdSqrtResult psd_sqrt(const RealMatrix& m) {
  require(m.rows() == m.cols(), "psd_sqrt: matrix not square");
  const double asym = (m - RealMatrix(m.transpose())).cwiseAbs().maxCoeff();
  require(asym <= 1e-10, "psd_sqrt: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (Eigen::MatrixXd(m) + Eigen::MatrixXd(m).transpose()));
  Eigen::VectorXd evals = es.eigenvalues();
  if (evals.size() && evals.minCoeff() < -1e-8)
    throw NotPsdError("psd_sqrt: negative eigenvalue " + std::to_string(evals.minCoeff()));
  const double lam_max = evals.size() ? std::max(evals.maxCoeff(), 0.0) : 0.0;
  const double tau = rank_cutoff(m.rows(), m.cols(), lam_max);
  // eigenvalues at or below the rank cutoff are treated as exact zeros, so
  // the root has the same numerical rank as the input (sqrt would otherwise
  // lift 1e-16 garbage to 1e-8 and poison downstream pseudo-inverses)
  Eigen::VectorXd root(evals.size()), inv_root(evals.size());
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    const double lam = evals[i] > tau ? evals[i] : 0.0;
    root[i] = std::sqrt(lam);
    inv_root[i] = lam > tau ? 1.0 / root[i] : 0.0;
  }
  const Eigen::MatrixXd v = es.eigenvectors();
  PsdSqrtResult out;
  out.root = v * root.asDiagonal() * v.transpose();
  out.pinv_root = v * inv_root.asDiagonal() * v.transpose();
  return out;
}

RealMatrix subspace_intersection_projector(const RealMatrix& p1, const RealMatrix& p2,
                                           double tol) {
  require(p1.rows() == p1.cols() && p2.rows() == p2.cols() && p1.rows() == p2.rows(),
          "intersection: projector dims mismatch");
  Eigen::MatrixXd prod = p1 * p2 * p1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (prod + prod.transpose()));
  const Eigen::VectorXd& evals = es.eigenvalues();
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < evals.size(); ++i)
    if (evals[i] >= 1.0 - tol) ++count;
  const Eigen::MatrixXd basis = es.eigenvectors().rightCols(count);
  return basis * basis.transpose();
}

RealMatrix matrix_power(const RealMatrix& m, std::uint64_t t) {
  require(m.rows() == m.cols(), "matrix_power: matrix not square");
  RealMatrix result = RealMatrix::Identity(m.rows(), m.cols());
  RealMatrix base = m;
  while (t > 0) {
    if (t & 1ULL) result = result * base;
    base = base * base;
    t >>= 1;
  }
  return result;
}

}  // namespace ntkdip

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "ntkdip/common.hpp"

namespace ntkdip {

/// Dense real matrix, row-major 64-bit floats.
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealVector = Eigen::VectorXd;

/// Complex vector stored as split real/imaginary arrays. The stacked view
/// [re; im] is the real embedding used throughout the dynamics code, so a
/// signal converts both ways without copying structure around.
struct ComplexSignal {
  RealVector re;
  RealVector im;

  ComplexSignal() = default;
  ComplexSignal(RealVector r, RealVector i);

  static ComplexSignal zeros(Eigen::Index n);
  /// Real-valued signal (imaginary part zero).
  static ComplexSignal from_real(const RealVector& r);
  /// Splits a length-2q vector [re; im] back into a length-q signal.
  static ComplexSignal from_stacked(const RealVector& s);

  Eigen::Index len() const { return re.size(); }
  /// [re; im] as one real vector of length 2q.
  RealVector stacked() const;
  /// Entrywise modulus.
  RealVector magnitudes() const;

  double norm() const;
  ComplexSignal operator+(const ComplexSignal& o) const;
  ComplexSignal operator-(const ComplexSignal& o) const;
  ComplexSignal scaled(double a) const;
};

/// <a, b> = sum conj(a_i) b_i, returned as (re, im).
std::pair<double, double> inner(const ComplexSignal& a, const ComplexSignal& b);

/// Deterministic random stream. A given (seed, stream_id) pair yields the
/// same draw sequence on every platform: the engine is a single-value-seeded
/// mt19937_64 (fully specified by the standard) and the uniform/normal
/// transforms are done by hand rather than with std::*_distribution, whose
/// output is implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();

  RealVector normal_vector(Eigen::Index n, double stddev = 1.0);
  RealVector uniform_vector(Eigen::Index n, double lo, double hi);
  /// k distinct indices from [0, n) drawn without replacement with
  /// probability proportional to the given weights.
  std::vector<Eigen::Index> weighted_sample_without_replacement(
      const RealVector& weights, Eigen::Index k);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Unitary DFT (scale 1/sqrt(n)), radix-2 only.
ComplexSignal fft(const ComplexSignal& s);
/// Inverse of fft; fft then ifft is the identity to ~1e-12.
ComplexSignal ifft(const ComplexSignal& s);

/// Singular value cutoff deciding numerical rank:
/// tau = max(rows, cols) * eps * sigma_max.
double rank_cutoff(Eigen::Index rows, Eigen::Index cols, double sigma_max);

Eigen::Index numerical_rank(const RealMatrix& m);

/// Moore-Penrose pseudo-inverse via SVD with the rank_cutoff threshold.
RealMatrix pinv(const RealMatrix& m);

/// Orthogonal projector onto the column space of m.
RealMatrix projector_onto_range(const RealMatrix& m);

/// Orthogonal projector onto the null space of m (I - projector onto
/// the row space).
RealMatrix projector_onto_nullspace(const RealMatrix& m);

struct PsdSqrtResult {
  RealMatrix root;       ///< S with S*S = m.
  RealMatrix pinv_root;  ///< Pseudo-inverse of S.
};

/// Symmetric PSD square root plus its pseudo-inverse. Throws NotPsdError if
/// an eigenvalue is below -1e-8, and DimensionError if m is not symmetric
/// to 1e-10.
PsdSqrtResult psd_sqrt(const RealMatrix& m);

/// Projector onto the intersection of two subspaces given by their
/// orthogonal projectors: the eigenvalue-1 eigenspace of p1*p2*p1.
RealMatrix subspace_intersection_projector(const RealMatrix& p1, const RealMatrix& p2,
                                           double tol = 1e-8);

/// M^t by binary exponentiation.
RealMatrix matrix_power(const RealMatrix& m, std::uint64_t t);

}  // namespace ntkdip

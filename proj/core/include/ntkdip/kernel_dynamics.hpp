#pragma once

#include <filesystem>
#include <vector>

#include "ntkdip/ntk.hpp"
#include "ntkdip/numerics.hpp"
#include "ntkdip/operators.hpp"

namespace ntkdip {

/// A fixed-kernel training-dynamics instance: measurement matrix (dense,
/// possibly the real embedding of a complex operator), kernel W, ground
/// truth, noise level and step size. Vectors live in the real computation
/// space; `embedded` records whether they are stacked re/im pairs so results
/// can be handed back as complex signals.
struct DynamicsProblem {
  RealMatrix a;
  KernelMatrix w;
  RealVector x;
  double sigma = 0.0;
  double eta = 0.0;
  bool embedded = false;

  DynamicsProblem(RealMatrix a_, KernelMatrix w_, RealVector x_, double sigma_, double eta_,
                  bool embedded_ = false);

  /// Real embedding of a complex forward operator plus a 2q x 2q kernel.
  static DynamicsProblem from_map(const LinearMap& map, KernelMatrix w,
                                  const ComplexSignal& x, double sigma, double eta);

  ComplexSignal to_signal(const RealVector& v) const;
  RealVector to_vector(const ComplexSignal& s, Eigen::Index expected_dim) const;

  /// Spectral norm of B = W^{1/2} A^T A W^{1/2}.
  double b_norm() const;
  /// Throws DivergenceError unless eta < 2 / |B|.
  void check_step_size() const;
};

enum class TheoremCase { Nonsingular, SingularGeneral, SingularExact };

struct TheoremPrediction {
  TheoremCase kase = TheoremCase::Nonsingular;
  RealVector limit_error_raw;
  ComplexSignal limit_error;
  std::vector<double> bias_curve;
  std::vector<double> var_curve;
  std::vector<double> mse_curve;
  /// Set in the singular case when P_{N(A) cap R(W)} x is not ~0, i.e. the
  /// closed-form limit does not apply.
  bool precondition_violated = false;
  double precondition_residual = 0.0;
};

RealVector iterate_kernel_regime_raw(const DynamicsProblem& p, const RealVector& noise,
                                     std::uint64_t t);
/// z_t after t steps of z <- z + eta W (A^T y - A^T A z), z_0 = 0,
/// y = A x + noise. Checks the step-size condition up front.
ComplexSignal iterate_kernel_regime(const DynamicsProblem& p, const ComplexSignal& noise,
                                    std::uint64_t t);

struct LongRunResult {
  RealVector z;
  std::uint64_t iterations = 0;
  bool converged = false;  // step fell below tol before the iteration cap
};

/// Runs the kernel-regime iteration until |z_{t+1} - z_t| <= tol or
/// max_iters steps, whichever first.
LongRunResult iterate_to_convergence(const DynamicsProblem& p, const RealVector& noise,
                                     std::uint64_t max_iters = 100000, double tol = 1e-12);

/// (I - eta W A^T A)^t, evaluated through the eigendecomposition of the
/// symmetric B = W^{1/2} A^T A W^{1/2}. Stable at large t where naive
/// repeated squaring of the non-symmetric iteration matrix degrades.
RealMatrix stable_iteration_power(const DynamicsProblem& p, std::uint64_t t);

RealVector closed_form_zt_raw(const DynamicsProblem& p, const RealVector& noise,
                              std::uint64_t t);
/// Closed form z_t = (I - (I - eta W A^T A)^t)(x + pinv(A) n). Requires A
/// full row rank; the matrix power uses repeated squaring, switching to the
/// eigendecomposition route past t = 512.
ComplexSignal closed_form_zt(const DynamicsProblem& p, const ComplexSignal& noise,
                             std::uint64_t t);

/// Noise-free convergence limit per the three kernel cases: classifies W by
/// numerical rank and returns the predicted limit error z_inf - x.
TheoremPrediction predict_limit(const DynamicsProblem& p);

/// Bias/variance/MSE curves for t = 0..t_max:
/// bias_t = |(I - eta W A^T A)^t x|^2, var_t = sigma^2 |Q_t|_F^2 with
/// Q_t = (I - (I - eta W A^T A)^t) pinv(A).
TheoremPrediction theorem2_mse(const DynamicsProblem& p, std::uint64_t t_max);

/// Per-frequency MSE for the circulant-kernel single-coil case:
/// sum_i [(1 - eta l_i m_i)^{2t} |(Fx)_i|^2 + sigma^2 (1 - (1 - eta l_i m_i)^t)^2].
double corollary1_mse(const RealVector& lambdas, const std::vector<int>& mask_diag,
                      const ComplexSignal& fx, double sigma, double eta, std::uint64_t t);

/// Max residual over the three proof identities: the geometric-series
/// resummation, the projector decomposition of the propagator, and the
/// alternating-projection limit at n = 200. Requires t >= 1.
double verify_appendix_identities(const DynamicsProblem& p, std::uint64_t t);

struct CurvePoint {
  std::uint64_t t;
  double bias, variance, mse;
  double empirical_mse = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = std::numeric_limits<double>::quiet_NaN();
};

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pts);

}  // namespace ntkdip

#include "ntkdip/kernel_dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ntkdip {

DynamicsProblem::DynamicsProblem(RealMatrix a_, KernelMatrix w_, RealVector x_, double sigma_,
                                 double eta_, bool embedded_)
    : a(std::move(a_)), w(std::move(w_)), x(std::move(x_)), sigma(sigma_), eta(eta_),
      embedded(embedded_) {
  require(w.dim() == a.cols(), "DynamicsProblem: W must be q x q");
  require(x.size() == a.cols(), "DynamicsProblem: x must have length q");
  require(sigma >= 0.0, "DynamicsProblem: sigma must be >= 0");
  require(eta >= 0.0, "DynamicsProblem: eta must be >= 0");
}

DynamicsProblem DynamicsProblem::from_map(const LinearMap& map, KernelMatrix w,
                                          const ComplexSignal& x, double sigma, double eta) {
  RealEmbedding e = materialize_real(map);
  return DynamicsProblem(std::move(e.matrix), std::move(w), x.stacked(), sigma, eta, true);
}

ComplexSignal DynamicsProblem::to_signal(const RealVector& v) const {
  return embedded ? ComplexSignal::from_stacked(v) : ComplexSignal::from_real(v);
}

RealVector DynamicsProblem::to_vector(const ComplexSignal& s, Eigen::Index expected_dim) const {
  RealVector v = embedded ? s.stacked() : s.re;
  if (!embedded)
    require(s.im.size() == 0 || s.im.cwiseAbs().maxCoeff() == 0.0,
            "real-space problem given a signal with nonzero imaginary part");
  require(v.size() == expected_dim, "signal does not match problem dimensions");
  return v;
}

double DynamicsProblem::b_norm() const {
  const PsdSqrtResult s = psd_sqrt(w.data());
  const Eigen::MatrixXd b = s.root * a.transpose() * a * s.root;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().size() ? std::max(0.0, es.eigenvalues().maxCoeff()) : 0.0;
}

void DynamicsProblem::check_step_size() const {
  require(eta > 0.0, "DynamicsProblem: eta must be > 0");
  const double nb = b_norm();
  if (nb > 0.0 && eta >= 2.0 / nb)
    throw DivergenceError("step size violates eta < 2/|B|");
}

RealVector iterate_kernel_regime_raw(const DynamicsProblem& p, const RealVector& noise,
                                     std::uint64_t t) {
  require(noise.size() == p.a.rows(), "noise length must match measurement count");
  p.check_step_size();
  const RealVector y = p.a * p.x + noise;
  const RealVector aty = p.a.transpose() * y;
  const RealMatrix ata = p.a.transpose() * p.a;
  RealVector z = RealVector::Zero(p.x.size());
  for (std::uint64_t i = 0; i < t; ++i)
    z += p.eta * (p.w.data() * (aty - ata * z));
  return z;
}

ComplexSignal iterate_kernel_regime(const DynamicsProblem& p, const ComplexSignal& noise,
                                    std::uint64_t t) {
  return p.to_signal(iterate_kernel_regime_raw(p, p.to_vector(noise, p.a.rows()), t));
}

LongRunResult iterate_to_convergence(const DynamicsProblem& p, const RealVector& noise,
                                     std::uint64_t max_iters, double tol) {
  require(noise.size() == p.a.rows(), "noise length must match measurement count");
  p.check_step_size();
  const RealVector y = p.a * p.x + noise;
  const RealVector aty = p.a.transpose() * y;
  const RealMatrix ata = p.a.transpose() * p.a;
  LongRunResult out;
  out.z = RealVector::Zero(p.x.size());
  for (std::uint64_t i = 0; i < max_iters; ++i) {
    const RealVector step = p.eta * (p.w.data() * (aty - ata * out.z));
    out.z += step;
    ++out.iterations;
    if (step.norm() <= tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

RealMatrix stable_iteration_power(const DynamicsProblem& p, std::uint64_t t) {
  const Eigen::Index q = p.a.cols();
  const PsdSqrtResult s = psd_sqrt(p.w.data());
  const Eigen::MatrixXd b = s.root * p.a.transpose() * p.a * s.root;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
  const Eigen::VectorXd beta = es.eigenvalues();
  const Eigen::MatrixXd v = es.eigenvectors();
  const double beta_max = beta.size() ? std::max(beta.maxCoeff(), 0.0) : 0.0;
  const double tau = rank_cutoff(q, q, beta_max);

  Eigen::VectorXd pw(q), geo(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const double bi = std::max(beta[i], 0.0);
    pw[i] = std::pow(1.0 - p.eta * bi, static_cast<double>(t));
    geo[i] = bi > tau ? (1.0 - pw[i]) / bi : 0.0;  // pinv(B)(I - (I - eta B)^t)
  }
  const Eigen::MatrixXd power_b = v * pw.asDiagonal() * v.transpose();
  const Eigen::MatrixXd resolvent = v * geo.asDiagonal() * v.transpose();

  // (I - eta W A^T A)^t
  //   = S (I - eta B)^t S+  +  P_N(W)  -  S B+ (I - (I - eta B)^t) S A^T A P_N(W)
  const RealMatrix p_w = projector_onto_range(p.w.data());
  const RealMatrix p_n = RealMatrix::Identity(q, q) - p_w;
  Eigen::MatrixXd out = s.root * power_b * s.pinv_root;
  out += p_n;
  out -= s.root * resolvent * s.root * p.a.transpose() * p.a * p_n;
  return out;
}

namespace {

void require_full_row_rank(const RealMatrix& a) {
  if (numerical_rank(a) < a.rows())
    throw RankError("operator is not full row rank");
}

}  // namespace

RealVector closed_form_zt_raw(const DynamicsProblem& p, const RealVector& noise,
                              std::uint64_t t) {
  require(noise.size() == p.a.rows(), "noise length must match measurement count");
  require_full_row_rank(p.a);
  const Eigen::Index q = p.a.cols();
  const RealVector target = p.x + pinv(p.a) * noise;
  RealMatrix power;
  if (t <= 512) {
    const RealMatrix m = RealMatrix::Identity(q, q) - p.eta * p.w.data() * p.a.transpose() * p.a;
    power = matrix_power(m, t);
  } else {
    power = stable_iteration_power(p, t);
  }
  return target - power * target;
}

ComplexSignal closed_form_zt(const DynamicsProblem& p, const ComplexSignal& noise,
                             std::uint64_t t) {
  return p.to_signal(closed_form_zt_raw(p, p.to_vector(noise, p.a.rows()), t));
}

TheoremPrediction predict_limit(const DynamicsProblem& p) {
  const Eigen::Index q = p.a.cols();
  TheoremPrediction pred;
  const PsdSqrtResult s = psd_sqrt(p.w.data());
  const Eigen::MatrixXd b = s.root * p.a.transpose() * p.a * s.root;
  const RealMatrix p_b = projector_onto_range(RealMatrix(0.5 * (b + b.transpose())));

  if (!p.w.is_singular()) {
    pred.kase = TheoremCase::Nonsingular;
    const RealMatrix p_nb = RealMatrix::Identity(q, q) - p_b;
    pred.limit_error_raw = -(s.root * (p_nb * (s.pinv_root * p.x)));
  } else {
    const RealMatrix p_rw = projector_onto_range(p.w.data());
    const RealMatrix p_nw = RealMatrix::Identity(q, q) - p_rw;
    const RealMatrix p_na = projector_onto_nullspace(p.a);
    const RealMatrix p_cap = subspace_intersection_projector(p_na, p_rw);
    const double xnorm = p.x.norm();
    pred.precondition_residual = (p_cap * p.x).norm() / (xnorm > 0.0 ? xnorm : 1.0);
    pred.precondition_violated = pred.precondition_residual > 1e-8;

    const RealVector x_perp = p_nw * p.x;
    if (x_perp.norm() <= 1e-8 * (xnorm > 0.0 ? xnorm : 1.0)) {
      pred.kase = TheoremCase::SingularExact;
      pred.limit_error_raw = RealVector::Zero(q);
    } else {
      pred.kase = TheoremCase::SingularGeneral;
      pred.limit_error_raw =
          -x_perp + s.root * (pinv(RealMatrix(p.a * s.root)) * (p.a * x_perp));
    }
  }
  pred.limit_error = p.to_signal(pred.limit_error_raw);
  return pred;
}

TheoremPrediction theorem2_mse(const DynamicsProblem& p, std::uint64_t t_max) {
  require_full_row_rank(p.a);
  const Eigen::Index q = p.a.cols();
  const RealMatrix m = RealMatrix::Identity(q, q) - p.eta * p.w.data() * p.a.transpose() * p.a;
  const RealMatrix a_pinv = pinv(p.a);

  TheoremPrediction pred;
  pred.kase = p.w.is_singular() ? TheoremCase::SingularGeneral : TheoremCase::Nonsingular;
  pred.bias_curve.reserve(t_max + 1);
  pred.var_curve.reserve(t_max + 1);
  pred.mse_curve.reserve(t_max + 1);

  RealMatrix power = RealMatrix::Identity(q, q);  // M^t
  for (std::uint64_t t = 0; t <= t_max; ++t) {
    const double bias = (power * p.x).squaredNorm();
    const RealMatrix qt = (RealMatrix::Identity(q, q) - power) * a_pinv;
    const double var = p.sigma * p.sigma * qt.squaredNorm();  // sum of squared singular values
    pred.bias_curve.push_back(bias);
    pred.var_curve.push_back(var);
    pred.mse_curve.push_back(bias + var);
    if (t < t_max) power = m * power;
  }
  pred.limit_error_raw = RealVector::Zero(q);
  pred.limit_error = p.to_signal(pred.limit_error_raw);
  return pred;
}

double corollary1_mse(const RealVector& lambdas, const std::vector<int>& mask_diag,
                      const ComplexSignal& fx, double sigma, double eta, std::uint64_t t) {
  const Eigen::Index q = lambdas.size();
  require(static_cast<Eigen::Index>(mask_diag.size()) == q && fx.len() == q,
          "corollary1_mse: arrays must have equal length");
  double total = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double lm = lambdas[i] * static_cast<double>(mask_diag[static_cast<std::size_t>(i)]);
    const double decay = std::pow(1.0 - eta * lm, static_cast<double>(t));
    const double coeff2 = fx.re[i] * fx.re[i] + fx.im[i] * fx.im[i];
    total += decay * decay * coeff2 + sigma * sigma * (1.0 - decay) * (1.0 - decay);
  }
  return total;
}

double verify_appendix_identities(const DynamicsProblem& p, std::uint64_t t) {
  require(t >= 1, "verify_appendix_identities: t must be >= 1");
  const Eigen::Index q = p.a.cols();
  const PsdSqrtResult s = psd_sqrt(p.w.data());
  const Eigen::MatrixXd b0 = s.root * p.a.transpose() * p.a * s.root;
  const RealMatrix b = 0.5 * (b0 + b0.transpose());
  const RealMatrix i_q = RealMatrix::Identity(q, q);
  const RealMatrix step = i_q - p.eta * b;
  const RealMatrix p_b = projector_onto_range(b);
  const RealMatrix p_b_perp = i_q - p_b;
  const RealMatrix p_w = projector_onto_range(p.w.data());
  const RealVector x_perp = (i_q - p_w) * p.x;
  const RealVector drive = s.root * (p.a.transpose() * (p.a * x_perp));

  // (i) geometric series vs pseudo-inverse resummation
  RealVector acc = RealVector::Zero(q);
  RealVector term = drive;
  for (std::uint64_t k = 0; k < t; ++k) {
    acc += term;
    term = step * term;
  }
  const RealMatrix step_t = matrix_power(step, t);
  const RealVector lhs1 = p.eta * acc;
  const RealVector rhs1 = pinv(b) * ((i_q - step_t) * drive);
  const double r1 = (lhs1 - rhs1).cwiseAbs().maxCoeff();

  // (ii) propagator decomposition through P_B and its complement
  const RealMatrix lhs2 = s.root * step_t * s.pinv_root;
  const RealMatrix rhs2 = s.root * p_b * step_t * p_b * s.pinv_root +
                          s.root * matrix_power(RealMatrix(p_b_perp * p_w * p_b_perp), t) *
                              s.pinv_root;
  const double r2 = (lhs2 - rhs2).cwiseAbs().maxCoeff();

  // (iii) alternating-projection limit at n = 200
  const RealMatrix prod = matrix_power(RealMatrix(p_b_perp * p_w * p_b_perp), 200);
  const RealMatrix p_cap = subspace_intersection_projector(p_b_perp, p_w);
  const double r3 = (prod - p_cap).cwiseAbs().maxCoeff();

  return std::max({r1, r2, r3});
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "t,bias,variance,mse,empirical_mse,stderr\n";
  char buf[200];
  for (const auto& pt : pts) {
    std::snprintf(buf, sizeof(buf), "%llu,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  static_cast<unsigned long long>(pt.t), pt.bias, pt.variance, pt.mse,
                  pt.empirical_mse, pt.stderr_);
    out << buf;
  }
}

}  // namespace ntkdip

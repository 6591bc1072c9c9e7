#include "ntkdip/ntk.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace ntkdip {

KernelMatrix::KernelMatrix(RealMatrix w) : data_(std::move(w)) {
  require(data_.rows() == data_.cols(), "KernelMatrix: not square");
  const double asym = (data_ - RealMatrix(data_.transpose())).cwiseAbs().maxCoeff();
  require(asym <= 1e-10, "KernelMatrix: not symmetric");
}

void KernelMatrix::ensure_eig() const {
  if (has_eig_) return;
  const Eigen::MatrixXd sym = data_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  eigvals_ = es.eigenvalues().reverse();
  eigvecs_ = es.eigenvectors().rowwise().reverse();
  if (eigvals_.size() && eigvals_.minCoeff() < -1e-9)
    throw NotPsdError("KernelMatrix: eigenvalue below -1e-9");
  has_eig_ = true;
}

const RealVector& KernelMatrix::eigenvalues() const {
  ensure_eig();
  return eigvals_;
}

const RealMatrix& KernelMatrix::eigenvectors() const {
  ensure_eig();
  return eigvecs_;
}

Eigen::Index KernelMatrix::numerical_rank() const {
  ensure_eig();
  if (!eigvals_.size()) return 0;
  const double lam_max = std::max(eigvals_[0], 0.0);
  const double tau = rank_cutoff(dim(), dim(), lam_max);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i)
    if (eigvals_[i] > tau) ++r;
  return r;
}

KernelMatrix empirical_ntk_raw(const GeneratorNet& net, const RealVector& input) {
  const Eigen::Index n_out = net.output_len();
  if (n_out > 256) throw SizeError("empirical_ntk: output dimension > 256");
  // columns of J, one backward pass per output coordinate
  Eigen::MatrixXd j(net.weight_count(), n_out);
  RealVector cot = RealVector::Zero(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    cot[i] = 1.0;
    j.col(i) = net.backward_raw(input, cot).weights;
    cot[i] = 0.0;
  }
  Eigen::MatrixXd w = j.transpose() * j;
  return KernelMatrix(RealMatrix(0.5 * (w + w.transpose())));
}

KernelMatrix empirical_ntk(const GeneratorNet& net, const ComplexSignal& input) {
  return empirical_ntk_raw(net, net_input_vector(net, input));
}

RealMatrix decoder_angular_factor(const RealMatrix& u) {
  const Eigen::Index n = u.rows();
  RealVector norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    norms[i] = u.row(i).norm();
    if (norms[i] == 0.0) throw NotPsdError("expected_decoder_ntk: zero row in U");
  }
  RealMatrix angular(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double c = u.row(i).dot(u.row(j)) / (norms[i] * norms[j]);
      c = std::clamp(c, -1.0, 1.0);
      const double a = 0.5 * (1.0 - std::acos(c) / std::numbers::pi);
      angular(i, j) = a;
      angular(j, i) = a;
    }
  }
  return angular;
}

KernelMatrix expected_decoder_ntk(const RealMatrix& u) {
  const RealMatrix gram = u * u.transpose();
  return KernelMatrix(RealMatrix(decoder_angular_factor(u).cwiseProduct(gram)));
}

RealMatrix decoder_ntk_given_weights(const RealMatrix& u, const Eigen::MatrixXd& c) {
  require(c.rows() == u.cols(), "decoder kernel: C row count must match U");
  const Eigen::Index n = u.rows();
  const Eigen::Index k = c.cols();
  const double vl2 = 1.0 / static_cast<double>(k);  // v_l^2, same for every l
  const RealMatrix gram = u * u.transpose();
  RealMatrix acc = RealMatrix::Zero(n, n);
  for (Eigen::Index l = 0; l < k; ++l) {
    const RealVector pre = u * c.col(l);
    const RealVector s = (pre.array() > 0.0).cast<double>();
    acc += vl2 * (s * s.transpose());
  }
  return acc.cwiseProduct(gram);
}

KernelMatrix monte_carlo_decoder_ntk(const RealMatrix& u, Eigen::Index k,
                                     Eigen::Index trials, RngStream& rng) {
  require(trials >= 1, "monte_carlo_decoder_ntk: trials must be >= 1");
  const Eigen::Index n = u.rows();
  RealMatrix acc = RealMatrix::Zero(n, n);
  for (Eigen::Index t = 0; t < trials; ++t) {
    Eigen::MatrixXd c(u.cols(), k);
    for (Eigen::Index l = 0; l < k; ++l) c.col(l) = rng.normal_vector(u.cols());
    acc += decoder_ntk_given_weights(u, c);
  }
  acc /= static_cast<double>(trials);
  return KernelMatrix(RealMatrix(0.5 * (acc + RealMatrix(acc.transpose()))));
}

void write_kernel_csv(const std::filesystem::path& path, const KernelMatrix& w) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  char buf[40];
  for (Eigen::Index i = 0; i < w.dim(); ++i) {
    for (Eigen::Index j = 0; j < w.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", w.data()(i, j));
      out << buf << (j + 1 == w.dim() ? "\n" : ",");
    }
  }
}

}  // namespace ntkdip

#pragma once

#include <filesystem>

#include "ntkdip/generators.hpp"
#include "ntkdip/numerics.hpp"

namespace ntkdip {

/// Symmetric PSD kernel with a lazily computed eigendecomposition cache
/// (eigenvalues descending, eigenvectors orthonormal columns).
class KernelMatrix {
 public:
  explicit KernelMatrix(RealMatrix w);

  Eigen::Index dim() const { return data_.rows(); }
  const RealMatrix& data() const { return data_; }

  const RealVector& eigenvalues() const;
  const RealMatrix& eigenvectors() const;

  Eigen::Index numerical_rank() const;
  bool is_singular() const { return numerical_rank() < dim(); }

 private:
  void ensure_eig() const;
  RealMatrix data_;
  mutable bool has_eig_ = false;
  mutable RealVector eigvals_;
  mutable RealMatrix eigvecs_;
};

/// Empirical NTK W = J^T J with J the exact Jacobian of the flattened
/// network output with respect to all weights, one backward pass per output
/// coordinate. Guarded to output dimension <= 256.
KernelMatrix empirical_ntk(const GeneratorNet& net, const ComplexSignal& input);
KernelMatrix empirical_ntk_raw(const GeneratorNet& net, const RealVector& input);

/// Closed-form expected NTK of the two-layer decoder:
/// [W]_ij = 1/2 (1 - arccos(<u_i,u_j>/(|u_i||u_j|))/pi) * (U U^T)_ij,
/// normalized by sum_l v_l^2 = 1.
KernelMatrix expected_decoder_ntk(const RealMatrix& u);

/// The angular factor alone, without the Hadamard product with U U^T.
RealMatrix decoder_angular_factor(const RealMatrix& u);

/// Single-draw decoder kernel for explicit hidden weights C (columns c_l):
/// sum_l v_l^2 sigma'(U c_l) sigma'(U c_l)^T (.) U U^T.
RealMatrix decoder_ntk_given_weights(const RealMatrix& u, const Eigen::MatrixXd& c);

/// Monte-Carlo average of decoder kernels over Gaussian columns; converges
/// to expected_decoder_ntk as trials grow.
KernelMatrix monte_carlo_decoder_ntk(const RealMatrix& u, Eigen::Index k,
                                     Eigen::Index trials, RngStream& rng);

/// CSV dump of the kernel entries.
void write_kernel_csv(const std::filesystem::path& path, const KernelMatrix& w);

}  // namespace ntkdip

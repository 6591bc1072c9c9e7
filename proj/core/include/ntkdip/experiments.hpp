#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ntkdip/dip_train.hpp"
#include "ntkdip/kernel_dynamics.hpp"
#include "ntkdip/metrics.hpp"
#include "ntkdip/ntk.hpp"

namespace ntkdip {

/// Invalid experiment configuration; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  ///< optional sweep; defaults to {seed}
  Eigen::Index q = 64;
  int acceleration = 4;
  double sigma = 0.0;
  std::string net_arch = "conv-generator";  ///< or "two-layer-decoder"
  DipConfig dip;
  std::filesystem::path output_dir = "out";
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);
/// Throws ConfigError with a field diagnostic when the config is invalid.
void validate_config(const ExperimentConfig& cfg);

const std::vector<std::string>& experiment_names();

/// Runs one experiment for one seed, writing CSV/JSON/SVG artifacts into
/// cfg.output_dir. Deterministic: identical configs give identical bytes.
void run_experiment(const ExperimentConfig& cfg);

/// Fans cfg.seeds across `jobs` workers, each seed into its own
/// seed-<s>/ subdirectory.
void run_seed_sweep(const ExperimentConfig& cfg, int jobs);

/// Fourier peak concentration of one eigenvector in [0, 1]. Real vectors
/// fold the +/-f bins (a real Fourier mode splits its energy across the
/// conjugate pair); stacked re/im vectors are read as complex signals.
double fourier_peak_concentration(const RealVector& eigvec, bool complex_mode);

/// Mean peak concentration over the top dim/4 eigenvectors of the kernel;
/// 1 means perfectly Fourier-aligned.
double ntk_coherence(const KernelMatrix& w, bool complex_mode);

/// Coherence of the configured architecture's empirical NTK at size cfg.q.
double ntk_coherence(const ExperimentConfig& cfg);

// --- instance builders shared by experiments and verification suites ---

/// Unit square pulse of width q/4 centered in a length-q frame.
ComplexSignal square_signal(Eigen::Index q);

/// Haar-ish random orthogonal matrix (QR of a Gaussian draw).
RealMatrix random_orthogonal(Eigen::Index n, RngStream& rng);

/// Random SPD kernel with eigenvalues uniform in [lo, hi].
KernelMatrix random_psd_kernel(Eigen::Index q, RngStream& rng, double lo = 0.1,
                               double hi = 1.0);

/// Random PSD kernel of the given rank, nonzero eigenvalues in [lo, hi].
KernelMatrix random_low_rank_kernel(Eigen::Index q, Eigen::Index rank, RngStream& rng,
                                    double lo = 0.5, double hi = 2.0);

/// Gaussian p x q matrix, full row rank with probability one.
RealMatrix random_full_row_rank(Eigen::Index p, Eigen::Index q, RngStream& rng);

/// Complex Gaussian noise with E|n_i|^2 = sigma^2.
ComplexSignal complex_noise(Eigen::Index p, double sigma, RngStream& rng);

/// 2q x 2q kernel diag-of-two-copies in the real Fourier embedding:
/// the real form of a circulant complex kernel with eigenvalues lambdas.
RealMatrix circulant_kernel_embedding(const RealVector& lambdas);

}  // namespace ntkdip

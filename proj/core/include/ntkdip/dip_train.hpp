#pragma once

#include <optional>
#include <string>

#include "ntkdip/generators.hpp"
#include "ntkdip/metrics.hpp"
#include "ntkdip/operators.hpp"

namespace ntkdip {

enum class DipVariant { Vanilla, ReferenceGuided, SelfGuided };

struct DipConfig {
  DipVariant variant = DipVariant::Vanilla;
  std::uint64_t iters = 2000;
  double theta_lr = 3e-4;           ///< Adam rate for the network weights
  double input_lr = 1e-1;           ///< Adam rate for the input (self-guided)
  double alpha = 1.0;               ///< weight of the denoiser regularizer
  Eigen::Index eta_draws = 4;       ///< forward passes per expectation estimate
  double noise_scale_frac = 0.5;    ///< m = frac * max |z|
  bool eta_zero_mean = false;       ///< center the U(0, m) draws at zero
  RngStream rng{0, 0};
  std::uint64_t eval_every = 10;
};

struct IterationRecord {
  std::uint64_t iter = 0;
  double loss = 0.0;
  double data_fidelity = 0.0;
  double regularizer = 0.0;
  std::optional<double> psnr_vs_truth;
  std::optional<double> rmse_vs_truth;
  std::optional<BandNmse> band_nmse_vs_truth;
};

struct RunReport {
  std::vector<IterationRecord> rows;
  ComplexSignal final_recon;
  ComplexSignal corrected_recon;  ///< empty until finalize_with_correction
  ComplexSignal best_recon;       ///< best evaluated iterate (needs truth)
  double final_psnr = std::numeric_limits<double>::quiet_NaN();
  double best_psnr = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t best_iter = 0;
  RealVector final_weights;
  RealVector final_input;  ///< optimized z (self-guided)
  /// (iter, z) snapshots at evaluated iterations, self-guided only.
  std::vector<std::pair<std::uint64_t, RealVector>> input_trajectory;
  std::vector<std::string> warnings;
};

/// Optional ground truth for per-iteration PSNR / band-NMSE logging.
struct EvalContext {
  std::optional<ComplexSignal> truth;
  std::optional<BandMasks> bands;
};

/// Vanilla DIP: fit theta to min |A f_theta(z) - y|^2 with a fixed random
/// Gaussian input drawn once from cfg.rng.
RunReport train_vanilla(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                        const DipConfig& cfg, const EvalContext& eval = {});

/// Same objective but the input is pinned to the given reference image.
RunReport train_reference_guided(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                                 const ComplexSignal& reference, const DipConfig& cfg,
                                 const EvalContext& eval = {});

/// Joint optimization of weights and input:
///   min_theta,z |A E_eta[f_theta(z + eta)] - y|^2
///              + alpha |E_eta[f_theta(z + eta)] - z|^2
/// with the expectation estimated inside the norms by cfg.eta_draws fresh
/// per-entry U(0, m) draws each iteration, m = noise_scale_frac * max|z|.
/// z starts at the adjoint (zero-filled) reconstruction of y.
RunReport train_self_guided(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                            const DipConfig& cfg, const EvalContext& eval = {});

/// Data-correction post-pass over report.final_recon.
RunReport finalize_with_correction(const LinearMap& map, const ComplexSignal& y,
                                   RunReport report);

void write_report_csv(const std::filesystem::path& path, const RunReport& report);
void write_report_json(const std::filesystem::path& path, const RunReport& report,
                       const DipConfig& cfg);

}  // namespace ntkdip

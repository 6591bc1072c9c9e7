#pragma once

#include <optional>

#include "ntkdip/kernel_dynamics.hpp"
#include "ntkdip/numerics.hpp"
#include "ntkdip/operators.hpp"

namespace ntkdip {

/// Disjoint low/mid/high frequency-band masks, symmetric about DC, together
/// covering every frequency.
struct BandMasks {
  std::vector<int> low, mid, high;
};

/// Default band cutoffs in units of the Nyquist frequency:
/// low |f| <= 0.1 f_N, mid (0.1, 0.4], high (0.4, 1].
BandMasks build_band_masks(Eigen::Index q, double low_cut = 0.1, double high_cut = 0.4);

/// 20 log10(max|truth| / rmse(|recon| - |truth|)) in dB, computed on
/// magnitudes. Identical signals report the 300 dB sentinel.
double psnr(const ComplexSignal& recon, const ComplexSignal& truth);

struct BandNmse {
  std::optional<double> low, mid, high;  ///< empty when a band has no truth energy
};

/// Eq-style banded k-space error: per band,
/// sum_c |M_band (F S_c recon - y_c)|^2 / sum_c |M_band y_c|^2, with y_c the
/// fully sampled truth k-space of each coil.
BandNmse band_nmse(const ComplexSignal& recon, const std::vector<ComplexSignal>& truth_kspace,
                   const LinearMap& maps, const BandMasks& bands);

struct BiasVarianceEstimate {
  double bias_sq = 0.0;
  double variance = 0.0;
  double mse = 0.0;     ///< mean over draws of |z_t - x|^2
  double stderr_ = 0.0;  ///< standard error of the mse estimate
};

/// Monte-Carlo bias/variance of z_t over fresh noise draws, one closed-form
/// evaluation per draw, per-trial rng streams and pairwise-sum reductions.
BiasVarianceEstimate empirical_bias_variance(const DynamicsProblem& problem, std::uint64_t t,
                                             Eigen::Index trials, const RngStream& rng);

}  // namespace ntkdip

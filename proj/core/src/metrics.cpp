#include "ntkdip/metrics.hpp"

#include <cmath>

namespace ntkdip {

BandMasks build_band_masks(Eigen::Index q, double low_cut, double high_cut) {
  require(q >= 2, "band masks: q too small");
  require(0.0 < low_cut && low_cut < high_cut && high_cut < 1.0, "band masks: bad cutoffs");
  BandMasks b;
  b.low.assign(static_cast<std::size_t>(q), 0);
  b.mid.assign(static_cast<std::size_t>(q), 0);
  b.high.assign(static_cast<std::size_t>(q), 0);
  const double f_nyq = static_cast<double>(q) / 2.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double d = static_cast<double>(std::min(i, q - i)) / f_nyq;
    if (d <= low_cut)
      b.low[static_cast<std::size_t>(i)] = 1;
    else if (d <= high_cut)
      b.mid[static_cast<std::size_t>(i)] = 1;
    else
      b.high[static_cast<std::size_t>(i)] = 1;
  }
  return b;
}

double psnr(const ComplexSignal& recon, const ComplexSignal& truth) {
  require(recon.len() == truth.len(), "psnr: length mismatch");
  const RealVector mt = truth.magnitudes();
  const double peak = mt.size() ? mt.maxCoeff() : 0.0;
  if (peak <= 0.0) throw MetricError("psnr: all-zero truth");
  const RealVector diff = recon.magnitudes() - mt;
  const double rmse = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  if (rmse == 0.0) return 300.0;
  return std::min(300.0, 20.0 * std::log10(peak / rmse));
}

namespace {

double band_energy(const ComplexSignal& k, const std::vector<int>& band) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < k.len(); ++i)
    if (band[static_cast<std::size_t>(i)]) e += k.re[i] * k.re[i] + k.im[i] * k.im[i];
  return e;
}

}  // namespace

BandNmse band_nmse(const ComplexSignal& recon, const std::vector<ComplexSignal>& truth_kspace,
                   const LinearMap& maps, const BandMasks& bands) {
  const Eigen::Index q = recon.len();
  require(maps.in_dim() == q, "band_nmse: recon length mismatch");
  require(!truth_kspace.empty(), "band_nmse: need truth k-space");
  const Eigen::Index n_coils =
      maps.kind() == MapKind::CoilComposite ? maps.num_coils() : Eigen::Index{1};
  require(static_cast<Eigen::Index>(truth_kspace.size()) == n_coils,
          "band_nmse: one truth k-space per coil");

  // full (unmasked) k-space of the reconstruction, per coil
  std::vector<ComplexSignal> recon_kspace;
  for (Eigen::Index c = 0; c < n_coils; ++c) {
    ComplexSignal img = recon;
    if (maps.kind() == MapKind::CoilComposite) {
      const auto& s = maps.coil_maps()[static_cast<std::size_t>(c)];
      img = ComplexSignal{s.re.cwiseProduct(recon.re) - s.im.cwiseProduct(recon.im),
                          s.re.cwiseProduct(recon.im) + s.im.cwiseProduct(recon.re)};
    }
    recon_kspace.push_back(fft(img));
  }

  auto one_band = [&](const std::vector<int>& band) -> std::optional<double> {
    double num = 0.0, den = 0.0;
    for (Eigen::Index c = 0; c < n_coils; ++c) {
      require(truth_kspace[static_cast<std::size_t>(c)].len() == q,
              "band_nmse: truth k-space length mismatch");
      const ComplexSignal diff = recon_kspace[static_cast<std::size_t>(c)] -
                                 truth_kspace[static_cast<std::size_t>(c)];
      num += band_energy(diff, band);
      den += band_energy(truth_kspace[static_cast<std::size_t>(c)], band);
    }
    if (den <= 0.0) return std::nullopt;
    return num / den;
  };

  return {one_band(bands.low), one_band(bands.mid), one_band(bands.high)};
}

BiasVarianceEstimate empirical_bias_variance(const DynamicsProblem& problem, std::uint64_t t,
                                             Eigen::Index trials, const RngStream& rng) {
  require(trials >= 2, "empirical_bias_variance: need at least 2 trials");
  const Eigen::Index p_dim = problem.a.rows();
  const Eigen::Index q = problem.a.cols();

  if (problem.sigma == 0.0) {
    // every draw is the same evaluation; variance is identically zero
    const RealVector z = closed_form_zt_raw(problem, RealVector::Zero(p_dim), t);
    BiasVarianceEstimate out;
    out.bias_sq = (z - problem.x).squaredNorm();
    out.mse = out.bias_sq;
    return out;
  }

  std::vector<RealVector> draws(static_cast<std::size_t>(trials));
  for (Eigen::Index i = 0; i < trials; ++i) {
    RngStream trial_rng(rng.seed(), rng.stream_id() + 1 + static_cast<std::uint64_t>(i));
    const RealVector noise = trial_rng.normal_vector(p_dim, problem.sigma);
    draws[static_cast<std::size_t>(i)] = closed_form_zt_raw(problem, noise, t);
  }

  RealVector mean = RealVector::Zero(q);
  // pairwise per-coordinate reduction keeps the mean identical however the
  // trials were scheduled
  std::vector<double> coord(static_cast<std::size_t>(trials));
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = 0; i < trials; ++i)
      coord[static_cast<std::size_t>(i)] = draws[static_cast<std::size_t>(i)][j];
    mean[j] = pairwise_sum(coord) / static_cast<double>(trials);
  }

  std::vector<double> dev(static_cast<std::size_t>(trials));
  std::vector<double> err(static_cast<std::size_t>(trials));
  for (Eigen::Index i = 0; i < trials; ++i) {
    dev[static_cast<std::size_t>(i)] = (draws[static_cast<std::size_t>(i)] - mean).squaredNorm();
    err[static_cast<std::size_t>(i)] = (draws[static_cast<std::size_t>(i)] - problem.x).squaredNorm();
  }

  BiasVarianceEstimate out;
  out.bias_sq = (mean - problem.x).squaredNorm();
  out.variance = pairwise_sum(dev) / static_cast<double>(trials - 1);
  out.mse = pairwise_sum(err) / static_cast<double>(trials);
  std::vector<double> sq(static_cast<std::size_t>(trials));
  for (Eigen::Index i = 0; i < trials; ++i) {
    const double d = err[static_cast<std::size_t>(i)] - out.mse;
    sq[static_cast<std::size_t>(i)] = d * d;
  }
  const double var_of_err = pairwise_sum(sq) / static_cast<double>(trials - 1);
  out.stderr_ = std::sqrt(var_of_err / static_cast<double>(trials));
  return out;
}

}  // namespace ntkdip

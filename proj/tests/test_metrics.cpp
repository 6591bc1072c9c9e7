#include <doctest.h>

#include <cmath>

#include "ntkdip/experiments.hpp"
#include "ntkdip/metrics.hpp"

using namespace ntkdip;

namespace {

ComplexSignal random_signal(Eigen::Index n, RngStream& rng) {
  return {rng.normal_vector(n), rng.normal_vector(n)};
}

}  // namespace

TEST_CASE("band masks: disjoint, covering, symmetric about DC") {
  const BandMasks b = build_band_masks(64);
  for (Eigen::Index i = 0; i < 64; ++i) {
    const int total = b.low[static_cast<std::size_t>(i)] + b.mid[static_cast<std::size_t>(i)] +
                      b.high[static_cast<std::size_t>(i)];
    CHECK(total == 1);
    const Eigen::Index j = (64 - i) % 64;
    CHECK(b.low[static_cast<std::size_t>(i)] == b.low[static_cast<std::size_t>(j)]);
    CHECK(b.high[static_cast<std::size_t>(i)] == b.high[static_cast<std::size_t>(j)]);
  }
  CHECK(b.low[0] == 1);   // DC
  CHECK(b.high[32] == 1);  // Nyquist
}

TEST_CASE("psnr: identical signals hit the sentinel") {
  RngStream rng(3, 0);
  const ComplexSignal s = random_signal(16, rng);
  CHECK(psnr(s, s) == 300.0);
}

TEST_CASE("psnr: formula check at rmse 0.1, peak 1") {
  const Eigen::Index q = 8;
  ComplexSignal truth = ComplexSignal::zeros(q);
  truth.re.setConstant(1.0);  // peak magnitude 1
  ComplexSignal recon = truth;
  recon.re.array() += 0.1;  // |recon| - |truth| = 0.1 everywhere
  CHECK(psnr(recon, truth) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr: matches the direct two-line oracle on random pairs") {
  RngStream rng(5, 0);
  const ComplexSignal truth = random_signal(64, rng);
  const ComplexSignal recon = random_signal(64, rng);
  const RealVector diff = recon.magnitudes() - truth.magnitudes();
  const double oracle =
      20.0 * std::log10(truth.magnitudes().maxCoeff() /
                        std::sqrt(diff.squaredNorm() / 64.0));
  CHECK(psnr(recon, truth) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("psnr: all-zero truth is undefined") {
  CHECK_THROWS_AS(psnr(ComplexSignal::zeros(4), ComplexSignal::zeros(4)), MetricError);
}

TEST_CASE("psnr: added noise lowers it almost surely") {
  RngStream rng(7, 0);
  const ComplexSignal truth = random_signal(64, rng);
  const ComplexSignal recon = truth;  // start at the sentinel? no: perturb slightly
  ComplexSignal base = truth;
  base.re.array() += 0.01;
  const double base_psnr = psnr(base, truth);
  int decreased = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RngStream noise_rng(7, 10 + static_cast<std::uint64_t>(trial));
    ComplexSignal noisy = base;
    noisy.re += noise_rng.normal_vector(64, 0.05);
    noisy.im += noise_rng.normal_vector(64, 0.05);
    if (psnr(noisy, truth) < base_psnr) ++decreased;
  }
  CHECK(decreased >= 99);
}

TEST_CASE("band_nmse: exact reconstruction scores zero, zero scores one") {
  RngStream rng(11, 0);
  const Eigen::Index q = 32;
  const ComplexSignal truth = random_signal(q, rng);
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  const std::vector<ComplexSignal> kspace = {fft(truth)};
  const BandMasks bands = build_band_masks(q);

  const BandNmse perfect = band_nmse(truth, kspace, map, bands);
  CHECK(*perfect.low == doctest::Approx(0.0));
  CHECK(*perfect.mid == doctest::Approx(0.0));
  CHECK(*perfect.high == doctest::Approx(0.0));

  const BandNmse zero = band_nmse(ComplexSignal::zeros(q), kspace, map, bands);
  CHECK(*zero.low == doctest::Approx(1.0));
  CHECK(*zero.mid == doctest::Approx(1.0));
  CHECK(*zero.high == doctest::Approx(1.0));
}

TEST_CASE("band_nmse: low-pass filtering isolates the high band") {
  RngStream rng(13, 0);
  const Eigen::Index q = 32;
  const ComplexSignal truth = random_signal(q, rng);
  const BandMasks bands = build_band_masks(q);
  ComplexSignal k = fft(truth);
  for (Eigen::Index i = 0; i < q; ++i) {
    if (bands.high[static_cast<std::size_t>(i)]) {
      k.re[i] = 0.0;
      k.im[i] = 0.0;
    }
  }
  const ComplexSignal lowpassed = ifft(k);
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  const BandNmse r = band_nmse(lowpassed, {fft(truth)}, map, bands);
  CHECK(*r.high == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(*r.low == doctest::Approx(0.0));
  CHECK(*r.mid == doctest::Approx(0.0));
}

TEST_CASE("band_nmse: global phase rotation leaves it unchanged") {
  RngStream rng(17, 0);
  const Eigen::Index q = 32;
  const ComplexSignal truth = random_signal(q, rng);
  const ComplexSignal recon = random_signal(q, rng);
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  const BandMasks bands = build_band_masks(q);
  const BandNmse before = band_nmse(recon, {fft(truth)}, map, bands);

  const double c = std::cos(0.73), s = std::sin(0.73);
  auto rotate = [&](const ComplexSignal& v) {
    return ComplexSignal{c * v.re - s * v.im, s * v.re + c * v.im};
  };
  const BandNmse after = band_nmse(rotate(recon), {fft(rotate(truth))}, map, bands);
  CHECK(*after.low == doctest::Approx(*before.low).epsilon(1e-10));
  CHECK(*after.mid == doctest::Approx(*before.mid).epsilon(1e-10));
  CHECK(*after.high == doctest::Approx(*before.high).epsilon(1e-10));
}

TEST_CASE("band_nmse: a band with no truth energy is reported missing") {
  const Eigen::Index q = 32;
  ComplexSignal dc = ComplexSignal::zeros(q);
  dc.re.setConstant(1.0);  // spectrum concentrated at DC
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  const BandNmse r = band_nmse(dc, {fft(dc)}, map, build_band_masks(q));
  CHECK(r.low.has_value());
  CHECK(!r.mid.has_value());
  CHECK(!r.high.has_value());
}

TEST_CASE("empirical_bias_variance: deterministic draws at sigma = 0") {
  RngStream rng(19, 0);
  const Eigen::Index q = 12, pdim = 6;
  KernelMatrix w = random_psd_kernel(q, rng);
  RealMatrix a = random_full_row_rank(pdim, q, rng);
  DynamicsProblem p(std::move(a), std::move(w), rng.normal_vector(q), 0.0, 0.0, false);
  p.eta = 0.5 / p.b_norm();
  const TheoremPrediction pred = theorem2_mse(p, 9);
  const BiasVarianceEstimate est = empirical_bias_variance(p, 9, 16, RngStream(19, 7));
  CHECK(est.variance == 0.0);
  CHECK(est.bias_sq == doctest::Approx(pred.bias_curve[9]).epsilon(1e-9));
}

TEST_CASE("empirical_bias_variance: zero iterations pin bias to |x|^2") {
  RngStream rng(23, 0);
  const Eigen::Index q = 10, pdim = 5;
  KernelMatrix w = random_psd_kernel(q, rng);
  RealMatrix a = random_full_row_rank(pdim, q, rng);
  const RealVector x = rng.normal_vector(q);
  DynamicsProblem p(std::move(a), std::move(w), x, 0.3, 0.0, false);
  p.eta = 0.5 / p.b_norm();
  const BiasVarianceEstimate est = empirical_bias_variance(p, 0, 8, RngStream(23, 7));
  CHECK(est.bias_sq == doctest::Approx(x.squaredNorm()));
  CHECK(est.variance == 0.0);
}

TEST_CASE("empirical_bias_variance: estimate agrees with the closed form") {
  RngStream rng(29, 0);
  const Eigen::Index q = 16, pdim = 8;
  KernelMatrix w = random_psd_kernel(q, rng);
  RealMatrix a = random_full_row_rank(pdim, q, rng);
  DynamicsProblem p(std::move(a), std::move(w), rng.normal_vector(q), 0.1, 0.0, false);
  p.eta = 0.5 / p.b_norm();
  const TheoremPrediction pred = theorem2_mse(p, 12);
  const BiasVarianceEstimate est = empirical_bias_variance(p, 12, 2000, RngStream(29, 7));
  CHECK(std::abs(est.bias_sq + est.variance - pred.mse_curve[12]) < 3.0 * est.stderr_);
  CHECK(std::abs(est.mse - pred.mse_curve[12]) < 3.0 * est.stderr_);
}

TEST_CASE("empirical_bias_variance: stderr follows 1/sqrt(N)") {
  RngStream rng(31, 0);
  const Eigen::Index q = 12, pdim = 6;
  KernelMatrix w = random_psd_kernel(q, rng);
  RealMatrix a = random_full_row_rank(pdim, q, rng);
  DynamicsProblem p(std::move(a), std::move(w), rng.normal_vector(q), 0.2, 0.0, false);
  p.eta = 0.5 / p.b_norm();
  const BiasVarianceEstimate half = empirical_bias_variance(p, 8, 600, RngStream(31, 7));
  const BiasVarianceEstimate full = empirical_bias_variance(p, 8, 1200, RngStream(31, 900));
  const double ratio = full.stderr_ / half.stderr_;
  CHECK(ratio > 0.8 / std::sqrt(2.0));
  CHECK(ratio < 1.2 / std::sqrt(2.0));
}

TEST_CASE("empirical_bias_variance: identical streams reproduce bit-identical results") {
  RngStream rng(37, 0);
  const Eigen::Index q = 8, pdim = 4;
  KernelMatrix w = random_psd_kernel(q, rng);
  RealMatrix a = random_full_row_rank(pdim, q, rng);
  DynamicsProblem p(std::move(a), std::move(w), rng.normal_vector(q), 0.15, 0.0, false);
  p.eta = 0.5 / p.b_norm();
  const BiasVarianceEstimate e1 = empirical_bias_variance(p, 6, 64, RngStream(37, 7));
  const BiasVarianceEstimate e2 = empirical_bias_variance(p, 6, 64, RngStream(37, 7));
  CHECK(e1.mse == e2.mse);
  CHECK(e1.variance == e2.variance);
  CHECK(e1.stderr_ == e2.stderr_);
}

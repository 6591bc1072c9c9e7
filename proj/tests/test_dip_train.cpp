#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ntkdip/dip_train.hpp"
#include "ntkdip/experiments.hpp"

using namespace ntkdip;

namespace {

DipConfig base_config(std::uint64_t seed, std::uint64_t iters) {
  DipConfig cfg;
  cfg.iters = iters;
  cfg.eval_every = 10;
  cfg.rng = RngStream(seed, 0);
  return cfg;
}

std::uint64_t first_iter_below(const RunReport& r, double threshold) {
  for (const auto& row : r.rows)
    if (row.loss < threshold) return row.iter;
  return std::numeric_limits<std::uint64_t>::max();
}

}  // namespace

TEST_CASE("train_vanilla: realizable problem drives the loss to ~0") {
  const Eigen::Index q = 8;
  const LinearMap identity = LinearMap::inpainting(std::vector<int>(q, 1));
  RngStream rng(1, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};

  GeneratorNet net = GeneratorNet::dense(2 * q, 2 * q);
  RngStream init_rng(1, 1);
  net = init_weights(std::move(net), 1e-4, init_rng);

  DipConfig cfg = base_config(1, 5000);
  cfg.theta_lr = 3e-4;
  const RunReport report = train_vanilla(net, identity, x, cfg);
  CHECK(report.rows.back().loss <= 1e-6);
}

TEST_CASE("train_vanilla: one iteration is exactly one Adam step") {
  const Eigen::Index q = 8;
  const LinearMap map = LinearMap::masked_fourier({1, 1, 1, 0, 1, 0, 0, 0});
  RngStream rng(2, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};
  const ComplexSignal y = apply(map, x);

  GeneratorNet net = GeneratorNet::dense(2 * q, 2 * q);
  RngStream init_rng(2, 1);
  net = init_weights(std::move(net), 0.01, init_rng);

  DipConfig cfg = base_config(2, 1);
  const RunReport report = train_vanilla(net, map, y, cfg);

  // replay the single step by hand
  RngStream replay(2, 0);
  const RealVector z = replay.normal_vector(net.input_len());
  const ComplexSignal recon = ComplexSignal::from_stacked(net.forward_raw(z));
  const ComplexSignal resid = apply(map, recon) - y;
  const RealVector cot = adjoint(map, resid).scaled(2.0).stacked();
  const RealVector grad = net.backward_raw(z, cot).weights;
  AdamState st(net.weight_count(), cfg.theta_lr);
  const RealVector expect = adam_step(st, net.weights(), grad);
  CHECK((report.final_weights - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train_vanilla: aborts on a non-finite loss") {
  const Eigen::Index q = 8;
  const LinearMap map = LinearMap::inpainting(std::vector<int>(q, 1));
  GeneratorNet net = GeneratorNet::dense(2 * q, 2 * q);
  RealVector bad = RealVector::Zero(net.weight_count());
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  net.set_weights(bad);
  const DipConfig cfg = base_config(3, 10);
  CHECK_THROWS_AS(train_vanilla(net, map, ComplexSignal::zeros(q), cfg), TrainingError);
}

TEST_CASE("train_vanilla: windowed median loss is non-increasing on realizable problems") {
  const Eigen::Index q = 8;
  const LinearMap identity = LinearMap::inpainting(std::vector<int>(q, 1));
  RngStream rng(5, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};
  GeneratorNet net = GeneratorNet::dense(2 * q, 2 * q);
  RngStream init_rng(5, 1);
  net = init_weights(std::move(net), 1e-4, init_rng);
  DipConfig cfg = base_config(5, 3000);
  const RunReport report = train_vanilla(net, identity, x, cfg);

  // medians over windows of 100 iterations (10 logged rows each)
  std::vector<double> medians;
  for (std::size_t start = 1; start + 10 <= report.rows.size(); start += 10) {
    std::vector<double> window;
    for (std::size_t i = start; i < start + 10; ++i) window.push_back(report.rows[i].loss);
    std::nth_element(window.begin(), window.begin() + 5, window.end());
    medians.push_back(window[5]);
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] <= medians[i - 1] * (1 + 1e-9));
}

TEST_CASE("train_reference_guided: truth reference converges at least as fast as vanilla") {
  // paired runs at fixed matched seeds; fully deterministic
  const Eigen::Index q = 16;
  const LinearMap identity = LinearMap::inpainting(std::vector<int>(q, 1));
  RngStream xr(99, 0);
  const ComplexSignal x{xr.normal_vector(q), xr.normal_vector(q)};

  for (std::uint64_t seed : {7ULL, 9ULL, 11ULL}) {
    GeneratorNet net = GeneratorNet::conv_generator(q, 8);
    RngStream init_rng(seed, 1);
    net = init_weights(std::move(net), 0.05, init_rng);

    DipConfig cfg = base_config(seed, 6000);
    cfg.theta_lr = 1e-3;
    const RunReport vanilla = train_vanilla(net, identity, x, cfg);
    const RunReport guided = train_reference_guided(net, identity, x, x, cfg);
    CHECK(first_iter_below(guided, 1e-4) <= first_iter_below(vanilla, 1e-4));
    CHECK(guided.rows.back().loss < 1e-6);
  }
}

TEST_CASE("train_reference_guided: near-truth reference beats vanilla's best at 2x") {
  const Eigen::Index q = 32;
  RngStream mask_rng(11, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 2, mask_rng));
  const ComplexSignal x = square_signal(q);
  const ComplexSignal y = apply(map, x);

  GeneratorNet net = GeneratorNet::conv_generator(q, 8);
  RngStream init_rng(11, 2);
  net = init_weights(std::move(net), 0.05, init_rng);

  EvalContext eval;
  eval.truth = x;

  DipConfig cfg = base_config(11, 1500);
  cfg.theta_lr = 1e-2;
  const RunReport vanilla = train_vanilla(net, map, y, cfg, eval);

  RngStream perturb(11, 3);
  ComplexSignal reference = x;
  reference.re += perturb.normal_vector(q, 0.02);
  reference.im += perturb.normal_vector(q, 0.02);
  const RunReport guided = train_reference_guided(net, map, y, reference, cfg, eval);

  CHECK(guided.final_psnr >= vanilla.best_psnr);
}

TEST_CASE("train_self_guided: estimator placement and identity-net regularizer expectation") {
  // identity network, zero-mean eta: at the first iteration the logged
  // regularizer is |mean eta|^2 and the data term equals it through a
  // unitary A. Expectation under the 4-draw estimator: dim * Var(eta)/4.
  const Eigen::Index q = 16;
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  RngStream rng(13, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};
  const ComplexSignal y = apply(map, x);

  GeneratorNet net = GeneratorNet::dense(2 * q, 2 * q);
  RealVector ident = RealVector::Zero(net.weight_count());
  for (Eigen::Index i = 0; i < 2 * q; ++i) ident[i * 2 * q + i] = 1.0;
  net.set_weights(ident);

  const RealVector z0 = adjoint(map, y).stacked();
  const double m = 0.5 * ComplexSignal::from_stacked(z0).magnitudes().maxCoeff();
  // eta ~ U(-m/2, m/2) per stacked entry: Var = m^2/12, averaged over 4 draws
  const double expected = static_cast<double>(2 * q) * m * m / 12.0 / 4.0;

  double reg_sum = 0.0, df_sum = 0.0, reg_sq = 0.0;
  const int runs = 400;
  for (int run = 0; run < runs; ++run) {
    DipConfig cfg = base_config(1000 + static_cast<std::uint64_t>(run), 1);
    cfg.variant = DipVariant::SelfGuided;
    cfg.eta_zero_mean = true;
    cfg.theta_lr = 0.0;  // single iteration, updates are irrelevant
    cfg.input_lr = 0.0;
    const RunReport r = train_self_guided(net, map, y, cfg);
    reg_sum += r.rows.front().regularizer;
    df_sum += r.rows.front().data_fidelity;
    reg_sq += r.rows.front().regularizer * r.rows.front().regularizer;
  }
  const double reg_mean = reg_sum / runs;
  const double df_mean = df_sum / runs;
  const double reg_stderr =
      std::sqrt((reg_sq / runs - reg_mean * reg_mean) / (runs - 1));
  CHECK(std::abs(reg_mean - expected) < 3.0 * reg_stderr);
  // the data term goes through a unitary A: same statistic, and four times
  // smaller than an expectation-outside-the-norm placement would give
  CHECK(std::abs(df_mean - expected) < 3.0 * reg_stderr);
  CHECK(df_mean < 2.0 * expected);  // outside placement would sit at 4x
}

TEST_CASE("train_self_guided: huge alpha pins the reconstruction to the input") {
  const Eigen::Index q = 16;
  RngStream mask_rng(17, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 2, mask_rng));
  const ComplexSignal x = square_signal(q);
  const ComplexSignal y = apply(map, x);

  GeneratorNet net = GeneratorNet::conv_generator(q, 8);
  RngStream init_rng(17, 2);
  net = init_weights(std::move(net), 0.05, init_rng);

  DipConfig cfg = base_config(17, 2500);
  cfg.variant = DipVariant::SelfGuided;
  cfg.alpha = 1e6;
  cfg.theta_lr = 1e-2;
  const RunReport r = train_self_guided(net, map, y, cfg);
  const double drift = (r.final_recon.stacked() - r.final_input).norm();
  CHECK(drift <= 1e-2 * r.final_input.norm());
}

TEST_CASE("train_self_guided: identical rng reproduces the whole report") {
  const Eigen::Index q = 16;
  RngStream mask_rng(19, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 2, mask_rng));
  const ComplexSignal x = square_signal(q);
  const ComplexSignal y = apply(map, x);
  GeneratorNet net = GeneratorNet::conv_generator(q, 8);
  RngStream init_rng(19, 2);
  net = init_weights(std::move(net), 0.05, init_rng);

  DipConfig cfg = base_config(19, 200);
  cfg.variant = DipVariant::SelfGuided;
  const RunReport a = train_self_guided(net, map, y, cfg);
  const RunReport b = train_self_guided(net, map, y, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].regularizer == b.rows[i].regularizer);
  }
  CHECK((a.final_recon - b.final_recon).norm() == 0.0);
  CHECK((a.final_input - b.final_input).norm() == 0.0);
}

TEST_CASE("train_self_guided: alpha 0 is allowed but flagged") {
  const Eigen::Index q = 16;
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  RngStream rng(23, 0);
  const ComplexSignal y{rng.normal_vector(q), rng.normal_vector(q)};
  GeneratorNet net = GeneratorNet::conv_generator(q, 8);
  RngStream init_rng(23, 1);
  net = init_weights(std::move(net), 0.05, init_rng);
  DipConfig cfg = base_config(23, 20);
  cfg.alpha = 0.0;
  const RunReport r = train_self_guided(net, map, y, cfg);
  CHECK(!r.warnings.empty());
}

TEST_CASE("loss decomposes into data fidelity plus alpha times regularizer") {
  const Eigen::Index q = 16;
  RngStream mask_rng(29, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 2, mask_rng));
  const ComplexSignal x = square_signal(q);
  const ComplexSignal y = apply(map, x);
  GeneratorNet net = GeneratorNet::conv_generator(q, 8);
  RngStream init_rng(29, 2);
  net = init_weights(std::move(net), 0.05, init_rng);

  DipConfig cfg = base_config(29, 150);
  cfg.alpha = 0.7;
  const RunReport r = train_self_guided(net, map, y, cfg);
  for (const auto& row : r.rows)
    CHECK(std::abs(row.loss - row.data_fidelity - cfg.alpha * row.regularizer) < 1e-9);
}

TEST_CASE("finalize_with_correction: consistent reconstructions are fixed points") {
  const Eigen::Index q = 16;
  RngStream mask_rng(31, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 2, mask_rng));
  RngStream rng(31, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};
  const ComplexSignal y = apply(map, x);

  RunReport report;
  report.final_recon = x;  // already consistent with y
  report = finalize_with_correction(map, y, std::move(report));
  CHECK((report.corrected_recon - x).norm() < 1e-12);

  RunReport zero_report;
  zero_report.final_recon = ComplexSignal::zeros(q);
  zero_report = finalize_with_correction(map, y, std::move(zero_report));
  CHECK((zero_report.corrected_recon - adjoint(map, y)).norm() < 1e-12);
}

TEST_CASE("finalize_with_correction: noise-free correction never hurts PSNR") {
  const Eigen::Index q = 32;
  RngStream mask_rng(37, 1);
  const LinearMap map = LinearMap::masked_fourier(variable_density_mask(q, 4, mask_rng));
  const ComplexSignal x = square_signal(q);
  const ComplexSignal y = apply(map, x);
  RngStream rng(37, 0);
  for (int rep = 0; rep < 10; ++rep) {
    ComplexSignal recon = x;
    recon.re += rng.normal_vector(q, 0.1);
    recon.im += rng.normal_vector(q, 0.1);
    const ComplexSignal corrected = data_correction(map, y, recon);
    CHECK(psnr(corrected, x) >= psnr(recon, x) - 1e-9);
  }
}

TEST_CASE("report csv and json are written") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ntkdip_report_test";
  fs::create_directories(dir);
  const Eigen::Index q = 16;
  const LinearMap map = LinearMap::masked_fourier(std::vector<int>(q, 1));
  RngStream rng(41, 0);
  const ComplexSignal x{rng.normal_vector(q), rng.normal_vector(q)};
  GeneratorNet net = GeneratorNet::conv_generator(q, 4);
  RngStream init_rng(41, 1);
  net = init_weights(std::move(net), 0.05, init_rng);
  DipConfig cfg = base_config(41, 30);
  EvalContext eval;
  eval.truth = x;
  eval.bands = build_band_masks(q);
  const RunReport r = train_vanilla(net, map, apply(map, x), cfg, eval);
  write_report_csv(dir / "report.csv", r);
  write_report_json(dir / "summary.json", r, cfg);
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::file_size(dir / "report.csv") > 0);
  fs::remove_all(dir);
}

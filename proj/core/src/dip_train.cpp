#include "ntkdip/dip_train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ntkdip {

namespace {

struct Evaluator {
  const LinearMap& map;
  const EvalContext& eval;
  std::vector<ComplexSignal> truth_kspace;

  Evaluator(const LinearMap& m, const EvalContext& e) : map(m), eval(e) {
    if (!eval.truth || !eval.bands) return;
    const Eigen::Index n_coils =
        map.kind() == MapKind::CoilComposite ? map.num_coils() : Eigen::Index{1};
    for (Eigen::Index c = 0; c < n_coils; ++c) {
      ComplexSignal img = *eval.truth;
      if (map.kind() == MapKind::CoilComposite) {
        const auto& s = map.coil_maps()[static_cast<std::size_t>(c)];
        img = ComplexSignal{s.re.cwiseProduct(eval.truth->re) - s.im.cwiseProduct(eval.truth->im),
                            s.re.cwiseProduct(eval.truth->im) + s.im.cwiseProduct(eval.truth->re)};
      }
      truth_kspace.push_back(fft(img));
    }
  }

  void fill(IterationRecord& rec, const ComplexSignal& recon) const {
    if (eval.truth) {
      rec.psnr_vs_truth = psnr(recon, *eval.truth);
      rec.rmse_vs_truth =
          (recon - *eval.truth).norm() / std::sqrt(static_cast<double>(recon.len()));
    }
    if (eval.truth && eval.bands)
      rec.band_nmse_vs_truth = band_nmse(recon, truth_kspace, map, *eval.bands);
  }
};

void track_best(RunReport& report, const IterationRecord& rec, const ComplexSignal& recon) {
  if (!rec.psnr_vs_truth) return;
  if (std::isnan(report.best_psnr) || *rec.psnr_vs_truth > report.best_psnr) {
    report.best_psnr = *rec.psnr_vs_truth;
    report.best_iter = rec.iter;
    report.best_recon = recon;
  }
}

void check_finite(double loss, std::uint64_t iter, const char* variant) {
  if (!std::isfinite(loss))
    throw TrainingError(std::string(variant) + ": non-finite loss at iteration " +
                        std::to_string(iter));
}

/// Data-fit gradient: d |A r - y|^2 / d r = 2 A^H (A r - y), returned stacked.
RealVector fit_cotangent(const LinearMap& map, const ComplexSignal& resid) {
  return adjoint(map, resid).scaled(2.0).stacked();
}

RunReport train_fixed_input(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                            const RealVector& input, const DipConfig& cfg,
                            const EvalContext& eval, const char* variant) {
  require(cfg.iters > 0, "DipConfig: iters must be > 0");
  require(y.len() == map.out_dim(), "train: y length mismatch");
  require(input.size() == net.input_len(), "train: input length mismatch");
  require(net.output_len() == 2 * map.in_dim(), "train: net output must be 2 channels of q");

  const Evaluator evaluator(map, eval);
  RunReport report;
  AdamState adam(net.weight_count(), cfg.theta_lr);

  for (std::uint64_t iter = 1; iter <= cfg.iters; ++iter) {
    const RealVector out = net.forward_raw(input);
    const ComplexSignal recon = ComplexSignal::from_stacked(out);
    const ComplexSignal resid = apply(map, recon) - y;
    const double df = resid.re.squaredNorm() + resid.im.squaredNorm();
    check_finite(df, iter, variant);

    if (iter == 1 || iter % cfg.eval_every == 0 || iter == cfg.iters) {
      IterationRecord rec;
      rec.iter = iter;
      rec.data_fidelity = df;
      rec.regularizer = 0.0;
      rec.loss = df;
      evaluator.fill(rec, recon);
      track_best(report, rec, recon);
      report.rows.push_back(std::move(rec));
    }

    const RealVector grad = net.backward_raw(input, fit_cotangent(map, resid)).weights;
    net.set_weights(adam_step(adam, net.weights(), grad));
  }

  report.final_recon = ComplexSignal::from_stacked(net.forward_raw(input));
  if (eval.truth) report.final_psnr = psnr(report.final_recon, *eval.truth);
  report.final_weights = net.weights();
  return report;
}

}  // namespace

RunReport train_vanilla(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                        const DipConfig& cfg, const EvalContext& eval) {
  RngStream rng = cfg.rng;
  const RealVector z = rng.normal_vector(net.input_len());
  return train_fixed_input(std::move(net), map, y, z, cfg, eval, "vanilla");
}

RunReport train_reference_guided(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                                 const ComplexSignal& reference, const DipConfig& cfg,
                                 const EvalContext& eval) {
  require(reference.len() == map.in_dim(), "reference length must be q");
  const RealVector z = net_input_vector(net, reference);
  return train_fixed_input(std::move(net), map, y, z, cfg, eval, "reference-guided");
}

RunReport train_self_guided(GeneratorNet net, const LinearMap& map, const ComplexSignal& y,
                            const DipConfig& cfg, const EvalContext& eval) {
  require(cfg.iters > 0, "DipConfig: iters must be > 0");
  require(cfg.eta_draws >= 1, "DipConfig: eta_draws must be >= 1");
  require(cfg.alpha >= 0.0, "DipConfig: alpha must be >= 0");
  require(y.len() == map.out_dim(), "train: y length mismatch");
  require(net.output_len() == 2 * map.in_dim(), "train: net output must be 2 channels of q");
  require(net.input_len() == net.output_len(),
          "self-guided: net input and output must have the same shape");

  const Evaluator evaluator(map, eval);
  RunReport report;
  if (cfg.alpha == 0.0)
    report.warnings.push_back("alpha = 0: input updates are unregularized and may drift");

  RngStream rng = cfg.rng;
  RealVector z = adjoint(map, y).stacked();
  const Eigen::Index dim = z.size();
  const Eigen::Index draws = cfg.eta_draws;

  AdamState theta_adam(net.weight_count(), cfg.theta_lr);
  AdamState input_adam(dim, cfg.input_lr);

  auto draw_eta = [&](double m) {
    return cfg.eta_zero_mean ? rng.uniform_vector(dim, -0.5 * m, 0.5 * m)
                             : rng.uniform_vector(dim, 0.0, m);
  };
  auto noise_scale = [&](const RealVector& zv) {
    const RealVector mags = ComplexSignal::from_stacked(zv).magnitudes();
    return cfg.noise_scale_frac * (mags.size() ? mags.maxCoeff() : 0.0);
  };

  std::vector<RealVector> etas(static_cast<std::size_t>(draws));
  for (std::uint64_t iter = 1; iter <= cfg.iters; ++iter) {
    // all draws for this iteration happen before any update
    const double m = noise_scale(z);
    for (Eigen::Index d = 0; d < draws; ++d) etas[static_cast<std::size_t>(d)] = draw_eta(m);

    RealVector mean_f = RealVector::Zero(dim);
    for (Eigen::Index d = 0; d < draws; ++d)
      mean_f += net.forward_raw(z + etas[static_cast<std::size_t>(d)]);
    mean_f /= static_cast<double>(draws);

    const ComplexSignal mean_recon = ComplexSignal::from_stacked(mean_f);
    const ComplexSignal resid = apply(map, mean_recon) - y;
    const double df = resid.re.squaredNorm() + resid.im.squaredNorm();
    const RealVector reg_vec = mean_f - z;
    const double reg = reg_vec.squaredNorm();
    const double loss = df + cfg.alpha * reg;
    check_finite(loss, iter, "self-guided");

    if (iter == 1 || iter % cfg.eval_every == 0 || iter == cfg.iters) {
      IterationRecord rec;
      rec.iter = iter;
      rec.data_fidelity = df;
      rec.regularizer = reg;
      rec.loss = loss;
      evaluator.fill(rec, mean_recon);
      track_best(report, rec, mean_recon);
      report.rows.push_back(std::move(rec));
      report.input_trajectory.emplace_back(iter, z);
    }

    // d loss / d mean_f, then fan out through each draw's forward pass
    const RealVector g_mean = fit_cotangent(map, resid) + 2.0 * cfg.alpha * reg_vec;
    const RealVector g_scaled = g_mean / static_cast<double>(draws);
    RealVector theta_grad = RealVector::Zero(net.weight_count());
    RealVector z_grad = -2.0 * cfg.alpha * reg_vec;
    for (Eigen::Index d = 0; d < draws; ++d) {
      const auto g = net.backward_raw(z + etas[static_cast<std::size_t>(d)], g_scaled, true);
      theta_grad += g.weights;
      z_grad += g.input;
    }

    net.set_weights(adam_step(theta_adam, net.weights(), theta_grad));
    z = adam_step(input_adam, z, z_grad);
  }

  // final reconstruction: fresh 64-draw estimate of E[f(z + eta)]
  const double m = noise_scale(z);
  RealVector final_mean = RealVector::Zero(dim);
  for (int d = 0; d < 64; ++d) final_mean += net.forward_raw(z + draw_eta(m));
  final_mean /= 64.0;
  report.final_recon = ComplexSignal::from_stacked(final_mean);
  if (eval.truth) report.final_psnr = psnr(report.final_recon, *eval.truth);
  report.final_weights = net.weights();
  report.final_input = z;
  return report;
}

RunReport finalize_with_correction(const LinearMap& map, const ComplexSignal& y,
                                   RunReport report) {
  require(report.final_recon.len() == map.in_dim(),
          "finalize_with_correction: report has no final reconstruction");
  report.corrected_recon = data_correction(map, y, report.final_recon);
  return report;
}

void write_report_csv(const std::filesystem::path& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "iter,loss,data_fidelity,regularizer,psnr,rmse,band_low,band_mid,band_high\n";
  char buf[64];
  auto cell = [&](std::optional<double> v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof(buf), "%.12g", *v);
    return buf;
  };
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(r.iter));
    out << buf << "," << cell(r.loss) << "," << cell(r.data_fidelity) << ","
        << cell(r.regularizer) << "," << cell(r.psnr_vs_truth) << "," << cell(r.rmse_vs_truth);
    if (r.band_nmse_vs_truth) {
      out << "," << cell(r.band_nmse_vs_truth->low) << "," << cell(r.band_nmse_vs_truth->mid)
          << "," << cell(r.band_nmse_vs_truth->high);
    } else {
      out << ",,,";
    }
    out << "\n";
  }
}

void write_report_json(const std::filesystem::path& path, const RunReport& report,
                       const DipConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  nlohmann::ordered_json c;
  switch (cfg.variant) {
    case DipVariant::Vanilla: c["variant"] = "vanilla"; break;
    case DipVariant::ReferenceGuided: c["variant"] = "reference-guided"; break;
    case DipVariant::SelfGuided: c["variant"] = "self-guided"; break;
  }
  c["iters"] = cfg.iters;
  c["theta_lr"] = cfg.theta_lr;
  c["input_lr"] = cfg.input_lr;
  c["alpha"] = cfg.alpha;
  c["eta_draws"] = cfg.eta_draws;
  c["noise_scale_frac"] = cfg.noise_scale_frac;
  c["seed"] = cfg.rng.seed();
  c["stream"] = cfg.rng.stream_id();
  c["eval_every"] = cfg.eval_every;
  j["config"] = c;
  auto put = [&](const char* key, double v) {
    if (std::isnan(v))
      j[key] = nullptr;
    else
      j[key] = v;
  };
  put("best_psnr", report.best_psnr);
  j["best_iter"] = report.best_iter;
  put("final_psnr", report.final_psnr);
  j["logged_iterations"] = report.rows.size();
  j["warnings"] = report.warnings;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace ntkdip

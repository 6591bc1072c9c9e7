#include "ntkdip/operators.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ntkdip {

namespace {

std::vector<Eigen::Index> ones_of(const std::vector<int>& mask) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    require(mask[i] == 0 || mask[i] == 1, "mask entries must be 0/1");
    if (mask[i] == 1) idx.push_back(static_cast<Eigen::Index>(i));
  }
  return idx;
}

ComplexSignal coil_multiply(const ComplexSignal& s, const ComplexSignal& v) {
  // diag(S) * v, complex entrywise product
  return {s.re.cwiseProduct(v.re) - s.im.cwiseProduct(v.im),
          s.re.cwiseProduct(v.im) + s.im.cwiseProduct(v.re)};
}

ComplexSignal coil_multiply_conj(const ComplexSignal& s, const ComplexSignal& v) {
  // diag(conj(S)) * v
  return {s.re.cwiseProduct(v.re) + s.im.cwiseProduct(v.im),
          s.re.cwiseProduct(v.im) - s.im.cwiseProduct(v.re)};
}

}  // namespace

LinearMap LinearMap::masked_fourier(std::vector<int> mask) {
  LinearMap m;
  m.kind_ = MapKind::MaskedFourier;
  m.q_ = static_cast<Eigen::Index>(mask.size());
  m.mask_ = std::move(mask);
  m.sampled_ = ones_of(m.mask_);
  m.p_ = static_cast<Eigen::Index>(m.sampled_.size());
  return m;
}

LinearMap LinearMap::coil_composite(std::vector<int> mask,
                                    std::vector<ComplexSignal> coil_maps) {
  LinearMap m;
  m.kind_ = MapKind::CoilComposite;
  m.q_ = static_cast<Eigen::Index>(mask.size());
  m.mask_ = std::move(mask);
  m.sampled_ = ones_of(m.mask_);
  m.p_ = static_cast<Eigen::Index>(m.sampled_.size());
  require(!coil_maps.empty(), "coil_composite: need at least one coil");
  RealVector energy = RealVector::Zero(m.q_);
  for (const auto& s : coil_maps) {
    require(s.len() == m.q_, "coil map length mismatch");
    energy += s.re.array().square().matrix() + s.im.array().square().matrix();
  }
  require((energy.array() - 1.0).abs().maxCoeff() <= 1e-10,
          "coil maps not normalized: sum_c |S_c|^2 must be 1");
  m.coil_maps_ = std::move(coil_maps);
  return m;
}

LinearMap LinearMap::inpainting(std::vector<int> mask) {
  LinearMap m;
  m.kind_ = MapKind::InpaintingMask;
  m.q_ = static_cast<Eigen::Index>(mask.size());
  m.mask_ = std::move(mask);
  m.sampled_ = ones_of(m.mask_);
  m.p_ = static_cast<Eigen::Index>(m.sampled_.size());
  return m;
}

LinearMap LinearMap::dense(RealMatrix d) {
  LinearMap m;
  m.kind_ = MapKind::Dense;
  m.q_ = d.cols();
  m.p_ = d.rows();
  m.dense_ = std::move(d);
  return m;
}

Eigen::Index LinearMap::out_dim() const {
  if (kind_ == MapKind::CoilComposite) return p_ * num_coils();
  return p_;
}

ComplexSignal apply(const LinearMap& map, const ComplexSignal& v) {
  require(v.len() == map.in_dim(), "apply: input length mismatch");
  switch (map.kind()) {
    case MapKind::InpaintingMask: {
      ComplexSignal out = ComplexSignal::zeros(map.out_dim());
      const auto& idx = map.sampled_indices();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        out.re[static_cast<Eigen::Index>(j)] = v.re[idx[j]];
        out.im[static_cast<Eigen::Index>(j)] = v.im[idx[j]];
      }
      return out;
    }
    case MapKind::MaskedFourier: {
      const ComplexSignal fv = fft(v);
      ComplexSignal out = ComplexSignal::zeros(map.out_dim());
      const auto& idx = map.sampled_indices();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        out.re[static_cast<Eigen::Index>(j)] = fv.re[idx[j]];
        out.im[static_cast<Eigen::Index>(j)] = fv.im[idx[j]];
      }
      return out;
    }
    case MapKind::CoilComposite: {
      const Eigen::Index p = static_cast<Eigen::Index>(map.sampled_indices().size());
      ComplexSignal out = ComplexSignal::zeros(map.out_dim());
      for (Eigen::Index c = 0; c < map.num_coils(); ++c) {
        const ComplexSignal fv = fft(coil_multiply(map.coil_maps()[static_cast<std::size_t>(c)], v));
        const auto& idx = map.sampled_indices();
        for (std::size_t j = 0; j < idx.size(); ++j) {
          out.re[c * p + static_cast<Eigen::Index>(j)] = fv.re[idx[j]];
          out.im[c * p + static_cast<Eigen::Index>(j)] = fv.im[idx[j]];
        }
      }
      return out;
    }
    case MapKind::Dense:
      return {map.dense_matrix() * v.re, map.dense_matrix() * v.im};
  }
  throw std::logic_error("unreachable");
}

ComplexSignal adjoint(const LinearMap& map, const ComplexSignal& w) {
  require(w.len() == map.out_dim(), "adjoint: input length mismatch");
  switch (map.kind()) {
    case MapKind::InpaintingMask: {
      ComplexSignal out = ComplexSignal::zeros(map.in_dim());
      const auto& idx = map.sampled_indices();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        out.re[idx[j]] = w.re[static_cast<Eigen::Index>(j)];
        out.im[idx[j]] = w.im[static_cast<Eigen::Index>(j)];
      }
      return out;
    }
    case MapKind::MaskedFourier: {
      ComplexSignal filled = ComplexSignal::zeros(map.in_dim());
      const auto& idx = map.sampled_indices();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        filled.re[idx[j]] = w.re[static_cast<Eigen::Index>(j)];
        filled.im[idx[j]] = w.im[static_cast<Eigen::Index>(j)];
      }
      return ifft(filled);
    }
    case MapKind::CoilComposite: {
      const Eigen::Index p = static_cast<Eigen::Index>(map.sampled_indices().size());
      ComplexSignal acc = ComplexSignal::zeros(map.in_dim());
      for (Eigen::Index c = 0; c < map.num_coils(); ++c) {
        ComplexSignal filled = ComplexSignal::zeros(map.in_dim());
        const auto& idx = map.sampled_indices();
        for (std::size_t j = 0; j < idx.size(); ++j) {
          filled.re[idx[j]] = w.re[c * p + static_cast<Eigen::Index>(j)];
          filled.im[idx[j]] = w.im[c * p + static_cast<Eigen::Index>(j)];
        }
        acc = acc + coil_multiply_conj(map.coil_maps()[static_cast<std::size_t>(c)], ifft(filled));
      }
      return acc;
    }
    case MapKind::Dense:
      return {map.dense_matrix().transpose() * w.re, map.dense_matrix().transpose() * w.im};
  }
  throw std::logic_error("unreachable");
}

RealEmbedding materialize_real(const LinearMap& map) {
  const Eigen::Index q = map.in_dim();
  if (q > 64) throw SizeError("materialize_real: q > 64");
  const Eigen::Index p = map.out_dim();
  if (map.kind() == MapKind::Dense) {
    RealMatrix e = RealMatrix::Zero(2 * p, 2 * q);
    e.topLeftCorner(p, q) = map.dense_matrix();
    e.bottomRightCorner(p, q) = map.dense_matrix();
    return {std::move(e)};
  }
  // column j of the complex operator is apply(e_j); the embedding is
  // [Re(A), -Im(A); Im(A), Re(A)]
  RealMatrix ar(p, q), ai(p, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    ComplexSignal basis = ComplexSignal::zeros(q);
    basis.re[j] = 1.0;
    const ComplexSignal col = apply(map, basis);
    ar.col(j) = col.re;
    ai.col(j) = col.im;
  }
  RealMatrix e(2 * p, 2 * q);
  e.topLeftCorner(p, q) = ar;
  e.topRightCorner(p, q) = -ai;
  e.bottomLeftCorner(p, q) = ai;
  e.bottomRightCorner(p, q) = ar;
  return {std::move(e)};
}

ComplexSignal data_correction(const LinearMap& map, const ComplexSignal& y,
                              const ComplexSignal& xhat) {
  require(xhat.len() == map.in_dim(), "data_correction: xhat length mismatch");
  require(y.len() == map.out_dim(), "data_correction: y length mismatch");
  const auto& idx = map.sampled_indices();
  switch (map.kind()) {
    case MapKind::InpaintingMask: {
      ComplexSignal out = xhat;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        out.re[idx[j]] = y.re[static_cast<Eigen::Index>(j)];
        out.im[idx[j]] = y.im[static_cast<Eigen::Index>(j)];
      }
      return out;
    }
    case MapKind::MaskedFourier: {
      ComplexSignal kspace = fft(xhat);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        kspace.re[idx[j]] = y.re[static_cast<Eigen::Index>(j)];
        kspace.im[idx[j]] = y.im[static_cast<Eigen::Index>(j)];
      }
      return ifft(kspace);
    }
    case MapKind::CoilComposite: {
      const Eigen::Index p = static_cast<Eigen::Index>(idx.size());
      ComplexSignal acc = ComplexSignal::zeros(map.in_dim());
      for (Eigen::Index c = 0; c < map.num_coils(); ++c) {
        const auto& s = map.coil_maps()[static_cast<std::size_t>(c)];
        ComplexSignal kspace = fft(coil_multiply(s, xhat));
        for (std::size_t j = 0; j < idx.size(); ++j) {
          kspace.re[idx[j]] = y.re[c * p + static_cast<Eigen::Index>(j)];
          kspace.im[idx[j]] = y.im[c * p + static_cast<Eigen::Index>(j)];
        }
        acc = acc + coil_multiply_conj(s, ifft(kspace));
      }
      return acc;
    }
    case MapKind::Dense:
      throw SizeError("data_correction: dense maps have no sampling structure");
  }
  throw std::logic_error("unreachable");
}

std::vector<int> variable_density_mask(Eigen::Index q, int acceleration, RngStream& rng) {
  require(acceleration >= 1 && q % acceleration == 0,
          "variable_density_mask: acceleration must divide q");
  const Eigen::Index p = q / acceleration;
  std::vector<int> mask(static_cast<std::size_t>(q), 0);

  // DC distance; index 0 is DC in unshifted DFT order
  auto dc_dist = [q](Eigen::Index i) { return std::min(i, q - i); };

  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dc_dist(a) != dc_dist(b) ? dc_dist(a) < dc_dist(b) : a < b;
  });

  const Eigen::Index center = std::min<Eigen::Index>(4, p);
  for (Eigen::Index j = 0; j < center; ++j) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = 1;

  RealVector weights = RealVector::Zero(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 1) continue;
    const double d = static_cast<double>(dc_dist(i));
    weights[i] = 1.0 / std::pow(1.0 + d, 3.0);
  }
  for (Eigen::Index pick : rng.weighted_sample_without_replacement(weights, p - center))
    mask[static_cast<std::size_t>(pick)] = 1;
  return mask;
}

std::vector<ComplexSignal> gaussian_coil_maps(Eigen::Index q, int num_coils, RngStream& rng) {
  require(num_coils >= 1, "gaussian_coil_maps: need at least one coil");
  std::vector<ComplexSignal> maps;
  maps.reserve(static_cast<std::size_t>(num_coils));
  const double width = static_cast<double>(q) / (1.5 * num_coils);
  for (int c = 0; c < num_coils; ++c) {
    const double mu = (c + 0.5) * static_cast<double>(q) / num_coils + rng.uniform(-1.0, 1.0);
    const double slope = rng.uniform(-2.0, 2.0);
    const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ComplexSignal s = ComplexSignal::zeros(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      const double d = static_cast<double>(i) - mu;
      const double mag = 0.15 + std::exp(-d * d / (2.0 * width * width));
      const double phi = phase0 + 2.0 * std::numbers::pi * slope * static_cast<double>(i) / static_cast<double>(q);
      s.re[i] = mag * std::cos(phi);
      s.im[i] = mag * std::sin(phi);
    }
    maps.push_back(std::move(s));
  }
  RealVector energy = RealVector::Zero(q);
  for (const auto& s : maps)
    energy += s.re.array().square().matrix() + s.im.array().square().matrix();
  const RealVector scale = energy.array().sqrt().inverse();
  for (auto& s : maps) {
    s.re = s.re.cwiseProduct(scale);
    s.im = s.im.cwiseProduct(scale);
  }
  return maps;
}

void write_mask(const std::filesystem::path& path, const std::vector<int>& mask) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (int m : mask) out << m << "\n";
}

std::vector<int> read_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<int> mask;
  int v;
  while (in >> v) mask.push_back(v);
  return mask;
}

void write_signal_csv(const std::filesystem::path& path, const ComplexSignal& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "index,re,im\n";
  char buf[96];
  for (Eigen::Index i = 0; i < s.len(); ++i) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n", static_cast<long long>(i), s.re[i], s.im[i]);
    out << buf;
  }
}

ComplexSignal read_signal_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> re, im;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    std::getline(ss, tok, ',');
    re.push_back(std::stod(tok));
    std::getline(ss, tok, ',');
    im.push_back(std::stod(tok));
  }
  ComplexSignal s = ComplexSignal::zeros(static_cast<Eigen::Index>(re.size()));
  for (std::size_t i = 0; i < re.size(); ++i) {
    s.re[static_cast<Eigen::Index>(i)] = re[i];
    s.im[static_cast<Eigen::Index>(i)] = im[i];
  }
  return s;
}

}  // namespace ntkdip

#pragma once

#include <filesystem>
#include <vector>

#include "ntkdip/numerics.hpp"

namespace ntkdip {

enum class MapKind { MaskedFourier, CoilComposite, InpaintingMask, Dense };

/// Forward measurement operator. Immutable after construction; all
/// operations on it are pure.
///
/// masked-fourier  : v -> (F v) restricted to the sampled frequencies
/// coil-composite  : v -> concat_c (M F (S_c . v)), normalized coil maps
/// inpainting-mask : v -> sampled pixels of v
/// dense           : v -> D v applied to re and im independently
class LinearMap {
 public:
  static LinearMap masked_fourier(std::vector<int> mask);
  static LinearMap coil_composite(std::vector<int> mask, std::vector<ComplexSignal> coil_maps);
  static LinearMap inpainting(std::vector<int> mask);
  static LinearMap dense(RealMatrix d);

  MapKind kind() const { return kind_; }
  Eigen::Index in_dim() const { return q_; }
  /// Output length in complex samples (p for masked kinds, p*N_c for coils).
  Eigen::Index out_dim() const;
  Eigen::Index num_coils() const { return static_cast<Eigen::Index>(coil_maps_.size()); }
  const std::vector<int>& mask() const { return mask_; }
  const std::vector<ComplexSignal>& coil_maps() const { return coil_maps_; }
  const RealMatrix& dense_matrix() const { return dense_; }

  /// Indices where the mask is one, ascending.
  const std::vector<Eigen::Index>& sampled_indices() const { return sampled_; }

 private:
  LinearMap() = default;
  MapKind kind_ = MapKind::Dense;
  Eigen::Index q_ = 0;
  Eigen::Index p_ = 0;
  std::vector<int> mask_;
  std::vector<Eigen::Index> sampled_;
  std::vector<ComplexSignal> coil_maps_;
  RealMatrix dense_;
};

/// Real 2p x 2q matrix acting on stacked [v_R; v_I] vectors, equivalent to
/// the complex operator.
struct RealEmbedding {
  RealMatrix matrix;
};

ComplexSignal apply(const LinearMap& map, const ComplexSignal& v);
ComplexSignal adjoint(const LinearMap& map, const ComplexSignal& w);

/// Dense real embedding; guarded to q <= 64.
RealEmbedding materialize_real(const LinearMap& map);

/// Replaces the measured frequencies (or pixels) of xhat with the acquired
/// data and keeps its own content elsewhere. The result measures back to y
/// exactly at sampled locations.
ComplexSignal data_correction(const LinearMap& map, const ComplexSignal& y,
                              const ComplexSignal& xhat);

/// Variable-density 1-D Cartesian sampling pattern: the 4 lines closest to
/// DC are always on, the rest are drawn without replacement with weight
/// (1 + d)^-3 in DC distance d. q/acceleration lines total.
std::vector<int> variable_density_mask(Eigen::Index q, int acceleration, RngStream& rng);

/// Smooth complex Gaussian-bump coil profiles normalized so that
/// sum_c conj(S_c) . S_c = 1 pointwise.
std::vector<ComplexSignal> gaussian_coil_maps(Eigen::Index q, int num_coils, RngStream& rng);

/// Mask file: one 0/1 per line.
void write_mask(const std::filesystem::path& path, const std::vector<int>& mask);
std::vector<int> read_mask(const std::filesystem::path& path);

/// Signal CSV with header "index,re,im".
void write_signal_csv(const std::filesystem::path& path, const ComplexSignal& s);
ComplexSignal read_signal_csv(const std::filesystem::path& path);

}  // namespace ntkdip

#pragma once

#include <filesystem>

#include "ntkdip/numerics.hpp"

namespace ntkdip {

enum class NetArch { TwoLayerDecoder, ConvGenerator, Dense };

/// Small differentiable generator with exact hand-written forward/backward.
///
/// two-layer-decoder : out = sum_l v_l ReLU(z_l * U c_l), U a fixed circulant
///                     convolution, v fixed at half +1/sqrt(k) half -1/sqrt(k),
///                     trainable weights are the columns c_l (n*k total),
///                     input z has one scalar per channel.
/// conv-generator    : 2-channel signal in and out (re/im of length q).
///                     Fixed 8x average-pool stem, three stages of
///                     (nearest upsample x2 -> conv3 -> ReLU), then a
///                     2-channel 1x1 linear head over the conv features
///                     concatenated with the raw input (skip path).
/// dense             : out = W in, no bias, weights row-major. Used as the
///                     linear/identity-capable net in toy problems.
///
/// Nets are immutable during forward/backward; training replaces the
/// weight vector.
class GeneratorNet {
 public:
  static GeneratorNet two_layer_decoder(Eigen::Index n, Eigen::Index k,
                                        std::uint64_t u_seed);
  static GeneratorNet two_layer_decoder_with_u(RealMatrix u, Eigen::Index k);
  static GeneratorNet conv_generator(Eigen::Index q, Eigen::Index channels);
  static GeneratorNet dense(Eigen::Index in, Eigen::Index out);

  NetArch arch() const { return arch_; }
  Eigen::Index input_len() const;   ///< real scalars consumed
  Eigen::Index output_len() const;  ///< real scalars produced
  Eigen::Index weight_count() const { return weights_.size(); }

  const RealVector& weights() const { return weights_; }
  void set_weights(RealVector w);

  // decoder accessors
  const RealMatrix& decoder_u() const { return u_; }
  const RealVector& decoder_v() const { return v_; }
  Eigen::Index decoder_n() const { return n_; }
  Eigen::Index decoder_k() const { return k_; }

  Eigen::Index conv_q() const { return q_; }
  Eigen::Index conv_channels() const { return channels_; }

  RealVector forward_raw(const RealVector& input) const;

  struct Gradient {
    RealVector weights;
    RealVector input;  ///< empty unless requested
  };
  Gradient backward_raw(const RealVector& input, const RealVector& cotangent,
                        bool want_input_grad = false) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static GeneratorNet load_checkpoint(const std::filesystem::path& path);

 private:
  GeneratorNet() = default;
  NetArch arch_ = NetArch::Dense;
  RealVector weights_;
  // decoder
  Eigen::Index n_ = 0, k_ = 0;
  RealMatrix u_;
  RealVector v_;
  RealVector u_filter_;  // empty if U was injected directly
  // conv generator
  Eigen::Index q_ = 0, channels_ = 0;
  // dense
  Eigen::Index in_ = 0, out_ = 0;
};

/// Complex-signal adapters. The input maps to the net's real input (stacked
/// [re; im] when the sizes say so, the real part alone otherwise) and the
/// output is interpreted as stacked re/im.
ComplexSignal forward(const GeneratorNet& net, const ComplexSignal& input);
GeneratorNet::Gradient backward(const GeneratorNet& net, const ComplexSignal& input,
                                const ComplexSignal& output_cotangent,
                                bool want_input_grad = false);
RealVector net_input_vector(const GeneratorNet& net, const ComplexSignal& input);

/// i.i.d. N(0, omega) weights (variance omega) from the given stream; the
/// decoder's fixed last layer is untouched.
GeneratorNet init_weights(GeneratorNet net, double omega, RngStream& rng);

struct AdamState {
  explicit AdamState(Eigen::Index n, double lr_)
      : m(RealVector::Zero(n)), v(RealVector::Zero(n)), lr(lr_) {}
  RealVector m;
  RealVector v;
  std::int64_t step = 0;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Standard bias-corrected Adam update; returns the new parameter vector.
RealVector adam_step(AdamState& state, const RealVector& params, const RealVector& grad);

}  // namespace ntkdip

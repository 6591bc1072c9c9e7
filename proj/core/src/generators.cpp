#include "ntkdip/generators.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ntkdip {

namespace {

constexpr Eigen::Index kConvStages = 3;
constexpr Eigen::Index kPool = 8;  // 2^kConvStages
constexpr Eigen::Index kKernel = 3;

RealVector decoder_last_layer(Eigen::Index k) {
  RealVector v(k);
  const double a = 1.0 / std::sqrt(static_cast<double>(k));
  v.head(k / 2).setConstant(a);
  v.tail(k - k / 2).setConstant(-a);
  return v;
}

Eigen::Index conv_weight_count(Eigen::Index ch) {
  return ch * 2 * kKernel + ch                      // stem
         + kConvStages * (ch * ch * kKernel + ch)   // upsample stages
         + 2 * (ch + 2) + 2;                        // head over features + input skip
}

// channel-major activation block: rows = channels, cols = positions
using Act = Eigen::MatrixXd;

Act avgpool(const Act& in, Eigen::Index factor) {
  Act out(in.rows(), in.cols() / factor);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (Eigen::Index x = 0; x < out.cols(); ++x)
      out(c, x) = in.row(c).segment(x * factor, factor).mean();
  return out;
}

Act avgpool_backward(const Act& g_out, Eigen::Index factor) {
  Act g_in(g_out.rows(), g_out.cols() * factor);
  for (Eigen::Index c = 0; c < g_out.rows(); ++c)
    for (Eigen::Index x = 0; x < g_out.cols(); ++x)
      g_in.row(c).segment(x * factor, factor).setConstant(g_out(c, x) / static_cast<double>(factor));
  return g_in;
}

Act upsample2(const Act& in) {
  Act out(in.rows(), in.cols() * 2);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (Eigen::Index x = 0; x < in.cols(); ++x) {
      out(c, 2 * x) = in(c, x);
      out(c, 2 * x + 1) = in(c, x);
    }
  return out;
}

Act upsample2_backward(const Act& g_out) {
  Act g_in(g_out.rows(), g_out.cols() / 2);
  for (Eigen::Index c = 0; c < g_in.rows(); ++c)
    for (Eigen::Index x = 0; x < g_in.cols(); ++x)
      g_in(c, x) = g_out(c, 2 * x) + g_out(c, 2 * x + 1);
  return g_in;
}

// zero-padded same-length conv, kernel 3; w indexed (co, ci, tap)
Act conv3(const Act& in, const double* w, const double* b, Eigen::Index c_out) {
  const Eigen::Index c_in = in.rows(), len = in.cols();
  Act out(c_out, len);
  for (Eigen::Index co = 0; co < c_out; ++co) {
    out.row(co).setConstant(b[co]);
    for (Eigen::Index ci = 0; ci < c_in; ++ci) {
      const double* wk = w + (co * c_in + ci) * kKernel;
      for (Eigen::Index x = 0; x < len; ++x) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < kKernel; ++t) {
          const Eigen::Index xi = x + t - 1;
          if (xi >= 0 && xi < len) acc += wk[t] * in(ci, xi);
        }
        out(co, x) += acc;
      }
    }
  }
  return out;
}

void conv3_backward(const Act& in, const double* w, Eigen::Index c_out, const Act& g_out,
                    Act& g_in, double* g_w, double* g_b) {
  const Eigen::Index c_in = in.rows(), len = in.cols();
  g_in.setZero(c_in, len);
  for (Eigen::Index co = 0; co < c_out; ++co) {
    g_b[co] += g_out.row(co).sum();
    for (Eigen::Index ci = 0; ci < c_in; ++ci) {
      const double* wk = w + (co * c_in + ci) * kKernel;
      double* gwk = g_w + (co * c_in + ci) * kKernel;
      for (Eigen::Index x = 0; x < len; ++x) {
        const double g = g_out(co, x);
        for (Eigen::Index t = 0; t < kKernel; ++t) {
          const Eigen::Index xi = x + t - 1;
          if (xi >= 0 && xi < len) {
            gwk[t] += g * in(ci, xi);
            g_in(ci, xi) += g * wk[t];
          }
        }
      }
    }
  }
}

Act relu(const Act& pre) { return pre.cwiseMax(0.0); }

Act relu_backward(const Act& pre, const Act& g_act) {
  return (pre.array() > 0.0).cast<double>().matrix().cwiseProduct(g_act);
}

struct ConvLayout {
  Eigen::Index stem_w, stem_b;
  Eigen::Index stage_w[kConvStages], stage_b[kConvStages];
  Eigen::Index head_w, head_b;
};

ConvLayout conv_layout(Eigen::Index ch) {
  ConvLayout l{};
  Eigen::Index off = 0;
  l.stem_w = off;
  off += ch * 2 * kKernel;
  l.stem_b = off;
  off += ch;
  for (Eigen::Index s = 0; s < kConvStages; ++s) {
    l.stage_w[s] = off;
    off += ch * ch * kKernel;
    l.stage_b[s] = off;
    off += ch;
  }
  l.head_w = off;
  off += 2 * (ch + 2);
  l.head_b = off;
  return l;
}

struct ConvTrace {
  Act input;
  Act pooled;
  Act stem_pre, stem_act;
  Act up[kConvStages], pre[kConvStages], act[kConvStages];
  Act out;
};

// hourglass with an input skip: pool x8 -> conv -> three upsample stages ->
// 1x1 linear head over the conv features concatenated with the raw input
ConvTrace conv_forward_trace(Eigen::Index q, Eigen::Index ch, const RealVector& w,
                             const RealVector& input) {
  const ConvLayout lay = conv_layout(ch);
  ConvTrace tr;
  tr.input.resize(2, q);
  tr.input.row(0) = input.head(q).transpose();
  tr.input.row(1) = input.tail(q).transpose();
  tr.pooled = avgpool(tr.input, kPool);
  tr.stem_pre = conv3(tr.pooled, w.data() + lay.stem_w, w.data() + lay.stem_b, ch);
  tr.stem_act = relu(tr.stem_pre);
  Act cur = tr.stem_act;
  for (Eigen::Index s = 0; s < kConvStages; ++s) {
    tr.up[s] = upsample2(cur);
    tr.pre[s] = conv3(tr.up[s], w.data() + lay.stage_w[s], w.data() + lay.stage_b[s], ch);
    tr.act[s] = relu(tr.pre[s]);
    cur = tr.act[s];
  }
  tr.out.setZero(2, q);
  const double* hw = w.data() + lay.head_w;
  const double* hb = w.data() + lay.head_b;
  for (Eigen::Index co = 0; co < 2; ++co) {
    tr.out.row(co).setConstant(hb[co]);
    for (Eigen::Index ci = 0; ci < ch; ++ci)
      tr.out.row(co) += hw[co * (ch + 2) + ci] * cur.row(ci);
    for (Eigen::Index si = 0; si < 2; ++si)
      tr.out.row(co) += hw[co * (ch + 2) + ch + si] * tr.input.row(si);
  }
  return tr;
}

}  // namespace

GeneratorNet GeneratorNet::two_layer_decoder(Eigen::Index n, Eigen::Index k,
                                             std::uint64_t u_seed) {
  require(k >= 2 && k % 2 == 0, "decoder: width k must be even");
  RngStream rng(u_seed, 0);
  RealVector filter = rng.normal_vector(n);
  RealMatrix u(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) u(r, c) = filter[((c - r) % n + n) % n];
  GeneratorNet net = two_layer_decoder_with_u(std::move(u), k);
  net.u_filter_ = std::move(filter);
  return net;
}

GeneratorNet GeneratorNet::two_layer_decoder_with_u(RealMatrix u, Eigen::Index k) {
  require(u.rows() == u.cols(), "decoder: U must be square");
  require(k >= 2 && k % 2 == 0, "decoder: width k must be even");
  GeneratorNet net;
  net.arch_ = NetArch::TwoLayerDecoder;
  net.n_ = u.rows();
  net.k_ = k;
  net.u_ = std::move(u);
  net.v_ = decoder_last_layer(k);
  net.weights_ = RealVector::Zero(net.n_ * k);
  return net;
}

GeneratorNet GeneratorNet::conv_generator(Eigen::Index q, Eigen::Index channels) {
  require(q >= kPool && q % kPool == 0, "conv_generator: q must be a multiple of 8");
  require(channels >= 1, "conv_generator: need at least one channel");
  GeneratorNet net;
  net.arch_ = NetArch::ConvGenerator;
  net.q_ = q;
  net.channels_ = channels;
  net.weights_ = RealVector::Zero(conv_weight_count(channels));
  return net;
}

GeneratorNet GeneratorNet::dense(Eigen::Index in, Eigen::Index out) {
  GeneratorNet net;
  net.arch_ = NetArch::Dense;
  net.in_ = in;
  net.out_ = out;
  net.weights_ = RealVector::Zero(in * out);
  return net;
}

Eigen::Index GeneratorNet::input_len() const {
  switch (arch_) {
    case NetArch::TwoLayerDecoder: return k_;
    case NetArch::ConvGenerator: return 2 * q_;
    case NetArch::Dense: return in_;
  }
  return 0;
}

Eigen::Index GeneratorNet::output_len() const {
  switch (arch_) {
    case NetArch::TwoLayerDecoder: return n_;
    case NetArch::ConvGenerator: return 2 * q_;
    case NetArch::Dense: return out_;
  }
  return 0;
}

void GeneratorNet::set_weights(RealVector w) {
  require(w.size() == weights_.size(), "set_weights: wrong length");
  weights_ = std::move(w);
}

RealVector GeneratorNet::forward_raw(const RealVector& input) const {
  require(input.size() == input_len(), "forward: input length mismatch");
  switch (arch_) {
    case NetArch::TwoLayerDecoder: {
      Eigen::Map<const Eigen::MatrixXd> c(weights_.data(), n_, k_);
      const Eigen::MatrixXd p = u_ * c;
      RealVector out = RealVector::Zero(n_);
      for (Eigen::Index l = 0; l < k_; ++l)
        out += v_[l] * (input[l] * p.col(l)).cwiseMax(0.0);
      return out;
    }
    case NetArch::ConvGenerator: {
      const ConvTrace tr = conv_forward_trace(q_, channels_, weights_, input);
      RealVector out(2 * q_);
      out.head(q_) = tr.out.row(0).transpose();
      out.tail(q_) = tr.out.row(1).transpose();
      return out;
    }
    case NetArch::Dense: {
      Eigen::Map<const RealMatrix> w(weights_.data(), out_, in_);
      return w * input;
    }
  }
  throw std::logic_error("unreachable");
}

GeneratorNet::Gradient GeneratorNet::backward_raw(const RealVector& input,
                                                  const RealVector& cotangent,
                                                  bool want_input_grad) const {
  require(input.size() == input_len(), "backward: input length mismatch");
  require(cotangent.size() == output_len(), "backward: cotangent length mismatch");
  Gradient g;
  g.weights = RealVector::Zero(weights_.size());
  if (want_input_grad) g.input = RealVector::Zero(input_len());

  switch (arch_) {
    case NetArch::TwoLayerDecoder: {
      Eigen::Map<const Eigen::MatrixXd> c(weights_.data(), n_, k_);
      const Eigen::MatrixXd p = u_ * c;
      for (Eigen::Index l = 0; l < k_; ++l) {
        const RealVector pre = input[l] * p.col(l);
        RealVector g_pre = v_[l] * cotangent;
        for (Eigen::Index i = 0; i < n_; ++i)
          if (pre[i] <= 0.0) g_pre[i] = 0.0;
        g.weights.segment(l * n_, n_) = input[l] * (u_.transpose() * g_pre);
        if (want_input_grad) g.input[l] = p.col(l).dot(g_pre);
      }
      return g;
    }
    case NetArch::ConvGenerator: {
      const ConvLayout lay = conv_layout(channels_);
      const ConvTrace tr = conv_forward_trace(q_, channels_, weights_, input);
      Act g_out(2, q_);
      g_out.row(0) = cotangent.head(q_).transpose();
      g_out.row(1) = cotangent.tail(q_).transpose();

      // head: conv features plus the input skip
      const double* hw = weights_.data() + lay.head_w;
      const Act& last = tr.act[kConvStages - 1];
      Act g_cur = Act::Zero(channels_, q_);
      Act g_skip = Act::Zero(2, q_);
      for (Eigen::Index co = 0; co < 2; ++co) {
        g.weights[lay.head_b + co] += g_out.row(co).sum();
        for (Eigen::Index ci = 0; ci < channels_; ++ci) {
          g.weights[lay.head_w + co * (channels_ + 2) + ci] += g_out.row(co).dot(last.row(ci));
          g_cur.row(ci) += hw[co * (channels_ + 2) + ci] * g_out.row(co);
        }
        for (Eigen::Index si = 0; si < 2; ++si) {
          g.weights[lay.head_w + co * (channels_ + 2) + channels_ + si] +=
              g_out.row(co).dot(tr.input.row(si));
          g_skip.row(si) += hw[co * (channels_ + 2) + channels_ + si] * g_out.row(co);
        }
      }

      for (Eigen::Index s = kConvStages - 1; s >= 0; --s) {
        const Act g_pre = relu_backward(tr.pre[s], g_cur);
        Act g_up;
        conv3_backward(tr.up[s], weights_.data() + lay.stage_w[s], channels_, g_pre, g_up,
                       g.weights.data() + lay.stage_w[s], g.weights.data() + lay.stage_b[s]);
        g_cur = upsample2_backward(g_up);
      }

      const Act g_stem_pre = relu_backward(tr.stem_pre, g_cur);
      Act g_pooled;
      conv3_backward(tr.pooled, weights_.data() + lay.stem_w, channels_, g_stem_pre, g_pooled,
                     g.weights.data() + lay.stem_w, g.weights.data() + lay.stem_b);
      if (want_input_grad) {
        const Act g_in = avgpool_backward(g_pooled, kPool) + g_skip;
        g.input.head(q_) = g_in.row(0).transpose();
        g.input.tail(q_) = g_in.row(1).transpose();
      }
      return g;
    }
    case NetArch::Dense: {
      Eigen::Map<const RealMatrix> w(weights_.data(), out_, in_);
      for (Eigen::Index i = 0; i < out_; ++i)
        g.weights.segment(i * in_, in_) = cotangent[i] * input;
      if (want_input_grad) g.input = w.transpose() * cotangent;
      return g;
    }
  }
  throw std::logic_error("unreachable");
}

RealVector net_input_vector(const GeneratorNet& net, const ComplexSignal& input) {
  if (2 * input.len() == net.input_len()) return input.stacked();
  if (input.len() == net.input_len()) {
    require(input.im.cwiseAbs().maxCoeff() == 0.0,
            "net input: imaginary part would be dropped; pass a real signal");
    return input.re;
  }
  throw DimensionError("net input: signal length does not match architecture");
}

ComplexSignal forward(const GeneratorNet& net, const ComplexSignal& input) {
  const RealVector out = net.forward_raw(net_input_vector(net, input));
  require(out.size() % 2 == 0, "forward: odd output cannot be viewed as re/im");
  return ComplexSignal::from_stacked(out);
}

GeneratorNet::Gradient backward(const GeneratorNet& net, const ComplexSignal& input,
                                const ComplexSignal& output_cotangent, bool want_input_grad) {
  return net.backward_raw(net_input_vector(net, input), output_cotangent.stacked(),
                          want_input_grad);
}

GeneratorNet init_weights(GeneratorNet net, double omega, RngStream& rng) {
  require(omega > 0.0, "init_weights: omega must be positive");
  net.set_weights(rng.normal_vector(net.weight_count(), std::sqrt(omega)));
  return net;
}

RealVector adam_step(AdamState& state, const RealVector& params, const RealVector& grad) {
  require(params.size() == state.m.size() && grad.size() == state.m.size(),
          "adam_step: length mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  RealVector out(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    out[i] = params[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  return out;
}

void GeneratorNet::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::ordered_json meta;
  meta["schema"] = 1;
  switch (arch_) {
    case NetArch::TwoLayerDecoder: {
      meta["arch"] = "two-layer-decoder";
      meta["n"] = n_;
      meta["k"] = k_;
      if (u_filter_.size()) {
        meta["u_filter"] = std::vector<double>(u_filter_.data(), u_filter_.data() + u_filter_.size());
      } else {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < n_; ++r)
          rows.emplace_back(u_.row(r).begin(), u_.row(r).end());
        meta["u"] = rows;
      }
      break;
    }
    case NetArch::ConvGenerator:
      meta["arch"] = "conv-generator";
      meta["q"] = q_;
      meta["channels"] = channels_;
      break;
    case NetArch::Dense:
      meta["arch"] = "dense";
      meta["in"] = in_;
      meta["out"] = out_;
      break;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << meta.dump() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", weights_[i]);
    out << buf;
  }
}

GeneratorNet GeneratorNet::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const auto meta = nlohmann::json::parse(header);
  GeneratorNet net;
  const std::string arch = meta.at("arch");
  if (arch == "two-layer-decoder") {
    const Eigen::Index n = meta.at("n"), k = meta.at("k");
    if (meta.contains("u_filter")) {
      const std::vector<double> f = meta.at("u_filter");
      RealMatrix u(n, n);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c)
          u(r, c) = f[static_cast<std::size_t>(((c - r) % n + n) % n)];
      net = two_layer_decoder_with_u(std::move(u), k);
      net.u_filter_ = Eigen::Map<const RealVector>(f.data(), n);
    } else {
      const std::vector<std::vector<double>> rows = meta.at("u");
      RealMatrix u(n, n);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c)
          u(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      net = two_layer_decoder_with_u(std::move(u), k);
    }
  } else if (arch == "conv-generator") {
    net = conv_generator(meta.at("q"), meta.at("channels"));
  } else if (arch == "dense") {
    net = dense(meta.at("in"), meta.at("out"));
  } else {
    throw std::runtime_error("unknown checkpoint arch: " + arch);
  }
  RealVector w(net.weight_count());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!(in >> w[i])) throw std::runtime_error("checkpoint truncated");
  net.set_weights(std::move(w));
  return net;
}

}  // namespace ntkdip

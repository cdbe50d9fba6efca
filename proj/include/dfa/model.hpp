#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfa/ad/adam.hpp"
#include "dfa/ad/ops.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa {

enum class EncoderKind { mlp, conv_small };

struct ModelGeometry {
  EncoderKind kind = EncoderKind::mlp;
  int in_h = 28;
  int in_w = 28;
  int in_c = 3;
  int hidden = 100;      // mlp hidden width
  int latent_dim = 16;   // per-encoder latent size
  int num_classes = 10;

  int input_dim() const { return in_h * in_w * in_c; }

  void validate() const {
    if (in_h < 1 || in_w < 1 || in_c < 1) throw ConfigError("bad input extents");
    if (hidden < 1) throw ConfigError("hidden width must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (kind == EncoderKind::conv_small && (in_h < 8 || in_w < 8)) {
      throw ConfigError("conv_small encoder needs inputs of at least 8x8");
    }
  }
};

namespace detail {

template <class T>
ad::Tensor<T> glorot_matrix(int fan_in, int fan_out, int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  ad::Tensor<T> t({rows, cols});
  for (auto& v : t.vals()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace detail

template <class T>
struct LinearHead {
  ad::Parameter<T> weight, bias;

  static LinearHead make(const std::string& prefix, int in, int out, Rng& rng) {
    LinearHead h;
    h.weight = ad::Parameter<T>(prefix + ".weight",
                                detail::glorot_matrix<T>(in, out, in, out, rng));
    h.bias = ad::Parameter<T>(prefix + ".bias", ad::Tensor<T>({out}));
    return h;
  }

  ad::Tensor<T> forward(ad::Tape<T>* tape, const ad::Tensor<T>& x) const {
    return ad::add_bias(tape, ad::matmul(tape, x, weight.value), bias.value);
  }

  void collect(std::vector<ad::Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

// Feature encoder. The mlp variant consumes flattened rows, the conv_small
// variant NHWC images; both end in a relu-activated latent of latent_dim.
template <class T>
struct Encoder {
  ModelGeometry geo;
  std::vector<ad::Parameter<T>> params;

  static Encoder make(const std::string& prefix, const ModelGeometry& geo, Rng& rng) {
    geo.validate();
    Encoder e;
    e.geo = geo;
    auto push = [&](const std::string& name, ad::Tensor<T> t) {
      e.params.emplace_back(prefix + "." + name, std::move(t));
    };
    if (geo.kind == EncoderKind::mlp) {
      const int d = geo.input_dim(), h = geo.hidden;
      push("fc0.weight", detail::glorot_matrix<T>(d, h, d, h, rng));
      push("fc0.bias", ad::Tensor<T>({h}));
      push("fc1.weight", detail::glorot_matrix<T>(h, h, h, h, rng));
      push("fc1.bias", ad::Tensor<T>({h}));
      push("fc2.weight", detail::glorot_matrix<T>(h, h, h, h, rng));
      push("fc2.bias", ad::Tensor<T>({h}));
      push("fc3.weight", detail::glorot_matrix<T>(h, geo.latent_dim, h, geo.latent_dim, rng));
      push("fc3.bias", ad::Tensor<T>({geo.latent_dim}));
    } else {
      const int chans[5] = {geo.in_c, 16, 32, 64, 64};
      for (int l = 0; l < 4; ++l) {
        const int ci = chans[l], co = chans[l + 1];
        push("conv" + std::to_string(l) + ".weight",
             detail::glorot_matrix<T>(9 * ci, 9 * co, 9 * ci, co, rng));
        push("conv" + std::to_string(l) + ".bias", ad::Tensor<T>({co}));
      }
      push("fc.weight", detail::glorot_matrix<T>(chans[4], geo.latent_dim,
                                                 chans[4], geo.latent_dim, rng));
      push("fc.bias", ad::Tensor<T>({geo.latent_dim}));
    }
    return e;
  }

  ad::Tensor<T> forward(ad::Tape<T>* tape, const ad::Tensor<T>& x) const {
    if (geo.kind == EncoderKind::mlp) {
      if (x.ndim() != 2 || x.dim(1) != geo.input_dim()) {
        throw ContractError("encoder: expected [n," + std::to_string(geo.input_dim()) +
                            "] input, got " + ad::shape_str(x.shape()));
      }
      auto h = x;
      for (int l = 0; l < 4; ++l) {
        h = ad::add_bias(tape, ad::matmul(tape, h, params[static_cast<size_t>(2 * l)].value),
                         params[static_cast<size_t>(2 * l + 1)].value);
        h = ad::relu(tape, h);
      }
      return h;
    }
    if (x.ndim() != 4 || x.dim(1) != geo.in_h || x.dim(2) != geo.in_w ||
        x.dim(3) != geo.in_c) {
      throw ContractError("encoder: expected NHWC input, got " + ad::shape_str(x.shape()));
    }
    auto h = x;
    const int strides[4] = {1, 2, 2, 2};
    for (int l = 0; l < 4; ++l) {
      h = ad::conv3x3(tape, h, params[static_cast<size_t>(2 * l)].value,
                      params[static_cast<size_t>(2 * l + 1)].value, strides[l]);
      h = ad::relu(tape, h);
    }
    h = ad::global_avg_pool(tape, h);
    h = ad::add_bias(tape, ad::matmul(tape, h, params[8].value), params[9].value);
    return ad::relu(tape, h);
  }

  void collect(std::vector<ad::Parameter<T>*>& out) {
    for (auto& p : params) out.push_back(&p);
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
};

template <class T>
struct LatentPair {
  ad::Tensor<T> z_i, z_b;
};

template <class T>
struct SwapBatch {
  std::vector<int> perm;
  std::vector<int> donor_labels;  // labels[perm]
  ad::Tensor<T> zb_perm;          // permuted bias latents, still on the graph
  ad::Tensor<T> z_swap;           // [z_i ; zb_perm]
};

// Two encoders with linear heads over the concatenated latent. Each head sees
// the other encoder's half as a detached constant, so head i trains only
// encoder i and head b only encoder b.
template <class T>
struct DualEncoderModel {
  ModelGeometry geo;
  Encoder<T> enc_i, enc_b;
  LinearHead<T> cls_i, cls_b;

  static DualEncoderModel make(const ModelGeometry& geo, Rng& rng) {
    geo.validate();
    DualEncoderModel m;
    m.geo = geo;
    m.enc_i = Encoder<T>::make("enc_i", geo, rng);
    m.enc_b = Encoder<T>::make("enc_b", geo, rng);
    m.cls_i = LinearHead<T>::make("cls_i", 2 * geo.latent_dim, geo.num_classes, rng);
    m.cls_b = LinearHead<T>::make("cls_b", 2 * geo.latent_dim, geo.num_classes, rng);
    return m;
  }

  LatentPair<T> encode(ad::Tape<T>* tape, const ad::Tensor<T>& x) const {
    return {enc_i.forward(tape, x), enc_b.forward(tape, x)};
  }

  // -> {logits_i, logits_b}
  std::pair<ad::Tensor<T>, ad::Tensor<T>> classify(ad::Tape<T>* tape,
                                                   const LatentPair<T>& z) const {
    auto z_for_i = ad::concat_cols(tape, z.z_i, ad::detach(z.z_b));
    auto z_for_b = ad::concat_cols(tape, ad::detach(z.z_i), z.z_b);
    return {cls_i.forward(tape, z_for_i), cls_b.forward(tape, z_for_b)};
  }

  SwapBatch<T> swap(ad::Tape<T>* tape, const LatentPair<T>& z,
                    const std::vector<int>& labels, Rng& rng) const {
    const int n = z.z_b.dim(0);
    if (static_cast<int>(labels.size()) != n) {
      throw ContractError("swap: label count does not match batch rows");
    }
    SwapBatch<T> s;
    s.perm = rng.permutation(n);
    s.donor_labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      s.donor_labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(s.perm[static_cast<size_t>(i)])];
    }
    s.zb_perm = ad::gather_rows(tape, z.z_b, s.perm);
    s.z_swap = ad::concat_cols(tape, z.z_i, s.zb_perm);
    return s;
  }

  // Heads applied to the swapped pair with the same detach routing as classify.
  std::pair<ad::Tensor<T>, ad::Tensor<T>> classify_swapped(
      ad::Tape<T>* tape, const LatentPair<T>& z, const SwapBatch<T>& s) const {
    auto z_for_i = ad::concat_cols(tape, z.z_i, ad::detach(s.zb_perm));
    auto z_for_b = ad::concat_cols(tape, ad::detach(z.z_i), s.zb_perm);
    return {cls_i.forward(tape, z_for_i), cls_b.forward(tape, z_for_b)};
  }

  // Inference logits and labels come from the intrinsic head on the un-swapped
  // concatenated latent. Ties resolve to the lowest class index.
  ad::Tensor<T> inference_logits(const ad::Tensor<T>& x) const {
    auto z = encode(nullptr, x);
    auto zc = ad::concat_cols<T>(nullptr, z.z_i, z.z_b);
    return cls_i.forward(nullptr, zc);
  }

  std::vector<int> predict(const ad::Tensor<T>& x) const {
    auto logits = inference_logits(x);
    const int n = logits.dim(0), classes = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      out[static_cast<size_t>(i)] =
          ad::argmax_row(logits.vals().data() + static_cast<size_t>(i) * classes, classes);
    }
    return out;
  }

  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> out;
    enc_i.collect(out);
    enc_b.collect(out);
    cls_i.collect(out);
    cls_b.collect(out);
    return out;
  }

  int64_t param_count() const {
    int64_t n = enc_i.param_count() + enc_b.param_count();
    n += cls_i.weight.value.size() + cls_i.bias.value.size();
    n += cls_b.weight.value.size() + cls_b.bias.value.size();
    return n;
  }
};

// Single encoder + linear head baseline trained with plain cross-entropy.
template <class T>
struct VanillaModel {
  ModelGeometry geo;
  Encoder<T> enc;
  LinearHead<T> cls;

  static VanillaModel make(const ModelGeometry& geo, Rng& rng) {
    geo.validate();
    VanillaModel m;
    m.geo = geo;
    m.enc = Encoder<T>::make("enc", geo, rng);
    m.cls = LinearHead<T>::make("cls", geo.latent_dim, geo.num_classes, rng);
    return m;
  }

  ad::Tensor<T> logits(ad::Tape<T>* tape, const ad::Tensor<T>& x) const {
    return cls.forward(tape, enc.forward(tape, x));
  }

  std::vector<int> predict(const ad::Tensor<T>& x) const {
    auto l = logits(nullptr, x);
    const int n = l.dim(0), classes = l.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      out[static_cast<size_t>(i)] =
          ad::argmax_row(l.vals().data() + static_cast<size_t>(i) * classes, classes);
    }
    return out;
  }

  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> out;
    enc.collect(out);
    cls.collect(out);
    return out;
  }
};

}  // namespace dfa

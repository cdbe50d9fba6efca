#include "dfa/eval.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "dfa/ad/ops.hpp"
#include "dfa/rng.hpp"

namespace dfa::eval {

namespace {

// Both latent halves of a whole split as plain row-major matrices.
struct LatentMatrix {
  int64_t n = 0;
  int d = 0;
  std::vector<float> zi, zb;
};

LatentMatrix encode_split(const DualEncoderModel<float>& m,
                          const data::BiasedDataset& ds, const data::Split& split,
                          train::BatchPrep prep, int window) {
  if (split.n == 0) throw DataError("cannot probe an empty split");
  if (split.bias.size() != static_cast<size_t>(split.n)) {
    throw DataError("split carries no bias labels");
  }
  prep.augment = false;
  LatentMatrix out;
  out.n = split.n;
  out.d = m.geo.latent_dim;
  out.zi.resize(static_cast<size_t>(out.n) * out.d);
  out.zb.resize(static_cast<size_t>(out.n) * out.d);
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < split.n; start += window) {
    const int64_t stop = std::min<int64_t>(split.n, start + window);
    idx.resize(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto x = train::assemble_batch(ds, split, idx, prep, 0);
    const auto z = m.encode(nullptr, x);
    const size_t rows = idx.size(), d = static_cast<size_t>(out.d);
    std::copy_n(z.z_i.vals().data(), rows * d,
                out.zi.data() + static_cast<size_t>(start) * d);
    std::copy_n(z.z_b.vals().data(), rows * d,
                out.zb.data() + static_cast<size_t>(start) * d);
  }
  return out;
}

// Scores one head over latents whose bias half is taken from perm[i]'s row.
// `labels[i]` is the expected class of row i.
double head_accuracy(const LinearHead<float>& head, const LatentMatrix& lat,
                     const std::vector<int>& perm, const std::vector<int>& labels) {
  const auto n = static_cast<size_t>(lat.n);
  const auto d = static_cast<size_t>(lat.d);
  ad::Tensor<float> z({static_cast<int>(n), static_cast<int>(2 * d)});
  float* rows = z.vals().data();
  for (size_t i = 0; i < n; ++i) {
    const auto donor = static_cast<size_t>(perm[i]);
    std::copy_n(lat.zi.data() + i * d, d, rows + i * 2 * d);
    std::copy_n(lat.zb.data() + donor * d, d, rows + i * 2 * d + d);
  }
  const auto logits = head.forward(nullptr, z);
  const int classes = logits.dim(1);
  int64_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const int pred = ad::argmax_row(
        logits.vals().data() + i * static_cast<size_t>(classes), classes);
    if (pred == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<int> identity_perm(int64_t n) {
  std::vector<int> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

}  // namespace

SwapProbe swap_probe_with_perms(const DualEncoderModel<float>& m,
                                const data::BiasedDataset& ds,
                                const data::Split& split, train::BatchPrep prep,
                                const std::vector<std::vector<int>>& perms,
                                int window) {
  const LatentMatrix lat = encode_split(m, ds, split, prep, window);
  const auto n = static_cast<size_t>(lat.n);

  std::vector<int> targets(n), bias(n);
  for (size_t i = 0; i < n; ++i) {
    targets[i] = split.targets[i];
    bias[i] = split.bias[i];
  }

  SwapProbe out;
  const auto ident = identity_perm(lat.n);
  out.intrinsic_original = head_accuracy(m.cls_i, lat, ident, targets);
  out.bias_original = head_accuracy(m.cls_b, lat, ident, bias);

  for (const auto& perm : perms) {
    if (perm.size() != n) {
      throw ContractError("probe permutation length does not match the split");
    }
    std::vector<int> donor_bias(n);
    for (size_t i = 0; i < n; ++i) {
      donor_bias[i] = split.bias[static_cast<size_t>(perm[i])];
    }
    out.intrinsic_swapped += head_accuracy(m.cls_i, lat, perm, targets);
    out.bias_swapped += head_accuracy(m.cls_b, lat, perm, donor_bias);
  }
  out.permutations = static_cast<int>(perms.size());
  if (!perms.empty()) {
    out.intrinsic_swapped /= static_cast<double>(perms.size());
    out.bias_swapped /= static_cast<double>(perms.size());
  }
  return out;
}

SwapProbe swap_probe(const DualEncoderModel<float>& m, const data::BiasedDataset& ds,
                     const data::Split& split, train::BatchPrep prep, uint64_t seed,
                     int n_perms, int window) {
  if (n_perms < 1) throw ContractError("swap probe needs at least one permutation");
  Rng rng = Rng::stream(seed, rng_tag::probe);
  std::vector<std::vector<int>> perms;
  perms.reserve(static_cast<size_t>(n_perms));
  for (int k = 0; k < n_perms; ++k) {
    perms.push_back(rng.permutation(static_cast<int>(split.n)));
  }
  return swap_probe_with_perms(m, ds, split, prep, perms, window);
}

void dump_embeddings(const DualEncoderModel<float>& m, const data::BiasedDataset& ds,
                     const data::Split& split, train::BatchPrep prep,
                     const std::string& path, int window) {
  const LatentMatrix lat = encode_split(m, ds, split, prep, window);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");

  os << "sample_id,target_label,bias_label";
  for (int j = 0; j < lat.d; ++j) os << ",z_i_" << j;
  for (int j = 0; j < lat.d; ++j) os << ",z_b_" << j;
  os << "\n";

  char buf[40];
  const auto d = static_cast<size_t>(lat.d);
  for (int64_t i = 0; i < lat.n; ++i) {
    os << i << ',' << static_cast<int>(split.targets[static_cast<size_t>(i)]) << ','
       << static_cast<int>(split.bias[static_cast<size_t>(i)]);
    for (size_t j = 0; j < 2 * d; ++j) {
      const float v = j < d ? lat.zi[static_cast<size_t>(i) * d + j]
                            : lat.zb[static_cast<size_t>(i) * d + (j - d)];
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
      os << ',' << buf;
    }
    os << "\n";
  }
  os.flush();
  if (!os) throw DataError("failed while writing " + path);
}

}  // namespace dfa::eval

#include "dfa/diagnostics.hpp"

#include <span>
#include <vector>

#include "dfa/ad/gradcheck.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa::diag {

GradCheckOutcome gradcheck_dual(const GradCheckSpec& spec) {
  if (spec.instances < 1) throw ConfigError("gradcheck needs at least one instance");
  if (spec.batch < 2) throw ConfigError("gradcheck batch size must be >= 2");
  if (spec.h <= 0.0) throw ConfigError("gradcheck step h must be positive");
  spec.geometry.validate();

  GradCheckOutcome out;
  out.instances = spec.instances;
  out.tolerance = spec.tolerance;

  for (int k = 0; k < spec.instances; ++k) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(k)));
    auto m = DualEncoderModel<double>::make(spec.geometry, rng);

    const int n = spec.batch;
    ad::Tensor<double> x({n, spec.geometry.input_dim()});
    for (auto& v : x.vals()) v = rng.uniform();
    std::vector<int> y(static_cast<size_t>(n));
    for (auto& t : y) t = rng.below_int(spec.geometry.num_classes);

    // Constants of the objective, captured at the base point: difficulty
    // weights, the swap permutation with its donor labels, and each head's
    // frozen view of the opposite latent half.
    auto base = m.encode(nullptr, x);
    const auto zi0 = base.z_i;
    const auto zb0 = base.z_b;
    auto [li0, lb0] = m.classify(nullptr, base);
    const auto w = relative_difficulty(ce_values(li0, y), ce_values(lb0, y));
    const std::vector<int> perm = rng.permutation(n);
    std::vector<int> donor(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) donor[static_cast<size_t>(i)] = y[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    const auto zb_perm0 = ad::gather_rows<double>(nullptr, zb0, perm);

    auto loss_fn = [&](ad::Tape<double>* tape) {
      auto z = m.encode(tape, x);
      auto li = m.cls_i.forward(tape, ad::concat_cols(tape, z.z_i, zb0));
      auto lb = m.cls_b.forward(tape, ad::concat_cols(tape, zi0, z.z_b));
      auto l_dis = disentangle_loss(tape, w, li, lb, y, spec.weights);
      auto zb_perm = ad::gather_rows(tape, z.z_b, perm);
      auto si = m.cls_i.forward(tape, ad::concat_cols(tape, z.z_i, zb_perm0));
      auto sb = m.cls_b.forward(tape, ad::concat_cols(tape, zi0, zb_perm));
      auto l_swap = swap_loss(tape, w, si, sb, y, donor, spec.weights);
      return total_loss(tape, l_dis, &l_swap, /*t=*/1, /*t_swap=*/0, spec.weights);
    };

    ad::GradCheckConfig gc;
    gc.h = spec.h;
    gc.coords_per_tensor = spec.coords_per_tensor;
    gc.seed = mix_seed(spec.seed, 0x636F6F7264000000ULL + static_cast<uint64_t>(k));
    auto params = m.parameters();
    const auto rep = ad::finite_diff_check<double>(
        std::span<ad::Parameter<double>*>(params), loss_fn, gc);
    out.coords_checked += rep.coords_checked;
    out.kink_skips += rep.kink_skips;
    if (rep.max_rel_err > out.max_rel_err) {
      out.max_rel_err = rep.max_rel_err;
      out.worst_param = rep.worst_param;
      out.worst_coord = rep.worst_coord;
      out.worst_analytic = rep.worst_analytic;
      out.worst_numeric = rep.worst_numeric;
    }
  }
  out.pass = out.max_rel_err < spec.tolerance;
  return out;
}

}  // namespace dfa::diag

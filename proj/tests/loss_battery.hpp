#pragma once

// Finite-difference checks of every loss on ≤3×8×8 inputs. Shared by the unit
// suite and the acceptance binary.

#include <string>
#include <utility>
#include <vector>

#include "slgan/histogram.hpp"
#include "slgan/losses.hpp"
#include "support.hpp"

namespace testing {

struct LossGradResult {
  std::string name;
  GradCheck check;
};

inline std::vector<LossGradResult> loss_gradient_battery(std::uint64_t seed = 1234) {
  using namespace slgan;
  Rng rng(seed);
  std::vector<LossGradResult> out;
  auto run = [&](std::string name, const std::function<ag::Var(const std::vector<ag::Var>&)>& f,
                 const std::vector<Tensor>& in) { out.push_back({std::move(name), finite_difference_check(f, in)}); };

  const Shape img{1, 3, 8, 8};
  run("adversarial_d", [](auto& v) { return adversarial_loss_d(v[0], v[1]); },
      {random_tensor(rng, {3, 1}, -3, 3), random_tensor(rng, {3, 1}, -3, 3)});
  run("adversarial_g", [](auto& v) { return adversarial_loss_g(v[0]); }, {random_tensor(rng, {3, 1}, -3, 3)});
  run("style_diversity", [](auto& v) { return style_diversity_loss(v[0], v[1]); },
      {random_tensor(rng, img), random_tensor(rng, img)});
  run("style_reconstruction", [](auto& v) { return style_reconstruction_loss(v[0], v[1]); },
      {random_tensor(rng, {2, 8}), random_tensor(rng, {2, 8})});
  run("cycle", [](auto& v) { return cycle_loss(v[0], v[1]); }, {random_tensor(rng, img), random_tensor(rng, img)});
  run("guide", [](auto& v) { return guide_loss(v[0], v[1], v[2], 0.5, 0.5); },
      {random_tensor(rng, img), random_tensor(rng, img), random_tensor(rng, img)});

  // Makeup loss: histogram targets are computed once and then held fixed.
  ArchConfig arch = micro_arch(8);
  ParamStore ps;
  declare_all(arch, ps, rng);
  const StyleEncoder se(arch, ps);
  const Tensor gen = random_tensor(rng, img), ref = random_tensor(rng, img);
  RegionMasks gm, rm;
  for (Tensor* m : {&gm.lips, &gm.eyes, &gm.face, &rm.lips, &rm.eyes, &rm.face})
    *m = random_mask(rng, {1, 1, 8, 8}, 0.5);
  std::vector<HistogramTargets> targets;
  for (auto [g, r] : {std::pair{&gm.lips, &rm.lips}, {&gm.eyes, &rm.eyes}, {&gm.face, &rm.face}}) {
    ag::NoGradGuard guard;
    std::vector<Tensor> rf;
    for (const auto& f : extract_masked_features(ag::constant(ref), *r, se)) rf.push_back(f.value());
    targets.push_back(histogram_targets(extract_masked_features(ag::constant(gen), *g, se), *g, rf, *r));
  }
  const Tensor* region_masks[3] = {&gm.lips, &gm.eyes, &gm.face};
  for (int k = 0; k < 3; ++k) {
    static const char* names[3] = {"makeup_lips", "makeup_eyes", "makeup_face"};
    run(names[k],
        [&, k](auto& v) { return region_loss_from_targets(extract_masked_features(v[0], *region_masks[k], se), targets[k]); },
        {gen});
  }
  const LossWeights w;
  run("makeup_total",
      [&](auto& v) {
        std::vector<std::pair<double, ag::Var>> terms;
        const double lambdas[3] = {w.lips, w.eyes, w.face};
        for (int k = 0; k < 3; ++k)
          terms.emplace_back(lambdas[k],
                             region_loss_from_targets(extract_masked_features(v[0], *region_masks[k], se), targets[k]));
        return ag::weighted_sum(terms);
      },
      {gen});

  run("total_generator",
      [&](auto& v) {
        GeneratorParts p{adversarial_loss_g(v[0]), style_diversity_loss(v[1], v[2]), style_reconstruction_loss(v[3], v[4]),
                         cycle_loss(v[1], v[2]), ag::scale(ag::mean_all(v[3]), 1.0), guide_loss(v[1], v[2], v[1], 0.5, 0.5)};
        return total_generator_loss(p, w);
      },
      {random_tensor(rng, {2, 1}), random_tensor(rng, {1, 3, 4, 4}), random_tensor(rng, {1, 3, 4, 4}),
       random_tensor(rng, {2, 8}), random_tensor(rng, {2, 8})});
  return out;
}

}  // namespace testing

#include "slgan/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slgan {

std::vector<double> match_histogram(std::span<const double> source, std::span<const double> target) {
  if (source.empty() || target.empty()) throw Error("EmptyPopulation", "histogram matching needs non-empty inputs");
  const std::size_t n = source.size(), m = target.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return source[a] < source[b]; });

  std::vector<double> sorted_target(target.begin(), target.end());
  std::sort(sorted_target.begin(), sorted_target.end());

  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double pos = n == 1 ? 0.5 * static_cast<double>(m - 1)
                              : static_cast<double>(r) * static_cast<double>(m - 1) / static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    double v = sorted_target[lo];
    if (frac > 0 && lo + 1 < m) v += frac * (sorted_target[lo + 1] - sorted_target[lo]);
    out[order[r]] = v;
  }
  return out;
}

std::vector<ag::Var> extract_masked_features(const ag::Var& image, const Tensor& region_mask,
                                             const StyleEncoder& encoder) {
  const Shape& s = image.shape();
  if (s.size() != 4) throw Error("ShapeMismatch", "expected N×3×H×W image");
  require_shape(region_mask, {s[0], 1, s[2], s[3]}, "region mask");
  return encoder.trunk().forward(ag::mul_const(image, region_mask)).layers;
}

HistogramTargets histogram_targets(const std::vector<ag::Var>& generated_features, const Tensor& gen_mask,
                                   const std::vector<Tensor>& reference_features, const Tensor& ref_mask) {
  if (generated_features.size() != reference_features.size())
    throw Error("ShapeMismatch", "feature stacks differ in depth");
  HistogramTargets out;
  for (std::size_t l = 0; l < generated_features.size(); ++l) {
    const Tensor& g = generated_features[l].value();
    const Tensor& r = reference_features[l];
    if (!g.same_shape(r)) throw Error("ShapeMismatch", "layer shapes differ between generated and reference");
    const std::int64_t N = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3), S = H * W;
    Tensor gm = resize_mask_nearest(gen_mask, H, W);
    const Tensor rm = resize_mask_nearest(ref_mask, H, W);
    Tensor target(g.shape());
    bool empty = false;

    for (std::int64_t n = 0; n < N; ++n) {
      std::vector<std::int64_t> gpos, rpos;
      for (std::int64_t p = 0; p < S; ++p) {
        if (gm[n * S + p] > 0.5) gpos.push_back(p);
        if (rm[n * S + p] > 0.5) rpos.push_back(p);
      }
      if (gpos.empty() || rpos.empty()) {
        empty = true;
        std::fill_n(gm.data() + n * S, S, 0.0);
        continue;
      }
      std::vector<double> src(gpos.size()), tgt(rpos.size());
      for (std::int64_t c = 0; c < C; ++c) {
        const double* gv = g.data() + (n * C + c) * S;
        const double* rv = r.data() + (n * C + c) * S;
        for (std::size_t i = 0; i < gpos.size(); ++i) src[i] = gv[gpos[i]];
        for (std::size_t i = 0; i < rpos.size(); ++i) tgt[i] = rv[rpos[i]];
        const auto matched = match_histogram(src, tgt);
        double* tv = target.data() + (n * C + c) * S;
        for (std::size_t i = 0; i < gpos.size(); ++i) tv[gpos[i]] = matched[i];
      }
    }
    out.targets.push_back(std::move(target));
    out.masks.push_back(std::move(gm));
    out.empty_region.push_back(empty);
  }
  return out;
}

ag::Var region_loss_from_targets(const std::vector<ag::Var>& generated_features, const HistogramTargets& t) {
  if (generated_features.size() != t.targets.size()) throw Error("ShapeMismatch", "target depth mismatch");
  std::vector<std::pair<double, ag::Var>> terms;
  for (std::size_t l = 0; l < generated_features.size(); ++l) {
    const ag::Var masked = ag::mul_const(generated_features[l], t.masks[l]);
    terms.emplace_back(1.0, ag::rms_per_sample(ag::sub(masked, ag::constant(t.targets[l]))));
  }
  return ag::weighted_sum(terms);
}

RegionLoss region_histogram_loss(const ag::Var& generated, const Tensor& reference, const Tensor& gen_mask,
                                 const Tensor& ref_mask, const StyleEncoder& encoder) {
  if (!generated.value().same_shape(reference))
    throw Error("ShapeMismatch", "generated and reference images differ in shape");
  const auto gen_feats = extract_masked_features(generated, gen_mask, encoder);
  std::vector<Tensor> ref_feats;
  {
    ag::NoGradGuard guard;
    for (const auto& f : extract_masked_features(ag::constant(reference), ref_mask, encoder))
      ref_feats.push_back(f.value());
  }
  const HistogramTargets t = histogram_targets(gen_feats, gen_mask, ref_feats, ref_mask);
  return {region_loss_from_targets(gen_feats, t), t.empty_region};
}

}  // namespace slgan

#pragma once

// Exact histogram matching between value populations and the masked,
// per-channel feature matching used by the perceptual makeup loss.

#include <span>
#include <vector>

#include "slgan/autograd.hpp"
#include "slgan/networks.hpp"

namespace slgan {

/// Replaces every source value with the target quantile at its source rank.
///
/// Ranks come from a stable sort on (value, original index), so tied source
/// values receive consecutive ranks. With n source and m target values, rank r
/// reads position r·(m−1)/(n−1) of the sorted target with linear
/// interpolation (n = 1 reads the target median position). Equal lengths
/// therefore transfer the target multiset exactly.
std::vector<double> match_histogram(std::span<const double> source, std::span<const double> target);

/// SE trunk features of `image ∘ region_mask`, one entry per convolution layer.
std::vector<ag::Var> extract_masked_features(const ag::Var& image, const Tensor& region_mask,
                                             const StyleEncoder& encoder);

/// Frozen matching targets for one region. `targets[l]` holds the matched
/// values at in-mask positions and zero elsewhere; `masks[l]` is the
/// generated-side mask at layer l's resolution with empty samples zeroed.
struct HistogramTargets {
  std::vector<Tensor> targets;
  std::vector<Tensor> masks;
  std::vector<bool> empty_region;  // layer had a sample with no support on either side
};

HistogramTargets histogram_targets(const std::vector<ag::Var>& generated_features, const Tensor& gen_mask,
                                   const std::vector<Tensor>& reference_features, const Tensor& ref_mask);

/// Σ_l RMS(φ_l ∘ m_l − target_l) with the targets held constant.
ag::Var region_loss_from_targets(const std::vector<ag::Var>& generated_features, const HistogramTargets& t);

struct RegionLoss {
  ag::Var value;
  std::vector<bool> empty_region;
};

/// One region term of the makeup loss. The reference path runs without
/// gradient recording; matched values are a stop-gradient target.
RegionLoss region_histogram_loss(const ag::Var& generated, const Tensor& reference, const Tensor& gen_mask,
                                 const Tensor& ref_mask, const StyleEncoder& encoder);

}  // namespace slgan

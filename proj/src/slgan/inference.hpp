#pragma once

// Frozen-model transfer, removal and style interpolation. Every entry point
// runs the EMA shadow weights with gradients disabled.

#include <cstdint>
#include <span>
#include <vector>

#include "slgan/dataset.hpp"
#include "slgan/networks.hpp"
#include "slgan/training.hpp"

namespace slgan {

/// 1×16 standard-normal latent drawn from `seed`.
Tensor latent_from_seed(std::uint64_t seed);

/// Convex combination Σ wᵢ·sᵢ of 1×S codes. Weights must be non-negative and
/// sum to 1 within 1e−6; they are renormalized by their sum before mixing.
/// Throws WeightSumViolation or DimMismatch.
Tensor interpolate_styles(std::span<const Tensor> codes, std::span<const double> weights);

/// Validates and renormalizes a weight vector (same rules as interpolate_styles).
std::vector<double> normalize_weights(std::span<const double> weights);

class InferenceModel {
 public:
  /// Binds to the bundle's EMA shadows.
  explicit InferenceModel(const ModelBundle& bundle);
  /// Throws InvalidConfig unless `ema` is tagged as an EMA store.
  InferenceModel(const ArchConfig& arch, ParamStore ema);

  const ArchConfig& arch() const { return arch_; }
  int resolution() const { return arch_.resolution; }
  ParamStore::Source parameter_source() const { return params_.source(); }

  /// 1×S style code of `face` through the head of domain `d`.
  Tensor encode_style(const Sample& face, Domain d) const;
  Tensor map_latent(const Tensor& z, Domain d) const;
  Tensor map_latent(std::uint64_t seed, Domain d) const { return map_latent(latent_from_seed(seed), d); }
  /// Style-guided decoder output, 1×3×R×R in [−1, 1].
  Tensor generate(const Sample& source, const Tensor& style) const;

  /// Makeup transfer: G(source, SE_makeup(reference)).
  Tensor transfer(const Sample& source, const Sample& reference) const;
  /// Style-guided removal: G(source, SE_non-makeup(reference)).
  Tensor remove(const Sample& source, const Sample& reference) const;
  /// Latent-guided removal: G(source, MN(z(seed), non-makeup)).
  Tensor remove(const Sample& source, std::uint64_t seed) const;

  /// s(α) = (1 − α)·SE_own(source) + α·SE_target(reference) on a uniform α grid.
  /// The source's own domain is the opposite of `target`.
  std::vector<Tensor> strength_sweep(const Sample& source, const Sample& reference, int steps,
                                     Domain target = Domain::makeup) const;
  /// Linear path between MN(z_a, d) and MN(z_b, d) in style space.
  std::vector<Tensor> latent_sweep(const Sample& source, std::uint64_t seed_a, std::uint64_t seed_b, int steps,
                                   Domain d) const;
  /// Style-space blend used by both sweeps: (1 − α)·a + α·b.
  static Tensor blend(const Tensor& a, const Tensor& b, double alpha);

 private:
  ArchConfig arch_;
  ParamStore params_;
  StyleEncoder se_;
  MappingNetwork mn_;
  Generator g_;
};

}  // namespace slgan

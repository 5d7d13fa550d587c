#include "slgan/inference.hpp"

#include <cmath>

namespace slgan {

Tensor latent_from_seed(std::uint64_t seed) {
  Rng rng(seed);
  Tensor z({1, kLatentDim});
  for (auto& v : z.vec()) v = standard_normal(rng);
  return z;
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  if (weights.empty()) throw Error("WeightSumViolation", "at least one weight is required");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error("WeightSumViolation", "weights must be finite and non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw Error("WeightSumViolation", "weights sum to " + std::to_string(sum) + ", expected 1");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= sum;
  return out;
}

Tensor interpolate_styles(std::span<const Tensor> codes, std::span<const double> weights) {
  if (codes.size() != weights.size())
    throw Error("DimMismatch", std::to_string(codes.size()) + " codes but " + std::to_string(weights.size()) +
                                   " weights");
  const std::vector<double> w = normalize_weights(weights);
  for (const Tensor& c : codes)
    if (c.shape() != codes[0].shape())
      throw Error("DimMismatch", "style codes " + shape_str(codes[0].shape()) + " and " + shape_str(c.shape()));
  // Zero-weight terms are skipped and the first term is assigned, so a one-hot
  // weight vector returns the selected code bit for bit.
  Tensor out = Tensor::zeros_like(codes[0]);
  bool first = true;
  for (std::size_t k = 0; k < codes.size(); ++k) {
    if (w[k] == 0.0) continue;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = first ? w[k] * codes[k][i] : out[i] + w[k] * codes[k][i];
    first = false;
  }
  return out;
}

InferenceModel::InferenceModel(const ModelBundle& bundle)
    : InferenceModel(bundle.config.arch, bundle.ema.clone(ParamStore::Source::ema, false)) {}

InferenceModel::InferenceModel(const ArchConfig& arch, ParamStore ema)
    : arch_(arch),
      params_(ema.source() == ParamStore::Source::ema
                  ? std::move(ema)
                  : throw Error("InvalidConfig", "inference requires the EMA parameter copy")),
      se_(arch_, params_),
      mn_(arch_, params_),
      g_(arch_, params_, false) {}

namespace {

void check_face(const Sample& s, int resolution) {
  require_shape(s.image, {1, 3, resolution, resolution}, "inference image");
  require_shape(s.masks.full_face, {1, 1, resolution, resolution}, "inference mask");
  require_shape(s.heatmap, {1, 1, resolution, resolution}, "inference heatmap");
}

}  // namespace

Tensor InferenceModel::encode_style(const Sample& face, Domain d) const {
  check_face(face, resolution());
  ag::NoGradGuard guard;
  return se_.encode(ag::constant(face.image), face.masks.full_face, {d}).value();
}

Tensor InferenceModel::map_latent(const Tensor& z, Domain d) const {
  ag::NoGradGuard guard;
  return mn_.map(ag::constant(z), {d}).value();
}

Tensor InferenceModel::generate(const Sample& source, const Tensor& style) const {
  check_face(source, resolution());
  require_shape(style, {1, arch_.style_dim}, "style code");
  ag::NoGradGuard guard;
  return g_.generate(ag::constant(source.image), source.heatmap, ag::constant(style)).value();
}

Tensor InferenceModel::transfer(const Sample& source, const Sample& reference) const {
  return generate(source, encode_style(reference, Domain::makeup));
}

Tensor InferenceModel::remove(const Sample& source, const Sample& reference) const {
  return generate(source, encode_style(reference, Domain::non_makeup));
}

Tensor InferenceModel::remove(const Sample& source, std::uint64_t seed) const {
  return generate(source, map_latent(seed, Domain::non_makeup));
}

Tensor InferenceModel::blend(const Tensor& a, const Tensor& b, double alpha) {
  if (!a.same_shape(b))
    throw Error("DimMismatch", "cannot blend " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor out(a.shape());
  // Equal entries are copied so that a path between identical codes is constant.
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a[i] == b[i] ? a[i] : (1.0 - alpha) * a[i] + alpha * b[i];
  return out;
}

namespace {

std::vector<double> alpha_grid(int steps) {
  if (steps < 2) throw Error("InvalidConfig", "a sweep needs at least 2 steps");
  std::vector<double> a(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) a[static_cast<std::size_t>(i)] = static_cast<double>(i) / (steps - 1);
  return a;
}

}  // namespace

std::vector<Tensor> InferenceModel::strength_sweep(const Sample& source, const Sample& reference, int steps,
                                                   Domain target) const {
  const auto alphas = alpha_grid(steps);
  const Tensor own = encode_style(source, opposite(target));
  const Tensor ref = encode_style(reference, target);
  std::vector<Tensor> frames;
  for (double a : alphas) frames.push_back(generate(source, blend(own, ref, a)));
  return frames;
}

std::vector<Tensor> InferenceModel::latent_sweep(const Sample& source, std::uint64_t seed_a, std::uint64_t seed_b,
                                                 int steps, Domain d) const {
  const auto alphas = alpha_grid(steps);
  const Tensor wa = map_latent(seed_a, d);
  const Tensor wb = map_latent(seed_b, d);
  std::vector<Tensor> frames;
  for (double a : alphas) frames.push_back(generate(source, blend(wa, wb, a)));
  return frames;
}

}  // namespace slgan

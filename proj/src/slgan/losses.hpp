#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slgan/autograd.hpp"
#include "slgan/histogram.hpp"
#include "slgan/networks.hpp"

namespace slgan {

struct LossWeights {
  double adv = 1.0;
  double sd = -1.0;
  double sr = 1.0;
  double cyc = 1.0;
  double makeup = 1.0;
  double guide = 1.0;
  double lips = 10.0;
  double eyes = 10.0;
  double face = 0.1;
  double gamma = 0.5;
  double beta = 0.5;

  void validate() const;
};

struct MakeupLoss {
  ag::Var total;
  ag::Var lips, eyes, face;
  std::vector<bool> empty_region;  // any layer of any region had no support
};

MakeupLoss makeup_loss(const ag::Var& generated, const Tensor& reference, const RegionMasks& gen_masks,
                       const RegionMasks& ref_masks, const StyleEncoder& encoder, const LossWeights& w);

/// −[log σ(real) + log(1 − σ(fake))], batch-mean.
ag::Var adversarial_loss_d(const ag::Var& real_logit, const ag::Var& fake_logit);
/// Non-saturating generator form, −log σ(fake), batch-mean.
ag::Var adversarial_loss_g(const ag::Var& fake_logit);

ag::Var style_diversity_loss(const ag::Var& img1, const ag::Var& img2);
ag::Var style_reconstruction_loss(const ag::Var& target_style, const ag::Var& reencoded_style);
ag::Var cycle_loss(const ag::Var& source, const ag::Var& reconstructed);
/// λγ·‖source − invariant‖₂ + λβ·‖invariant − styled‖₂ with mean-reduced L2
/// (per-sample root mean square, averaged over the batch).
ag::Var guide_loss(const ag::Var& source, const ag::Var& invariant_out, const ag::Var& styled_out,
                   double lambda_gamma, double lambda_beta);

/// Component values of one generator objective.
struct GeneratorParts {
  ag::Var adv, sd, sr, cyc, makeup, guide;
};

ag::Var total_generator_loss(const GeneratorParts& parts, const LossWeights& w);
ag::Var total_discriminator_loss(const ag::Var& adv_d, const LossWeights& w);

/// Scalar counterparts of the totals, used when recomputing from a report.
double total_generator_value(double adv, double sd, double sr, double cyc, double makeup, double guide,
                             const LossWeights& w);

struct LossReport {
  std::uint64_t step = 0;
  double d_adv = 0, d_total = 0;
  double g_adv = 0, g_sd = 0, g_sr = 0, g_cyc = 0;
  double g_makeup = 0, g_lips = 0, g_eyes = 0, g_face = 0;
  double g_guide = 0, g_total = 0;
  bool empty_region = false;

  bool all_finite() const;
  /// One JSON object, fields in declaration order.
  std::string to_json_line() const;
  static LossReport from_json_line(const std::string& line);
  bool operator==(const LossReport&) const = default;
};

}  // namespace slgan

#include "slgan/losses.hpp"

#include <cmath>

#include "json.hpp"

namespace slgan {

using ag::Var;

void LossWeights::validate() const {
  for (double v : {adv, sd, sr, cyc, makeup, guide, lips, eyes, face, gamma, beta})
    if (!std::isfinite(v)) throw Error("InvalidConfig", "loss weights must be finite");
}

MakeupLoss makeup_loss(const Var& generated, const Tensor& reference, const RegionMasks& gen_masks,
                       const RegionMasks& ref_masks, const StyleEncoder& encoder, const LossWeights& w) {
  MakeupLoss out;
  auto region = [&](const Tensor& gm, const Tensor& rm) {
    RegionLoss r = region_histogram_loss(generated, reference, gm, rm, encoder);
    for (bool e : r.empty_region) out.empty_region.push_back(e);
    return r.value;
  };
  out.lips = region(gen_masks.lips, ref_masks.lips);
  out.eyes = region(gen_masks.eyes, ref_masks.eyes);
  out.face = region(gen_masks.face, ref_masks.face);
  out.total = ag::weighted_sum({{w.lips, out.lips}, {w.eyes, out.eyes}, {w.face, out.face}});
  return out;
}

Var adversarial_loss_d(const Var& real_logit, const Var& fake_logit) {
  // log σ(x) = −softplus(−x), log(1 − σ(x)) = −softplus(x)
  return ag::add(ag::mean_all(ag::softplus(ag::scale(real_logit, -1.0))), ag::mean_all(ag::softplus(fake_logit)));
}

Var adversarial_loss_g(const Var& fake_logit) { return ag::mean_all(ag::softplus(ag::scale(fake_logit, -1.0))); }

Var style_diversity_loss(const Var& img1, const Var& img2) { return ag::mean_abs_diff(img1, img2); }

Var style_reconstruction_loss(const Var& target_style, const Var& reencoded_style) {
  if (target_style.shape() != reencoded_style.shape())
    throw Error("DimMismatch", "style codes " + shape_str(target_style.shape()) + " vs " +
                                   shape_str(reencoded_style.shape()));
  return ag::mean_abs_diff(target_style, reencoded_style);
}

Var cycle_loss(const Var& source, const Var& reconstructed) { return ag::mean_abs_diff(source, reconstructed); }

Var guide_loss(const Var& source, const Var& invariant_out, const Var& styled_out, double lambda_gamma,
               double lambda_beta) {
  return ag::weighted_sum({{lambda_gamma, ag::rms_per_sample(ag::sub(source, invariant_out))},
                           {lambda_beta, ag::rms_per_sample(ag::sub(invariant_out, styled_out))}});
}

Var total_generator_loss(const GeneratorParts& p, const LossWeights& w) {
  return ag::weighted_sum(
      {{w.adv, p.adv}, {w.sd, p.sd}, {w.sr, p.sr}, {w.cyc, p.cyc}, {w.makeup, p.makeup}, {w.guide, p.guide}});
}

Var total_discriminator_loss(const Var& adv_d, const LossWeights& w) { return ag::scale(adv_d, w.adv); }

double total_generator_value(double adv, double sd, double sr, double cyc, double makeup, double guide,
                             const LossWeights& w) {
  return w.adv * adv + w.sd * sd + w.sr * sr + w.cyc * cyc + w.makeup * makeup + w.guide * guide;
}

bool LossReport::all_finite() const {
  for (double v : {d_adv, d_total, g_adv, g_sd, g_sr, g_cyc, g_makeup, g_lips, g_eyes, g_face, g_guide, g_total})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string LossReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["d_adv"] = d_adv;
  j["d_total"] = d_total;
  j["g_adv"] = g_adv;
  j["g_sd"] = g_sd;
  j["g_sr"] = g_sr;
  j["g_cyc"] = g_cyc;
  j["g_makeup"] = g_makeup;
  j["g_lips"] = g_lips;
  j["g_eyes"] = g_eyes;
  j["g_face"] = g_face;
  j["g_guide"] = g_guide;
  j["g_total"] = g_total;
  j["empty_region"] = empty_region;
  return j.dump();
}

LossReport LossReport::from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  LossReport r;
  r.step = j.at("step").get<std::uint64_t>();
  r.d_adv = j.at("d_adv");
  r.d_total = j.at("d_total");
  r.g_adv = j.at("g_adv");
  r.g_sd = j.at("g_sd");
  r.g_sr = j.at("g_sr");
  r.g_cyc = j.at("g_cyc");
  r.g_makeup = j.at("g_makeup");
  r.g_lips = j.at("g_lips");
  r.g_eyes = j.at("g_eyes");
  r.g_face = j.at("g_face");
  r.g_guide = j.at("g_guide");
  r.g_total = j.at("g_total");
  r.empty_region = j.at("empty_region");
  return r;
}

}  // namespace slgan

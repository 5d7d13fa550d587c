#include "slgan/networks.hpp"

#include <algorithm>
#include <cmath>

namespace slgan {

using ag::Var;

const char* domain_name(Domain d) { return d == Domain::makeup ? "makeup" : "non-makeup"; }

DomainCondition DomainCondition::of(Domain d) {
  DomainCondition c;
  c.onehot[static_cast<std::size_t>(d)] = 1.0;
  return c;
}

Domain DomainCondition::domain() const {
  int hot = -1;
  for (std::size_t i = 0; i < onehot.size(); ++i) {
    if (onehot[i] == 1.0) {
      if (hot >= 0) throw Error("InvalidCondition", "more than one hot entry");
      hot = static_cast<int>(i);
    } else if (onehot[i] != 0.0) {
      throw Error("InvalidCondition", "entries must be 0 or 1");
    }
  }
  if (hot < 0) throw Error("InvalidCondition", "no hot entry");
  return static_cast<Domain>(hot);
}

int ArchConfig::stage_channels(int stage) const {
  return std::min(base_channels << stage, max_channels);
}

int ArchConfig::trunk_channels(int layer) const {
  return std::min(base_channels << layer, max_channels);
}

void ArchConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error("InvalidConfig", m); };
  if (style_dim < 1) bad("style_dim must be positive");
  if (base_channels < 1 || max_channels < base_channels) bad("channel widths");
  if (num_down < 0 || num_res_blocks < 0 || trunk_down < 0) bad("negative depth");
  if (mapping_layers < 1 || mapping_hidden < 1) bad("mapping network size");
  if (resolution < 4) bad("resolution too small");
  if ((resolution >> num_down) < 2 || (resolution % (1 << num_down)) != 0)
    bad("resolution must be divisible by 2^num_down with at least 2x2 bottleneck");
  if ((resolution >> trunk_down) < 1 || (resolution % (1 << trunk_down)) != 0)
    bad("resolution must be divisible by 2^trunk_down");
}

// ---------------------------------------------------------------------------

ag::Var& ParamStore::add(const std::string& name, Tensor init, bool requires_grad) {
  if (contains(name)) throw Error("InvalidConfig", "duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, ag::leaf(std::move(init), requires_grad));
  return entries_.back().second;
}

const ag::Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("MissingParameter", name);
  return entries_[it->second].second;
}

std::int64_t ParamStore::parameter_count(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& [name, v] : entries_)
    if (name.rfind(prefix, 0) == 0) n += v.value().numel();
  return n;
}

ParamStore ParamStore::clone(Source src, bool requires_grad) const {
  ParamStore out(src);
  for (const auto& [name, v] : entries_) out.add(name, v.value(), requires_grad);
  return out;
}

void ParamStore::set_requires_grad(const std::string& prefix, bool flag) {
  for (auto& [name, v] : entries_)
    if (name.rfind(prefix, 0) == 0) v.node()->requires_grad = flag;
}

void declare_conv(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, int k) {
  const double sd = std::sqrt(2.0 / (in * k * k));
  Tensor w({out, in, k, k});
  for (auto& v : w.vec()) v = sd * standard_normal(rng);
  ps.add(name + "/w", std::move(w));
  ps.add(name + "/b", Tensor({out}));
}

void declare_linear(ParamStore& ps, Rng& rng, const std::string& name, int in, int out) {
  const double sd = std::sqrt(2.0 / in);
  Tensor w({out, in});
  for (auto& v : w.vec()) v = sd * standard_normal(rng);
  ps.add(name + "/w", std::move(w));
  ps.add(name + "/b", Tensor({out}));
}

namespace {

std::vector<int> domain_indices(const DomainBatch& domains, std::int64_t batch) {
  if (static_cast<std::int64_t>(domains.size()) != batch)
    throw Error("ShapeMismatch", "domain batch size " + std::to_string(domains.size()) + " vs " +
                                     std::to_string(batch));
  std::vector<int> idx;
  idx.reserve(domains.size());
  for (Domain d : domains) idx.push_back(static_cast<int>(d));
  return idx;
}

Var apply_heads(const Var& x, const std::vector<std::pair<Var, Var>>& heads, const DomainBatch& domains) {
  const auto idx = domain_indices(domains, x.shape()[0]);
  std::vector<Var> outs;
  outs.reserve(heads.size());
  for (const auto& [w, b] : heads) outs.push_back(ag::linear(x, w, b));
  return ag::select_rows(outs, idx);
}

void require_image(const Var& image, int resolution) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != resolution || s[3] != resolution)
    throw Error("ShapeMismatch", "expected N×3×" + std::to_string(resolution) + "×" + std::to_string(resolution) +
                                     " image, got " + shape_str(s));
}

}  // namespace

// ---------------------------------------------------------------------------

void ConvTrunk::declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng, const std::string& prefix) {
  int in = 3;
  for (int l = 0; l < cfg.trunk_layers(); ++l) {
    const int out = cfg.trunk_channels(l);
    declare_conv(ps, rng, prefix + "/conv" + std::to_string(l), in, out, 3);
    in = out;
  }
}

ConvTrunk::ConvTrunk(const ArchConfig& cfg, const ParamStore& ps, const std::string& prefix) {
  for (int l = 0; l < cfg.trunk_layers(); ++l) {
    const std::string n = prefix + "/conv" + std::to_string(l);
    weights_.push_back(ps.get(n + "/w"));
    biases_.push_back(ps.get(n + "/b"));
    strides_.push_back(l == 0 ? 1 : 2);
  }
}

TrunkOutput ConvTrunk::forward(const Var& image) const {
  TrunkOutput out;
  Var a = image;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].shape()[1] != a.shape()[1])
      throw Error("ShapeMismatch", "trunk input has " + std::to_string(a.shape()[1]) + " channels");
    Var phi = ag::conv2d(a, weights_[l], biases_[l], strides_[l], 1);
    out.layers.push_back(phi);
    a = ag::leaky_relu(phi, kLeakySlope);
  }
  out.pooled = ag::global_avg_pool(a);
  return out;
}

// ---------------------------------------------------------------------------

void StyleEncoder::declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng) {
  ConvTrunk::declare(cfg, ps, rng, "se/trunk");
  const int c = cfg.trunk_channels(cfg.trunk_layers() - 1);
  for (int d = 0; d < kNumDomains; ++d) declare_linear(ps, rng, "se/head" + std::to_string(d), c, cfg.style_dim);
}

StyleEncoder::StyleEncoder(const ArchConfig& cfg, const ParamStore& ps)
    : trunk_(cfg, ps, "se/trunk"), style_dim_(cfg.style_dim) {
  for (int d = 0; d < kNumDomains; ++d) {
    const std::string n = "se/head" + std::to_string(d);
    heads_.emplace_back(ps.get(n + "/w"), ps.get(n + "/b"));
  }
}

Var StyleEncoder::encode(const Var& image, const Tensor& full_face_mask, const DomainBatch& domains) const {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3) throw Error("ShapeMismatch", "style encoder expects N×3×H×W");
  require_shape(full_face_mask, {s[0], 1, s[2], s[3]}, "style encoder mask");
  const Var masked = ag::mul_const(image, full_face_mask);
  return apply_heads(trunk_.forward(masked).pooled, heads_, domains);
}

// ---------------------------------------------------------------------------

void MappingNetwork::declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng) {
  int in = kLatentDim;
  for (int i = 0; i < cfg.mapping_layers; ++i) {
    declare_linear(ps, rng, "mn/shared" + std::to_string(i), in, cfg.mapping_hidden);
    in = cfg.mapping_hidden;
  }
  for (int d = 0; d < kNumDomains; ++d)
    declare_linear(ps, rng, "mn/head" + std::to_string(d), cfg.mapping_hidden, cfg.style_dim);
}

MappingNetwork::MappingNetwork(const ArchConfig& cfg, const ParamStore& ps) {
  for (int i = 0; i < cfg.mapping_layers; ++i) {
    const std::string n = "mn/shared" + std::to_string(i);
    shared_.emplace_back(ps.get(n + "/w"), ps.get(n + "/b"));
  }
  for (int d = 0; d < kNumDomains; ++d) {
    const std::string n = "mn/head" + std::to_string(d);
    heads_.emplace_back(ps.get(n + "/w"), ps.get(n + "/b"));
  }
}

Var MappingNetwork::map(const Var& z, const DomainBatch& domains) const {
  if (z.shape().size() != 2 || z.shape()[1] != kLatentDim)
    throw Error("DimensionMismatch", "latent code must be N×16, got " + shape_str(z.shape()));
  Var h = z;
  for (const auto& [w, b] : shared_) h = ag::leaky_relu(ag::linear(h, w, b), 0.0);
  return apply_heads(h, heads_, domains);
}

// ---------------------------------------------------------------------------

namespace {

void declare_decoder(const ArchConfig& cfg, ParamStore& ps, Rng& rng, const std::string& p, bool styled) {
  const int cb = cfg.stage_channels(cfg.num_down);
  for (int j = 0; j < cfg.num_res_blocks; ++j)
    for (const char* half : {"a", "b"}) {
      const std::string n = p + "/res" + std::to_string(j) + half;
      declare_conv(ps, rng, n, cb, cb, 3);
      if (styled) declare_linear(ps, rng, n + "_adain", cfg.style_dim, 2 * cb);
    }
  for (int i = 0; i < cfg.num_down; ++i) {
    const int stage = cfg.num_down - i;
    const std::string n = p + "/up" + std::to_string(i);
    declare_conv(ps, rng, n, cfg.stage_channels(stage), cfg.stage_channels(stage - 1), 3);
    if (styled) declare_linear(ps, rng, n + "_adain", cfg.style_dim, 2 * cfg.stage_channels(stage - 1));
  }
  declare_conv(ps, rng, p + "/out", cfg.stage_channels(0), 3, 3);
}

}  // namespace

void Generator::declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng) {
  declare_conv(ps, rng, "g/enc/stem", 3, cfg.stage_channels(0), 3);
  for (int i = 1; i <= cfg.num_down; ++i)
    declare_conv(ps, rng, "g/enc/down" + std::to_string(i), cfg.stage_channels(i - 1), cfg.stage_channels(i), 3);
  const int cb = cfg.stage_channels(cfg.num_down);
  for (int j = 0; j < cfg.num_res_blocks; ++j)
    for (const char* half : {"a", "b"})
      declare_conv(ps, rng, "g/enc/res" + std::to_string(j) + half, cb, cb, 3);
  declare_decoder(cfg, ps, rng, "g/dec_s", true);
  declare_decoder(cfg, ps, rng, "g/dec_i", false);
}

Generator::Decoder Generator::bind_decoder(const ArchConfig& cfg, const ParamStore& ps, const std::string& p,
                                           bool styled) {
  Decoder d;
  auto conv = [&](const std::string& n) { return Conv{ps.get(n + "/w"), ps.get(n + "/b")}; };
  auto affine = [&](const std::string& n) { return Affine{ps.get(n + "_adain/w"), ps.get(n + "_adain/b")}; };
  for (int j = 0; j < cfg.num_res_blocks; ++j)
    for (const char* half : {"a", "b"}) {
      const std::string n = p + "/res" + std::to_string(j) + half;
      d.res.push_back(conv(n));
      if (styled) d.res_adain.push_back(affine(n));
    }
  for (int i = 0; i < cfg.num_down; ++i) {
    const std::string n = p + "/up" + std::to_string(i);
    d.up.push_back(conv(n));
    if (styled) d.up_adain.push_back(affine(n));
  }
  d.out = conv(p + "/out");
  return d;
}

Generator::Generator(const ArchConfig& cfg, const ParamStore& ps, bool with_invariant_decoder)
    : cfg_(cfg), has_invariant_(with_invariant_decoder) {
  stem_ = Conv{ps.get("g/enc/stem/w"), ps.get("g/enc/stem/b")};
  for (int i = 1; i <= cfg.num_down; ++i) {
    const std::string n = "g/enc/down" + std::to_string(i);
    down_.push_back(Conv{ps.get(n + "/w"), ps.get(n + "/b")});
  }
  for (int j = 0; j < cfg.num_res_blocks; ++j)
    for (const char* half : {"a", "b"}) {
      const std::string n = "g/enc/res" + std::to_string(j) + half;
      enc_res_.push_back(Conv{ps.get(n + "/w"), ps.get(n + "/b")});
    }
  styled_ = bind_decoder(cfg, ps, "g/dec_s", true);
  if (has_invariant_) invariant_ = bind_decoder(cfg, ps, "g/dec_i", false);
}

ContentFeatures Generator::encode_content(const Var& image, const Tensor& heatmap) const {
  require_image(image, cfg_.resolution);
  const Shape& s = image.shape();
  require_shape(heatmap, {s[0], 1, s[2], s[3]}, "heatmap");

  ContentFeatures out;
  // The stem is a plain embedding; only the downsampling stages are normalized,
  // so the full-resolution skip keeps absolute colour.
  auto stage = [&](const Var& x, const Conv& c, int stride) {
    Var h = ag::conv2d(x, c.w, c.b, stride, 1);
    if (stride != 1) h = ag::instance_norm(h, kNormEps);
    const Shape& hs = h.shape();
    h = ag::add_const(h, hs[2] == s[2] ? heatmap : resize_bilinear(heatmap, hs[2], hs[3]));
    out.stage_preact.push_back(h);
    Var a = ag::leaky_relu(h, kLeakySlope);
    out.skips.push_back(a);
    return a;
  };
  Var x = stage(image, stem_, 1);
  for (const auto& c : down_) x = stage(x, c, 2);
  for (std::size_t j = 0; j + 1 < enc_res_.size(); j += 2) {
    Var y = ag::leaky_relu(ag::instance_norm(ag::conv2d(x, enc_res_[j].w, enc_res_[j].b, 1, 1), kNormEps),
                           kLeakySlope);
    y = ag::instance_norm(ag::conv2d(y, enc_res_[j + 1].w, enc_res_[j + 1].b, 1, 1), kNormEps);
    x = ag::add(x, y);
  }
  out.bottleneck = x;
  return out;
}

Var Generator::decode(const ContentFeatures& content, const Decoder& dec, const Var* style) const {
  if (!content.bottleneck || content.skips.size() != static_cast<std::size_t>(cfg_.num_down + 1))
    throw Error("ShapeMismatch", "content features do not match generator config");
  if (content.bottleneck.shape()[1] != cfg_.stage_channels(cfg_.num_down))
    throw Error("ShapeMismatch", "bottleneck width does not match generator config");

  auto norm = [&](const Var& h, const Affine* a) {
    Var n = ag::instance_norm(h, kNormEps);
    if (!style) return n;
    auto [g_hat, beta] = ag::split_cols(ag::linear(*style, a->w, a->b));
    return ag::channel_affine(n, ag::add_scalar_const(g_hat, 1.0), beta);
  };

  Var x = content.bottleneck;
  for (std::size_t j = 0; j + 1 < dec.res.size(); j += 2) {
    Var y = ag::conv2d(x, dec.res[j].w, dec.res[j].b, 1, 1);
    y = ag::leaky_relu(norm(y, style ? &dec.res_adain[j] : nullptr), kLeakySlope);
    y = ag::conv2d(y, dec.res[j + 1].w, dec.res[j + 1].b, 1, 1);
    y = norm(y, style ? &dec.res_adain[j + 1] : nullptr);
    x = ag::add(x, y);
  }
  for (std::size_t i = 0; i < dec.up.size(); ++i) {
    x = ag::conv2d(ag::upsample2(x), dec.up[i].w, dec.up[i].b, 1, 1);
    x = ag::leaky_relu(norm(x, style ? &dec.up_adain[i] : nullptr), kLeakySlope);
    x = ag::add(x, content.skips[content.skips.size() - 2 - i]);
  }
  return ag::tanh(ag::conv2d(x, dec.out.w, dec.out.b, 1, 1));
}

Var Generator::decode_styled(const ContentFeatures& content, const Var& style) const {
  if (style.shape().size() != 2 || style.shape()[1] != cfg_.style_dim ||
      style.shape()[0] != content.bottleneck.shape()[0])
    throw Error("StyleDimMismatch", "style code " + shape_str(style.shape()) + " for style_dim " +
                                        std::to_string(cfg_.style_dim));
  return decode(content, styled_, &style);
}

Var Generator::decode_invariant(const ContentFeatures& content) const {
  if (!has_invariant_) throw Error("ShapeMismatch", "generator bound without the style-invariant decoder");
  return decode(content, invariant_, nullptr);
}

Var Generator::generate(const Var& image, const Tensor& heatmap, const Var& style) const {
  return decode_styled(encode_content(image, heatmap), style);
}

// ---------------------------------------------------------------------------

void Discriminator::declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng) {
  ConvTrunk::declare(cfg, ps, rng, "d/trunk");
  const int c = cfg.trunk_channels(cfg.trunk_layers() - 1);
  for (int d = 0; d < kNumDomains; ++d) declare_linear(ps, rng, "d/head" + std::to_string(d), c, 1);
}

Discriminator::Discriminator(const ArchConfig& cfg, const ParamStore& ps) : trunk_(cfg, ps, "d/trunk") {
  for (int d = 0; d < kNumDomains; ++d) {
    const std::string n = "d/head" + std::to_string(d);
    heads_.emplace_back(ps.get(n + "/w"), ps.get(n + "/b"));
  }
}

Var Discriminator::discriminate(const Var& image, const DomainBatch& domains) const {
  if (image.shape().size() != 4 || image.shape()[1] != 3)
    throw Error("ShapeMismatch", "discriminator expects N×3×H×W, got " + shape_str(image.shape()));
  return apply_heads(trunk_.forward(image).pooled, heads_, domains);
}

// ---------------------------------------------------------------------------

Var adain(const Var& features, const Var& gamma, const Var& beta) {
  const Shape& s = features.shape();
  if (s.size() != 4) throw Error("ShapeMismatch", "adain expects N×C×H×W");
  if (gamma.shape() != Shape{s[0], s[1]} || beta.shape() != Shape{s[0], s[1]})
    throw Error("ChannelMismatch", "AdaIN parameters " + shape_str(gamma.shape()) + " for " + shape_str(s));
  return ag::channel_affine(ag::instance_norm(features, kNormEps), gamma, beta);
}

Tensor resize_bilinear(const Tensor& map, std::int64_t h, std::int64_t w) {
  if (map.rank() != 4 || map.dim(1) != 1) throw Error("ShapeMismatch", "resize_bilinear expects N×1×H×W");
  const std::int64_t N = map.dim(0), H = map.dim(2), W = map.dim(3);
  Tensor out({N, 1, h, w});
  const double sy = static_cast<double>(H) / h, sx = static_cast<double>(W) / w;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t y = 0; y < h; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
      const auto y0 = static_cast<std::int64_t>(fy);
      const std::int64_t y1 = std::min(y0 + 1, H - 1);
      const double ty = fy - y0;
      for (std::int64_t x = 0; x < w; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
        const auto x0 = static_cast<std::int64_t>(fx);
        const std::int64_t x1 = std::min(x0 + 1, W - 1);
        const double tx = fx - x0;
        const double top = map.at4(n, 0, y0, x0) * (1 - tx) + map.at4(n, 0, y0, x1) * tx;
        const double bot = map.at4(n, 0, y1, x0) * (1 - tx) + map.at4(n, 0, y1, x1) * tx;
        out.at4(n, 0, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  return out;
}

Tensor resize_mask_nearest(const Tensor& mask, std::int64_t h, std::int64_t w) {
  if (mask.rank() != 4 || mask.dim(1) != 1) throw Error("ShapeMismatch", "resize_mask_nearest expects N×1×H×W");
  const std::int64_t N = mask.dim(0), H = mask.dim(2), W = mask.dim(3);
  Tensor out({N, 1, h, w});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        out.at4(n, 0, y, x) = mask.at4(n, 0, y * H / h, x * W / w) > 0.5 ? 1.0 : 0.0;
  return out;
}

void declare_all(const ArchConfig& cfg, ParamStore& ps, Rng& rng) {
  cfg.validate();
  StyleEncoder::declare(cfg, ps, rng);
  MappingNetwork::declare(cfg, ps, rng);
  Generator::declare(cfg, ps, rng);
  Discriminator::declare(cfg, ps, rng);
}

ParameterCounts count_parameters(const ParamStore& ps) {
  return {ps.parameter_count("se/"), ps.parameter_count("mn/"), ps.parameter_count("g/"),
          ps.parameter_count("d/")};
}

}  // namespace slgan

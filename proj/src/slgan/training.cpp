#include "slgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace slgan {

namespace fs = std::filesystem;
using ag::Var;

// ---------------------------------------------------------------------------
// Config

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class Fn>
void for_each_key(TrainConfig& c, Fn&& fn) {
  fn("resolution", c.arch.resolution);
  fn("style_dim", c.arch.style_dim);
  fn("base_channels", c.arch.base_channels);
  fn("max_channels", c.arch.max_channels);
  fn("num_down", c.arch.num_down);
  fn("num_res_blocks", c.arch.num_res_blocks);
  fn("trunk_down", c.arch.trunk_down);
  fn("mapping_hidden", c.arch.mapping_hidden);
  fn("mapping_layers", c.arch.mapping_layers);
  fn("batch_size", c.batch_size);
  fn("total_steps", c.total_steps);
  fn("beta1", c.beta1);
  fn("beta2", c.beta2);
  fn("adam_eps", c.adam_eps);
  fn("weight_decay", c.weight_decay);
  fn("lr_g", c.lr_g);
  fn("lr_se", c.lr_se);
  fn("lr_d", c.lr_d);
  fn("lr_mn", c.lr_mn);
  fn("ema_decay", c.ema_decay);
  fn("seed", c.seed);
  fn("lambda_adv", c.weights.adv);
  fn("lambda_sd", c.weights.sd);
  fn("lambda_sr", c.weights.sr);
  fn("lambda_cyc", c.weights.cyc);
  fn("lambda_makeup", c.weights.makeup);
  fn("lambda_guide", c.weights.guide);
  fn("lambda_lips", c.weights.lips);
  fn("lambda_eyes", c.weights.eyes);
  fn("lambda_face", c.weights.face);
  fn("lambda_gamma", c.weights.gamma);
  fn("lambda_beta", c.weights.beta);
  fn("guidance", c.guidance);
  fn("checkpoint_every", c.checkpoint_every);
}

std::string to_string_value(int v) { return std::to_string(v); }
std::string to_string_value(std::int64_t v) { return std::to_string(v); }
std::string to_string_value(std::uint64_t v) { return std::to_string(v); }
std::string to_string_value(double v) { return fmt_double(v); }
std::string to_string_value(GuidanceSchedule g) { return g == GuidanceSchedule::both ? "both" : "alternate"; }

void from_string_value(const std::string& s, int& v) { v = std::stoi(s); }
void from_string_value(const std::string& s, std::int64_t& v) { v = std::stoll(s); }
void from_string_value(const std::string& s, std::uint64_t& v) { v = std::stoull(s); }
void from_string_value(const std::string& s, double& v) { v = std::stod(s); }
void from_string_value(const std::string& s, GuidanceSchedule& g) {
  if (s == "both")
    g = GuidanceSchedule::both;
  else if (s == "alternate")
    g = GuidanceSchedule::alternate;
  else
    throw Error("InvalidConfig", "guidance must be 'both' or 'alternate'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  weights.validate();
  auto bad = [](const std::string& m) { throw Error("InvalidConfig", m); };
  if (batch_size < 1) bad("batch_size must be positive");
  if (total_steps < 0) bad("total_steps must be non-negative");
  for (double lr : {lr_g, lr_se, lr_d, lr_mn})
    if (!(lr > 0)) bad("learning rates must be positive");
  if (!(ema_decay > 0 && ema_decay < 1)) bad("ema_decay must lie in (0, 1)");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) bad("Adam betas must lie in [0, 1)");
  if (!(weight_decay >= 0) || !(adam_eps > 0)) bad("weight_decay / adam_eps");
  if (checkpoint_every < 0) bad("checkpoint_every must be non-negative");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  TrainConfig copy = *this;
  for_each_key(copy, [&](const char* key, auto& v) { os << key << '=' << to_string_value(v) << '\n'; });
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("InvalidConfig", "line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    bool found = false;
    for_each_key(c, [&](const char* k, auto& v) {
      if (key != k) return;
      found = true;
      try {
        from_string_value(value, v);
      } catch (const std::logic_error&) {
        throw Error("InvalidConfig", "bad value for " + key + ": " + value);
      }
    });
    if (!found) throw Error("InvalidConfig", "unknown key " + key);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("IOError", "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_parameters(const ParamStore& ps, const std::string& prefix) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, v] : ps.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(v.value().data(), static_cast<std::size_t>(v.value().numel()) * sizeof(double), h);
  }
  return h;
}

std::uint64_t ModelBundle::config_hash() const {
  const std::string t = config.to_text();
  return fnv1a64(t.data(), t.size());
}

// ---------------------------------------------------------------------------
// Initialization, optimizer, EMA

namespace {

bool is_generator_side(const std::string& name) {
  return name.rfind("g/", 0) == 0 || name.rfind("se/", 0) == 0 || name.rfind("mn/", 0) == 0;
}

double lr_for(const TrainConfig& c, const std::string& name) {
  if (name.rfind("g/", 0) == 0) return c.lr_g;
  if (name.rfind("se/", 0) == 0) return c.lr_se;
  if (name.rfind("mn/", 0) == 0) return c.lr_mn;
  return c.lr_d;
}

ParamStore make_ema(const ParamStore& live) {
  ParamStore ema(ParamStore::Source::ema);
  for (const auto& [name, v] : live.entries())
    if (is_generator_side(name)) ema.add(name, v.value(), false);
  return ema;
}

void zero_grads(ParamStore& ps) {
  for (auto& [name, v] : ps.entries()) v.zero_grad();
}

/// Decoupled-weight-decay Adam over the parameters selected by `select`.
template <class Select>
void adam_update(ModelBundle& b, std::int64_t t, Select&& select) {
  const TrainConfig& c = b.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (auto& [name, var] : b.params.entries()) {
    if (!select(name) || !var.has_grad()) continue;
    Tensor& p = var.mutable_value();
    const Tensor& g = var.grad();
    auto& mom = b.adam[name];
    if (mom.m.numel() == 0) {
      mom.m = Tensor(p.shape());
      mom.v = Tensor(p.shape());
    }
    const double lr = lr_for(c, name);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      mom.m[i] = c.beta1 * mom.m[i] + (1.0 - c.beta1) * g[i];
      mom.v[i] = c.beta2 * mom.v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + c.adam_eps) + c.weight_decay * p[i]);
    }
  }
}

Var zero_scalar() { return ag::constant(Tensor({1}, 0.0)); }

void check_finite(double v, const char* what, const LossReport& r) {
  if (!std::isfinite(v))
    throw Error("NonFiniteLoss", std::string(what) + " is not finite at step " + std::to_string(r.step) +
                                     "; report: " + r.to_json_line());
}

}  // namespace

ModelBundle init_models(const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  ModelBundle b;
  b.config = config;
  b.config.seed = seed;
  Rng rng(seed);
  declare_all(config.arch, b.params, rng);
  b.ema = make_ema(b.params);
  return b;
}

StepDraws draw_latents(Rng& rng, std::int64_t batch) {
  auto draw = [&] {
    Tensor z({batch, kLatentDim});
    for (auto& v : z.vec()) v = standard_normal(rng);
    return z;
  };
  StepDraws d;
  d.z_fake = draw();
  d.z1 = draw();
  d.z2 = draw();
  return d;
}

void update_ema(ModelBundle& bundle, double decay) {
  if (!(decay >= 0 && decay <= 1)) throw Error("InvalidConfig", "EMA decay must lie in [0, 1]");
  for (auto& [name, shadow] : bundle.ema.entries()) {
    const Tensor& cur = bundle.params.get(name).value();
    Tensor& s = shadow.mutable_value();
    for (std::int64_t i = 0; i < s.numel(); ++i) s[i] = decay * s[i] + (1.0 - decay) * cur[i];
  }
}

// ---------------------------------------------------------------------------
// Training step

namespace {

struct LiveNetworks {
  StyleEncoder se;
  MappingNetwork mn;
  Generator g;
  Discriminator d;
  explicit LiveNetworks(const ModelBundle& b)
      : se(b.config.arch, b.params), mn(b.config.arch, b.params), g(b.config.arch, b.params),
        d(b.config.arch, b.params) {}
};

std::vector<bool> guidance_modes(const ModelBundle& b) {
  // {latent, style}
  if (b.config.guidance == GuidanceSchedule::both) return {true, true};
  return b.step % 2 == 0 ? std::vector<bool>{true, false} : std::vector<bool>{false, true};
}

}  // namespace

std::pair<double, double> discriminator_step(ModelBundle& b, const TrainingBatch& batch, const StepDraws& draws) {
  const LiveNetworks nets(b);
  const LossWeights& w = b.config.weights;
  const Var x = ag::constant(batch.source_images);
  const auto& ref_domains = batch.reference_domains;

  Var fake_lat, fake_ref;
  {
    ag::NoGradGuard guard;
    const ContentFeatures content = nets.g.encode_content(x, batch.source_heatmaps);
    fake_lat = nets.g.decode_styled(content, nets.mn.map(ag::constant(draws.z_fake), ref_domains));
    const Var s_ref =
        nets.se.encode(ag::constant(batch.reference_images), batch.reference_masks.full_face, ref_domains);
    fake_ref = nets.g.decode_styled(content, s_ref);
  }

  zero_grads(b.params);
  const Var real_logit = nets.d.discriminate(x, batch.source_domains);
  const Var adv = ag::scale(ag::add(adversarial_loss_d(real_logit, nets.d.discriminate(fake_lat, ref_domains)),
                                    adversarial_loss_d(real_logit, nets.d.discriminate(fake_ref, ref_domains))),
                            0.5);
  const Var total = total_discriminator_loss(adv, w);
  LossReport diag;
  diag.step = b.step;
  diag.d_adv = adv.item();
  diag.d_total = total.item();
  check_finite(total.item(), "discriminator loss", diag);

  ag::backward(total);
  b.adam_steps_d += 1;
  adam_update(b, b.adam_steps_d, [](const std::string& n) { return n.rfind("d/", 0) == 0; });
  zero_grads(b.params);
  return {adv.item(), total.item()};
}

LossReport generator_step(ModelBundle& b, const TrainingBatch& batch, const StepDraws& draws) {
  const LiveNetworks nets(b);
  const LossWeights& w = b.config.weights;
  const Var x = ag::constant(batch.source_images);
  const Tensor& heat = batch.source_heatmaps;
  const auto& src_dom = batch.source_domains;
  const auto& ref_dom = batch.reference_domains;

  zero_grads(b.params);
  b.params.set_requires_grad("d/", false);
  LossReport r;
  r.step = b.step;
  Var total;
  try {
    const ContentFeatures content = nets.g.encode_content(x, heat);
    const Var invariant = nets.g.decode_invariant(content);
    const Var s_source = nets.se.encode(x, batch.source_masks.full_face, src_dom);

    std::vector<std::pair<double, Var>> mode_totals;
    const auto modes = guidance_modes(b);
    for (int mode = 0; mode < 2; ++mode) {
      if (!modes[static_cast<std::size_t>(mode)]) continue;
      const bool latent = mode == 0;
      GeneratorParts p;
      const Var s_hat = latent ? nets.mn.map(ag::constant(draws.z1), ref_dom)
                               : nets.se.encode(ag::constant(batch.reference_images),
                                                batch.reference_masks.full_face, ref_dom);
      const Var fake = nets.g.decode_styled(content, s_hat);
      p.adv = adversarial_loss_g(nets.d.discriminate(fake, ref_dom));
      p.sr = style_reconstruction_loss(s_hat, nets.se.encode(fake, batch.source_masks.full_face, ref_dom));
      if (latent) {
        const Var fake2 = nets.g.decode_styled(content, nets.mn.map(ag::constant(draws.z2), ref_dom));
        p.sd = style_diversity_loss(fake, fake2);
      } else {
        p.sd = zero_scalar();
      }
      const Var rec = nets.g.generate(fake, heat, s_source);
      p.cyc = cycle_loss(x, rec);
      if (latent) {
        p.makeup = zero_scalar();
      } else {
        // The fake keeps the source geometry, so the source parsing stands in for FP(fake).
        const MakeupLoss m =
            makeup_loss(fake, batch.reference_images, batch.source_masks, batch.reference_masks, nets.se, w);
        p.makeup = m.total;
        r.g_lips += m.lips.item();
        r.g_eyes += m.eyes.item();
        r.g_face += m.face.item();
        for (bool e : m.empty_region) r.empty_region = r.empty_region || e;
      }
      p.guide = guide_loss(x, invariant, fake, w.gamma, w.beta);

      r.g_adv += p.adv.item();
      r.g_sd += p.sd.item();
      r.g_sr += p.sr.item();
      r.g_cyc += p.cyc.item();
      r.g_makeup += p.makeup.item();
      r.g_guide += p.guide.item();
      mode_totals.emplace_back(1.0, total_generator_loss(p, w));
    }
    total = ag::weighted_sum(mode_totals);
    r.g_total = total.item();
    check_finite(r.g_total, "generator loss", r);
    ag::backward(total);
  } catch (...) {
    b.params.set_requires_grad("d/", true);
    zero_grads(b.params);
    throw;
  }
  b.params.set_requires_grad("d/", true);
  b.adam_steps_g += 1;
  adam_update(b, b.adam_steps_g, is_generator_side);
  zero_grads(b.params);
  return r;
}

LossReport train_step(ModelBundle& bundle, const TrainingBatch& batch, Rng& rng) {
  const StepDraws draws = draw_latents(rng, batch.size());
  const auto [d_adv, d_total] = discriminator_step(bundle, batch, draws);
  LossReport r = generator_step(bundle, batch, draws);
  r.d_adv = d_adv;
  r.d_total = d_total;
  update_ema(bundle, bundle.config.ema_decay);
  bundle.step += 1;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'L', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) pod<std::int64_t>(d);
    const auto* p = reinterpret_cast<const char*>(t.data());
    buf_.insert(buf_.end(), p, p + t.numel() * static_cast<std::int64_t>(sizeof(double)));
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<char>& bytes() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* p, std::size_t n) : p_(p), n_(n) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_ + off_, sizeof(T));
    off_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(p_ + off_, n);
    off_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw Error("CorruptCheckpoint", "implausible tensor rank");
    Shape s;
    for (std::uint32_t i = 0; i < rank; ++i) s.push_back(pod<std::int64_t>());
    const std::int64_t n = shape_numel(s);
    need(static_cast<std::size_t>(n) * sizeof(double));
    std::vector<double> d(static_cast<std::size_t>(n));
    std::memcpy(d.data(), p_ + off_, d.size() * sizeof(double));
    off_ += d.size() * sizeof(double);
    return {std::move(name), Tensor(std::move(s), std::move(d))};
  }
  bool done() const { return off_ == n_; }

 private:
  void need(std::size_t k) const {
    if (off_ + k > n_) throw Error("CorruptCheckpoint", "archive truncated");
  }
  const char* p_;
  std::size_t n_;
  std::size_t off_ = 0;
};

}  // namespace

void save_checkpoint(ModelBundle& bundle, const fs::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kFormatVersion);
  const std::string cfg = bundle.config.to_text();
  w.str(cfg);
  w.pod<std::uint64_t>(fnv1a64(cfg.data(), cfg.size()));
  w.pod<std::uint64_t>(bundle.step);
  w.pod<std::int64_t>(bundle.adam_steps_g);
  w.pod<std::int64_t>(bundle.adam_steps_d);

  std::uint64_t count = bundle.params.entries().size() + bundle.ema.entries().size() + 2 * bundle.adam.size();
  w.pod(count);
  for (const auto& [name, v] : bundle.params.entries()) w.tensor("live/" + name, v.value());
  for (const auto& [name, v] : bundle.ema.entries()) w.tensor("ema/" + name, v.value());
  for (const auto& [name, mom] : bundle.adam) {
    w.tensor("adam_m/" + name, mom.m);
    w.tensor("adam_v/" + name, mom.v);
  }
  const std::uint64_t checksum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.pod(checksum);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IOError", "cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw Error("IOError", "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
  bundle.checkpoint_hash = checksum;
}

ModelBundle load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IOError", "cannot open checkpoint " + path.string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error("CorruptCheckpoint", path.string() + " is not a checkpoint archive");

  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + body, sizeof stored_sum);

  Reader r(bytes.data() + sizeof kMagic, body - sizeof kMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion)
    throw Error("VersionMismatch", "checkpoint format " + std::to_string(version) + ", expected " +
                                       std::to_string(kFormatVersion));
  if (fnv1a64(bytes.data(), body) != stored_sum) throw Error("CorruptCheckpoint", "checksum mismatch");

  const std::string cfg_text = r.str();
  const auto cfg_hash = r.pod<std::uint64_t>();
  if (fnv1a64(cfg_text.data(), cfg_text.size()) != cfg_hash)
    throw Error("VersionMismatch", "config hash does not match the stored configuration");

  ModelBundle b;
  try {
    b.config = TrainConfig::parse(cfg_text);
  } catch (const Error& e) {
    throw Error("VersionMismatch", std::string("stored configuration rejected: ") + e.what());
  }
  b.step = r.pod<std::uint64_t>();
  b.adam_steps_g = r.pod<std::int64_t>();
  b.adam_steps_d = r.pod<std::int64_t>();
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    auto strip = [&](const char* prefix) -> std::string {
      const std::size_t n = std::strlen(prefix);
      return name.rfind(prefix, 0) == 0 ? name.substr(n) : std::string();
    };
    if (auto n = strip("live/"); !n.empty())
      b.params.add(n, std::move(t), true);
    else if (auto n2 = strip("ema/"); !n2.empty())
      b.ema.add(n2, std::move(t), false);
    else if (auto n3 = strip("adam_m/"); !n3.empty())
      b.adam[n3].m = std::move(t);
    else if (auto n4 = strip("adam_v/"); !n4.empty())
      b.adam[n4].v = std::move(t);
    else
      throw Error("CorruptCheckpoint", "unknown entry " + name);
  }
  if (!r.done()) throw Error("CorruptCheckpoint", "trailing bytes");

  // Layout check against a freshly declared architecture.
  ParamStore expected;
  Rng scratch(0);
  declare_all(b.config.arch, expected, scratch);
  if (expected.entries().size() != b.params.entries().size())
    throw Error("VersionMismatch", "parameter set does not match the stored architecture");
  for (const auto& [name, v] : expected.entries()) {
    if (!b.params.contains(name) || b.params.get(name).shape() != v.shape())
      throw Error("VersionMismatch", "parameter " + name + " missing or reshaped");
    if (is_generator_side(name) && (!b.ema.contains(name) || b.ema.get(name).shape() != v.shape()))
      throw Error("VersionMismatch", "EMA shadow " + name + " missing or reshaped");
  }
  b.checkpoint_hash = stored_sum;
  return b;
}

// ---------------------------------------------------------------------------
// fit

std::uint64_t batch_seed(const TrainConfig& cfg, std::uint64_t step) { return mix_seed(cfg.seed, 2 * step); }
std::uint64_t draw_seed(const TrainConfig& cfg, std::uint64_t step) { return mix_seed(cfg.seed, 2 * step + 1); }

fs::path fit(const TrainConfig& config, const fs::path& dataset_root, const fs::path& out_dir, const FitOptions& opts) {
  config.validate();
  const Dataset data(load_manifest(dataset_root, config.arch.resolution));
  ModelBundle bundle = opts.resume_from.empty() ? init_models(config, config.seed) : load_checkpoint(opts.resume_from);
  if (!opts.resume_from.empty() && bundle.config.arch.resolution != config.arch.resolution)
    throw Error("VersionMismatch", "resumed checkpoint was trained at a different resolution");
  if (!opts.resume_from.empty()) bundle.config.total_steps = config.total_steps;

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "loss_log.jsonl", opts.resume_from.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw Error("IOError", "cannot write loss log in " + out_dir.string());

  const TrainConfig& cfg = bundle.config;
  while (static_cast<std::int64_t>(bundle.step) < cfg.total_steps) {
    const std::uint64_t s = bundle.step;
    const TrainingBatch batch = data.sample_training_batch(batch_seed(cfg, s), cfg.batch_size);
    Rng rng(draw_seed(cfg, s));
    const LossReport r = train_step(bundle, batch, rng);
    log << r.to_json_line() << '\n';
    log.flush();
    if (opts.on_step) opts.on_step(r);
    if (cfg.checkpoint_every > 0 && bundle.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0)
      save_checkpoint(bundle, out_dir / ("ckpt_" + std::to_string(bundle.step) + ".bin"));
  }
  const fs::path final_path = out_dir / "final.ckpt";
  save_checkpoint(bundle, final_path);
  return final_path;
}

}  // namespace slgan

#include "studio/service.hpp"

#include <cmath>
#include <random>

#include "httplib.h"
#include "json.hpp"

namespace slgan::studio {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int status_for(const std::string& kind) {
  if (kind == "UnknownSession" || kind == "UnknownReference") return 404;
  if (kind == "WeightSumViolation" || kind == "DimMismatch" || kind == "NoReferences" || kind == "InvalidAlpha" ||
      kind == "InvalidSeeds")
    return 422;
  if (kind == "BundleNotLoaded") return 503;
  if (kind == "DecodeError" || kind == "NonRGBInput" || kind == "ShapeMismatch" || kind == "UnknownLabel" ||
      kind == "OutOfBoundsLandmark" || kind == "InvalidRequest")
    return 400;
  return 500;
}

std::pair<int, std::string> error_body(const std::string& kind, const std::string& message) {
  return {status_for(kind), json{{"error", kind}, {"message", message}}.dump()};
}

template <class Fn>
std::pair<int, std::string> guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_body(e.kind(), e.what());
  } catch (const json::exception& e) {
    return error_body("InvalidRequest", e.what());
  } catch (const std::exception& e) {
    return error_body("Internal", e.what());
  }
}

std::span<const std::uint8_t> bytes_of(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.vec()) s += v * v;
  return std::sqrt(s);
}

Domain parse_domain(const std::string& s) {
  if (s == "makeup") return Domain::makeup;
  if (s == "non-makeup" || s == "non_makeup") return Domain::non_makeup;
  throw Error("InvalidRequest", "unknown domain '" + s + "'");
}

}  // namespace

RenderRequest RenderRequest::from_json(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error("InvalidRequest", std::string("render body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("InvalidRequest", "render body must be a JSON object");
  RenderRequest r;
  const std::string mode = j.value("mode", std::string("style_guided"));
  if (mode == "style_guided")
    r.mode = Mode::style_guided;
  else if (mode == "latent_guided")
    r.mode = Mode::latent_guided;
  else if (mode == "source_blend")
    r.mode = Mode::source_blend;
  else
    throw Error("InvalidRequest", "unknown mode '" + mode + "'");
  if (j.contains("weights")) r.weights = j.at("weights").get<std::vector<double>>();
  if (j.contains("reference_ids")) r.reference_ids = j.at("reference_ids").get<std::vector<std::string>>();
  if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    r.seeds = s.is_array() ? s.get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{s.get<std::uint64_t>()};
  }
  if (j.contains("domain")) r.domain = parse_domain(j.at("domain").get<std::string>());
  return r;
}

StudioService::StudioService(ServiceOptions opts) : opts_(std::move(opts)), id_salt_(std::random_device{}()) {
  id_salt_ = (id_salt_ << 32) ^ std::random_device{}();
}

void StudioService::load_bundle(const std::filesystem::path& checkpoint) { set_bundle(load_checkpoint(checkpoint)); }

void StudioService::set_bundle(const ModelBundle& bundle) {
  LoadedBundle b;
  b.model = std::make_shared<const InferenceModel>(bundle);
  b.hash = bundle.checkpoint_hash;
  b.step = bundle.step;
  std::lock_guard lock(bundle_mu_);
  b.generation = ++generation_;
  bundle_ = std::move(b);
}

std::optional<LoadedBundle> StudioService::bundle() const {
  std::lock_guard lock(bundle_mu_);
  return bundle_;
}

LoadedBundle StudioService::require_bundle() const {
  auto b = bundle();
  if (!b) throw Error("BundleNotLoaded", "no model bundle is loaded; set SLGAN_BUNDLE");
  return *b;
}

std::string StudioService::next_id(const char* prefix) {
  std::uint64_t n;
  {
    std::lock_guard lock(sessions_mu_);
    n = ++counter_;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%016llx", prefix, static_cast<unsigned long long>(mix_seed(id_salt_, n)));
  return buf;
}

std::size_t StudioService::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

void StudioService::expire_sessions() {
  const auto now = Clock::now();
  std::lock_guard lock(sessions_mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_used > opts_.session_ttl)
      it = sessions_.erase(it);
    else
      ++it;
  }
  while (sessions_.size() >= opts_.max_sessions && !sessions_.empty()) {
    auto oldest = sessions_.begin();
    for (auto it = sessions_.begin(); it != sessions_.end(); ++it)
      if (it->second->last_used < oldest->second->last_used) oldest = it;
    sessions_.erase(oldest);
  }
}

std::shared_ptr<Session> StudioService::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end() || Clock::now() - it->second->last_used > opts_.session_ttl)
    throw Error("UnknownSession", "no session '" + id + "'");
  it->second->last_used = Clock::now();
  return it->second;
}

void StudioService::refresh_codes(const LoadedBundle& b, FaceEntry& e) {
  for (int d = 0; d < kNumDomains; ++d) e.code[d] = b.model->encode_style(e.face, static_cast<Domain>(d));
  e.codes_for = b.generation;
}

FaceEntry StudioService::make_entry(const LoadedBundle& b, const std::string& image, const std::string* parsing,
                                    const std::string* landmarks, std::string id) const {
  const RgbImage raw = decode_image(bytes_of(image));
  std::optional<LabelMap> labels;
  if (parsing) labels = decode_label_map(bytes_of(*parsing));
  std::optional<std::vector<Landmark>> pts;
  if (landmarks) pts = parse_landmarks(*landmarks);
  FaceEntry e;
  e.id = std::move(id);
  e.face = make_sample(raw, labels ? &*labels : nullptr, pts ? &*pts : nullptr, b.model->resolution());
  refresh_codes(b, e);
  return e;
}

std::pair<int, std::string> StudioService::create_session(const std::string& image, const std::string* parsing,
                                                          const std::string* landmarks) {
  return guarded([&]() -> std::pair<int, std::string> {
    const LoadedBundle b = require_bundle();
    auto s = std::make_shared<Session>();
    s->source = make_entry(b, image, parsing, landmarks, "source");
    s->id = next_id("s");
    s->last_used = Clock::now();
    expire_sessions();
    {
      std::lock_guard lock(sessions_mu_);
      sessions_[s->id] = s;
    }
    return {201, json{{"session_id", s->id},
                      {"unmasked", !s->source.face.has_parsing},
                      {"resolution", b.model->resolution()}}
                     .dump()};
  });
}

std::pair<int, std::string> StudioService::add_reference(const std::string& session_id, const std::string& image,
                                                         const std::string* parsing, const std::string* landmarks) {
  return guarded([&]() -> std::pair<int, std::string> {
    const LoadedBundle b = require_bundle();
    auto s = find_session(session_id);
    FaceEntry e = make_entry(b, image, parsing, landmarks, next_id("r"));
    const double norm = l2_norm(e.code[static_cast<int>(Domain::makeup)]);
    json out{{"reference_id", e.id}, {"style_code_norm", norm}, {"unmasked", !e.face.has_parsing}};
    std::unique_lock lock(s->mu);
    s->references.push_back(std::move(e));
    return {201, out.dump()};
  });
}

std::string StudioService::render_png(const std::string& session_id, const RenderRequest& req) {
  const LoadedBundle b = require_bundle();
  auto s = find_session(session_id);

  std::shared_lock lock(s->mu);
  auto stale = [&] {
    if (s->source.codes_for != b.generation) return true;
    for (const auto& r : s->references)
      if (r.codes_for != b.generation) return true;
    return false;
  };
  while (stale()) {
    lock.unlock();
    {
      std::unique_lock w(s->mu);
      if (s->source.codes_for != b.generation) refresh_codes(b, s->source);
      for (auto& r : s->references)
        if (r.codes_for != b.generation) refresh_codes(b, r);
    }
    lock.lock();
  }

  std::vector<const FaceEntry*> refs;
  if (req.reference_ids.empty()) {
    for (const auto& r : s->references) refs.push_back(&r);
  } else {
    for (const auto& id : req.reference_ids) {
      const FaceEntry* hit = nullptr;
      for (const auto& r : s->references)
        if (r.id == id) hit = &r;
      if (!hit) throw Error("UnknownReference", "no reference '" + id + "' in this session");
      refs.push_back(hit);
    }
  }

  auto mixed_reference_code = [&](Domain d) {
    if (refs.empty()) throw Error("NoReferences", "upload at least one reference first");
    std::vector<double> w = req.weights;
    if (w.empty() && refs.size() == 1) w = {1.0};
    if (w.size() != refs.size())
      throw Error("DimMismatch", std::to_string(w.size()) + " weights for " + std::to_string(refs.size()) +
                                     " references");
    std::vector<Tensor> codes;
    for (const auto* r : refs) codes.push_back(r->code[static_cast<int>(d)]);
    return interpolate_styles(codes, w);
  };
  if (!(req.alpha >= 0.0 && req.alpha <= 1.0)) throw Error("InvalidAlpha", "alpha must lie in [0, 1]");

  Tensor style;
  switch (req.mode) {
    case RenderRequest::Mode::style_guided:
      style = mixed_reference_code(req.domain.value_or(Domain::makeup));
      break;
    case RenderRequest::Mode::source_blend: {
      const Domain d = req.domain.value_or(Domain::makeup);
      style = InferenceModel::blend(s->source.code[static_cast<int>(opposite(d))], mixed_reference_code(d),
                                    req.alpha);
      break;
    }
    case RenderRequest::Mode::latent_guided: {
      if (req.seeds.empty() || req.seeds.size() > 2)
        throw Error("InvalidSeeds", "latent_guided takes one or two seeds");
      const Domain d = req.domain.value_or(Domain::non_makeup);
      const Tensor wa = b.model->map_latent(req.seeds.front(), d);
      style = req.seeds.size() == 1 ? wa : InferenceModel::blend(wa, b.model->map_latent(req.seeds.back(), d), req.alpha);
      break;
    }
  }
  const auto png = encode_png(to_rgb8(b.model->generate(s->source.face, style)));
  return std::string(png.begin(), png.end());
}

std::pair<int, std::string> StudioService::render(const std::string& session_id, const std::string& body) {
  return guarded([&]() -> std::pair<int, std::string> {
    const auto t0 = Clock::now();
    const RenderRequest req = RenderRequest::from_json(body);
    const std::string png = render_png(session_id, req);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return {200, json{{"image", httplib::detail::base64_encode(png)}, {"latency_ms", ms}}.dump()};
  });
}

std::pair<int, std::string> StudioService::health() const {
  const auto b = bundle();
  if (!b) return {503, json{{"status", "no_bundle"}, {"bundle_hash", nullptr}, {"step", nullptr}}.dump()};
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(b->hash));
  return {200, json{{"status", "ok"}, {"bundle_hash", hash}, {"step", b->step}}.dump()};
}

void StudioService::install(httplib::Server& server) {
  server.set_payload_max_length(opts_.max_upload_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto reply = [](httplib::Response& res, const std::pair<int, std::string>& r) {
    res.status = r.first;
    res.set_content(r.second, "application/json");
  };
  // Returns false (and fills `res`) when the upload lacks an image part.
  auto read_upload = [reply](const httplib::Request& req, httplib::Response& res, std::string& image,
                             std::optional<std::string>& parsing, std::optional<std::string>& landmarks) {
    if (!req.is_multipart_form_data() || !req.has_file("image")) {
      reply(res, error_body("InvalidRequest", "expected multipart/form-data with an 'image' part"));
      return false;
    }
    image = req.get_file_value("image").content;
    if (req.has_file("parsing_map")) parsing = req.get_file_value("parsing_map").content;
    if (req.has_file("landmarks")) landmarks = req.get_file_value("landmarks").content;
    return true;
  };

  server.Post("/session", [this, reply, read_upload](const httplib::Request& req, httplib::Response& res) {
    std::string image;
    std::optional<std::string> parsing, landmarks;
    if (!read_upload(req, res, image, parsing, landmarks)) return;
    reply(res, create_session(image, parsing ? &*parsing : nullptr, landmarks ? &*landmarks : nullptr));
  });
  server.Post(R"(/session/([^/]+)/reference)",
              [this, reply, read_upload](const httplib::Request& req, httplib::Response& res) {
                std::string image;
                std::optional<std::string> parsing, landmarks;
                if (!read_upload(req, res, image, parsing, landmarks)) return;
                reply(res, add_reference(req.matches[1], image, parsing ? &*parsing : nullptr,
                                         landmarks ? &*landmarks : nullptr));
              });
  server.Post(R"(/session/([^/]+)/render)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, render(req.matches[1], req.body));
  });
  server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
}

}  // namespace slgan::studio

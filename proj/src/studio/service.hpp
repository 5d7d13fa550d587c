#pragma once

// HTTP inference service for the interpolation studio.
//
//   POST /session                  multipart: image, [parsing_map], [landmarks]
//   POST /session/{id}/reference   multipart: image, [parsing_map], [landmarks]
//   POST /session/{id}/render      JSON: {mode, weights, reference_ids, alpha, seeds, domain}
//   GET  /health

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "slgan/inference.hpp"

namespace httplib {
class Server;
}

namespace slgan::studio {

struct ServiceOptions {
  std::size_t max_upload_bytes = 16u << 20;
  std::chrono::seconds session_ttl{3600};
  std::size_t max_sessions = 256;
  std::string cors_origin = "*";
};

/// An immutable loaded model plus its bookkeeping for /health.
struct LoadedBundle {
  std::shared_ptr<const InferenceModel> model;
  std::uint64_t hash = 0;
  std::uint64_t step = 0;
  std::uint64_t generation = 0;  // bumped on every load
};

/// Decoded upload with its style codes under both domain heads.
struct FaceEntry {
  std::string id;
  Sample face;
  std::uint64_t codes_for = 0;  // bundle generation the cached codes belong to
  Tensor code[kNumDomains];
};

struct Session {
  std::string id;
  std::shared_mutex mu;  // uploads exclusive, renders shared
  FaceEntry source;
  std::vector<FaceEntry> references;
  std::chrono::steady_clock::time_point last_used;
};

struct RenderRequest {
  enum class Mode { style_guided, latent_guided, source_blend } mode = Mode::style_guided;
  std::vector<double> weights;              // empty: single reference
  std::vector<std::string> reference_ids;   // empty: every reference in upload order
  double alpha = 1.0;
  std::vector<std::uint64_t> seeds;         // latent_guided: one or two seeds
  std::optional<Domain> domain;             // default: makeup, non-makeup for latent_guided

  /// Throws InvalidRequest on malformed payloads.
  static RenderRequest from_json(const std::string& body);
};

class StudioService {
 public:
  explicit StudioService(ServiceOptions opts = {});

  /// Loads (or replaces) the served checkpoint. Cached style codes of existing
  /// sessions are recomputed lazily on their next use.
  void load_bundle(const std::filesystem::path& checkpoint);
  void set_bundle(const ModelBundle& bundle);
  std::optional<LoadedBundle> bundle() const;

  /// Registers the routes, CORS handling and upload limit on `server`.
  void install(httplib::Server& server);

  // Route bodies, exposed for direct use. Each returns (status, JSON body).
  std::pair<int, std::string> create_session(const std::string& image, const std::string* parsing,
                                             const std::string* landmarks);
  std::pair<int, std::string> add_reference(const std::string& session_id, const std::string& image,
                                            const std::string* parsing, const std::string* landmarks);
  std::pair<int, std::string> render(const std::string& session_id, const std::string& body);
  std::pair<int, std::string> health() const;

  /// PNG bytes of a render, without timing; identical requests give identical bytes.
  std::string render_png(const std::string& session_id, const RenderRequest& req);

  std::size_t session_count() const;

 private:
  std::shared_ptr<Session> find_session(const std::string& id);
  FaceEntry make_entry(const LoadedBundle& b, const std::string& image, const std::string* parsing,
                       const std::string* landmarks, std::string id) const;
  static void refresh_codes(const LoadedBundle& b, FaceEntry& e);
  LoadedBundle require_bundle() const;
  std::string next_id(const char* prefix);
  void expire_sessions();

  ServiceOptions opts_;
  mutable std::mutex bundle_mu_;
  std::optional<LoadedBundle> bundle_;
  std::uint64_t generation_ = 0;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
  std::uint64_t id_salt_;
};

}  // namespace slgan::studio

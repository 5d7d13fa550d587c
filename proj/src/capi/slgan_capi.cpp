#include "slgan/slgan.h"

#include <cstring>
#include <memory>
#include <optional>
#include <string>

#include "httplib.h"
#include "slgan/inference.hpp"
#include "studio/service.hpp"

struct slgan_bundle {
  slgan::ModelBundle bundle;
  std::unique_ptr<slgan::InferenceModel> model;
};

struct slgan_face {
  slgan::Sample sample;
};

struct slgan_image {
  slgan::Tensor pixels;  // 1×3×R×R
};

struct slgan_service {
  slgan::studio::StudioService service;
  httplib::Server server;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_kind;

slgan_status status_for_kind(const std::string& k) {
  if (k == "IOError") return SLGAN_ERR_IO;
  if (k == "DecodeError" || k == "NonRGBInput") return SLGAN_ERR_DECODE;
  if (k == "ShapeMismatch" || k == "ChannelMismatch" || k == "DimensionMismatch" || k == "DimMismatch" ||
      k == "StyleDimMismatch")
    return SLGAN_ERR_SHAPE;
  if (k == "InvalidConfig" || k == "InvalidCondition" || k == "MissingParameter") return SLGAN_ERR_CONFIG;
  if (k == "MissingDirectory" || k == "OrphanImage" || k == "EmptyDomain" || k == "UnknownLabel" ||
      k == "OutOfBoundsLandmark" || k == "EmptyPopulation")
    return SLGAN_ERR_DATASET;
  if (k == "CorruptCheckpoint") return SLGAN_ERR_CHECKPOINT;
  if (k == "VersionMismatch") return SLGAN_ERR_VERSION;
  if (k == "WeightSumViolation") return SLGAN_ERR_WEIGHTS;
  if (k == "NonFiniteLoss") return SLGAN_ERR_NON_FINITE;
  return SLGAN_ERR_INTERNAL;
}

slgan_status fail(slgan_status s, std::string kind, std::string msg) {
  g_last_kind = std::move(kind);
  g_last_error = std::move(msg);
  return s;
}

template <class Fn>
slgan_status wrap(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    g_last_kind.clear();
    return SLGAN_OK;
  } catch (const slgan::Error& e) {
    return fail(status_for_kind(e.kind()), e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SLGAN_ERR_IO, "IOError", e.what());
  } catch (const std::bad_alloc&) {
    return fail(SLGAN_ERR_INTERNAL, "OutOfMemory", "out of memory");
  } catch (const std::exception& e) {
    return fail(SLGAN_ERR_INTERNAL, "Internal", e.what());
  }
}

#define SLGAN_REQUIRE(cond, what)                                                  \
  do {                                                                             \
    if (!(cond)) return fail(SLGAN_ERR_INVALID_ARGUMENT, "InvalidArgument", what); \
  } while (0)

slgan::Domain to_domain(slgan_domain d) {
  if (d != SLGAN_MAKEUP && d != SLGAN_NON_MAKEUP) throw slgan::Error("InvalidCondition", "unknown domain");
  return static_cast<slgan::Domain>(d);
}

void copy_code(const slgan::Tensor& t, double* out, size_t len) {
  if (static_cast<size_t>(t.numel()) != len)
    throw slgan::Error("StyleDimMismatch",
                       "style code has " + std::to_string(t.numel()) + " entries, buffer holds " + std::to_string(len));
  std::memcpy(out, t.data(), len * sizeof(double));
}

slgan::Tensor code_tensor(const slgan_bundle* b, const double* code, size_t len) {
  if (len != static_cast<size_t>(b->bundle.config.arch.style_dim))
    throw slgan::Error("StyleDimMismatch", "expected a style code of " +
                                               std::to_string(b->bundle.config.arch.style_dim) + " entries");
  return slgan::Tensor({1, static_cast<std::int64_t>(len)}, std::vector<double>(code, code + len));
}

}  // namespace

extern "C" {

const char* slgan_last_error(void) { return g_last_error.c_str(); }
const char* slgan_last_error_kind(void) { return g_last_kind.c_str(); }

const char* slgan_status_name(slgan_status s) {
  switch (s) {
    case SLGAN_OK: return "ok";
    case SLGAN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SLGAN_ERR_IO: return "i/o error";
    case SLGAN_ERR_DECODE: return "decode error";
    case SLGAN_ERR_SHAPE: return "shape mismatch";
    case SLGAN_ERR_CONFIG: return "invalid configuration";
    case SLGAN_ERR_DATASET: return "dataset error";
    case SLGAN_ERR_CHECKPOINT: return "corrupt checkpoint";
    case SLGAN_ERR_VERSION: return "version mismatch";
    case SLGAN_ERR_WEIGHTS: return "weight sum violation";
    case SLGAN_ERR_NON_FINITE: return "non-finite loss";
    case SLGAN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

slgan_status slgan_bundle_load(const char* checkpoint_path, slgan_bundle** out) {
  SLGAN_REQUIRE(checkpoint_path && out, "checkpoint_path and out are required");
  *out = nullptr;
  return wrap([&] {
    auto b = std::make_unique<slgan_bundle>();
    b->bundle = slgan::load_checkpoint(checkpoint_path);
    b->model = std::make_unique<slgan::InferenceModel>(b->bundle);
    *out = b.release();
  });
}

void slgan_bundle_free(slgan_bundle* b) { delete b; }

slgan_status slgan_bundle_info_get(const slgan_bundle* b, slgan_bundle_info* out) {
  SLGAN_REQUIRE(b && out, "bundle and out are required");
  return wrap([&] {
    out->resolution = b->bundle.config.arch.resolution;
    out->style_dim = b->bundle.config.arch.style_dim;
    out->step = b->bundle.step;
    out->checkpoint_hash = b->bundle.checkpoint_hash;
    out->parameter_count = slgan::count_parameters(b->bundle.params).total();
  });
}

slgan_status slgan_face_load(const slgan_bundle* b, const char* image_path, const char* seg_path,
                             const char* landmarks_path, slgan_face** out) {
  SLGAN_REQUIRE(b && image_path && out, "bundle, image_path and out are required");
  *out = nullptr;
  return wrap([&] {
    const std::filesystem::path seg = seg_path ? seg_path : "";
    const std::filesystem::path lm = landmarks_path ? landmarks_path : "";
    auto f = std::make_unique<slgan_face>();
    f->sample = slgan::load_sample(image_path, seg_path ? &seg : nullptr, landmarks_path ? &lm : nullptr,
                                   b->model->resolution());
    *out = f.release();
  });
}

slgan_status slgan_face_from_memory(const slgan_bundle* b, const uint8_t* image, size_t image_len, const uint8_t* seg,
                                    size_t seg_len, const char* landmarks_text, slgan_face** out) {
  SLGAN_REQUIRE(b && image && out, "bundle, image and out are required");
  *out = nullptr;
  return wrap([&] {
    const slgan::RgbImage raw = slgan::decode_image({image, image_len});
    std::optional<slgan::LabelMap> labels;
    if (seg) labels = slgan::decode_label_map({seg, seg_len});
    std::optional<std::vector<slgan::Landmark>> pts;
    if (landmarks_text) pts = slgan::parse_landmarks(landmarks_text);
    auto f = std::make_unique<slgan_face>();
    f->sample = slgan::make_sample(raw, labels ? &*labels : nullptr, pts ? &*pts : nullptr, b->model->resolution());
    *out = f.release();
  });
}

void slgan_face_free(slgan_face* f) { delete f; }

int slgan_face_is_masked(const slgan_face* f) { return f && f->sample.has_parsing ? 1 : 0; }

slgan_status slgan_encode_style(const slgan_bundle* b, const slgan_face* f, slgan_domain d, double* code,
                                size_t code_len) {
  SLGAN_REQUIRE(b && f && code, "bundle, face and code are required");
  return wrap([&] { copy_code(b->model->encode_style(f->sample, to_domain(d)), code, code_len); });
}

slgan_status slgan_map_latent(const slgan_bundle* b, uint64_t seed, slgan_domain d, double* code, size_t code_len) {
  SLGAN_REQUIRE(b && code, "bundle and code are required");
  return wrap([&] { copy_code(b->model->map_latent(seed, to_domain(d)), code, code_len); });
}

slgan_status slgan_interpolate(const double* codes, const double* weights, size_t k, size_t code_len, double* out) {
  SLGAN_REQUIRE(codes && weights && out && k > 0 && code_len > 0, "codes, weights and out are required");
  return wrap([&] {
    std::vector<slgan::Tensor> ts;
    for (size_t i = 0; i < k; ++i)
      ts.emplace_back(slgan::Shape{1, static_cast<std::int64_t>(code_len)},
                      std::vector<double>(codes + i * code_len, codes + (i + 1) * code_len));
    copy_code(slgan::interpolate_styles(ts, {weights, k}), out, code_len);
  });
}

slgan_status slgan_generate(const slgan_bundle* b, const slgan_face* source, const double* code, size_t code_len,
                            slgan_image** out) {
  SLGAN_REQUIRE(b && source && code && out, "bundle, source, code and out are required");
  *out = nullptr;
  return wrap([&] {
    auto img = std::make_unique<slgan_image>();
    img->pixels = b->model->generate(source->sample, code_tensor(b, code, code_len));
    *out = img.release();
  });
}

slgan_status slgan_transfer(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference,
                            slgan_image** out) {
  SLGAN_REQUIRE(b && source && reference && out, "bundle, source, reference and out are required");
  *out = nullptr;
  return wrap([&] {
    auto img = std::make_unique<slgan_image>();
    img->pixels = b->model->transfer(source->sample, reference->sample);
    *out = img.release();
  });
}

slgan_status slgan_remove(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference, uint64_t seed,
                          slgan_image** out) {
  SLGAN_REQUIRE(b && source && out, "bundle, source and out are required");
  *out = nullptr;
  return wrap([&] {
    auto img = std::make_unique<slgan_image>();
    img->pixels = reference ? b->model->remove(source->sample, reference->sample) : b->model->remove(source->sample, seed);
    *out = img.release();
  });
}

slgan_status slgan_blend(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference, double alpha,
                         slgan_domain target, slgan_image** out) {
  SLGAN_REQUIRE(b && source && reference && out, "bundle, source, reference and out are required");
  SLGAN_REQUIRE(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  *out = nullptr;
  return wrap([&] {
    const slgan::Domain t = to_domain(target);
    const slgan::Tensor own = b->model->encode_style(source->sample, slgan::opposite(t));
    const slgan::Tensor ref = b->model->encode_style(reference->sample, t);
    auto img = std::make_unique<slgan_image>();
    img->pixels = b->model->generate(source->sample, slgan::InferenceModel::blend(own, ref, alpha));
    *out = img.release();
  });
}

void slgan_image_free(slgan_image* img) { delete img; }

int slgan_image_size(const slgan_image* img) { return img ? static_cast<int>(img->pixels.dim(3)) : 0; }

slgan_status slgan_image_rgb8(const slgan_image* img, uint8_t* out, size_t out_len) {
  SLGAN_REQUIRE(img && out, "image and out are required");
  return wrap([&] {
    const slgan::RgbImage rgb = slgan::to_rgb8(img->pixels);
    if (out_len < rgb.pixels.size()) throw slgan::Error("ShapeMismatch", "output buffer too small");
    std::memcpy(out, rgb.pixels.data(), rgb.pixels.size());
  });
}

slgan_status slgan_image_write_png(const slgan_image* img, const char* path) {
  SLGAN_REQUIRE(img && path, "image and path are required");
  return wrap([&] { slgan::write_png(slgan::to_rgb8(img->pixels), path); });
}

slgan_status slgan_image_encode_png(const slgan_image* img, uint8_t** data, size_t* len) {
  SLGAN_REQUIRE(img && data && len, "image, data and len are required");
  *data = nullptr;
  *len = 0;
  return wrap([&] {
    const auto png = slgan::encode_png(slgan::to_rgb8(img->pixels));
    auto* p = static_cast<uint8_t*>(std::malloc(png.size()));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, png.data(), png.size());
    *data = p;
    *len = png.size();
  });
}

void slgan_buffer_free(void* p) { std::free(p); }

slgan_status slgan_train(const char* config_path, const char* dataset_root, const char* out_dir,
                         const char* resume_from, slgan_progress_fn progress, void* user, char* final_path,
                         size_t final_path_len) {
  SLGAN_REQUIRE(config_path && dataset_root && out_dir, "config_path, dataset_root and out_dir are required");
  return wrap([&] {
    const slgan::TrainConfig cfg = slgan::TrainConfig::from_file(config_path);
    slgan::FitOptions opts;
    if (resume_from) opts.resume_from = resume_from;
    if (progress)
      opts.on_step = [&](const slgan::LossReport& r) { progress(r.to_json_line().c_str(), user); };
    const std::string path = slgan::fit(cfg, dataset_root, out_dir, opts).string();
    if (final_path && final_path_len > 0) {
      std::strncpy(final_path, path.c_str(), final_path_len - 1);
      final_path[final_path_len - 1] = '\0';
    }
  });
}

slgan_status slgan_dataset_counts(const char* root, size_t* makeup, size_t* non_makeup) {
  SLGAN_REQUIRE(root && makeup && non_makeup, "root, makeup and non_makeup are required");
  return wrap([&] {
    const slgan::DatasetIndex idx = slgan::load_manifest(root, 256);
    *makeup = idx.makeup_paths.size();
    *non_makeup = idx.nonmakeup_paths.size();
  });
}

slgan_status slgan_service_create(const char* checkpoint_path, slgan_service** out) {
  SLGAN_REQUIRE(out, "out is required");
  *out = nullptr;
  return wrap([&] {
    auto s = std::make_unique<slgan_service>();
    if (checkpoint_path) s->service.load_bundle(checkpoint_path);
    s->service.install(s->server);
    *out = s.release();
  });
}

slgan_status slgan_service_listen(slgan_service* s, const char* host, int port) {
  SLGAN_REQUIRE(s && host && port > 0, "service, host and a positive port are required");
  return wrap([&] {
    if (!s->server.listen(host, port))
      throw slgan::Error("IOError", std::string("cannot listen on ") + host + ":" + std::to_string(port));
  });
}

void slgan_service_stop(slgan_service* s) {
  if (s) s->server.stop();
}

void slgan_service_free(slgan_service* s) { delete s; }

}  // extern "C"

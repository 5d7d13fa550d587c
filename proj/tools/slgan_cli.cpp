// Command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slgan/slgan.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  slgan_status status;
};

void check(slgan_status s) {
  if (s != SLGAN_OK) {
    std::fprintf(stderr, "slgan: %s (%s)\n", slgan_last_error(), slgan_status_name(s));
    throw Failure{s};
  }
}

using BundlePtr = std::unique_ptr<slgan_bundle, decltype(&slgan_bundle_free)>;
using FacePtr = std::unique_ptr<slgan_face, decltype(&slgan_face_free)>;
using ImagePtr = std::unique_ptr<slgan_image, decltype(&slgan_image_free)>;

struct FaceOptions {
  std::string segs;       // directory of <stem>.png parsing maps
  std::string landmarks;  // directory of <stem>.txt landmark files
};

BundlePtr open_bundle(std::string path) {
  if (path.empty())
    if (const char* env = std::getenv("SLGAN_BUNDLE")) path = env;
  if (path.empty()) {
    std::fprintf(stderr, "slgan: no checkpoint given; pass --bundle or set SLGAN_BUNDLE\n");
    throw Failure{SLGAN_ERR_INVALID_ARGUMENT};
  }
  slgan_bundle* b = nullptr;
  check(slgan_bundle_load(path.c_str(), &b));
  return BundlePtr(b, slgan_bundle_free);
}

// Parsing map: <segs>/<stem>.png, else the sidecar <image-stem>.seg.png.
// Landmarks: <landmarks>/<stem>.txt, else the sidecar <image-stem>.lm.txt.
FacePtr open_face(const slgan_bundle* b, const fs::path& image, const FaceOptions& fo) {
  const std::string stem = image.stem().string();
  std::optional<fs::path> seg, lm;
  if (!fo.segs.empty() && fs::exists(fs::path(fo.segs) / (stem + ".png")))
    seg = fs::path(fo.segs) / (stem + ".png");
  else if (fs::exists(image.parent_path() / (stem + ".seg.png")))
    seg = image.parent_path() / (stem + ".seg.png");
  if (!fo.landmarks.empty() && fs::exists(fs::path(fo.landmarks) / (stem + ".txt")))
    lm = fs::path(fo.landmarks) / (stem + ".txt");
  else if (fs::exists(image.parent_path() / (stem + ".lm.txt")))
    lm = image.parent_path() / (stem + ".lm.txt");
  if (!seg) std::fprintf(stderr, "slgan: no parsing map for %s, using the unmasked fallback\n", image.c_str());
  const std::string seg_s = seg ? seg->string() : "", lm_s = lm ? lm->string() : "";
  slgan_face* f = nullptr;
  check(slgan_face_load(b, image.c_str(), seg ? seg_s.c_str() : nullptr, lm ? lm_s.c_str() : nullptr, &f));
  return FacePtr(f, slgan_face_free);
}

void write(const ImagePtr& img, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  check(slgan_image_write_png(img.get(), out.c_str()));
  std::printf("%s\n", out.c_str());
}

ImagePtr adopt(slgan_image* p) { return ImagePtr(p, slgan_image_free); }

void print_progress(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

slgan_domain parse_domain(const std::string& s) {
  if (s == "makeup") return SLGAN_MAKEUP;
  if (s == "non-makeup") return SLGAN_NON_MAKEUP;
  std::fprintf(stderr, "slgan: unknown domain '%s'\n", s.c_str());
  throw Failure{SLGAN_ERR_INVALID_ARGUMENT};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLGAN makeup transfer and removal"};
  app.require_subcommand(1);

  std::string bundle_path;
  FaceOptions fo;
  auto add_face_opts = [&](CLI::App* sc) {
    sc->add_option("--bundle", bundle_path, "checkpoint (default: $SLGAN_BUNDLE)");
    sc->add_option("--segs", fo.segs, "directory of parsing maps named <stem>.png");
    sc->add_option("--landmarks", fo.landmarks, "directory of landmark files named <stem>.txt");
  };

  // train
  std::string config, data, out_dir, resume;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config, "key=value configuration file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data, "dataset root")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "do not print per-step losses");

  // transfer
  std::string source, reference, out;
  std::optional<double> alpha;
  auto* transfer = app.add_subcommand("transfer", "apply the reference's makeup to the source");
  transfer->add_option("--source", source)->required()->check(CLI::ExistingFile);
  transfer->add_option("--reference", reference)->required()->check(CLI::ExistingFile);
  transfer->add_option("--out", out)->required();
  transfer->add_option("--alpha", alpha, "strength in [0, 1]; blends from the source's own style")
      ->check(CLI::Range(0.0, 1.0));
  add_face_opts(transfer);

  // remove
  std::optional<std::uint64_t> seed;
  auto* remove = app.add_subcommand("remove", "remove makeup, guided by a reference or a latent seed");
  remove->add_option("--source", source)->required()->check(CLI::ExistingFile);
  remove->add_option("--out", out)->required();
  auto* ref_opt = remove->add_option("--reference", reference)->check(CLI::ExistingFile);
  auto* seed_opt = remove->add_option("--seed", seed, "latent seed");
  ref_opt->excludes(seed_opt);
  add_face_opts(remove);

  // interpolate
  std::vector<std::string> refs;
  std::vector<double> weights;
  std::string domain = "makeup";
  auto* interp = app.add_subcommand("interpolate", "mix the styles of K references");
  interp->add_option("--source", source)->required()->check(CLI::ExistingFile);
  interp->add_option("--refs", refs)->required()->check(CLI::ExistingFile);
  interp->add_option("--weights", weights, "one weight per reference, summing to 1")->required();
  interp->add_option("--out", out)->required();
  interp->add_option("--domain", domain, "makeup or non-makeup")->check(CLI::IsMember({"makeup", "non-makeup"}));
  add_face_opts(interp);

  // sweep
  int steps = 5;
  std::string outdir;
  std::vector<std::uint64_t> latent_seeds;
  auto* sweep = app.add_subcommand("sweep", "light-to-heavy strength sweep, or a latent sweep between two seeds");
  sweep->add_option("--source", source)->required()->check(CLI::ExistingFile);
  auto* sweep_ref = sweep->add_option("--reference", reference)->check(CLI::ExistingFile);
  auto* sweep_lat = sweep->add_option("--latent", latent_seeds, "two seeds for a latent sweep")->expected(2);
  sweep_ref->excludes(sweep_lat);
  sweep->add_option("--steps", steps)->check(CLI::Range(2, 1000));
  sweep->add_option("--outdir", outdir)->required();
  sweep->add_option("--domain", domain, "target domain")->check(CLI::IsMember({"makeup", "non-makeup"}));
  add_face_opts(sweep);

  // serve
  std::string host = "0.0.0.0";
  int port = 0;
  auto* serve = app.add_subcommand("serve", "run the studio HTTP service");
  serve->add_option("--bundle", bundle_path, "checkpoint (default: $SLGAN_BUNDLE)");
  serve->add_option("--host", host);
  serve->add_option("--port", port, "port (default: $SLGAN_PORT or 8080)");

  // info
  auto* info = app.add_subcommand("info", "print checkpoint metadata");
  info->add_option("--bundle", bundle_path);

  // dataset
  auto* counts = app.add_subcommand("dataset-counts", "count images per domain under a dataset root");
  counts->add_option("--data", data)->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      char final_path[4096];
      check(slgan_train(config.c_str(), data.c_str(), out_dir.c_str(), resume.empty() ? nullptr : resume.c_str(),
                        quiet ? nullptr : print_progress, nullptr, final_path, sizeof final_path));
      std::printf("final checkpoint: %s\n", final_path);
    } else if (*transfer) {
      const auto b = open_bundle(bundle_path);
      const auto src = open_face(b.get(), source, fo), ref = open_face(b.get(), reference, fo);
      slgan_image* img = nullptr;
      if (alpha)
        check(slgan_blend(b.get(), src.get(), ref.get(), *alpha, SLGAN_MAKEUP, &img));
      else
        check(slgan_transfer(b.get(), src.get(), ref.get(), &img));
      write(adopt(img), out);
    } else if (*remove) {
      const auto b = open_bundle(bundle_path);
      const auto src = open_face(b.get(), source, fo);
      FacePtr ref(nullptr, slgan_face_free);
      if (!reference.empty()) ref = open_face(b.get(), reference, fo);
      slgan_image* img = nullptr;
      check(slgan_remove(b.get(), src.get(), ref.get(), seed.value_or(0), &img));
      write(adopt(img), out);
    } else if (*interp) {
      if (refs.size() != weights.size()) {
        std::fprintf(stderr, "slgan: %zu references but %zu weights\n", refs.size(), weights.size());
        return 2;
      }
      const auto b = open_bundle(bundle_path);
      slgan_bundle_info bi;
      check(slgan_bundle_info_get(b.get(), &bi));
      const auto dim = static_cast<size_t>(bi.style_dim);
      const auto src = open_face(b.get(), source, fo);
      std::vector<double> codes(refs.size() * dim), mixed(dim);
      for (size_t k = 0; k < refs.size(); ++k) {
        const auto f = open_face(b.get(), refs[k], fo);
        check(slgan_encode_style(b.get(), f.get(), parse_domain(domain), codes.data() + k * dim, dim));
      }
      check(slgan_interpolate(codes.data(), weights.data(), refs.size(), dim, mixed.data()));
      slgan_image* img = nullptr;
      check(slgan_generate(b.get(), src.get(), mixed.data(), dim, &img));
      write(adopt(img), out);
    } else if (*sweep) {
      const auto b = open_bundle(bundle_path);
      const auto src = open_face(b.get(), source, fo);
      const slgan_domain target = parse_domain(domain);
      if (reference.empty() && latent_seeds.size() != 2) {
        std::fprintf(stderr, "slgan: sweep needs --reference or --latent A B\n");
        return 2;
      }
      FacePtr ref(nullptr, slgan_face_free);
      std::vector<double> wa, wb;
      if (!reference.empty()) {
        ref = open_face(b.get(), reference, fo);
      } else {
        slgan_bundle_info bi;
        check(slgan_bundle_info_get(b.get(), &bi));
        wa.resize(static_cast<size_t>(bi.style_dim));
        wb.resize(wa.size());
        check(slgan_map_latent(b.get(), latent_seeds[0], target, wa.data(), wa.size()));
        check(slgan_map_latent(b.get(), latent_seeds[1], target, wb.data(), wb.size()));
      }
      for (int i = 0; i < steps; ++i) {
        const double a = static_cast<double>(i) / (steps - 1);
        slgan_image* img = nullptr;
        if (ref) {
          check(slgan_blend(b.get(), src.get(), ref.get(), a, target, &img));
        } else {
          std::vector<double> s(wa.size());
          for (size_t j = 0; j < s.size(); ++j) s[j] = (1.0 - a) * wa[j] + a * wb[j];
          check(slgan_generate(b.get(), src.get(), s.data(), s.size(), &img));
        }
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", i);
        write(adopt(img), fs::path(outdir) / name);
      }
    } else if (*serve) {
      if (bundle_path.empty())
        if (const char* env = std::getenv("SLGAN_BUNDLE")) bundle_path = env;
      if (port <= 0) {
        const char* env = std::getenv("SLGAN_PORT");
        port = env ? std::atoi(env) : 8080;
      }
      if (bundle_path.empty()) std::fprintf(stderr, "slgan: serving without a bundle; /health will report 503\n");
      slgan_service* svc = nullptr;
      check(slgan_service_create(bundle_path.empty() ? nullptr : bundle_path.c_str(), &svc));
      std::unique_ptr<slgan_service, decltype(&slgan_service_free)> guard(svc, slgan_service_free);
      std::fprintf(stderr, "slgan: listening on %s:%d\n", host.c_str(), port);
      check(slgan_service_listen(svc, host.c_str(), port));
    } else if (*info) {
      const auto b = open_bundle(bundle_path);
      slgan_bundle_info bi;
      check(slgan_bundle_info_get(b.get(), &bi));
      std::printf("resolution %d\nstyle_dim %d\nstep %llu\ncheckpoint_hash %016llx\nparameters %lld\n", bi.resolution,
                  bi.style_dim, static_cast<unsigned long long>(bi.step),
                  static_cast<unsigned long long>(bi.checkpoint_hash), static_cast<long long>(bi.parameter_count));
    } else if (*counts) {
      size_t mk = 0, nm = 0;
      check(slgan_dataset_counts(data.c_str(), &mk, &nm));
      std::printf("makeup %zu\nnon-makeup %zu\n", mk, nm);
    }
  } catch (const Failure& f) {
    return 1;
  }
  return 0;
}

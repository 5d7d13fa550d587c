#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "slgan/dataset.hpp"
#include "slgan/losses.hpp"
#include "slgan/networks.hpp"

namespace slgan {

enum class GuidanceSchedule { both, alternate };

struct TrainConfig {
  ArchConfig arch;
  int batch_size = 4;
  std::int64_t total_steps = 500;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  double lr_g = 1e-4;
  double lr_se = 1e-4;
  double lr_d = 1e-4;
  double lr_mn = 1e-6;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  LossWeights weights;
  GuidanceSchedule guidance = GuidanceSchedule::both;
  std::int64_t checkpoint_every = 100;

  void validate() const;
  /// Canonical key=value text, one key per line in a fixed order.
  std::string to_text() const;
  /// Keys not present keep their defaults; unknown keys are an error.
  static TrainConfig parse(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path);
};

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Hash of the raw bytes of every parameter whose name starts with `prefix`.
std::uint64_t hash_parameters(const ParamStore& ps, const std::string& prefix = "");

struct AdamMoments {
  Tensor m, v;
};

struct ModelBundle {
  TrainConfig config;
  ParamStore params{ParamStore::Source::live};
  ParamStore ema{ParamStore::Source::ema};  // se/, mn/, g/ only
  std::map<std::string, AdamMoments> adam;
  std::int64_t adam_steps_g = 0;  // shared by G, SE and MN
  std::int64_t adam_steps_d = 0;
  std::uint64_t step = 0;
  std::uint64_t checkpoint_hash = 0;  // content hash of the archive this bundle was last saved to / loaded from

  std::uint64_t config_hash() const;
};

/// He-initialized networks; EMA shadows start equal to the weights.
ModelBundle init_models(const TrainConfig& config, std::uint64_t seed);

/// Latent draws consumed by one training step.
struct StepDraws {
  Tensor z_fake, z1, z2;  // N×16 each
};
StepDraws draw_latents(Rng& rng, std::int64_t batch);

/// Discriminator half-step; touches only d/ parameters. Returns (adv, total).
std::pair<double, double> discriminator_step(ModelBundle& bundle, const TrainingBatch& batch, const StepDraws& draws);
/// Generator half-step over G, SE and MN; D is read-only.
LossReport generator_step(ModelBundle& bundle, const TrainingBatch& batch, const StepDraws& draws);

/// D step, G step, EMA update, step + 1. Throws NonFiniteLoss before any
/// parameter changes if a loss is not finite.
LossReport train_step(ModelBundle& bundle, const TrainingBatch& batch, Rng& rng);

/// shadow ← decay·shadow + (1 − decay)·current for every se/, mn/, g/ parameter.
void update_ema(ModelBundle& bundle, double decay);

/// Atomic write (temp file then rename). Records the archive hash in the bundle.
void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& path);
/// Throws CorruptCheckpoint (bad magic, truncated, checksum) or VersionMismatch
/// (format version or config hash).
ModelBundle load_checkpoint(const std::filesystem::path& path);

/// Seeds used by fit() for step `step`; exposed so a resumed run can replay them.
std::uint64_t batch_seed(const TrainConfig& cfg, std::uint64_t step);
std::uint64_t draw_seed(const TrainConfig& cfg, std::uint64_t step);

struct FitOptions {
  std::filesystem::path resume_from;  // empty = fresh init
  std::function<void(const LossReport&)> on_step;
};

/// Trains until the step counter reaches config.total_steps, writing
/// ckpt_<step>.bin every checkpoint_every steps, loss_log.jsonl, and final.ckpt.
std::filesystem::path fit(const TrainConfig& config, const std::filesystem::path& dataset_root,
                          const std::filesystem::path& out_dir, const FitOptions& opts = {});

}  // namespace slgan

#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "slgan/training.hpp"
#include "support.hpp"

using namespace slgan;
namespace fs = std::filesystem;

namespace {

struct Rig {
  TrainConfig cfg = testing::micro_config(16);
  Dataset data{load_manifest(testing::fixture("mt8"), 16)};

  TrainingBatch batch(std::uint64_t step) const {
    return data.sample_training_batch(batch_seed(cfg, step), cfg.batch_size);
  }
  LossReport step(ModelBundle& b) const {
    const std::uint64_t s = b.step;
    Rng rng(draw_seed(cfg, s));
    return train_step(b, batch(s), rng);
  }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Re-seals an edited archive so only the edited field is wrong.
void reseal(std::vector<char>& bytes) {
  const std::size_t body = bytes.size() - 8;
  const std::uint64_t sum = fnv1a64(bytes.data(), body);
  std::memcpy(bytes.data() + body, &sum, 8);
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i)
    if (a.entries()[i].first != b.entries()[i].first ||
        !a.entries()[i].second.value().bit_equal(b.entries()[i].second.value()))
      return false;
  return true;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("initialization is deterministic and the EMA starts at the weights") {
    const TrainConfig cfg = testing::micro_config();
    const ModelBundle a = init_models(cfg, 3), b = init_models(cfg, 3), c = init_models(cfg, 4);
    CHECK(stores_equal(a.params, b.params));
    CHECK_FALSE(stores_equal(a.params, c.params));
    CHECK(a.step == 0);
    CHECK(a.ema.source() == ParamStore::Source::ema);
    for (const auto& [name, v] : a.ema.entries()) {
      CHECK(name.rfind("d/", 0) != 0);
      CHECK(v.value().bit_equal(a.params.get(name).value()));
    }
  }

  TEST_CASE("EMA update follows the closed form") {
    // Bundles share parameter nodes on copy, so every case starts from a fresh init.
    auto fresh = [](std::string& name, Tensor& s0) {
      ModelBundle b = init_models(testing::micro_config(), 1);
      name = b.ema.entries().front().first;
      s0 = b.ema.get(name).value();
      ag::Var cur = b.params.get(name);
      cur.mutable_value().fill(0.75);
      return b;
    };
    std::string name;
    Tensor s0;
    for (double d : {0.9, 0.99, 0.999}) {
      ModelBundle b = fresh(name, s0);
      for (int k = 0; k < 100; ++k) update_ema(b, d);
      const double dk = std::pow(d, 100);
      const Tensor& s = b.ema.get(name).value();
      for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(std::abs(s[i] - (dk * s0[i] + (1 - dk) * 0.75)) < 1e-6);
    }
    ModelBundle z = fresh(name, s0);
    update_ema(z, 0.0);
    CHECK(z.ema.get(name).value().bit_equal(z.params.get(name).value()));
    ModelBundle one = fresh(name, s0);
    update_ema(one, 1.0);
    CHECK(one.ema.get(name).value().bit_equal(s0));
    CHECK_THROWS_AS(update_ema(one, 1.5), Error);
  }

  TEST_CASE("half-steps touch only their own parameters") {
    const Rig rig;
    ModelBundle b = init_models(rig.cfg, rig.cfg.seed);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const TrainingBatch batch = rig.batch(s);
      Rng rng(draw_seed(rig.cfg, s));
      const StepDraws draws = draw_latents(rng, batch.size());
      const std::uint64_t d0 = hash_parameters(b.params, "d/");
      const std::uint64_t g0 = hash_parameters(b.params, "g/"), se0 = hash_parameters(b.params, "se/"),
                          mn0 = hash_parameters(b.params, "mn/");
      const std::uint64_t ema0 = hash_parameters(b.ema);
      discriminator_step(b, batch, draws);
      CHECK(hash_parameters(b.params, "d/") != d0);
      CHECK(hash_parameters(b.params, "g/") == g0);
      CHECK(hash_parameters(b.params, "se/") == se0);
      CHECK(hash_parameters(b.params, "mn/") == mn0);
      const std::uint64_t d1 = hash_parameters(b.params, "d/");
      generator_step(b, batch, draws);
      CHECK(hash_parameters(b.params, "d/") == d1);
      CHECK(hash_parameters(b.params, "g/") != g0);
      CHECK(hash_parameters(b.params, "se/") != se0);
      CHECK(hash_parameters(b.params, "mn/") != mn0);
      CHECK(hash_parameters(b.ema) == ema0);
      update_ema(b, b.config.ema_decay);
      b.step += 1;
    }
  }

  TEST_CASE("a step advances the counter by one and is deterministic") {
    const Rig rig;
    ModelBundle a = init_models(rig.cfg, rig.cfg.seed), b = init_models(rig.cfg, rig.cfg.seed);
    const LossReport ra = rig.step(a), rb = rig.step(b);
    CHECK(a.step == 1);
    CHECK(ra.step == 0);
    CHECK(ra == rb);
    CHECK(ra.all_finite());
    CHECK(ra.g_total == doctest::Approx(total_generator_value(ra.g_adv, ra.g_sd, ra.g_sr, ra.g_cyc, ra.g_makeup,
                                                              ra.g_guide, rig.cfg.weights))
                            .epsilon(1e-12));
    CHECK(ra.g_makeup == doctest::Approx(10 * ra.g_lips + 10 * ra.g_eyes + 0.1 * ra.g_face).epsilon(1e-12));
    CHECK(stores_equal(a.params, b.params));
    CHECK(stores_equal(a.ema, b.ema));
  }

  TEST_CASE("non-finite losses abort before any parameter changes") {
    const Rig rig;
    ModelBundle b = init_models(rig.cfg, rig.cfg.seed);
    TrainingBatch batch = rig.batch(0);
    batch.source_images[0] = NAN;
    const std::uint64_t h = hash_parameters(b.params), e = hash_parameters(b.ema);
    Rng rng(1);
    CHECK_THROWS_WITH_AS(train_step(b, batch, rng), doctest::Contains("NonFiniteLoss"), Error);
    CHECK(hash_parameters(b.params) == h);
    CHECK(hash_parameters(b.ema) == e);
    CHECK(b.step == 0);
  }

  TEST_CASE("checkpoints round-trip bit-exactly and resume reproduces the next step") {
    const Rig rig;
    const fs::path dir = testing::scratch_dir("ckpt");
    ModelBundle b = init_models(rig.cfg, rig.cfg.seed);
    rig.step(b);
    rig.step(b);
    save_checkpoint(b, dir / "a.bin");
    ModelBundle back = load_checkpoint(dir / "a.bin");
    CHECK(back.step == b.step);
    CHECK(back.checkpoint_hash == b.checkpoint_hash);
    CHECK(stores_equal(back.params, b.params));
    CHECK(stores_equal(back.ema, b.ema));
    CHECK(back.adam.size() == b.adam.size());
    for (const auto& [name, m] : b.adam) {
      CHECK(back.adam.at(name).m.bit_equal(m.m));
      CHECK(back.adam.at(name).v.bit_equal(m.v));
    }
    CHECK(back.config.to_text() == b.config.to_text());
    save_checkpoint(back, dir / "b.bin");
    CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));

    CHECK(rig.step(back) == rig.step(b));
    CHECK(stores_equal(back.params, b.params));
    fs::remove_all(dir);
  }

  TEST_CASE("damaged checkpoints are rejected") {
    const fs::path dir = testing::scratch_dir("ckpt_bad");
    ModelBundle b = init_models(testing::micro_config(), 2);
    save_checkpoint(b, dir / "ok.bin");
    const std::vector<char> good = slurp(dir / "ok.bin");

    auto expect = [&](std::vector<char> bytes, const char* kind) {
      spit(dir / "bad.bin", bytes);
      CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.bin"), doctest::Contains(kind), Error);
    };
    std::vector<char> flipped = good;
    flipped[good.size() / 2] ^= 1;
    expect(flipped, "CorruptCheckpoint");
    expect(std::vector<char>(good.begin(), good.begin() + 100), "CorruptCheckpoint");
    std::vector<char> magic = good;
    magic[0] = 'X';
    expect(magic, "CorruptCheckpoint");

    std::vector<char> version = good;
    version[8] = 7;
    expect(version, "VersionMismatch");

    // Config hash sits after magic, version and the length-prefixed config text.
    std::uint64_t len;
    std::memcpy(&len, good.data() + 12, 8);
    std::vector<char> cfg_hash = good;
    cfg_hash[20 + len] ^= 0x5a;
    reseal(cfg_hash);
    expect(cfg_hash, "VersionMismatch");

    std::vector<char> cfg_text = good;
    cfg_text[20] ^= 0x20;  // key text changes; the stored hash no longer matches
    reseal(cfg_text);
    expect(cfg_text, "VersionMismatch");

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), Error);
    fs::remove_all(dir);
  }

  TEST_CASE("fit writes periodic checkpoints, a log and a final archive") {
    const fs::path dir = testing::scratch_dir("fit");
    TrainConfig cfg = testing::micro_config(16);
    cfg.total_steps = 4;
    cfg.checkpoint_every = 2;
    std::vector<LossReport> seen;
    const fs::path final_path = fit(cfg, testing::fixture("mt8"), dir, {{}, [&](const LossReport& r) { seen.push_back(r); }});
    CHECK(final_path == dir / "final.ckpt");
    CHECK(fs::exists(dir / "ckpt_2.bin"));
    CHECK(fs::exists(dir / "ckpt_4.bin"));
    CHECK_FALSE(fs::exists(dir / "ckpt_1.bin"));
    REQUIRE(seen.size() == 4);
    std::ifstream log(dir / "loss_log.jsonl");
    std::string line;
    std::vector<LossReport> logged;
    while (std::getline(log, line)) logged.push_back(LossReport::from_json_line(line));
    CHECK(logged == seen);
    CHECK(load_checkpoint(final_path).step == 4);

    // Resuming from step 2 replays steps 2 and 3 exactly.
    const fs::path dir2 = testing::scratch_dir("fit_resume");
    std::vector<LossReport> resumed;
    fit(cfg, testing::fixture("mt8"), dir2, {dir / "ckpt_2.bin", [&](const LossReport& r) { resumed.push_back(r); }});
    REQUIRE(resumed.size() == 2);
    CHECK(resumed[0] == seen[2]);
    CHECK(resumed[1] == seen[3]);
    CHECK(slurp(dir2 / "final.ckpt") == slurp(final_path));

    const fs::path dir3 = testing::scratch_dir("fit_zero");
    cfg.total_steps = 0;
    fit(cfg, testing::fixture("mt8"), dir3);
    CHECK(fs::exists(dir3 / "final.ckpt"));
    CHECK(load_checkpoint(dir3 / "final.ckpt").step == 0);
    CHECK(fs::file_size(dir3 / "loss_log.jsonl") == 0);
    for (const auto& p : {dir, dir2, dir3}) fs::remove_all(p);
  }

  TEST_CASE("configuration text round-trips and validates") {
    TrainConfig c = testing::micro_config();
    c.lr_d = 3e-4 / 7;
    c.guidance = GuidanceSchedule::alternate;
    const TrainConfig back = TrainConfig::parse(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.lr_d == c.lr_d);
    CHECK(TrainConfig::parse("# nothing\n\n").to_text() == TrainConfig{}.to_text());
    CHECK_THROWS_AS(TrainConfig::parse("bogus = 1\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse("batch_size\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse("batch_size = x\n"), Error);
    TrainConfig bad;
    bad.ema_decay = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.lr_mn = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    const TrainConfig defaults;
    CHECK(defaults.beta1 == 0.0);
    CHECK(defaults.beta2 == 0.99);
    CHECK(defaults.lr_mn == 1e-6);
    CHECK(defaults.weights.sd == -1.0);
  }

  TEST_CASE("parameter hashing is order- and value-sensitive") {
    ModelBundle b = init_models(testing::micro_config(), 1);
    const std::uint64_t h = hash_parameters(b.params);
    ag::Var bias = b.params.entries().back().second;
    bias.mutable_value()[0] += 1e-300;
    CHECK(hash_parameters(b.params) != h);
    CHECK(hash_parameters(b.params, "nothing/") == hash_parameters(ParamStore{}));
  }
}

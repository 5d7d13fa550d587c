#include <cmath>

#include "doctest.h"
#include "loss_battery.hpp"
#include "slgan/losses.hpp"
#include "support.hpp"

using namespace slgan;

namespace {

ag::Var c(Tensor t) { return ag::constant(std::move(t)); }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("adversarial losses at zero logits") {
    const Tensor z({4, 1});
    CHECK(std::abs(adversarial_loss_d(c(z), c(z)).item() - 2 * std::log(2.0)) < 1e-12);
    CHECK(std::abs(adversarial_loss_g(c(z)).item() - std::log(2.0)) < 1e-12);
  }

  TEST_CASE("adversarial D loss against the direct formula") {
    Rng rng(3);
    const Tensor r = testing::random_tensor(rng, {5, 1}, -6, 6), f = testing::random_tensor(rng, {5, 1}, -6, 6);
    double want = 0;
    for (int i = 0; i < 5; ++i) {
      const double sr = 1 / (1 + std::exp(-r[i])), sf = 1 / (1 + std::exp(-f[i]));
      want += -(std::log(sr) + std::log(1 - sf)) / 5;
    }
    CHECK(adversarial_loss_d(c(r), c(f)).item() == doctest::Approx(want).epsilon(1e-12));
    // Confident D: small loss, no overflow at extreme logits.
    const double big = adversarial_loss_d(c(Tensor({1, 1}, 800.0)), c(Tensor({1, 1}, -800.0))).item();
    CHECK(std::isfinite(big));
    CHECK(big < 1e-300);
  }

  TEST_CASE("zero cases of the reconstruction terms") {
    Rng rng(4);
    const Tensor x = testing::random_tensor(rng, {2, 3, 8, 8});
    const Tensor s = testing::random_tensor(rng, {2, 8});
    CHECK(cycle_loss(c(x), c(x)).item() == 0.0);
    CHECK(style_diversity_loss(c(x), c(x)).item() == 0.0);
    CHECK(style_reconstruction_loss(c(s), c(s)).item() == 0.0);
    CHECK(guide_loss(c(x), c(x), c(x), 0.5, 0.5).item() == 0.0);
  }

  TEST_CASE("guide loss uses mean-reduced L2") {
    const Tensor zero({1, 3, 4, 4}), one({1, 3, 4, 4}, 1.0);
    CHECK(guide_loss(c(zero), c(zero), c(one), 0.5, 0.5).item() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(guide_loss(c(one), c(zero), c(zero), 0.5, 0.5).item() == doctest::Approx(0.5).epsilon(1e-12));
    const Tensor two({1, 3, 4, 4}, 2.0);
    CHECK(guide_loss(c(zero), c(one), c(two), 0.25, 1.0).item() == doctest::Approx(1.25).epsilon(1e-12));
  }

  TEST_CASE("L1 terms are mean absolute differences") {
    const Tensor a({1, 4}, {1, 2, 3, 4}), b({1, 4}, {0, 4, 3, 1});
    CHECK(cycle_loss(c(a), c(b)).item() == doctest::Approx(1.5));
    CHECK(style_reconstruction_loss(c(a), c(b)).item() == doctest::Approx(1.5));
    CHECK_THROWS_AS(style_reconstruction_loss(c(a), c(Tensor({1, 3}))), Error);
  }

  TEST_CASE("total generator loss with a negative diversity weight") {
    const auto v = [](double x) { return c(Tensor({1}, {x})); };
    const LossWeights w;
    const GeneratorParts p{v(1.0), v(2.0), v(3.0), v(4.0), v(5.0), v(6.0)};
    CHECK(total_generator_loss(p, w).item() == doctest::Approx(1 - 2 + 3 + 4 + 5 + 6));
    CHECK(total_generator_value(1, 2, 3, 4, 5, 6, w) == doctest::Approx(17));
    const GeneratorParts more = {v(1.0), v(2.5), v(3.0), v(4.0), v(5.0), v(6.0)};
    CHECK(total_generator_loss(more, w).item() < total_generator_loss(p, w).item());
  }

  TEST_CASE("makeup loss combines region terms with their weights") {
    const ArchConfig arch = testing::micro_arch(8);
    ParamStore ps;
    Rng rng(6);
    declare_all(arch, ps, rng);
    const StyleEncoder se(arch, ps);
    const Tensor gen = testing::random_tensor(rng, {2, 3, 8, 8}), ref = testing::random_tensor(rng, {2, 3, 8, 8});
    RegionMasks gm, rm;
    for (Tensor* m : {&gm.lips, &gm.eyes, &gm.face, &rm.lips, &rm.eyes, &rm.face})
      *m = testing::random_mask(rng, {2, 1, 8, 8}, 0.5);
    const LossWeights w;
    const MakeupLoss m = makeup_loss(c(gen), ref, gm, rm, se, w);
    const double lips = region_histogram_loss(c(gen), ref, gm.lips, rm.lips, se).value.item();
    const double eyes = region_histogram_loss(c(gen), ref, gm.eyes, rm.eyes, se).value.item();
    const double face = region_histogram_loss(c(gen), ref, gm.face, rm.face, se).value.item();
    CHECK(m.lips.item() == lips);
    CHECK(m.total.item() == doctest::Approx(10 * lips + 10 * eyes + 0.1 * face).epsilon(1e-12));
    CHECK(makeup_loss(c(gen), gen, gm, gm, se, w).total.item() == 0.0);
    CHECK(m.total.item() > 0.0);
  }

  TEST_CASE("every loss matches central finite differences") {
    for (const auto& r : testing::loss_gradient_battery()) {
      CAPTURE(r.name);
      CHECK(r.check.max_rel_error < 1e-3);
    }
  }

  TEST_CASE("loss reports round-trip through JSON") {
    LossReport r;
    r.step = 17;
    r.g_total = 0.1 + 0.2;
    r.d_adv = -1e-300;
    r.empty_region = true;
    CHECK(LossReport::from_json_line(r.to_json_line()) == r);
    CHECK(r.all_finite());
    r.g_cyc = NAN;
    CHECK_FALSE(r.all_finite());
  }

  TEST_CASE("loss weights must be finite") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.face = INFINITY;
    CHECK_THROWS_AS(w.validate(), Error);
  }
}

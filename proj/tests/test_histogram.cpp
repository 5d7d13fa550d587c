#include <algorithm>

#include "doctest.h"
#include "slgan/histogram.hpp"
#include "slgan/losses.hpp"
#include "support.hpp"

using namespace slgan;

TEST_SUITE("histogram") {
  TEST_CASE("matching onto a sorted target of equal length") {
    const std::vector<double> src{3.0, 1.0, 2.0};
    const std::vector<double> tgt{10.0, 30.0, 20.0};
    CHECK(match_histogram(src, tgt) == std::vector<double>{30.0, 10.0, 20.0});
  }

  TEST_CASE("constant target maps everything to that constant") {
    const std::vector<double> src{0.3, -2.0, 5.0, 5.0};
    const auto out = match_histogram(src, std::vector<double>{4.0, 4.0});
    for (double v : out) CHECK(v == 4.0);
  }

  TEST_CASE("tied sources receive consecutive ranks in index order") {
    const std::vector<double> src{5.0, 5.0, 5.0};
    const std::vector<double> tgt{1.0, 2.0, 3.0};
    const auto out = match_histogram(src, tgt);
    CHECK(out == testing::hm_oracle(src, tgt));
    CHECK(out == std::vector<double>{1.0, 2.0, 3.0});
  }

  TEST_CASE("single source value reads the target median position") {
    CHECK(match_histogram(std::vector<double>{7.0}, std::vector<double>{0.0, 10.0}) ==
          std::vector<double>{5.0});
    CHECK(match_histogram(std::vector<double>{7.0}, std::vector<double>{4.0, 1.0, 9.0}) ==
          std::vector<double>{4.0});
  }

  TEST_CASE("unequal lengths interpolate between target order statistics") {
    // n = 3, m = 5: ranks read positions 0, 2, 4.
    const auto a = match_histogram(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{0, 1, 2, 3, 4});
    CHECK(a == std::vector<double>{0.0, 2.0, 4.0});
    // n = 3, m = 2: positions 0, 0.5, 1.
    const auto b = match_histogram(std::vector<double>{2.0, 0.0, 1.0}, std::vector<double>{10.0, 20.0});
    CHECK(b == std::vector<double>{20.0, 10.0, 15.0});
  }

  TEST_CASE("empty populations are rejected") {
    CHECK_THROWS_AS(match_histogram(std::vector<double>{}, std::vector<double>{1.0}), Error);
    CHECK_THROWS_AS(match_histogram(std::vector<double>{1.0}, std::vector<double>{}), Error);
  }

  TEST_CASE("random populations agree with the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
      const auto n = 1 + uniform_index(rng, 40), m = 1 + uniform_index(rng, 40);
      std::vector<double> s(n), t(m);
      // Coarse values so that ties are frequent.
      for (auto& v : s) v = static_cast<double>(uniform_index(rng, 6)) - 2.5;
      for (auto& v : t) v = standard_normal(rng);
      const auto got = match_histogram(s, t), want = testing::hm_oracle(s, t);
      for (std::size_t i = 0; i < n; ++i) REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("properties: multiset transfer, monotonicity, idempotence, range") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      const auto n = 2 + uniform_index(rng, 30);
      std::vector<double> s(n), t(n);
      for (auto& v : s) v = standard_normal(rng);
      for (auto& v : t) v = 3.0 * standard_normal(rng) + 1.0;
      const auto out = match_histogram(s, t);

      auto so = out, st = t;
      std::sort(so.begin(), so.end());
      std::sort(st.begin(), st.end());
      CHECK(so == st);

      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (s[i] < s[j]) CHECK(out[i] <= out[j]);

      CHECK(match_histogram(out, t) == out);

      const auto m = 1 + uniform_index(rng, 30);
      std::vector<double> t2(m);
      for (auto& v : t2) v = standard_normal(rng);
      const auto [lo, hi] = std::minmax_element(t2.begin(), t2.end());
      for (double v : match_histogram(s, t2)) {
        CHECK(v >= *lo);
        CHECK(v <= *hi);
      }
    }
  }

  TEST_CASE("masked targets touch only in-mask positions and flag empty regions") {
    const ArchConfig arch = testing::micro_arch(8);
    ParamStore ps;
    Rng rng(3);
    declare_all(arch, ps, rng);
    const StyleEncoder se(arch, ps);
    const Tensor img = testing::random_tensor(rng, {2, 3, 8, 8});
    const Tensor ref = testing::random_tensor(rng, {2, 3, 8, 8});
    Tensor gm = testing::random_mask(rng, {2, 1, 8, 8}, 0.6);
    Tensor rm = testing::random_mask(rng, {2, 1, 8, 8}, 0.6);
    std::fill_n(rm.data() + 64, 64, 0.0);  // sample 1 has no reference support

    ag::NoGradGuard guard;
    const auto gf = extract_masked_features(ag::constant(img), gm, se);
    std::vector<Tensor> rf;
    for (const auto& f : extract_masked_features(ag::constant(ref), rm, se)) rf.push_back(f.value());
    const HistogramTargets t = histogram_targets(gf, gm, rf, rm);
    REQUIRE(t.targets.size() == gf.size());
    for (std::size_t l = 0; l < gf.size(); ++l) {
      CHECK(t.empty_region[l]);
      const Tensor& tg = t.targets[l];
      const std::int64_t C = tg.dim(1), S = tg.dim(2) * tg.dim(3);
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t p = 0; p < S; ++p) {
          if (t.masks[l][p] == 0.0) CHECK(tg[c * S + p] == 0.0);
          CHECK(t.masks[l][S + p] == 0.0);
          CHECK(tg[(C + c) * S + p] == 0.0);
        }
    }
  }

  TEST_CASE("region loss of an image against itself is zero") {
    const ArchConfig arch = testing::micro_arch(8);
    ParamStore ps;
    Rng rng(4);
    declare_all(arch, ps, rng);
    const StyleEncoder se(arch, ps);
    const Tensor img = testing::random_tensor(rng, {1, 3, 8, 8});
    const Tensor m = testing::random_mask(rng, {1, 1, 8, 8}, 0.7);
    const RegionLoss r = region_histogram_loss(ag::constant(img), img, m, m, se);
    CHECK(r.value.item() == 0.0);
  }
}

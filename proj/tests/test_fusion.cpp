#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/fusion.hpp"
#include "ocufuse/rng.hpp"

using namespace ocufuse;
using namespace ocufuse::fusion;

TEST_CASE("l2_normalize") {
  const auto unit345 = l2_normalize({3, 4});
  CHECK(unit345[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(unit345[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(l2_normalize({-2, 0}) == std::vector<double>{-1.0, 0.0});
  const std::vector<double> unit{0.6, 0.8};
  const auto twice = l2_normalize(l2_normalize(unit));
  CHECK(twice[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(twice[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(l2_normalize({0, 0, 0}), argument_error);
}

TEST_CASE("aggregate_embeddings") {
  CHECK(aggregate_embeddings({{1, 1}, {3, 3}}) == std::vector<double>{2, 2});
  CHECK(aggregate_embeddings({{1.5, -2.0}}) == std::vector<double>{1.5, -2.0});
  const std::vector<double> v{0.25, -1.0, 7.0};
  CHECK(aggregate_embeddings({v, v, v, v}) == v);
  CHECK_THROWS_AS(aggregate_embeddings({}), argument_error);
  CHECK_THROWS_AS(aggregate_embeddings({{1, 2}, {1, 2, 3}}), argument_error);
}

TEST_CASE("sf1_fuse") {
  CHECK(sf1_fuse(0.4, 0.8, {0.0, 1.0}) == 0.8);  // PIA endpoint
  CHECK(sf1_fuse(0.4, 0.8, {1.0, 0.0}) == 0.4);  // EMA endpoint
  CHECK(sf1_fuse(0.4, 0.8, {0.25, 0.75}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(sf1_fuse(0.4, 0.8, {0.6, 0.6}), argument_error);
  CHECK_THROWS_AS(sf1_fuse(0.4, 0.8, {-0.1, 1.1}), argument_error);

  SUBCASE("fused score stays within the modality interval") {
    SeededRng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const double s_g = rng.uniform(-1.0, 1.0);
      const double s_p = rng.uniform(-1.0, 1.0);
      const double w_g = rng.uniform01();
      const double fused = sf1_fuse(s_g, s_p, {w_g, 1.0 - w_g});
      CHECK(fused >= std::min(s_g, s_p) - 1e-12);
      CHECK(fused <= std::max(s_g, s_p) + 1e-12);
    }
  }
}

namespace {

std::vector<ScorePair> complementary_pairs() {
  // Gaze separates subjects {a, b}; periocular separates {c, d}. Neither
  // modality alone is clean, the 50/50 blend is.
  std::vector<ScorePair> pairs;
  auto add = [&](const std::string& p, const std::string& g, double sg, double sp) {
    pairs.push_back({p, g, sg, sp, p == g});
  };
  add("a", "a", 0.9, 0.5);
  add("b", "b", 0.8, 0.45);
  add("c", "c", 0.5, 0.9);
  add("d", "d", 0.45, 0.8);
  add("a", "b", 0.3, 0.42);
  add("a", "c", 0.2, 0.1);
  add("b", "a", 0.25, 0.45);
  add("b", "d", 0.1, 0.2);
  add("c", "d", 0.48, 0.3);
  add("c", "a", 0.1, 0.25);
  add("d", "c", 0.42, 0.2);
  add("d", "b", 0.2, 0.1);
  return pairs;
}

}  // namespace

TEST_CASE("sf1_weight_sweep") {
  const auto pairs = complementary_pairs();
  const auto rows = sf1_weight_sweep(pairs);
  REQUIRE(rows.size() == 11);

  evalkit::ScoreSet gaze_only, peri_only;
  for (const auto& p : pairs) {
    (p.genuine ? gaze_only.genuine : gaze_only.impostor).push_back(p.s_gaze);
    (p.genuine ? peri_only.genuine : peri_only.impostor).push_back(p.s_periocular);
  }
  const double gaze_eer = evalkit::eer(evalkit::roc_curve(gaze_only));
  const double peri_eer = evalkit::eer(evalkit::roc_curve(peri_only));
  CHECK(rows.front().w_g == 0.0);
  CHECK(rows.front().eer == doctest::Approx(peri_eer).epsilon(1e-15));
  CHECK(rows.back().w_g == 1.0);
  CHECK(rows.back().eer == doctest::Approx(gaze_eer).epsilon(1e-15));

  SUBCASE("complementary errors make an interior weight best") {
    double best_interior = 1.0;
    for (const auto& row : rows) {
      if (row.w_g > 0.0 && row.w_g < 1.0) best_interior = std::min(best_interior, row.eer);
    }
    CHECK(best_interior <= gaze_eer);
    CHECK(best_interior <= peri_eer);
  }
  SUBCASE("a single score class is a protocol error") {
    std::vector<ScorePair> genuine_only;
    genuine_only.push_back({"a", "a", 0.5, 0.5, true});
    CHECK_THROWS_AS(sf1_weight_sweep(genuine_only), protocol_error);
  }
  SUBCASE("non-divisor steps still cover both endpoints") {
    const auto coarse = sf1_weight_sweep(pairs, {2e-5}, 0.3);
    REQUIRE(coarse.size() == 5);  // 0, 0.3, 0.6, 0.9, 1
    CHECK(coarse.front().w_g == 0.0);
    CHECK(coarse.back().w_g == 1.0);
  }
}

TEST_CASE("rank_probe_weight") {
  CHECK(rank_probe_weight(1, 10, RankVariant::rank_opt) == 1.0);
  CHECK(rank_probe_weight(4, 10, RankVariant::rank_opt) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(rank_probe_weight(10, 10, RankVariant::rank_opt) ==
        doctest::Approx(0.1).epsilon(1e-15));  // w(|R|) = 1/|R|
  CHECK(rank_probe_weight(1, 7, RankVariant::rank1_opt) == 1.0);
  CHECK(rank_probe_weight(3, 7, RankVariant::rank1_opt) == 0.0);
  CHECK_THROWS_AS(rank_probe_weight(0, 10, RankVariant::rank_opt), argument_error);
  CHECK_THROWS_AS(rank_probe_weight(11, 10, RankVariant::rank_opt), argument_error);
}

namespace {

// Two probes, |R| = 4: matcher A ranks the mate first on both, matcher B at
// ranks 2 and 4.
std::pair<std::vector<metriclearn::Matrix>, std::vector<std::size_t>> worked_example() {
  metriclearn::Matrix a(2, 4), b(2, 4);
  // Probe 0's mate is gallery 0; probe 1's mate is gallery 1.
  a.data = {0.9, 0.1, 0.2, 0.3,   0.1, 0.9, 0.2, 0.3};
  b.data = {0.5, 0.9, 0.2, 0.1,   0.9, 0.1, 0.8, 0.7};
  return {{a, b}, {0, 1}};
}

}  // namespace

TEST_CASE("compute_matcher_weights") {
  SUBCASE("hand-evaluated two-matcher example") {
    const auto [sims, mates] = worked_example();
    const auto w = compute_matcher_weights(sims, mates, {RankVariant::rank_opt, 0.5});
    CHECK(w.raw[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w.raw[1] == doctest::Approx(0.5).epsilon(1e-15));  // (0.75 + 0.25)/2
    CHECK(w.normalized[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w.normalized[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // Affine rescale maps the extremes onto (1, w_opt).
    CHECK(w.rescaled[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.rescaled[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.final_weights[0] + w.final_weights[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(w.rescale_skipped);
  }
  SUBCASE("identical matchers get equal weights and skip the rescale") {
    const auto [sims, mates] = worked_example();
    const auto w = compute_matcher_weights({sims[0], sims[0]}, mates,
                                           {RankVariant::rank_opt, 0.5});
    CHECK(w.final_weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.final_weights[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.rescale_skipped);
  }
  SUBCASE("rank1-opt zeroes a matcher that never places the mate first") {
    const auto [sims, mates] = worked_example();
    const auto w = compute_matcher_weights(sims, mates, {RankVariant::rank1_opt, 0.5});
    CHECK(w.normalized[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w.normalized[1] == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("ties share average ranks") {
    metriclearn::Matrix m(1, 4);
    m.data = {0.5, 0.5, 0.5, 0.5};  // mate tied with everyone: rank (1+4)/2
    const auto w = compute_matcher_weights({m, m}, {0}, {RankVariant::rank_opt, 0.5});
    CHECK(w.raw[0] == doctest::Approx(1.0 - (2.5 - 1.0) / 4.0).epsilon(1e-12));
  }
  SUBCASE("argument validation") {
    const auto [sims, mates] = worked_example();
    CHECK_THROWS_AS(compute_matcher_weights({}, mates, {}), argument_error);
    CHECK_THROWS_AS(compute_matcher_weights(sims, {0}, {}), argument_error);
    CHECK_THROWS_AS(compute_matcher_weights(sims, mates, {RankVariant::rank_opt, 0.0}),
                    argument_error);
    CHECK_THROWS_AS(compute_matcher_weights(sims, {0, 9}, {}), argument_error);
  }
}

TEST_CASE("sf2_fuse applies sf1 pointwise") {
  const auto pairs = complementary_pairs();
  const FusionWeights w{0.5, 0.5};
  const auto fused = sf2_fuse(pairs, w);
  REQUIRE(fused.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(fused[i] == sf1_fuse(pairs[i].s_gaze, pairs[i].s_periocular, w));
    CHECK(fused[i] == doctest::Approx((pairs[i].s_gaze + pairs[i].s_periocular) / 2.0));
  }
  const auto gaze_only = sf2_fuse(pairs, {1.0, 0.0});
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(gaze_only[i] == pairs[i].s_gaze);
}

TEST_CASE("ef2_concat") {
  SUBCASE("fused cosine is the mean of per-modality cosines") {
    // Gaze pair orthogonal (cos 0), periocular pair identical (cos 1).
    const auto f1 = ef2_concat({1, 0}, {2, 2});
    const auto f2 = ef2_concat({0, 5}, {1, 1});
    CHECK(metriclearn::cosine_similarity(f1, f2) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("identical inputs give fused cosine 1") {
    const auto f1 = ef2_concat({1, 2, 3}, {4, 5});
    const auto f2 = ef2_concat({1, 2, 3}, {4, 5});
    CHECK(metriclearn::cosine_similarity(f1, f2) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("randomized identity against sf1 at weight one half") {
    SeededRng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> g1(5), g2(5), p1(8), p2(8);
      for (auto* v : {&g1, &g2}) {
        for (double& x : *v) x = rng.gaussian();
      }
      for (auto* v : {&p1, &p2}) {
        for (double& x : *v) x = rng.gaussian();
      }
      const double fused =
          metriclearn::cosine_similarity(ef2_concat(g1, p1), ef2_concat(g2, p2));
      const double blended = sf1_fuse(metriclearn::cosine_similarity(g1, g2),
                                      metriclearn::cosine_similarity(p1, p2), {0.5, 0.5});
      CHECK(std::fabs(fused - blended) < 1e-12);
    }
  }
  CHECK_THROWS_AS(ef2_concat({0, 0}, {1, 1}), argument_error);
}

TEST_CASE("ef1_apply") {
  SUBCASE("identity-padded weights return the normalized concatenation prefix") {
    metriclearn::LinearFusionModel model;
    model.weights = metriclearn::Matrix(2, 4);
    model.weights.at(0, 0) = 1.0;
    model.weights.at(1, 1) = 1.0;
    const auto out = ef1_apply(model, {3, 4}, {0, 2});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("zero model yields the zero vector and downstream cosine errors") {
    metriclearn::LinearFusionModel model;
    model.weights = metriclearn::Matrix(2, 4);
    const auto out = ef1_apply(model, {3, 4}, {0, 2});
    CHECK(out == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(metriclearn::cosine_similarity(out, {1.0, 0.0}), argument_error);
  }
  SUBCASE("dimension mismatch rejected") {
    metriclearn::LinearFusionModel model;
    model.weights = metriclearn::Matrix(2, 5);
    CHECK_THROWS_AS(ef1_apply(model, {3, 4}, {0, 2}), argument_error);
  }
  SUBCASE("standard dimensions map 128 + 256 onto out_dim") {
    metriclearn::LinearFusionModel model;
    model.weights = metriclearn::Matrix(32, 384);
    for (std::size_t i = 0; i < model.weights.data.size(); ++i) {
      model.weights.data[i] = static_cast<double>(i % 7) - 3.0;
    }
    std::vector<double> g(128, 1.0), p(256, -2.0);
    CHECK(ef1_apply(model, g, p).size() == 32);
  }
}

TEST_CASE("score pair CSV round trip") {
  const auto pairs = complementary_pairs();
  const auto path = std::filesystem::temp_directory_path() / "ocufuse_test_pairs.csv";
  save_score_pairs(pairs, path);
  const auto loaded = load_score_pairs(path);
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].probe_subject == pairs[i].probe_subject);
    CHECK(loaded[i].gallery_subject == pairs[i].gallery_subject);
    CHECK(loaded[i].s_gaze == pairs[i].s_gaze);
    CHECK(loaded[i].s_periocular == pairs[i].s_periocular);
    CHECK(loaded[i].genuine == pairs[i].genuine);
  }
  std::filesystem::remove(path);
}

#include <cmath>

#include "doctest.h"
#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/rng.hpp"
#include "ocufuse/synthgen.hpp"
#include "oracles.hpp"

using namespace ocufuse;
using namespace ocufuse::evalkit;

namespace {

ScoreSet random_scores(SeededRng& rng, std::size_t n_gen, std::size_t n_imp, double shift) {
  ScoreSet s;
  for (std::size_t i = 0; i < n_gen; ++i) {
    s.genuine.push_back(std::clamp(shift + 0.3 * rng.gaussian(), -1.0, 1.0));
  }
  for (std::size_t i = 0; i < n_imp; ++i) {
    s.impostor.push_back(std::clamp(0.3 * rng.gaussian(), -1.0, 1.0));
  }
  return s;
}

core::EmbeddingRecord rec(const std::string& subject, const std::string& session,
                          core::Modality m, std::size_t chunk, std::vector<double> v) {
  core::EmbeddingRecord r;
  r.subject = subject;
  r.session = session;
  r.modality = m;
  r.chunk = chunk;
  r.vector = std::move(v);
  return r;
}

}  // namespace

TEST_CASE("roc_curve structure and counting") {
  SUBCASE("perfect separation reaches FAR 0, FRR 0") {
    ScoreSet s;
    s.genuine = {0.9, 0.8};
    s.impostor = {0.1, 0.2};
    const auto curve = roc_curve(s);
    bool found = false;
    for (const auto& p : curve.points) {
      CHECK(p.far >= 0.0);
      CHECK(p.frr <= 1.0);
      if (p.far == 0.0 && p.frr == 0.0) found = true;
    }
    CHECK(found);
    CHECK(curve.points.front().far == 0.0);
    CHECK(curve.points.back().far == 1.0);
  }
  SUBCASE("monotonicity along decreasing thresholds") {
    SeededRng rng(1);
    const auto s = random_scores(rng, 50, 80, 0.4);
    const auto curve = roc_curve(s);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].threshold < curve.points[i - 1].threshold);
      CHECK(curve.points[i].far >= curve.points[i - 1].far);
      CHECK(curve.points[i].frr <= curve.points[i - 1].frr);
    }
  }
  SUBCASE("rates match direct counting, including tied scores") {
    SeededRng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      ScoreSet s;
      for (int i = 0; i < 30; ++i) {
        s.genuine.push_back(std::round(rng.uniform(-1, 1) * 10) / 10.0);
        s.impostor.push_back(std::round(rng.uniform(-1, 1) * 10) / 10.0);
      }
      const auto curve = roc_curve(s);
      for (const auto& p : curve.points) {
        if (std::isinf(p.threshold)) continue;
        std::size_t fa = 0, fr = 0;
        for (double x : s.impostor) {
          if (x >= p.threshold) ++fa;
        }
        for (double x : s.genuine) {
          if (x < p.threshold) ++fr;
        }
        CHECK(p.far == static_cast<double>(fa) / s.impostor.size());
        CHECK(p.frr == static_cast<double>(fr) / s.genuine.size());
      }
    }
  }
  SUBCASE("one genuine at 1, one impostor at -1") {
    ScoreSet s;
    s.genuine = {1.0};
    s.impostor = {-1.0};
    const auto curve = roc_curve(s);
    REQUIRE(curve.points.size() == 3);  // sentinel + two scores
    CHECK(curve.points[1].far == 0.0);
    CHECK(curve.points[1].frr == 0.0);
    CHECK(eer(curve) == 0.0);
  }
  SUBCASE("empty classes rejected") {
    ScoreSet s;
    s.genuine = {0.5};
    CHECK_THROWS_AS(roc_curve(s), argument_error);
  }
}

TEST_CASE("eer") {
  SUBCASE("perfectly separated scores give zero") {
    ScoreSet s;
    s.genuine = {0.9, 0.8};
    s.impostor = {0.1, 0.2};
    CHECK(eer(roc_curve(s)) == 0.0);
  }
  SUBCASE("three-vs-three crossing at exactly one third") {
    ScoreSet s;
    s.genuine = {0.8, 0.6, 0.4};
    s.impostor = {0.5, 0.3, 0.1};
    CHECK(eer(roc_curve(s)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("same-distribution classes sit near one half") {
    SeededRng rng(3);
    ScoreSet s;
    for (int i = 0; i < 1000; ++i) {
      s.genuine.push_back(rng.gaussian());
      s.impostor.push_back(rng.gaussian());
    }
    CHECK(std::fabs(eer(roc_curve(s)) - 0.5) < 0.05);
  }
  SUBCASE("matches the brute-force oracle on random sets") {
    SeededRng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n_gen = 5 + rng.below(60);
      const std::size_t n_imp = 5 + rng.below(60);
      const auto s = random_scores(rng, n_gen, n_imp, rng.uniform(0.0, 0.8));
      const double mine = eer(roc_curve(s));
      const double reference = oracles::brute_force_eer(s.genuine, s.impostor);
      CHECK(std::fabs(mine - reference) < 1e-9);
    }
  }
  SUBCASE("monotone stress: helpful scores never hurt") {
    SeededRng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      auto s = random_scores(rng, 30, 40, 0.3);
      const double base = eer(roc_curve(s));
      auto plus_genuine = s;
      plus_genuine.genuine.push_back(2.0);  // above every impostor
      CHECK(eer(roc_curve(plus_genuine)) <= base + 1e-12);
      auto plus_impostor = s;
      plus_impostor.impostor.push_back(2.0);  // above every genuine
      CHECK(eer(roc_curve(plus_impostor)) >= base - 1e-12);
    }
  }
}

TEST_CASE("frr_at_far") {
  SUBCASE("separated classes give zero at any target") {
    ScoreSet s;
    s.genuine = {0.9, 0.8};
    s.impostor = {0.1, 0.2};
    const auto curve = roc_curve(s);
    CHECK(frr_at_far(curve, 0.01).frr == 0.0);
    CHECK(frr_at_far(curve, 0.4).frr == 0.0);
    CHECK_FALSE(frr_at_far(curve, 0.4).unreachable);
  }
  SUBCASE("an unreachable target is flagged and reported as 1") {
    ScoreSet s;  // overlapping classes, no zero-FAR margin below genuine
    s.genuine = {0.3, 0.5};
    s.impostor = {0.4, 0.6};
    const auto curve = roc_curve(s);
    const auto res = frr_at_far(curve, 1e-6);
    CHECK(res.frr == 1.0);
    CHECK(res.unreachable);
    CHECK(res.low_resolution);  // 2 impostors cannot resolve 1e-6
  }
  SUBCASE("matches the exhaustive threshold scan") {
    SeededRng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = random_scores(rng, 10 + rng.below(50), 10 + rng.below(50),
                                   rng.uniform(0.0, 0.6));
      const auto curve = roc_curve(s);
      for (double target : {0.01, 0.05, 0.2, 0.5}) {
        const double mine = frr_at_far(curve, target).frr;
        const double reference = oracles::brute_force_frr_at_far(s.genuine, s.impostor, target);
        CHECK(mine == reference);
      }
    }
  }
  SUBCASE("non-increasing in the target") {
    SeededRng rng(7);
    const auto s = random_scores(rng, 200, 300, 0.4);
    const auto curve = roc_curve(s);
    double prev = 1.0;
    for (double target : {0.001, 0.01, 0.05, 0.1, 0.3, 0.6}) {
      const double frr = frr_at_far(curve, target).frr;
      CHECK(frr <= prev + 1e-12);
      prev = frr;
    }
  }
  SUBCASE("interpolated mode lies between the bracketing conservative values") {
    SeededRng rng(8);
    const auto s = random_scores(rng, 100, 150, 0.5);
    const auto curve = roc_curve(s);
    const double conservative = frr_at_far(curve, 0.05, FrrMode::conservative).frr;
    const double interpolated = frr_at_far(curve, 0.05, FrrMode::interpolated).frr;
    CHECK(interpolated <= conservative + 1e-12);
  }
  CHECK_THROWS_AS(frr_at_far(RocCurve{}, 0.0), argument_error);
}

TEST_CASE("fido_check") {
  auto report_with = [](double frr) {
    EvalReport r;
    FrrResult res;
    res.frr = frr;
    r.frr_at[2e-5] = res;
    return r;
  };
  SUBCASE("0.22% FRR at 20 seconds passes") {
    const auto result = fido_check(report_with(0.0022), 20.0);
    CHECK(result.pass);
  }
  SUBCASE("3.1% FRR fails on the rate") {
    const auto result = fido_check(report_with(0.031), 20.0);
    CHECK_FALSE(result.pass);
  }
  SUBCASE("31 seconds fails on the duration") {
    const auto result = fido_check(report_with(0.01), 31.0);
    CHECK_FALSE(result.pass);
  }
  SUBCASE("exactly 3% and 30 seconds passes") {
    CHECK(fido_check(report_with(0.03), 30.0).pass);
  }
  SUBCASE("missing target is an argument error") {
    EvalReport r;
    r.frr_at[0.01] = FrrResult{};
    CHECK_THROWS_AS(fido_check(r, 20.0), argument_error);
  }
}

TEST_CASE("build_trial_scores") {
  fusion::AggregationSpec spec{1, 1};

  SUBCASE("three fully covered subjects give 3 genuine and 6 impostor scores") {
    core::EmbeddingSet enroll, verify;
    SeededRng rng(9);
    for (const auto& s : {"a", "b", "c"}) {
      std::vector<double> v{rng.gaussian(), rng.gaussian(), rng.gaussian()};
      enroll.add(rec(s, "r0", core::Modality::gaze, 0, v));
      verify.add(rec(s, "r1", core::Modality::gaze, 0,
                     {v[0] + 0.1, v[1] - 0.1, v[2] + 0.05}));
    }
    const auto scores = build_trial_scores(enroll, verify, spec);
    CHECK(scores.genuine.size() == 3);
    CHECK(scores.impostor.size() == 6);
  }
  SUBCASE("identical enrollment and verification embeddings give genuine 1") {
    core::EmbeddingSet enroll, verify;
    enroll.add(rec("a", "r0", core::Modality::gaze, 0, {1, 2}));
    enroll.add(rec("b", "r0", core::Modality::gaze, 0, {-2, 1}));
    verify.add(rec("a", "r1", core::Modality::gaze, 0, {1, 2}));
    verify.add(rec("b", "r1", core::Modality::gaze, 0, {-2, 1}));
    const auto scores = build_trial_scores(enroll, verify, spec);
    for (double g : scores.genuine) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));
    for (double i : scores.impostor) CHECK(i < 1.0);
  }
  SUBCASE("centroids use the first n chunks") {
    core::EmbeddingSet enroll, verify;
    for (std::size_t c = 0; c < 6; ++c) {
      enroll.add(rec("a", "r0", core::Modality::gaze, c,
                     {static_cast<double>(c), 1.0}));
      enroll.add(rec("b", "r0", core::Modality::gaze, c, {1.0, -static_cast<double>(c) - 1.0}));
    }
    verify.add(rec("a", "r1", core::Modality::gaze, 0, {1.5, 1.0}));
    verify.add(rec("b", "r1", core::Modality::gaze, 0, {1.0, -2.0}));
    fusion::AggregationSpec four{4, 1};
    const auto scores = build_trial_scores(enroll, verify, four);
    // Enrollment centroid for a = mean of chunks 0..3 = (1.5, 1.0): a match.
    CHECK(scores.genuine[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("multiple verification sessions all become probes") {
    core::EmbeddingSet enroll, verify;
    for (const auto& s : {"a", "b"}) {
      enroll.add(rec(s, "r0", core::Modality::gaze, 0, {s[0] == 'a' ? 1.0 : -1.0, 0.5}));
      verify.add(rec(s, "r1", core::Modality::gaze, 0, {0.3, 0.8}));
      verify.add(rec(s, "r2", core::Modality::gaze, 0, {0.4, 0.7}));
    }
    const auto scores = build_trial_scores(enroll, verify, spec);
    CHECK(scores.genuine.size() == 4);
    CHECK(scores.impostor.size() == 4);
  }
  SUBCASE("subjects present on one side only are skipped") {
    core::EmbeddingSet enroll, verify;
    enroll.add(rec("a", "r0", core::Modality::gaze, 0, {1, 0}));
    enroll.add(rec("b", "r0", core::Modality::gaze, 0, {0, 1}));
    enroll.add(rec("lonely", "r0", core::Modality::gaze, 0, {1, 1}));
    verify.add(rec("a", "r1", core::Modality::gaze, 0, {1, 0.1}));
    verify.add(rec("b", "r1", core::Modality::gaze, 0, {0.1, 1}));
    const auto scores = build_trial_scores(enroll, verify, spec);
    CHECK(scores.genuine.size() == 2);
    CHECK(scores.impostor.size() == 2);
  }
  SUBCASE("empty overlap is a protocol error") {
    core::EmbeddingSet enroll, verify;
    enroll.add(rec("a", "r0", core::Modality::gaze, 0, {1, 0}));
    verify.add(rec("b", "r1", core::Modality::gaze, 0, {0, 1}));
    CHECK_THROWS_AS(build_trial_scores(enroll, verify, spec), protocol_error);
  }
}

namespace {

struct SynthPair {
  core::EmbeddingSet gaze_enroll, gaze_verify, peri_enroll, peri_verify;
};

SynthPair synth_protocol_data(std::uint64_t seed, double gaze_within, double peri_within) {
  synthgen::SynthEmbeddingConfig g;
  g.n_subjects = 30;
  g.rounds = 2;
  g.chunks_per_round = 2;
  g.dim = 12;
  g.within_spread = gaze_within;
  g.between_spread = 1.0;
  g.persistence = 0.95;
  g.seed = mix_seed(seed, 1);
  g.modality = core::Modality::gaze;
  auto p = g;
  p.dim = 20;
  p.within_spread = peri_within;
  p.seed = mix_seed(seed, 2);
  p.modality = core::Modality::periocular;

  const auto gaze = synthgen::gen_embeddings(g);
  const auto peri = synthgen::gen_embeddings(p);
  SynthPair out;
  for (const auto& r : gaze.records()) {
    if (r.session == "r00") out.gaze_enroll.add(r);
    else out.gaze_verify.add(r);
  }
  for (const auto& r : peri.records()) {
    if (r.session == "r00") out.peri_enroll.add(r);
    else out.peri_verify.add(r);
  }
  return out;
}

}  // namespace

TEST_CASE("evaluate_protocol") {
  const auto data = synth_protocol_data(77, 1.1, 0.4);
  ProtocolData sets{&data.gaze_enroll, &data.gaze_verify, &data.peri_enroll, &data.peri_verify};
  fusion::AggregationSpec spec{2, 2};

  SUBCASE("EMA equals SF1 at w_g = 1") {
    MethodSpec ema;
    ema.method = Method::ema;
    MethodSpec sf1;
    sf1.method = Method::sf1;
    sf1.weights = {1.0, 0.0};
    const auto a = evaluate_protocol(sets, ema, spec);
    const auto b = evaluate_protocol(sets, sf1, spec);
    CHECK(a.eer == doctest::Approx(b.eer).epsilon(1e-12));
  }
  SUBCASE("EF2 equals SF1 at one half to 1e-12") {
    MethodSpec ef2;
    ef2.method = Method::ef2;
    MethodSpec sf1;
    sf1.method = Method::sf1;
    sf1.weights = {0.5, 0.5};
    const auto a = evaluate_protocol(sets, ef2, spec);
    const auto b = evaluate_protocol(sets, sf1, spec);
    CHECK(std::fabs(a.eer - b.eer) < 1e-12);
  }
  SUBCASE("strong periocular beats weak gaze, fusion at least matches periocular") {
    MethodSpec ema;
    ema.method = Method::ema;
    MethodSpec pia;
    pia.method = Method::pia;
    MethodSpec ef2;
    ef2.method = Method::ef2;
    const auto r_ema = evaluate_protocol(sets, ema, spec);
    const auto r_pia = evaluate_protocol(sets, pia, spec);
    const auto r_ef2 = evaluate_protocol(sets, ef2, spec);
    CHECK(r_pia.eer < r_ema.eer);
    CHECK(r_ef2.eer <= r_pia.eer + 0.02);
  }
  SUBCASE("unimodal cells ignore the other modality entirely") {
    MethodSpec ema;
    ema.method = Method::ema;
    const auto base = evaluate_protocol(sets, ema, spec);
    const auto other = synth_protocol_data(12345, 0.2, 2.0);  // different everything
    ProtocolData swapped{&data.gaze_enroll, &data.gaze_verify, &other.peri_enroll,
                         &other.peri_verify};
    const auto again = evaluate_protocol(swapped, ema, spec);
    CHECK(base.eer == again.eer);
    ProtocolData gaze_only{&data.gaze_enroll, &data.gaze_verify, nullptr, nullptr};
    CHECK(evaluate_protocol(gaze_only, ema, spec).eer == base.eer);
  }
  SUBCASE("EF1 without a model is an argument error") {
    MethodSpec ef1;
    ef1.method = Method::ef1;
    CHECK_THROWS_AS(evaluate_protocol(sets, ef1, spec), argument_error);
  }
  SUBCASE("report carries counts and the requested FRR targets") {
    MethodSpec pia;
    pia.method = Method::pia;
    const auto report = evaluate_protocol(sets, pia, spec, {2e-5, 0.01});
    CHECK(report.n_genuine == 30);
    CHECK(report.n_impostor == 870);
    CHECK(report.frr_at.size() == 2);
    CHECK(report.frr_at.count(2e-5) == 1);
    CHECK(report.frr_at.at(2e-5).low_resolution);  // 870 impostors < 50,000
  }
}

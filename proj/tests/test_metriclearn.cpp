#include <cmath>

#include "doctest.h"
#include "ocufuse/error.hpp"
#include "ocufuse/metriclearn.hpp"
#include "ocufuse/rng.hpp"
#include "ocufuse/synthgen.hpp"
#include "oracles.hpp"

using namespace ocufuse;
using namespace ocufuse::metriclearn;

namespace {

std::vector<std::vector<double>> random_inputs(SeededRng& rng, std::size_t n, std::size_t dim) {
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& v : out) {
    for (double& x : v) x = rng.gaussian();
  }
  return out;
}

}  // namespace

TEST_CASE("cosine_similarity basics") {
  CHECK(cosine_similarity({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
  CHECK(cosine_similarity({2, -1}, {-2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), argument_error);
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), argument_error);
}

TEST_CASE("ms_mine_pairs") {
  const std::vector<int> labels{0, 0, 1, 1};

  SUBCASE("a huge epsilon keeps every pair") {
    SeededRng rng(2);
    const auto sims = similarity_matrix(random_inputs(rng, 4, 6));
    const auto masks = ms_mine_pairs(sims, labels, 100.0);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        if (k == i) continue;
        if (labels[i] == labels[k]) CHECK(masks.positive[i][k]);
        else CHECK(masks.negative[i][k]);
      }
    }
  }
  SUBCASE("negatives all below (min positive - eps) are dropped") {
    Matrix sim(4, 4);
    for (std::size_t i = 0; i < 4; ++i) sim.at(i, i) = 1.0;
    sim.at(0, 1) = sim.at(1, 0) = 0.9;   // the positive for anchor 0
    sim.at(0, 2) = sim.at(2, 0) = 0.1;   // far-away negatives
    sim.at(0, 3) = sim.at(3, 0) = 0.2;
    sim.at(1, 2) = sim.at(2, 1) = 0.0;
    sim.at(1, 3) = sim.at(3, 1) = 0.0;
    sim.at(2, 3) = sim.at(3, 2) = 0.5;
    const auto masks = ms_mine_pairs(sim, labels, 0.1);
    CHECK_FALSE(masks.negative[0][2]);
    CHECK_FALSE(masks.negative[0][3]);
  }
  SUBCASE("masks match an exhaustive check of both inequalities") {
    SeededRng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
      const std::vector<int> batch_labels{0, 0, 1, 1, 2, 2};
      const auto sims = similarity_matrix(random_inputs(rng, 6, 5));
      const double eps = rng.uniform(0.0, 0.5);
      const auto masks = ms_mine_pairs(sims, batch_labels, eps);
      for (std::size_t i = 0; i < 6; ++i) {
        double min_pos = 2.0, max_neg = -2.0;
        for (std::size_t k = 0; k < 6; ++k) {
          if (k == i) continue;
          if (batch_labels[k] == batch_labels[i]) min_pos = std::min(min_pos, sims.at(i, k));
          else max_neg = std::max(max_neg, sims.at(i, k));
        }
        for (std::size_t k = 0; k < 6; ++k) {
          if (k == i) continue;
          if (batch_labels[k] == batch_labels[i]) {
            CHECK(masks.positive[i][k] == (sims.at(i, k) < max_neg + eps));
          } else {
            CHECK(masks.negative[i][k] == (sims.at(i, k) > min_pos - eps));
          }
        }
      }
    }
  }
}

TEST_CASE("ms_loss") {
  const MsLossConfig cfg;

  SUBCASE("no mined pairs means zero loss") {
    Matrix sim(3, 3);
    PairMasks masks;
    masks.positive.assign(3, std::vector<bool>(3, false));
    masks.negative.assign(3, std::vector<bool>(3, false));
    CHECK(ms_loss(sim, {0, 1, 2}, cfg, masks) == 0.0);
  }
  SUBCASE("single positive at S = lambda contributes ln(2)/alpha per anchor") {
    Matrix sim(2, 2);
    sim.at(0, 0) = sim.at(1, 1) = 1.0;
    sim.at(0, 1) = sim.at(1, 0) = 0.5;  // = lambda
    PairMasks masks;
    masks.positive.assign(2, std::vector<bool>(2, false));
    masks.negative.assign(2, std::vector<bool>(2, false));
    masks.positive[0][1] = true;  // one anchor, one positive, no negatives
    const double per_anchor = std::log(2.0) / cfg.alpha;  // = ln(2)/2 at alpha 2
    CHECK(ms_loss(sim, {0, 0}, cfg, masks) * 2.0 == doctest::Approx(per_anchor).epsilon(1e-12));
  }
  SUBCASE("matches the term-by-term reference on random batches") {
    SeededRng rng(123);
    for (int trial = 0; trial < 30; ++trial) {
      const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2};
      const auto sims = similarity_matrix(random_inputs(rng, 8, 7));
      const auto masks = ms_mine_pairs(sims, labels, cfg.epsilon);
      const double mine = ms_loss(sims, labels, cfg, masks);
      const double reference =
          oracles::reference_ms_loss(sims, cfg.alpha, cfg.beta, cfg.lambda, masks);
      CHECK(mine == doctest::Approx(reference).epsilon(1e-12));
      CHECK(mine >= 0.0);
    }
  }
  SUBCASE("permutation equivariance") {
    SeededRng rng(55);
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const auto inputs = random_inputs(rng, 6, 5);
    const auto sims = similarity_matrix(inputs);
    const auto masks = ms_mine_pairs(sims, labels, 0.1);
    const double base = ms_loss(sims, labels, MsLossConfig{}, masks);

    const std::vector<std::size_t> perm{3, 1, 5, 0, 4, 2};
    std::vector<std::vector<double>> pinputs;
    std::vector<int> plabels;
    for (std::size_t idx : perm) {
      pinputs.push_back(inputs[idx]);
      plabels.push_back(labels[idx]);
    }
    const auto psims = similarity_matrix(pinputs);
    const auto pmasks = ms_mine_pairs(psims, plabels, 0.1);
    CHECK(ms_loss(psims, plabels, MsLossConfig{}, pmasks) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("ms_loss_and_gradient") {
  SUBCASE("all-pairs-empty batch has zero gradient") {
    SeededRng rng(9);
    const auto inputs = random_inputs(rng, 4, 5);
    const std::vector<int> labels{0, 1, 2, 3};  // no positives anywhere
    MsLossConfig cfg;
    cfg.use_miner = true;
    const auto model = init_linear_model(3, 5, 1);
    const auto lg = ms_loss_and_gradient(inputs, labels, model, cfg);
    CHECK(lg.loss == 0.0);
    for (double g : lg.grad.data) CHECK(g == 0.0);
  }
  SUBCASE("matches central finite differences") {
    SeededRng rng(31);
    MsLossConfig cfg;  // miner on
    for (int trial = 0; trial < 10; ++trial) {
      const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
      const auto inputs = random_inputs(rng, 8, 6);
      auto model = init_linear_model(4, 6, rng.next_u64());
      const auto lg = ms_loss_and_gradient(inputs, labels, model, cfg);

      auto embed = [&](const std::vector<double>& w) {
        std::vector<std::vector<double>> z(8, std::vector<double>(4));
        for (std::size_t i = 0; i < 8; ++i) {
          for (std::size_t r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < 6; ++c) acc += w[r * 6 + c] * inputs[i][c];
            z[i][r] = acc;
          }
        }
        return z;
      };
      // Masks frozen at the expansion point keep the objective smooth.
      const auto masks = ms_mine_pairs(similarity_matrix(embed(model.weights.data)), labels,
                                       cfg.epsilon);
      auto loss_of = [&](const std::vector<double>& w) {
        return ms_loss(similarity_matrix(embed(w)), labels, cfg, masks);
      };
      const auto fd = oracles::central_differences(model.weights.data, loss_of, 1e-5);
      double max_rel = 0.0;
      for (std::size_t i = 0; i < fd.size(); ++i) {
        const double denom = std::max({std::fabs(fd[i]), std::fabs(lg.grad.data[i]), 1e-8});
        max_rel = std::max(max_rel, std::fabs(fd[i] - lg.grad.data[i]) / denom);
      }
      CHECK(max_rel < 1e-4);
    }
  }
  SUBCASE("doubling the inputs leaves the gradient unchanged") {
    SeededRng rng(41);
    const std::vector<int> labels{0, 0, 1, 1};
    const auto inputs = random_inputs(rng, 4, 5);
    std::vector<std::vector<double>> doubled = inputs;
    for (auto& v : doubled) {
      for (double& x : v) x *= 2.0;
    }
    const auto model = init_linear_model(3, 5, 4);
    const auto a = ms_loss_and_gradient(inputs, labels, model, MsLossConfig{});
    const auto b = ms_loss_and_gradient(doubled, labels, model, MsLossConfig{});
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t i = 0; i < a.grad.data.size(); ++i) {
      CHECK(a.grad.data[i] == doctest::Approx(b.grad.data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState state(3);
    std::vector<double> params{1.0, -2.0, 3.0};
    adam_step(state, params, {0.0, 0.0, 0.0}, 0.1);
    CHECK(params == std::vector<double>{1.0, -2.0, 3.0});
  }
  SUBCASE("first step follows the hand-evaluated recurrence") {
    AdamState state(2);
    std::vector<double> params{1.0, 1.0};
    const std::vector<double> grads{0.5, -3.0};
    adam_step(state, params, grads, 0.01);
    for (std::size_t i = 0; i < 2; ++i) {
      // t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
      const double expected = 1.0 - 0.01 * grads[i] / (std::fabs(grads[i]) + 1e-8);
      CHECK(params[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(state.step_count == 1);
  }
  SUBCASE("constant gradient decreases the parameter monotonically") {
    AdamState state(1);
    std::vector<double> params{5.0};
    double prev = params[0];
    for (int i = 0; i < 50; ++i) {
      adam_step(state, params, {2.0}, 0.05);
      CHECK(params[0] < prev);
      prev = params[0];
    }
  }
  SUBCASE("shape mismatch is rejected") {
    AdamState state(2);
    std::vector<double> params{1.0, 2.0};
    CHECK_THROWS_AS(adam_step(state, params, {1.0}, 0.1), argument_error);
  }
}

TEST_CASE("one_cycle_lr") {
  const OneCycleSchedule s;
  CHECK(one_cycle_lr(s, 0) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(one_cycle_lr(s, 30) == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(one_cycle_lr(s, 100) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(one_cycle_lr(s, 15) == doctest::Approx(5.05e-3).epsilon(1e-12));  // cosine midpoint
  // Continuity at the warmup boundary: the decay branch at phase 0 also
  // evaluates to the peak.
  CHECK(one_cycle_lr(s, 31) < 1e-2);
  CHECK(one_cycle_lr(s, 31) > 0.99e-2);
  CHECK_THROWS_AS(one_cycle_lr(s, -1), argument_error);
  CHECK_THROWS_AS(one_cycle_lr(s, 101), argument_error);
}

TEST_CASE("make_minibatches") {
  MiniBatchSpec spec;  // 16 x 16

  SUBCASE("exact fit covers every sample exactly once") {
    std::vector<int> labels;
    for (int c = 0; c < 16; ++c) {
      for (int i = 0; i < 16; ++i) labels.push_back(c);
    }
    const auto batches = make_minibatches(labels, spec, 42, 0);
    REQUIRE(batches.size() == 1);
    REQUIRE(batches[0].size() == 256);
    std::vector<int> seen(256, 0);
    for (std::size_t idx : batches[0]) ++seen[idx];
    for (int count : seen) CHECK(count == 1);
  }
  SUBCASE("32 classes of 16 samples give 2 batches per epoch") {
    std::vector<int> labels;
    for (int c = 0; c < 32; ++c) {
      for (int i = 0; i < 16; ++i) labels.push_back(c);
    }
    CHECK(make_minibatches(labels, spec, 42, 0).size() == 2);
  }
  SUBCASE("deterministic per (seed, epoch)") {
    std::vector<int> labels;
    for (int c = 0; c < 20; ++c) {
      for (int i = 0; i < 10; ++i) labels.push_back(c);
    }
    CHECK(make_minibatches(labels, spec, 7, 3) == make_minibatches(labels, spec, 7, 3));
    CHECK(make_minibatches(labels, spec, 7, 3) != make_minibatches(labels, spec, 7, 4));
    CHECK(make_minibatches(labels, spec, 7, 3) != make_minibatches(labels, spec, 8, 3));
  }
  SUBCASE("small classes sample with replacement") {
    std::vector<int> labels;
    for (int c = 0; c < 16; ++c) {
      for (int i = 0; i < 3; ++i) labels.push_back(c);  // 3 < 16 per class
    }
    const auto batches = make_minibatches(labels, spec, 1, 0);
    REQUIRE_FALSE(batches.empty());
    CHECK(batches[0].size() == 256);
  }
  SUBCASE("too few classes rejected") {
    std::vector<int> labels(100, 0);
    CHECK_THROWS_AS(make_minibatches(labels, spec, 0, 0), argument_error);
  }
}

TEST_CASE("train_toy_encoder") {
  // 20 well-separated classes of flattened-window-like vectors.
  SeededRng rng(20);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  const std::size_t dim = 24;
  for (int c = 0; c < 20; ++c) {
    std::vector<double> center(dim);
    for (double& x : center) x = rng.gaussian() * 2.0;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> v(dim);
      for (std::size_t d = 0; d < dim; ++d) v[d] = center[d] + 0.3 * rng.gaussian();
      inputs.push_back(std::move(v));
      labels.push_back(c);
    }
  }

  ToyEncoderConfig cfg;
  cfg.embed_dim = 8;
  cfg.schedule.total_epochs = 12;
  cfg.schedule.warm_epochs = 4;
  cfg.seed = 42;

  const auto result = train_toy_encoder(inputs, labels, cfg);
  REQUIRE(result.epoch_mean_loss.size() == 12);
  CHECK(result.epoch_mean_loss.back() < result.epoch_mean_loss.front());

  // The recorded learning rates are exactly the schedule.
  for (int e = 0; e < 12; ++e) {
    CHECK(result.epoch_lr[static_cast<std::size_t>(e)] ==
          doctest::Approx(one_cycle_lr(cfg.schedule, e)).epsilon(1e-15));
  }

  SUBCASE("zero-variance inputs are a statistics error") {
    std::vector<std::vector<double>> flat(40, std::vector<double>(dim, 1.5));
    std::vector<int> flat_labels;
    for (int c = 0; c < 20; ++c) {
      flat_labels.push_back(c);
      flat_labels.push_back(c);
    }
    CHECK_THROWS_AS(train_toy_encoder(flat, flat_labels, cfg), statistics_error);
  }
}

TEST_CASE("train_ef1") {
  // Small separable synthetic pair of modalities.
  synthgen::SynthEmbeddingConfig gcfg;
  gcfg.n_subjects = 24;
  gcfg.rounds = 3;
  gcfg.chunks_per_round = 1;
  gcfg.dim = 16;
  gcfg.within_spread = 0.8;
  gcfg.between_spread = 1.0;
  gcfg.persistence = 0.95;
  gcfg.seed = 1001;
  gcfg.modality = core::Modality::gaze;
  auto pcfg = gcfg;
  pcfg.dim = 24;
  pcfg.within_spread = 0.35;
  pcfg.seed = 1002;
  pcfg.modality = core::Modality::periocular;

  const auto gaze = synthgen::gen_embeddings(gcfg);
  const auto peri = synthgen::gen_embeddings(pcfg);
  const auto split = core::split_subjects(gaze.subjects(), 42);

  Ef1TrainConfig cfg;
  cfg.out_dim = 16;
  cfg.max_epochs = 60;
  cfg.validate_every = 20;
  cfg.seed = 42;

  SUBCASE("bit-identical across runs with one seed") {
    const auto a = train_ef1(gaze, peri, split.part_a, split.part_b, cfg);
    const auto b = train_ef1(gaze, peri, split.part_a, split.part_b, cfg);
    REQUIRE(a.model.weights.data.size() == b.model.weights.data.size());
    for (std::size_t i = 0; i < a.model.weights.data.size(); ++i) {
      CHECK(a.model.weights.data[i] == b.model.weights.data[i]);
    }
    CHECK(a.best_epoch == b.best_epoch);
  }
  SUBCASE("non-standard output dimensions are accepted and flagged") {
    Ef1TrainConfig odd = cfg;
    odd.out_dim = 48;
    const auto result = train_ef1(gaze, peri, split.part_a, split.part_b, odd);
    CHECK(result.model.out_dim() == 48);
    CHECK_FALSE(result.paper_conformant_out_dim);
  }
  SUBCASE("overlapping subject halves are a protocol error") {
    auto bad = split.part_b;
    bad.insert(*split.part_a.begin());
    CHECK_THROWS_AS(train_ef1(gaze, peri, split.part_a, bad, cfg), protocol_error);
  }
  SUBCASE("missing modality coverage is a data error") {
    core::EmbeddingSet peri_missing;
    for (const auto& rec : peri.records()) {
      if (rec.subject != *split.part_a.begin()) peri_missing.add(rec);
    }
    CHECK_THROWS_AS(train_ef1(gaze, peri_missing, split.part_a, split.part_b, cfg), data_error);
  }
  SUBCASE("training log records validation at the configured cadence") {
    const auto result = train_ef1(gaze, peri, split.part_a, split.part_b, cfg);
    REQUIRE(result.log.size() == 60);
    for (const auto& entry : result.log) {
      const bool validated = entry.epoch % 20 == 0 || entry.epoch == 60;
      CHECK(std::isnan(entry.val_frr) != validated);
    }
    CHECK(result.best_epoch % 20 == 0);
  }
  SUBCASE("standard 256-dim output on separable data fuses at least as well as either modality") {
    // Unreliable trailing dims make the fusion task non-trivial for cosine
    // scoring while staying learnable for the linear model.
    auto g2 = gcfg;
    g2.noisy_dim_fraction = 0.5;
    g2.noisy_dim_multiplier = 4.0;
    g2.within_spread = 0.5;
    auto p2 = pcfg;
    p2.noisy_dim_fraction = 0.5;
    p2.noisy_dim_multiplier = 4.0;
    p2.within_spread = 0.4;
    const auto gaze2 = synthgen::gen_embeddings(g2);
    const auto peri2 = synthgen::gen_embeddings(p2);

    Ef1TrainConfig big = cfg;
    big.out_dim = 256;
    big.max_epochs = 120;
    big.validate_every = 30;
    const auto result = train_ef1(gaze2, peri2, split.part_a, split.part_b, big);
    CHECK(result.model.out_dim() == 256);
    CHECK(result.paper_conformant_out_dim);

    auto unimodal_eer = [&](const core::EmbeddingSet& set) {
      core::EmbeddingSet enroll, verify;
      for (const auto& r : set.records()) {
        if (split.part_b.count(r.subject) == 0) continue;
        if (r.session == "r00") enroll.add(r);
        else verify.add(r);
      }
      return evalkit::eer(evalkit::roc_curve(evalkit::build_trial_scores(enroll, verify, {1, 1})));
    };
    core::EmbeddingSet fe, fv;
    {
      core::EmbeddingSet ge, gv, pe, pv;
      for (const auto& r : gaze2.records()) {
        if (split.part_b.count(r.subject) == 0) continue;
        (r.session == "r00" ? ge : gv).add(r);
      }
      for (const auto& r : peri2.records()) {
        if (split.part_b.count(r.subject) == 0) continue;
        (r.session == "r00" ? pe : pv).add(r);
      }
      fe = evalkit::fuse_embedding_sets(ge, pe, {1, 1}, &result.model);
      fv = evalkit::fuse_embedding_sets(gv, pv, {1, 1}, &result.model);
    }
    const double fused =
        evalkit::eer(evalkit::roc_curve(evalkit::build_trial_scores(fe, fv, {1, 1})));
    const double best_unimodal = std::min(unimodal_eer(gaze2),
                                          unimodal_eer(peri2));
    CHECK(fused <= best_unimodal + 1e-12);
  }
}

#include "ocufuse/metriclearn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/fusion.hpp"
#include "ocufuse/logging.hpp"
#include "ocufuse/rng.hpp"

namespace ocufuse::metriclearn {

namespace {

double dot(const std::vector<double>& u, const std::vector<double>& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

}  // namespace

LinearFusionModel init_linear_model(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed) {
  if (out_dim == 0 || in_dim == 0) throw argument_error("model dimensions must be positive");
  LinearFusionModel model;
  model.seed = seed;
  model.weights = Matrix(out_dim, in_dim);
  SeededRng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& w : model.weights.data) w = rng.uniform(-bound, bound);
  return model;
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw argument_error("cosine_similarity: length mismatch");
  if (u.empty()) throw argument_error("cosine_similarity: empty vectors");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw argument_error("cosine_similarity: zero vector");
  return dot(u, v) / (nu * nv);
}

Matrix similarity_matrix(const std::vector<std::vector<double>>& vectors) {
  const std::size_t n = vectors.size();
  std::vector<std::vector<double>> unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = norm(vectors[i]);
    if (r == 0.0) throw argument_error("similarity_matrix: zero vector at index " + std::to_string(i));
    unit[i] = vectors[i];
    for (double& x : unit[i]) x /= r;
  }
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    sim.at(i, i) = 1.0;
    for (std::size_t k = i + 1; k < n; ++k) {
      const double s = dot(unit[i], unit[k]);
      sim.at(i, k) = s;
      sim.at(k, i) = s;
    }
  }
  return sim;
}

PairMasks ms_mine_pairs(const Matrix& sim, const std::vector<int>& labels, double epsilon) {
  if (sim.rows != sim.cols) throw argument_error("ms_mine_pairs: similarity matrix not square");
  if (labels.size() != sim.rows) throw argument_error("ms_mine_pairs: labels misaligned");
  const std::size_t n = sim.rows;

  PairMasks masks;
  masks.positive.assign(n, std::vector<bool>(n, false));
  masks.negative.assign(n, std::vector<bool>(n, false));

  for (std::size_t i = 0; i < n; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false;
    bool has_neg = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (labels[k] == labels[i]) {
        has_pos = true;
        min_pos = std::min(min_pos, sim.at(i, k));
      } else {
        has_neg = true;
        max_neg = std::max(max_neg, sim.at(i, k));
      }
    }
    if (!has_pos || !has_neg) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (labels[k] == labels[i]) {
        if (sim.at(i, k) < max_neg + epsilon) masks.positive[i][k] = true;
      } else {
        if (sim.at(i, k) > min_pos - epsilon) masks.negative[i][k] = true;
      }
    }
  }
  return masks;
}

PairMasks all_pairs(const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  PairMasks masks;
  masks.positive.assign(n, std::vector<bool>(n, false));
  masks.negative.assign(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (labels[k] == labels[i]) masks.positive[i][k] = true;
      else masks.negative[i][k] = true;
    }
  }
  return masks;
}

double ms_loss(const Matrix& sim, const std::vector<int>& labels, const MsLossConfig& cfg,
               const PairMasks& masks) {
  const std::size_t n = sim.rows;
  if (labels.size() != n || masks.positive.size() != n || masks.negative.size() != n) {
    throw argument_error("ms_loss: inconsistent batch shapes");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum_pos = 0.0;
    double sum_neg = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (masks.positive[i][k]) sum_pos += std::exp(-cfg.alpha * (sim.at(i, k) - cfg.lambda));
      if (masks.negative[i][k]) sum_neg += std::exp(cfg.beta * (sim.at(i, k) - cfg.lambda));
    }
    total += std::log1p(sum_pos) / cfg.alpha + std::log1p(sum_neg) / cfg.beta;
  }
  return total / static_cast<double>(n);
}

LossAndGradient ms_loss_and_gradient(const std::vector<std::vector<double>>& inputs,
                                     const std::vector<int>& labels,
                                     const LinearFusionModel& model, const MsLossConfig& cfg) {
  const std::size_t n = inputs.size();
  if (labels.size() != n) throw argument_error("ms_loss_and_gradient: labels misaligned");
  if (n == 0) throw argument_error("ms_loss_and_gradient: empty batch");
  const std::size_t in_dim = model.in_dim();
  const std::size_t out_dim = model.out_dim();
  for (const auto& x : inputs) {
    if (x.size() != in_dim) throw argument_error("ms_loss_and_gradient: input dim mismatch");
  }

  // Forward: z_i = W x_i, unit outputs, cosine matrix.
  std::vector<std::vector<double>> z(n, std::vector<double>(out_dim, 0.0));
  std::vector<double> radius(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < out_dim; ++r) {
      double acc = 0.0;
      const double* wrow = &model.weights.data[r * in_dim];
      const double* x = inputs[i].data();
      for (std::size_t c = 0; c < in_dim; ++c) acc += wrow[c] * x[c];
      z[i][r] = acc;
    }
    radius[i] = norm(z[i]);
    if (radius[i] == 0.0) {
      throw statistics_error("degenerate model: zero embedding for batch item " + std::to_string(i));
    }
    for (double& v : z[i]) v /= radius[i];  // z now holds unit embeddings
  }
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    sim.at(i, i) = 1.0;
    for (std::size_t k = i + 1; k < n; ++k) {
      const double s = dot(z[i], z[k]);
      sim.at(i, k) = s;
      sim.at(k, i) = s;
    }
  }

  const PairMasks masks =
      cfg.use_miner ? ms_mine_pairs(sim, labels, cfg.epsilon) : all_pairs(labels);

  // Loss and dL/dS in one pass; the exp terms are shared between both.
  Matrix grad_sim(n, n);
  double total = 0.0;
  std::vector<double> exp_pos(n), exp_neg(n);
  const double inv_m = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_pos = 0.0;
    double sum_neg = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      exp_pos[k] = 0.0;
      exp_neg[k] = 0.0;
      if (masks.positive[i][k]) {
        exp_pos[k] = std::exp(-cfg.alpha * (sim.at(i, k) - cfg.lambda));
        sum_pos += exp_pos[k];
      } else if (masks.negative[i][k]) {
        exp_neg[k] = std::exp(cfg.beta * (sim.at(i, k) - cfg.lambda));
        sum_neg += exp_neg[k];
      }
    }
    total += std::log1p(sum_pos) / cfg.alpha + std::log1p(sum_neg) / cfg.beta;
    const double pos_scale = inv_m / (1.0 + sum_pos);
    const double neg_scale = inv_m / (1.0 + sum_neg);
    for (std::size_t k = 0; k < n; ++k) {
      if (exp_pos[k] != 0.0) grad_sim.at(i, k) = -exp_pos[k] * pos_scale;
      else if (exp_neg[k] != 0.0) grad_sim.at(i, k) = exp_neg[k] * neg_scale;
    }
  }

  // Backprop through the cosine: with unit embeddings u_i = z_i / r_i,
  // dL/du_i = sum_k (G_ik + G_ki) u_k, then project out the radial part.
  LossAndGradient out;
  out.loss = total * inv_m;
  out.grad = Matrix(out_dim, in_dim);
  std::vector<double> acc(out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = grad_sim.at(i, k) + grad_sim.at(k, i);
      if (g == 0.0) continue;
      any = true;
      for (std::size_t r = 0; r < out_dim; ++r) acc[r] += g * z[k][r];
    }
    if (!any) continue;
    const double radial = dot(acc, z[i]);
    const double inv_r = 1.0 / radius[i];
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double dz = (acc[r] - radial * z[i][r]) * inv_r;
      if (dz == 0.0) continue;
      double* grow = &out.grad.data[r * in_dim];
      const double* x = inputs[i].data();
      for (std::size_t c = 0; c < in_dim; ++c) grow[c] += dz * x[c];
    }
  }
  return out;
}

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw argument_error("adam_step: shape mismatch");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grads[i];
    state.second_moment[i] =
        state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.first_moment[i] / bc1;
    const double v_hat = state.second_moment[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
  }
}

double one_cycle_lr(const OneCycleSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.total_epochs) {
    throw argument_error("one_cycle_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                         std::to_string(s.total_epochs) + "]");
  }
  if (!(s.lr_min <= s.lr_start && s.lr_start <= s.lr_peak) || s.warm_epochs >= s.total_epochs ||
      s.warm_epochs <= 0) {
    throw argument_error("one_cycle_lr: invalid schedule");
  }
  // The anchor epochs return their configured rates exactly.
  if (epoch == 0) return s.lr_start;
  if (epoch == s.warm_epochs) return s.lr_peak;
  if (epoch == s.total_epochs) return s.lr_min;
  constexpr double pi = 3.141592653589793238462643383279502884;
  if (epoch <= s.warm_epochs) {
    const double phase = static_cast<double>(epoch) / s.warm_epochs;
    return s.lr_peak + (s.lr_start - s.lr_peak) * (1.0 + std::cos(pi * phase)) / 2.0;
  }
  const double phase =
      static_cast<double>(epoch - s.warm_epochs) / (s.total_epochs - s.warm_epochs);
  return s.lr_min + (s.lr_peak - s.lr_min) * (1.0 + std::cos(pi * phase)) / 2.0;
}

std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<int>& labels,
                                                       const MiniBatchSpec& spec,
                                                       std::uint64_t seed,
                                                       std::size_t epoch_index) {
  if (spec.classes_per_batch == 0 || spec.samples_per_class == 0) {
    throw argument_error("make_minibatches: batch spec must be positive");
  }
  std::vector<int> classes;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, idxs] : by_class) classes.push_back(label);
  if (classes.size() < spec.classes_per_batch) {
    throw argument_error("make_minibatches: need at least " +
                         std::to_string(spec.classes_per_batch) + " classes, got " +
                         std::to_string(classes.size()));
  }

  const std::size_t m = spec.batch_size();
  const std::size_t n_batches = (labels.size() + m - 1) / m;
  SeededRng rng(mix_seed(seed, epoch_index));

  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(n_batches);
  std::vector<int> order = classes;
  for (std::size_t b = 0; b < n_batches; ++b) {
    rng.shuffle(order);
    std::vector<std::size_t> batch;
    batch.reserve(m);
    for (std::size_t c = 0; c < spec.classes_per_batch; ++c) {
      const auto& pool = by_class.at(order[c]);
      if (pool.size() >= spec.samples_per_class) {
        std::vector<std::size_t> picks = pool;
        rng.shuffle(picks);
        batch.insert(batch.end(), picks.begin(),
                     picks.begin() + static_cast<std::ptrdiff_t>(spec.samples_per_class));
      } else {
        // Too few distinct examples: sample with replacement.
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
          batch.push_back(pool[rng.below(pool.size())]);
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

struct FusedSample {
  std::string subject;
  std::string session;
  std::vector<double> input;  // normalized gaze ++ normalized periocular
};

// Normalized-concatenated inputs per (subject, session), sorted by subject
// then session. Every requested subject must have at least one session with
// both modalities present.
std::vector<FusedSample> build_fused_samples(const core::EmbeddingSet& gaze,
                                             const core::EmbeddingSet& peri,
                                             const std::set<std::string>& subjects,
                                             std::size_t gaze_chunks, std::size_t peri_images,
                                             std::size_t max_sessions) {
  const auto gaze_cents = evalkit::session_centroids(gaze, core::Modality::gaze, gaze_chunks);
  const auto peri_cents =
      evalkit::session_centroids(peri, core::Modality::periocular, peri_images);

  std::vector<FusedSample> samples;
  for (const auto& subject : subjects) {
    std::vector<std::string> sessions;
    for (const auto& [key, cent] : gaze_cents) {
      if (key.first == subject && peri_cents.count({subject, key.second}) > 0) {
        sessions.push_back(key.second);
      }
    }
    if (sessions.empty()) {
      throw data_error("subject " + subject + " lacks embeddings in one or both modalities");
    }
    std::sort(sessions.begin(), sessions.end());
    if (max_sessions > 0 && sessions.size() > max_sessions) sessions.resize(max_sessions);
    for (const auto& session : sessions) {
      FusedSample s;
      s.subject = subject;
      s.session = session;
      const auto g = fusion::l2_normalize(gaze_cents.at({subject, session}));
      const auto p = fusion::l2_normalize(peri_cents.at({subject, session}));
      s.input = g;
      s.input.insert(s.input.end(), p.begin(), p.end());
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

// FRR at the target FAR plus EER for fused embeddings of the validation
// subjects: first session enrolls, remaining sessions probe.
std::pair<double, double> validate_ef1(const LinearFusionModel& model,
                                       const std::vector<FusedSample>& val_samples,
                                       double eval_far) {
  std::map<std::string, std::vector<double>> enroll;
  std::vector<std::pair<std::string, std::vector<double>>> probes;
  std::string current;
  for (const auto& s : val_samples) {  // sorted subject/session order
    std::vector<double> fused(model.out_dim(), 0.0);
    for (std::size_t r = 0; r < model.out_dim(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < model.in_dim(); ++c) {
        acc += model.weights.at(r, c) * s.input[c];
      }
      fused[r] = acc;
    }
    if (s.subject != current) {
      current = s.subject;
      enroll[s.subject] = std::move(fused);
    } else {
      probes.emplace_back(s.subject, std::move(fused));
    }
  }
  if (probes.empty()) {
    throw protocol_error("validation subjects need at least 2 sessions each");
  }
  evalkit::ScoreSet scores;
  for (const auto& [subject, probe] : probes) {
    for (const auto& [gallery, cent] : enroll) {
      const double s = cosine_similarity(probe, cent);
      if (gallery == subject) scores.genuine.push_back(s);
      else scores.impostor.push_back(s);
    }
  }
  const auto curve = evalkit::roc_curve(scores);
  return {evalkit::frr_at_far(curve, eval_far).frr, evalkit::eer(curve)};
}

}  // namespace

Ef1TrainResult train_ef1(const core::EmbeddingSet& gaze, const core::EmbeddingSet& periocular,
                         const std::set<std::string>& train_subjects,
                         const std::set<std::string>& val_subjects, const Ef1TrainConfig& cfg) {
  if (train_subjects.empty() || val_subjects.empty()) {
    throw argument_error("train_ef1: both subject sets must be non-empty");
  }
  for (const auto& s : train_subjects) {
    if (val_subjects.count(s) > 0) {
      throw protocol_error("train_ef1: subject " + s + " appears in both halves");
    }
  }
  const std::set<std::size_t> paper_dims{32, 64, 128, 256};
  const bool conformant = paper_dims.count(cfg.out_dim) > 0;
  if (!conformant) {
    log_info("EF1 output dimension " + std::to_string(cfg.out_dim) +
             " is outside the standard set {32, 64, 128, 256}");
  }

  const auto train_samples = build_fused_samples(gaze, periocular, train_subjects,
                                                 cfg.gaze_chunks, cfg.periocular_images,
                                                 cfg.train_sessions);
  const auto val_samples = build_fused_samples(gaze, periocular, val_subjects, cfg.gaze_chunks,
                                               cfg.periocular_images, 0);

  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  {
    std::map<std::string, int> label_of;
    for (const auto& s : train_samples) {
      label_of.try_emplace(s.subject, static_cast<int>(label_of.size()));
    }
    inputs.reserve(train_samples.size());
    labels.reserve(train_samples.size());
    for (const auto& s : train_samples) {
      inputs.push_back(s.input);
      labels.push_back(label_of.at(s.subject));
    }
  }
  const std::size_t in_dim = inputs.front().size();

  Ef1TrainResult result;
  result.paper_conformant_out_dim = conformant;
  LinearFusionModel model = init_linear_model(cfg.out_dim, in_dim, cfg.seed);
  AdamState adam(model.weights.data.size());

  MsLossConfig loss_cfg = cfg.loss;
  loss_cfg.use_miner = false;  // full-batch training, no miner

  LinearFusionModel best = model;
  double best_frr = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto lg = ms_loss_and_gradient(inputs, labels, model, loss_cfg);
    adam_step(adam, model.weights.data, lg.grad.data, cfg.learning_rate);

    TrainingLogEntry entry;
    entry.epoch = epoch;
    entry.loss = lg.loss;
    if (epoch % cfg.validate_every == 0 || epoch == cfg.max_epochs) {
      const auto [frr, eer_val] = validate_ef1(model, val_samples, cfg.eval_far);
      entry.val_frr = frr;
      entry.val_eer = eer_val;
      if (frr < best_frr) {  // strict: ties keep the earliest epoch
        best_frr = frr;
        best_epoch = epoch;
        best = model;
      }
    }
    result.log.push_back(entry);
  }

  result.model = std::move(best);
  result.best_epoch = best_epoch;
  result.best_val_frr = best_frr;
  return result;
}

ToyEncoderResult train_toy_encoder(const std::vector<std::vector<double>>& inputs,
                                   const std::vector<int>& labels, const ToyEncoderConfig& cfg) {
  if (inputs.empty()) throw argument_error("train_toy_encoder: no inputs");
  if (inputs.size() != labels.size()) throw argument_error("train_toy_encoder: labels misaligned");
  const std::size_t in_dim = inputs.front().size();
  for (const auto& x : inputs) {
    if (x.size() != in_dim) throw argument_error("train_toy_encoder: ragged inputs");
  }
  double spread = 0.0;
  for (const auto& x : inputs) {
    for (std::size_t c = 0; c < in_dim; ++c) {
      spread = std::max(spread, std::fabs(x[c] - inputs.front()[c]));
    }
  }
  if (spread == 0.0) {
    throw statistics_error("train_toy_encoder: zero-variance inputs, nothing to learn");
  }

  ToyEncoderResult result;
  result.encoder = init_linear_model(cfg.embed_dim, in_dim, cfg.seed);
  AdamState adam(result.encoder.weights.data.size());

  for (int epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
    const double lr = one_cycle_lr(cfg.schedule, epoch);
    const auto batches =
        make_minibatches(labels, cfg.batch, cfg.seed, static_cast<std::size_t>(epoch));
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      std::vector<std::vector<double>> bx;
      std::vector<int> bl;
      bx.reserve(batch.size());
      bl.reserve(batch.size());
      for (std::size_t idx : batch) {
        bx.push_back(inputs[idx]);
        bl.push_back(labels[idx]);
      }
      auto lg = ms_loss_and_gradient(bx, bl, result.encoder, cfg.loss);
      adam_step(adam, result.encoder.weights.data, lg.grad.data, lr);
      loss_sum += lg.loss;
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches.size()));
    result.epoch_lr.push_back(lr);
  }
  return result;
}

}  // namespace ocufuse::metriclearn

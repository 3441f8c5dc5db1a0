#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "ocufuse/core.hpp"

namespace ocufuse::metriclearn {

// Minimal row-major dense matrix; everything here is desk scale.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Multi-similarity loss hyperparameters; the defaults are the values used
// throughout (alpha 2.0, beta 50.0, lambda 0.5, miner margin epsilon 0.1).
struct MsLossConfig {
  double alpha = 2.0;
  double beta = 50.0;
  double lambda = 0.5;
  double epsilon = 0.1;
  bool use_miner = true;
};

// classes_per_batch unique labels x samples_per_class examples = batch size m.
struct MiniBatchSpec {
  std::size_t classes_per_batch = 16;
  std::size_t samples_per_class = 16;

  std::size_t batch_size() const { return classes_per_batch * samples_per_class; }
};

// Linear map from a concatenated embedding to a fused embedding. No bias.
struct LinearFusionModel {
  Matrix weights;  // out_dim x in_dim
  std::uint64_t seed = 42;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
};

// Seeded uniform init in [-1/sqrt(in_dim), +1/sqrt(in_dim)].
LinearFusionModel init_linear_model(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed);

// Cosine-annealed one-cycle schedule: lr_start -> lr_peak over the warmup
// epochs, then lr_peak -> lr_min over the rest.
struct OneCycleSchedule {
  double lr_start = 1e-4;
  double lr_peak = 1e-2;
  double lr_min = 1e-7;
  int warm_epochs = 30;
  int total_epochs = 100;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  explicit AdamState(std::size_t n_params = 0)
      : first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}
};

// Mined positive/negative pair masks, one row per anchor, diagonal excluded.
struct PairMasks {
  std::vector<std::vector<bool>> positive;
  std::vector<std::vector<bool>> negative;
};

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// Cosine similarity matrix of a batch of equal-length vectors.
Matrix similarity_matrix(const std::vector<std::vector<double>>& vectors);

// Keeps negative k for anchor i iff S_ik > min_{p in P_i} S_ip - epsilon and
// positive k iff S_ik < max_{n in N_i} S_in + epsilon. Anchors with no
// positives or no negatives contribute empty masks.
PairMasks ms_mine_pairs(const Matrix& sim, const std::vector<int>& labels, double epsilon);

// All same-label / different-label pairs, i.e. the miner disabled.
PairMasks all_pairs(const std::vector<int>& labels);

// (1/m) sum_i [ log(1 + sum_P e^{-a(S-l)})/a + log(1 + sum_N e^{b(S-l)})/b ]
// over the masked pairs only.
double ms_loss(const Matrix& sim, const std::vector<int>& labels, const MsLossConfig& cfg,
               const PairMasks& masks);

struct LossAndGradient {
  double loss = 0.0;
  Matrix grad;  // dL/dW, same shape as the model weights
};

// Loss and exact analytic gradient of ms_loss(cosine(W x_i, W x_k)) with
// respect to W. Masks come from the config's miner setting and are treated
// as constant during differentiation.
LossAndGradient ms_loss_and_gradient(const std::vector<std::vector<double>>& inputs,
                                     const std::vector<int>& labels,
                                     const LinearFusionModel& model, const MsLossConfig& cfg);

// Standard Adam update with bias correction, in place.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr);

double one_cycle_lr(const OneCycleSchedule& schedule, int epoch);

// ceil(N/m) batches of classes_per_batch distinct labels x samples_per_class
// examples. Distinct examples per class where the class is large enough,
// sampling with replacement otherwise. Deterministic per (seed, epoch_index).
std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<int>& labels,
                                                       const MiniBatchSpec& spec,
                                                       std::uint64_t seed,
                                                       std::size_t epoch_index);

struct TrainingLogEntry {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double val_frr = std::numeric_limits<double>::quiet_NaN();
  double val_eer = std::numeric_limits<double>::quiet_NaN();
};

struct Ef1TrainConfig {
  std::size_t out_dim = 256;
  double learning_rate = 3e-4;
  std::size_t max_epochs = 1000;
  std::size_t validate_every = 100;
  double eval_far = 2e-5;  // FAR 0.002% = 1/50,000
  std::uint64_t seed = 42;
  MsLossConfig loss{2.0, 50.0, 0.5, 0.1, /*use_miner=*/false};
  // Chunks per session entering each training/validation centroid; 0 = all.
  std::size_t gaze_chunks = 0;
  std::size_t periocular_images = 0;
  // Sessions per subject used to build training samples; 0 = all.
  std::size_t train_sessions = 0;
};

struct Ef1TrainResult {
  LinearFusionModel model;
  std::vector<TrainingLogEntry> log;
  std::size_t best_epoch = 0;
  double best_val_frr = 1.0;
  bool paper_conformant_out_dim = true;
};

// Trains the linear embedding-fusion model: per-modality session centroids
// are L2-normalized and concatenated, then fitted full-batch with Adam at a
// fixed learning rate and multi-similarity loss without the miner. Validation
// runs every validate_every epochs (and at the final epoch) on the held-out
// subjects; the checkpoint with the lowest FRR at eval_far wins, earliest
// epoch on ties. Bit-reproducible for a fixed seed.
Ef1TrainResult train_ef1(const core::EmbeddingSet& gaze, const core::EmbeddingSet& periocular,
                         const std::set<std::string>& train_subjects,
                         const std::set<std::string>& val_subjects, const Ef1TrainConfig& cfg);

struct ToyEncoderConfig {
  std::size_t embed_dim = 32;
  MiniBatchSpec batch;
  OneCycleSchedule schedule;
  MsLossConfig loss;  // miner on by default
  std::uint64_t seed = 42;
};

struct ToyEncoderResult {
  LinearFusionModel encoder;
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_lr;
};

// Runs the full training recipe (class-balanced minibatches, mined
// multi-similarity loss, Adam, one-cycle schedule) on flattened windows with
// a single linear map standing in for the convolutional encoder.
ToyEncoderResult train_toy_encoder(const std::vector<std::vector<double>>& inputs,
                                   const std::vector<int>& labels, const ToyEncoderConfig& cfg);

}  // namespace ocufuse::metriclearn

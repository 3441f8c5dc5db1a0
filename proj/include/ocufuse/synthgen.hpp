#pragma once

#include <cstdint>
#include <string>

#include "ocufuse/core.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/gazeprep.hpp"

namespace ocufuse::synthgen {

// Ground-truth-controllable embedding generator. Each subject gets a center
// direction (scale between_spread); each round drifts it by
// (1 - persistence) * between_spread noise; each chunk adds within_spread
// noise. Vectors are renormalized to the unit sphere.
//
// noisy_dim_fraction marks a trailing block of dimensions whose chunk noise
// is inflated by noisy_dim_multiplier, modelling embedding coordinates with
// poor reliability. Per-modality cosine similarity is polluted by such
// dimensions while a fitted linear fusion can learn to suppress them.
struct SynthEmbeddingConfig {
  std::size_t n_subjects = 50;
  std::size_t rounds = 2;
  std::size_t chunks_per_round = 1;
  std::size_t dim = 128;
  double within_spread = 0.5;
  double between_spread = 1.0;
  double persistence = 0.9;  // 1 = rounds identical
  double noisy_dim_fraction = 0.0;
  double noisy_dim_multiplier = 1.0;
  std::uint64_t seed = 42;
  core::Modality modality = core::Modality::gaze;
  std::string subject_prefix = "s";
};

core::EmbeddingSet gen_embeddings(const SynthEmbeddingConfig& cfg);

// Random-saccade (jumping dot) style recording: piecewise-constant fixation
// positions inside +/- amplitude_deg with jumps at random 1-2 s intervals,
// plus white positional noise.
struct SynthGazeConfig {
  double duration_s = 25.0;
  double rate_hz = 72.0;
  double amplitude_deg = 15.0;
  double noise_deg = 0.05;
  double min_fixation_s = 1.0;
  double max_fixation_s = 2.0;
  std::uint64_t seed = 42;
};

gazeprep::GazeRecording gen_gaze_recording(const std::string& subject, const std::string& session,
                                           const SynthGazeConfig& cfg);

// Genuine and impostor scores from two location-shifted normal distributions
// truncated to [-1, 1].
struct SynthScoreConfig {
  std::size_t n_genuine = 1000;
  std::size_t n_impostor = 1000;
  double genuine_mean = 0.8;
  double impostor_mean = 0.0;
  double spread = 0.1;
  std::uint64_t seed = 42;
};

evalkit::ScoreSet gen_score_set(const SynthScoreConfig& cfg);

}  // namespace ocufuse::synthgen

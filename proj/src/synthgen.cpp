#include "ocufuse/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ocufuse/error.hpp"
#include "ocufuse/rng.hpp"

namespace ocufuse::synthgen {

namespace {

std::string padded_id(const std::string& prefix, std::size_t index, std::size_t width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", static_cast<int>(width), index);
  return prefix + buf;
}

std::vector<double> gaussian_vector(SeededRng& rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  for (double& x : v) x = scale * rng.gaussian();
  return v;
}

}  // namespace

core::EmbeddingSet gen_embeddings(const SynthEmbeddingConfig& cfg) {
  if (cfg.n_subjects == 0 || cfg.rounds == 0 || cfg.chunks_per_round == 0) {
    throw argument_error("gen_embeddings: counts must be positive");
  }
  if (cfg.dim < 2) throw argument_error("gen_embeddings: dim must be >= 2");
  if (cfg.within_spread <= 0.0 || cfg.between_spread <= 0.0) {
    throw argument_error("gen_embeddings: spreads must be positive");
  }
  if (cfg.persistence < 0.0 || cfg.persistence > 1.0) {
    throw argument_error("gen_embeddings: persistence must be in [0, 1]");
  }
  if (cfg.noisy_dim_fraction < 0.0 || cfg.noisy_dim_fraction > 1.0) {
    throw argument_error("gen_embeddings: noisy_dim_fraction must be in [0, 1]");
  }
  if (cfg.noisy_dim_multiplier < 0.0) {
    throw argument_error("gen_embeddings: noisy_dim_multiplier must be non-negative");
  }

  // First index of the inflated-noise block (end of the reliable dims).
  const std::size_t clean_dims =
      cfg.dim - static_cast<std::size_t>(std::llround(cfg.noisy_dim_fraction * cfg.dim));

  const std::size_t subject_width = std::max<std::size_t>(4, std::to_string(cfg.n_subjects).size());
  core::EmbeddingSet set;
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    // Per-subject stream, so parallel generation with the same seed would
    // still produce identical data.
    SeededRng rng(mix_seed(cfg.seed, s));
    const auto center = gaussian_vector(rng, cfg.dim, cfg.between_spread);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      const auto drift =
          gaussian_vector(rng, cfg.dim, (1.0 - cfg.persistence) * cfg.between_spread);
      for (std::size_t c = 0; c < cfg.chunks_per_round; ++c) {
        core::EmbeddingRecord rec;
        rec.subject = padded_id(cfg.subject_prefix, s, subject_width);
        rec.session = padded_id("r", r, 2);
        rec.modality = cfg.modality;
        rec.chunk = c;
        rec.vector.resize(cfg.dim);
        double norm_sq = 0.0;
        for (std::size_t d = 0; d < cfg.dim; ++d) {
          const double scale =
              d < clean_dims ? cfg.within_spread : cfg.within_spread * cfg.noisy_dim_multiplier;
          const double x = center[d] + drift[d] + scale * rng.gaussian();
          rec.vector[d] = x;
          norm_sq += x * x;
        }
        if (norm_sq == 0.0) norm_sq = 1.0;  // measure-zero guard
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : rec.vector) x *= inv;
        set.add(std::move(rec));
      }
    }
  }
  return set;
}

gazeprep::GazeRecording gen_gaze_recording(const std::string& subject, const std::string& session,
                                           const SynthGazeConfig& cfg) {
  if (cfg.duration_s <= 0.0) throw argument_error("gen_gaze_recording: duration must be positive");
  if (cfg.rate_hz <= 0.0) throw argument_error("gen_gaze_recording: rate must be positive");
  if (cfg.min_fixation_s <= 0.0 || cfg.max_fixation_s < cfg.min_fixation_s) {
    throw argument_error("gen_gaze_recording: bad fixation interval");
  }

  SeededRng rng(cfg.seed);
  gazeprep::GazeRecording rec;
  rec.subject = subject;
  rec.session = session;
  rec.sample_rate_hz = cfg.rate_hz;

  const std::size_t n_samples =
      static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.rate_hz));
  rec.horizontal_deg.reserve(n_samples);
  rec.vertical_deg.reserve(n_samples);

  double fix_x = rng.uniform(-cfg.amplitude_deg, cfg.amplitude_deg);
  double fix_y = rng.uniform(-cfg.amplitude_deg, cfg.amplitude_deg);
  double next_jump_s = rng.uniform(cfg.min_fixation_s, cfg.max_fixation_s);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / cfg.rate_hz;
    if (t >= next_jump_s) {
      fix_x = rng.uniform(-cfg.amplitude_deg, cfg.amplitude_deg);
      fix_y = rng.uniform(-cfg.amplitude_deg, cfg.amplitude_deg);
      next_jump_s += rng.uniform(cfg.min_fixation_s, cfg.max_fixation_s);
    }
    rec.horizontal_deg.push_back(fix_x + cfg.noise_deg * rng.gaussian());
    rec.vertical_deg.push_back(fix_y + cfg.noise_deg * rng.gaussian());
  }
  return rec;
}

evalkit::ScoreSet gen_score_set(const SynthScoreConfig& cfg) {
  if (cfg.n_genuine < 1 || cfg.n_impostor < 1) {
    throw argument_error("gen_score_set: counts must be >= 1");
  }
  if (cfg.spread <= 0.0) throw argument_error("gen_score_set: spread must be positive");

  SeededRng rng(cfg.seed);
  evalkit::ScoreSet scores;
  scores.genuine.reserve(cfg.n_genuine);
  scores.impostor.reserve(cfg.n_impostor);
  auto truncated = [&](double mean) {
    return std::clamp(mean + cfg.spread * rng.gaussian(), -1.0, 1.0);
  };
  for (std::size_t i = 0; i < cfg.n_genuine; ++i) scores.genuine.push_back(truncated(cfg.genuine_mean));
  for (std::size_t i = 0; i < cfg.n_impostor; ++i) scores.impostor.push_back(truncated(cfg.impostor_mean));
  return scores;
}

}  // namespace ocufuse::synthgen

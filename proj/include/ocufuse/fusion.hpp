#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ocufuse/core.hpp"
#include "ocufuse/metriclearn.hpp"

namespace ocufuse::fusion {

// Per-modality score weights; w_g + w_p = 1.
struct FusionWeights {
  double w_g = 0.5;
  double w_p = 0.5;
};

// Throws unless both weights are in [0,1] and sum to 1 within 1e-12.
void validate(const FusionWeights& w);

enum class RankVariant { rank_opt, rank1_opt };

std::string to_string(RankVariant v);

struct RankFusionConfig {
  RankVariant variant = RankVariant::rank_opt;
  double w_opt = 0.5;
};

// gaze_chunks: 5-second windows per gaze centroid (1..4 for 5/10/15/20 s);
// periocular_images: images per periocular centroid (1 or 5 in the standard
// protocol).
struct AggregationSpec {
  std::size_t gaze_chunks = 1;
  std::size_t periocular_images = 1;
};

std::vector<double> l2_normalize(const std::vector<double>& v);

// Coordinate-wise mean (the centroid embedding).
std::vector<double> aggregate_embeddings(const std::vector<std::vector<double>>& vs);

// S_f = w_p * s_p + w_g * s_g.
double sf1_fuse(double s_g, double s_p, const FusionWeights& w);

// One aligned bimodal comparison; the currency of score-level fusion.
struct ScorePair {
  std::string probe_subject;
  std::string gallery_subject;
  double s_gaze = 0.0;
  double s_periocular = 0.0;
  bool genuine = false;
};

std::vector<ScorePair> load_score_pairs(const std::filesystem::path& path);
void save_score_pairs(const std::vector<ScorePair>& pairs, const std::filesystem::path& path);

struct SweepRow {
  double w_g = 0.0;
  double eer = 0.0;
  std::map<double, double> frr_at;  // FAR target (fraction) -> FRR
};

// One row per w_g in {0, step, ..., 1}; the endpoint rows reproduce the
// unimodal metrics exactly.
std::vector<SweepRow> sf1_weight_sweep(const std::vector<ScorePair>& pairs,
                                       const std::vector<double>& far_targets = {2e-5},
                                       double step = 0.1);

// Weight for the first correct match at (possibly tie-averaged) rank r:
// rank_opt 1 - (r-1)/|R|, rank1_opt the rank-1 indicator.
double rank_probe_weight(double rank, std::size_t gallery_size, RankVariant variant);

// Matcher weights at each stage of the rank-fusion computation.
struct MatcherWeights {
  RankVariant variant = RankVariant::rank_opt;
  double w_opt = 0.5;
  std::vector<double> raw;            // mean per-probe weight per matcher
  std::vector<double> normalized;     // raw scaled to sum 1
  std::vector<double> rescaled;       // affine map of normalized onto [w_opt, 1]
  std::vector<double> final_weights;  // rescaled re-normalized to sum 1
  bool rescale_skipped = false;       // all normalized weights equal
};

// sims_per_matcher[m] is a probes x gallery similarity matrix;
// true_identity[i] is the gallery index of probe i's mate. Ranks use
// descending similarity with average ranks for ties.
MatcherWeights compute_matcher_weights(const std::vector<metriclearn::Matrix>& sims_per_matcher,
                                       const std::vector<std::size_t>& true_identity,
                                       const RankFusionConfig& cfg);

// Final [gaze, periocular] matcher weights as score-fusion weights.
FusionWeights to_fusion_weights(const MatcherWeights& weights);

// Pointwise sf1_fuse with rank-derived weights.
std::vector<double> sf2_fuse(const std::vector<ScorePair>& pairs, const FusionWeights& w);

// L2-normalize each modality, then concatenate. The cosine similarity of two
// such vectors equals the mean of the per-modality cosine similarities.
std::vector<double> ef2_concat(const std::vector<double>& g, const std::vector<double>& p);

// Normalized concatenation through the trained linear model.
std::vector<double> ef1_apply(const metriclearn::LinearFusionModel& model,
                              const std::vector<double>& g, const std::vector<double>& p);

}  // namespace ocufuse::fusion

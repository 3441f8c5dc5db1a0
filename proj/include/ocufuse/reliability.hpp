#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ocufuse/core.hpp"

namespace ocufuse::reliability {

// subjects x rounds x features values; rounds are recording sessions.
struct FeatureMatrix {
  std::vector<std::string> subjects;
  std::vector<std::string> rounds;
  std::size_t n_features = 0;
  std::vector<double> values;  // row-major [subject][round][feature]

  double at(std::size_t s, std::size_t r, std::size_t f) const {
    return values[(s * rounds.size() + r) * n_features + f];
  }
  double& at(std::size_t s, std::size_t r, std::size_t f) {
    return values[(s * rounds.size() + r) * n_features + f];
  }
};

struct KccReport {
  std::vector<double> per_feature_w;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct NormalityReport {
  std::vector<bool> per_feature_normal;
  std::size_t count_normal = 0;
  std::size_t reference_draws = 0;
  std::array<double, 2> band_percentiles{2.5, 97.5};
};

enum class CorrMethod { pearson, spearman };

struct Intercorrelation {
  double median_abs = 0.0;
  double max_abs = 0.0;
  std::size_t n_excluded_zero_variance = 0;
};

// EER = a * exp(b * KCC), fitted by least squares on ln(EER).
struct ExpFit {
  double a = 0.0;
  double b = 0.0;
  double adj_r2 = 0.0;
  std::size_t n_points = 0;
  bool clamped_inputs = false;  // some EER values were floored at 1e-6
};

// Tie-corrected Kendall's coefficient of concordance with rounds as raters
// ranking subjects:
//   W = 12 sum_i (R_i - Rbar)^2 / (k^2 (n^3 - n) - k sum_j T_j)
// where R_i sums subject i's per-round average ranks and T_j = sum (t^3 - t)
// over tie groups of round j. values[subject][round]; n >= 3 subjects,
// k >= 2 rounds. All-tied data leaves W undefined (0/0) and throws.
double kendalls_w(const std::vector<std::vector<double>>& values);

// One W per feature with min/median/max summary (median of an even count is
// the mean of the central pair).
KccReport kcc_report(const FeatureMatrix& matrix);

// Draws reference_draws standard-normal samples of the same size, builds
// percentile bands for skewness and excess kurtosis, and accepts the feature
// iff both empirical moments fall inside their bands. Moment estimators are
// the bias-uncorrected m3/m2^1.5 and m4/m2^2 - 3.
bool normality_assess(const std::vector<double>& values, std::size_t reference_draws = 1000,
                      std::array<double, 2> band_percentiles = {2.5, 97.5},
                      std::uint64_t seed = 0);

// normality_assess per feature on round-averaged subject values; feature f
// uses stream seed mix(seed, f) so parallel evaluation stays deterministic.
NormalityReport normality_report(const FeatureMatrix& matrix, std::size_t reference_draws = 1000,
                                 std::array<double, 2> band_percentiles = {2.5, 97.5},
                                 std::uint64_t seed = 0);

// Median and max absolute pairwise correlation between features, computed on
// round-averaged per-subject values. Zero-variance features are excluded.
Intercorrelation intercorrelation(const FeatureMatrix& matrix,
                                  CorrMethod method = CorrMethod::pearson);

ExpFit fit_exponential(const std::vector<double>& kcc_values,
                       const std::vector<double>& eer_values);

// FeatureMatrix from per-session centroid embeddings of one modality, each
// centroid over the first chunk_count chunks (0 = all). Subjects missing any
// session are dropped with a warning.
FeatureMatrix feature_matrix_from_embeddings(const core::EmbeddingSet& set,
                                             core::Modality modality,
                                             std::size_t chunk_count = 0);

}  // namespace ocufuse::reliability

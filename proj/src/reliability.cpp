#include "ocufuse/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/logging.hpp"
#include "ocufuse/rng.hpp"

namespace ocufuse::reliability {

namespace {

// Average ranks (1-based) with ties sharing the mean rank of their group.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double tie_correction(const std::vector<double>& values) {
  std::map<double, std::size_t> counts;
  for (double v : values) ++counts[v];
  double t_sum = 0.0;
  for (const auto& [value, t] : counts) {
    if (t > 1) {
      const double td = static_cast<double>(t);
      t_sum += td * td * td - td;
    }
  }
  return t_sum;
}

double percentile(std::vector<double> sorted, double p) {
  const double h = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Moments {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

Moments sample_moments(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) throw statistics_error("sample_moments: zero variance");
  Moments m;
  m.skewness = m3 / std::pow(m2, 1.5);
  m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return m;
}

// Round-averaged per-subject values, subjects x features.
std::vector<std::vector<double>> round_means(const FeatureMatrix& m) {
  const std::size_t n_rounds = m.rounds.size();
  std::vector<std::vector<double>> out(m.subjects.size(),
                                       std::vector<double>(m.n_features, 0.0));
  for (std::size_t s = 0; s < m.subjects.size(); ++s) {
    for (std::size_t f = 0; f < m.n_features; ++f) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n_rounds; ++r) acc += m.at(s, r, f);
      out[s][f] = acc / static_cast<double>(n_rounds);
    }
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

double kendalls_w(const std::vector<std::vector<double>>& values) {
  const std::size_t n = values.size();
  if (n < 3) throw argument_error("kendalls_w: need at least 3 subjects");
  const std::size_t k = values.front().size();
  if (k < 2) throw argument_error("kendalls_w: need at least 2 rounds");
  for (const auto& row : values) {
    if (row.size() != k) throw argument_error("kendalls_w: ragged matrix");
    for (double v : row) {
      if (std::isnan(v)) throw argument_error("kendalls_w: NaN value");
    }
  }

  std::vector<double> rank_sum(n, 0.0);
  double tie_sum = 0.0;
  std::vector<double> column(n);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t s = 0; s < n; ++s) column[s] = values[s][r];
    const auto ranks = average_ranks(column);
    for (std::size_t s = 0; s < n; ++s) rank_sum[s] += ranks[s];
    tie_sum += tie_correction(column);
  }

  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double mean_rank = kd * (nd + 1.0) / 2.0;
  double deviation_sq = 0.0;
  for (double r : rank_sum) deviation_sq += (r - mean_rank) * (r - mean_rank);

  const double denom = kd * kd * (nd * nd * nd - nd) - kd * tie_sum;
  if (denom <= 0.0) {
    throw statistics_error("kendalls_w: concordance undefined, every round is fully tied");
  }
  return 12.0 * deviation_sq / denom;
}

KccReport kcc_report(const FeatureMatrix& matrix) {
  if (matrix.n_features == 0) throw argument_error("kcc_report: no features");
  KccReport report;
  report.per_feature_w.reserve(matrix.n_features);
  std::vector<std::vector<double>> slice(matrix.subjects.size(),
                                         std::vector<double>(matrix.rounds.size(), 0.0));
  for (std::size_t f = 0; f < matrix.n_features; ++f) {
    for (std::size_t s = 0; s < matrix.subjects.size(); ++s) {
      for (std::size_t r = 0; r < matrix.rounds.size(); ++r) slice[s][r] = matrix.at(s, r, f);
    }
    report.per_feature_w.push_back(kendalls_w(slice));
  }
  report.min = *std::min_element(report.per_feature_w.begin(), report.per_feature_w.end());
  report.max = *std::max_element(report.per_feature_w.begin(), report.per_feature_w.end());
  report.median = median_of(report.per_feature_w);
  return report;
}

bool normality_assess(const std::vector<double>& values, std::size_t reference_draws,
                      std::array<double, 2> band_percentiles, std::uint64_t seed) {
  if (values.size() < 20) {
    throw argument_error("normality_assess: need at least 20 values, got " +
                         std::to_string(values.size()));
  }
  if (reference_draws < 2) throw argument_error("normality_assess: need at least 2 draws");
  if (!(band_percentiles[0] < band_percentiles[1]) || band_percentiles[0] < 0.0 ||
      band_percentiles[1] > 100.0) {
    throw argument_error("normality_assess: bad percentile band");
  }

  const Moments empirical = sample_moments(values);

  SeededRng rng(seed);
  std::vector<double> skew_ref(reference_draws), kurt_ref(reference_draws);
  std::vector<double> draw(values.size());
  for (std::size_t d = 0; d < reference_draws; ++d) {
    for (double& x : draw) x = rng.gaussian();
    const Moments m = sample_moments(draw);
    skew_ref[d] = m.skewness;
    kurt_ref[d] = m.excess_kurtosis;
  }
  std::sort(skew_ref.begin(), skew_ref.end());
  std::sort(kurt_ref.begin(), kurt_ref.end());

  const double skew_lo = percentile(skew_ref, band_percentiles[0]);
  const double skew_hi = percentile(skew_ref, band_percentiles[1]);
  const double kurt_lo = percentile(kurt_ref, band_percentiles[0]);
  const double kurt_hi = percentile(kurt_ref, band_percentiles[1]);

  return empirical.skewness >= skew_lo && empirical.skewness <= skew_hi &&
         empirical.excess_kurtosis >= kurt_lo && empirical.excess_kurtosis <= kurt_hi;
}

NormalityReport normality_report(const FeatureMatrix& matrix, std::size_t reference_draws,
                                 std::array<double, 2> band_percentiles, std::uint64_t seed) {
  const auto means = round_means(matrix);
  NormalityReport report;
  report.reference_draws = reference_draws;
  report.band_percentiles = band_percentiles;
  std::vector<double> column(matrix.subjects.size());
  for (std::size_t f = 0; f < matrix.n_features; ++f) {
    for (std::size_t s = 0; s < matrix.subjects.size(); ++s) column[s] = means[s][f];
    const bool normal =
        normality_assess(column, reference_draws, band_percentiles, mix_seed(seed, f));
    report.per_feature_normal.push_back(normal);
    if (normal) ++report.count_normal;
  }
  return report;
}

Intercorrelation intercorrelation(const FeatureMatrix& matrix, CorrMethod method) {
  if (matrix.n_features < 2) throw argument_error("intercorrelation: need at least 2 features");
  if (matrix.subjects.size() < 3) {
    throw argument_error("intercorrelation: need at least 3 subjects");
  }
  const auto means = round_means(matrix);

  // Columns with spread; zero-variance features cannot be correlated.
  std::vector<std::vector<double>> columns;
  Intercorrelation out;
  for (std::size_t f = 0; f < matrix.n_features; ++f) {
    std::vector<double> col(matrix.subjects.size());
    for (std::size_t s = 0; s < matrix.subjects.size(); ++s) col[s] = means[s][f];
    const double first = col.front();
    const bool constant =
        std::all_of(col.begin(), col.end(), [&](double v) { return v == first; });
    if (constant) {
      ++out.n_excluded_zero_variance;
      log_warn("intercorrelation: feature " + std::to_string(f) + " has zero variance; excluded");
      continue;
    }
    if (method == CorrMethod::spearman) col = average_ranks(col);
    columns.push_back(std::move(col));
  }
  if (columns.size() < 2) {
    throw statistics_error("intercorrelation: fewer than 2 features with non-zero variance");
  }

  std::vector<double> abs_corr;
  abs_corr.reserve(columns.size() * (columns.size() - 1) / 2);
  for (std::size_t a = 0; a < columns.size(); ++a) {
    for (std::size_t b = a + 1; b < columns.size(); ++b) {
      abs_corr.push_back(std::fabs(pearson(columns[a], columns[b])));
    }
  }
  out.median_abs = median_of(abs_corr);
  out.max_abs = *std::max_element(abs_corr.begin(), abs_corr.end());
  return out;
}

ExpFit fit_exponential(const std::vector<double>& kcc_values,
                       const std::vector<double>& eer_values) {
  if (kcc_values.size() != eer_values.size()) {
    throw argument_error("fit_exponential: input lengths differ");
  }
  if (kcc_values.size() < 3) throw argument_error("fit_exponential: need at least 3 points");

  ExpFit fit;
  fit.n_points = kcc_values.size();

  std::vector<double> log_eer;
  log_eer.reserve(eer_values.size());
  for (double e : eer_values) {
    if (e <= 0.0) throw argument_error("fit_exponential: EER values must be positive");
    if (e < 1e-6) {
      e = 1e-6;
      fit.clamped_inputs = true;
      log_warn("fit_exponential: EER below 1e-6 clamped");
    }
    log_eer.push_back(std::log(e));
  }

  const double n = static_cast<double>(kcc_values.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < kcc_values.size(); ++i) {
    mx += kcc_values[i];
    my += log_eer[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < kcc_values.size(); ++i) {
    const double dx = kcc_values[i] - mx;
    sxx += dx * dx;
    sxy += dx * (log_eer[i] - my);
  }
  if (sxx == 0.0) throw statistics_error("fit_exponential: constant KCC, fit is singular");

  fit.b = sxy / sxx;
  fit.a = std::exp(my - fit.b * mx);

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < kcc_values.size(); ++i) {
    const double predicted = (my - fit.b * mx) + fit.b * kcc_values[i];
    ss_res += (log_eer[i] - predicted) * (log_eer[i] - predicted);
    ss_tot += (log_eer[i] - my) * (log_eer[i] - my);
  }
  const double r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  fit.adj_r2 = 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0);
  return fit;
}

FeatureMatrix feature_matrix_from_embeddings(const core::EmbeddingSet& set,
                                             core::Modality modality, std::size_t chunk_count) {
  const auto cents = evalkit::session_centroids(set, modality, chunk_count);
  if (cents.empty()) {
    throw argument_error("feature_matrix_from_embeddings: no records of modality " +
                         core::to_string(modality));
  }

  std::set<std::string> all_rounds;
  std::map<std::string, std::set<std::string>> sessions_of;
  for (const auto& [key, cent] : cents) {
    sessions_of[key.first].insert(key.second);
    all_rounds.insert(key.second);
  }
  if (all_rounds.size() < 2) {
    throw protocol_error("feature_matrix_from_embeddings: at least 2 sessions required");
  }

  FeatureMatrix matrix;
  for (const auto& [subject, sessions] : sessions_of) {
    if (sessions.size() == all_rounds.size()) {
      matrix.subjects.push_back(subject);
    } else {
      log_warn("subject " + subject + " is missing sessions; dropped from the feature matrix");
    }
  }
  if (matrix.subjects.size() < 3) {
    throw protocol_error("feature_matrix_from_embeddings: fewer than 3 fully covered subjects");
  }
  matrix.rounds.assign(all_rounds.begin(), all_rounds.end());
  matrix.n_features = cents.begin()->second.size();
  matrix.values.resize(matrix.subjects.size() * matrix.rounds.size() * matrix.n_features);
  for (std::size_t s = 0; s < matrix.subjects.size(); ++s) {
    for (std::size_t r = 0; r < matrix.rounds.size(); ++r) {
      const auto& cent = cents.at({matrix.subjects[s], matrix.rounds[r]});
      for (std::size_t f = 0; f < matrix.n_features; ++f) matrix.at(s, r, f) = cent[f];
    }
  }
  return matrix;
}

}  // namespace ocufuse::reliability

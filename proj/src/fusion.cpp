#include "ocufuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/logging.hpp"

namespace ocufuse::fusion {

void validate(const FusionWeights& w) {
  if (w.w_g < 0.0 || w.w_g > 1.0 || w.w_p < 0.0 || w.w_p > 1.0) {
    throw argument_error("fusion weights must lie in [0, 1]");
  }
  if (std::fabs(w.w_g + w.w_p - 1.0) > 1e-12) {
    throw argument_error("fusion weights must sum to 1");
  }
}

std::string to_string(RankVariant v) {
  return v == RankVariant::rank_opt ? "rank-opt" : "rank1-opt";
}

std::vector<double> l2_normalize(const std::vector<double>& v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq == 0.0) throw argument_error("l2_normalize: zero vector");
  const double inv = 1.0 / std::sqrt(norm_sq);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

std::vector<double> aggregate_embeddings(const std::vector<std::vector<double>>& vs) {
  if (vs.empty()) throw argument_error("aggregate_embeddings: empty list");
  const std::size_t dim = vs.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& v : vs) {
    if (v.size() != dim) throw argument_error("aggregate_embeddings: mixed lengths");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& x : mean) x *= inv;
  return mean;
}

double sf1_fuse(double s_g, double s_p, const FusionWeights& w) {
  validate(w);
  return w.w_p * s_p + w.w_g * s_g;
}

std::vector<ScorePair> load_score_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<ScorePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "probe_subject,gallery_subject,s_gaze,s_periocular,genuine") {
        throw parse_error(path.string() + ":1: unexpected header");
      }
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5) {
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    ScorePair p;
    p.probe_subject = fields[0];
    p.gallery_subject = fields[1];
    try {
      p.s_gaze = std::stod(fields[2]);
      p.s_periocular = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": bad score");
    }
    if (fields[4] == "1") p.genuine = true;
    else if (fields[4] == "0") p.genuine = false;
    else throw parse_error(path.string() + ":" + std::to_string(line_no) + ": genuine must be 0 or 1");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_score_pairs(const std::vector<ScorePair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << "probe_subject,gallery_subject,s_gaze,s_periocular,genuine\n";
  char buf[64];
  for (const auto& p : pairs) {
    out << p.probe_subject << ',' << p.gallery_subject << ',';
    std::snprintf(buf, sizeof buf, "%.17g", p.s_gaze);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", p.s_periocular);
    out << buf << ',' << (p.genuine ? '1' : '0') << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

std::vector<SweepRow> sf1_weight_sweep(const std::vector<ScorePair>& pairs,
                                       const std::vector<double>& far_targets, double step) {
  bool any_genuine = false;
  bool any_impostor = false;
  for (const auto& p : pairs) (p.genuine ? any_genuine : any_impostor) = true;
  if (!any_genuine || !any_impostor) {
    throw protocol_error("sf1_weight_sweep: need both genuine and impostor pairs");
  }
  if (step <= 0.0 || step > 1.0) throw argument_error("sweep step must be in (0, 1]");

  // Grid {0, step, 2*step, ...} with the w_g = 1 endpoint always included,
  // whether or not the step divides 1 evenly.
  std::vector<double> grid;
  for (int i = 0; i * step < 1.0 - 1e-9; ++i) grid.push_back(i * step);
  grid.push_back(1.0);

  std::vector<SweepRow> rows;
  for (const double w_g : grid) {
    const FusionWeights w{w_g, 1.0 - w_g};
    evalkit::ScoreSet scores = evalkit::score_set_from_pairs(pairs, w);
    const auto curve = evalkit::roc_curve(scores);
    SweepRow row;
    row.w_g = w_g;
    row.eer = evalkit::eer(curve);
    for (double target : far_targets) {
      row.frr_at[target] = evalkit::frr_at_far(curve, target).frr;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double rank_probe_weight(double rank, std::size_t gallery_size, RankVariant variant) {
  if (gallery_size < 1) throw argument_error("rank_probe_weight: empty gallery");
  if (rank < 1.0 || rank > static_cast<double>(gallery_size)) {
    throw argument_error("rank_probe_weight: rank out of range");
  }
  if (variant == RankVariant::rank1_opt) {
    return rank == 1.0 ? 1.0 : 0.0;
  }
  return 1.0 - (rank - 1.0) / static_cast<double>(gallery_size);
}

namespace {

// Average rank of the mate under descending similarity. Exact ties share the
// mean rank of their group; with gallery indices as the secondary sort key
// the ranked list itself stays deterministic.
double mate_rank(const metriclearn::Matrix& sims, std::size_t probe, std::size_t mate) {
  const double mate_sim = sims.at(probe, mate);
  std::size_t greater = 0;
  std::size_t tied = 0;
  for (std::size_t g = 0; g < sims.cols; ++g) {
    const double s = sims.at(probe, g);
    if (s > mate_sim) ++greater;
    else if (s == mate_sim) ++tied;
  }
  return static_cast<double>(greater) + (static_cast<double>(tied) + 1.0) / 2.0;
}

}  // namespace

MatcherWeights compute_matcher_weights(const std::vector<metriclearn::Matrix>& sims_per_matcher,
                                       const std::vector<std::size_t>& true_identity,
                                       const RankFusionConfig& cfg) {
  if (sims_per_matcher.empty()) throw argument_error("compute_matcher_weights: no matchers");
  if (cfg.w_opt <= 0.0 || cfg.w_opt > 1.0) throw argument_error("w_opt must be in (0, 1]");
  const std::size_t n_probes = sims_per_matcher.front().rows;
  const std::size_t n_gallery = sims_per_matcher.front().cols;
  if (n_probes == 0) throw argument_error("compute_matcher_weights: no probes");
  if (true_identity.size() != n_probes) {
    throw argument_error("compute_matcher_weights: true_identity misaligned");
  }
  for (const auto& m : sims_per_matcher) {
    if (m.rows != n_probes || m.cols != n_gallery) {
      throw argument_error("compute_matcher_weights: matcher matrices differ in shape");
    }
  }
  for (std::size_t idx : true_identity) {
    if (idx >= n_gallery) throw argument_error("compute_matcher_weights: mate index out of range");
  }

  MatcherWeights out;
  out.variant = cfg.variant;
  out.w_opt = cfg.w_opt;

  for (const auto& sims : sims_per_matcher) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_probes; ++i) {
      acc += rank_probe_weight(mate_rank(sims, i, true_identity[i]), n_gallery, cfg.variant);
    }
    out.raw.push_back(acc / static_cast<double>(n_probes));
  }

  const double raw_sum = std::accumulate(out.raw.begin(), out.raw.end(), 0.0);
  if (raw_sum == 0.0) {
    // Every matcher scored zero (possible under rank1-opt); fall back to
    // equal weights rather than dividing by zero.
    log_warn("compute_matcher_weights: all raw weights are zero, using equal weights");
    out.normalized.assign(out.raw.size(), 1.0 / static_cast<double>(out.raw.size()));
  } else {
    for (double w : out.raw) out.normalized.push_back(w / raw_sum);
  }

  const auto [mn_it, mx_it] = std::minmax_element(out.normalized.begin(), out.normalized.end());
  const double mn = *mn_it;
  const double mx = *mx_it;
  if (mx > mn) {
    for (double w : out.normalized) {
      out.rescaled.push_back(cfg.w_opt + (1.0 - cfg.w_opt) * (w - mn) / (mx - mn));
    }
  } else {
    out.rescale_skipped = true;
    out.rescaled = out.normalized;
    log_info("compute_matcher_weights: all matcher weights equal, rescale skipped");
  }

  const double rs_sum = std::accumulate(out.rescaled.begin(), out.rescaled.end(), 0.0);
  for (double w : out.rescaled) out.final_weights.push_back(w / rs_sum);
  return out;
}

FusionWeights to_fusion_weights(const MatcherWeights& weights) {
  if (weights.final_weights.size() != 2) {
    throw argument_error("to_fusion_weights: expected exactly two matchers [gaze, periocular]");
  }
  return FusionWeights{weights.final_weights[0], weights.final_weights[1]};
}

std::vector<double> sf2_fuse(const std::vector<ScorePair>& pairs, const FusionWeights& w) {
  validate(w);
  std::vector<double> fused;
  fused.reserve(pairs.size());
  for (const auto& p : pairs) fused.push_back(sf1_fuse(p.s_gaze, p.s_periocular, w));
  return fused;
}

std::vector<double> ef2_concat(const std::vector<double>& g, const std::vector<double>& p) {
  auto out = l2_normalize(g);
  const auto pn = l2_normalize(p);
  out.insert(out.end(), pn.begin(), pn.end());
  return out;
}

std::vector<double> ef1_apply(const metriclearn::LinearFusionModel& model,
                              const std::vector<double>& g, const std::vector<double>& p) {
  const auto x = ef2_concat(g, p);
  if (x.size() != model.in_dim()) {
    throw argument_error("ef1_apply: input dimension " + std::to_string(x.size()) +
                         " does not match model in_dim " + std::to_string(model.in_dim()));
  }
  std::vector<double> out(model.out_dim(), 0.0);
  bool all_zero = true;
  for (std::size_t r = 0; r < model.out_dim(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < model.in_dim(); ++c) acc += model.weights.at(r, c) * x[c];
    out[r] = acc;
    if (acc != 0.0) all_zero = false;
  }
  if (all_zero) log_warn("ef1_apply: degenerate model produced a zero embedding");
  return out;
}

}  // namespace ocufuse::fusion

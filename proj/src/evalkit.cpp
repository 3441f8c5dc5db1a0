#include "ocufuse/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ocufuse/error.hpp"
#include "ocufuse/logging.hpp"
#include "ocufuse/metriclearn.hpp"

namespace ocufuse::evalkit {

std::string to_string(Method m) {
  switch (m) {
    case Method::ema: return "EMA";
    case Method::pia: return "PIA";
    case Method::sf1: return "SF1";
    case Method::sf2_rank_opt: return "SF2-rank-opt";
    case Method::sf2_rank1_opt: return "SF2-rank1-opt";
    case Method::ef1: return "EF1";
    case Method::ef2: return "EF2";
  }
  throw argument_error("unknown method value");
}

Method method_from_string(const std::string& s) {
  if (s == "EMA") return Method::ema;
  if (s == "PIA") return Method::pia;
  if (s == "SF1") return Method::sf1;
  if (s == "SF2-rank-opt") return Method::sf2_rank_opt;
  if (s == "SF2-rank1-opt") return Method::sf2_rank1_opt;
  if (s == "EF1") return Method::ef1;
  if (s == "EF2") return Method::ef2;
  throw argument_error("unknown method \"" + s + "\"");
}

RocCurve roc_curve(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.impostor.empty()) {
    throw argument_error("roc_curve: both score classes must be non-empty");
  }
  for (const auto* cls : {&scores.genuine, &scores.impostor}) {
    for (double s : *cls) {
      if (std::isnan(s)) throw argument_error("roc_curve: NaN score");
    }
  }
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  std::vector<double> thresholds;
  thresholds.reserve(gen.size() + imp.size());
  thresholds.insert(thresholds.end(), gen.begin(), gen.end());
  thresholds.insert(thresholds.end(), imp.begin(), imp.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double n_gen = static_cast<double>(gen.size());
  const double n_imp = static_cast<double>(imp.size());

  RocCurve curve;
  curve.n_genuine = gen.size();
  curve.n_impostor = imp.size();
  curve.points.reserve(thresholds.size() + 1);
  // Sentinel above every score: nothing accepted, FAR 0 / FRR 1.
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (double t : thresholds) {
    // Accept iff score >= t.
    const auto imp_ge =
        imp.end() - std::lower_bound(imp.begin(), imp.end(), t);
    const auto gen_lt = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    curve.points.push_back({t, static_cast<double>(imp_ge) / n_imp,
                            static_cast<double>(gen_lt) / n_gen});
  }
  return curve;
}

double eer(const RocCurve& curve) {
  if (curve.points.size() < 2) throw argument_error("eer: degenerate curve");
  // diff = FAR - FRR runs from -1 at the sentinel to +1 at the lowest
  // threshold; return the exact crossing or interpolate across the sign flip.
  double prev_diff = curve.points.front().far - curve.points.front().frr;
  if (prev_diff == 0.0) return curve.points.front().far;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    const double diff = p.far - p.frr;
    if (diff == 0.0) return p.far;
    if ((diff > 0.0) != (prev_diff > 0.0)) {
      const auto& q = curve.points[i - 1];
      const double d_far = p.far - q.far;
      const double d_frr = p.frr - q.frr;
      const double t = (q.frr - q.far) / (d_far - d_frr);
      return q.far + t * d_far;
    }
    prev_diff = diff;
  }
  // FAR and FRR never cross away from the boundary: perfect separation.
  return 0.0;
}

FrrResult frr_at_far(const RocCurve& curve, double far_target, FrrMode mode) {
  if (far_target <= 0.0 || far_target >= 1.0) {
    throw argument_error("far_target must be in (0, 1)");
  }
  FrrResult result;
  result.low_resolution =
      static_cast<double>(curve.n_impostor) * far_target < 1.0;

  // Points are ordered by decreasing threshold, so FAR is non-decreasing;
  // the last point with FAR <= target is the most permissive admissible one.
  std::size_t chosen = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (curve.points[i].far <= far_target) chosen = i;
    else break;
  }
  result.unreachable = chosen == 0;  // only the sentinel qualifies

  if (mode == FrrMode::conservative || chosen + 1 >= curve.points.size()) {
    result.frr = curve.points[chosen].frr;
    return result;
  }
  const auto& lo = curve.points[chosen];
  const auto& hi = curve.points[chosen + 1];
  if (lo.far == far_target || hi.far == lo.far) {
    result.frr = lo.frr;
    return result;
  }
  const double t = (far_target - lo.far) / (hi.far - lo.far);
  result.frr = lo.frr + t * (hi.frr - lo.frr);
  return result;
}

FidoResult fido_check(const EvalReport& report, double verification_seconds) {
  constexpr double kFidoFar = 2e-5;    // 1-in-50,000
  constexpr double kFidoFrrMax = 0.03;
  constexpr double kFidoMaxSeconds = 30.0;

  const FrrResult* frr = nullptr;
  for (const auto& [target, res] : report.frr_at) {
    if (std::fabs(target - kFidoFar) < 1e-12) {
      frr = &res;
      break;
    }
  }
  if (frr == nullptr) {
    throw argument_error("fido_check: report lacks FRR at FAR 0.002%");
  }

  FidoResult out;
  out.frr = frr->frr;
  out.verification_seconds = verification_seconds;
  const bool frr_ok = frr->frr <= kFidoFrrMax;
  const bool time_ok = verification_seconds <= kFidoMaxSeconds;
  out.pass = frr_ok && time_ok;
  if (!frr_ok) out.reason = "FRR at FAR 0.002% exceeds 3%";
  else if (!time_ok) out.reason = "verification duration exceeds 30 seconds";
  else out.reason = "meets FRR 3% at FAR 0.002% within 30 seconds";
  return out;
}

std::map<std::pair<std::string, std::string>, std::vector<double>> session_centroids(
    const core::EmbeddingSet& set, core::Modality modality, std::size_t count) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> out;
  for (const auto& [key, positions] : set.index()) {
    if (std::get<2>(key) != modality) continue;
    auto records = set.find(std::get<0>(key), std::get<1>(key), modality);
    std::vector<std::vector<double>> chunk_vectors;
    const std::size_t take = count == 0 ? records.size() : std::min(count, records.size());
    if (count > 0 && records.size() < count) {
      log_debug("(" + std::get<0>(key) + ", " + std::get<1>(key) + ") has only " +
                std::to_string(records.size()) + " of " + std::to_string(count) +
                " requested chunks");
    }
    chunk_vectors.reserve(take);
    for (std::size_t i = 0; i < take; ++i) chunk_vectors.push_back(records[i]->vector);
    out.emplace(std::make_pair(std::get<0>(key), std::get<1>(key)),
                fusion::aggregate_embeddings(chunk_vectors));
  }
  return out;
}

namespace {

core::Modality single_modality(const core::EmbeddingSet& a, const core::EmbeddingSet& b) {
  std::set<core::Modality> seen;
  for (const auto* set : {&a, &b}) {
    for (const auto& [key, positions] : set->index()) seen.insert(std::get<2>(key));
  }
  if (seen.size() != 1) {
    throw argument_error("build_trial_scores: sets must contain exactly one modality");
  }
  return *seen.begin();
}

std::size_t chunk_count_for(core::Modality m, const fusion::AggregationSpec& spec) {
  switch (m) {
    case core::Modality::gaze: return spec.gaze_chunks;
    case core::Modality::periocular: return spec.periocular_images;
    case core::Modality::fused: return 0;  // fused embeddings are pre-aggregated
  }
  throw argument_error("unknown modality value");
}

// Enrollment centroid per subject (first sorted session; extra enrollment
// sessions are ignored with a warning).
std::map<std::string, std::vector<double>> enrollment_centroids(
    const std::map<std::pair<std::string, std::string>, std::vector<double>>& cents) {
  std::map<std::string, std::vector<double>> out;
  std::map<std::string, std::size_t> session_count;
  for (const auto& [key, cent] : cents) {
    ++session_count[key.first];
    out.try_emplace(key.first, cent);  // map order: first session wins
  }
  for (const auto& [subject, n] : session_count) {
    if (n > 1) {
      log_warn("subject " + subject + " has " + std::to_string(n) +
               " enrollment sessions; using the first");
    }
  }
  return out;
}

}  // namespace

ScoreSet build_trial_scores(const core::EmbeddingSet& enroll, const core::EmbeddingSet& verify,
                            const fusion::AggregationSpec& spec) {
  if (spec.gaze_chunks < 1 || spec.periocular_images < 1) {
    throw argument_error("aggregation spec counts must be >= 1");
  }
  const core::Modality modality = single_modality(enroll, verify);
  const std::size_t count = chunk_count_for(modality, spec);

  const auto enroll_cents = enrollment_centroids(session_centroids(enroll, modality, count));
  const auto verify_cents = session_centroids(verify, modality, count);

  std::set<std::string> enroll_subjects;
  for (const auto& [subject, cent] : enroll_cents) enroll_subjects.insert(subject);
  std::set<std::string> verify_subjects;
  for (const auto& [key, cent] : verify_cents) verify_subjects.insert(key.first);

  std::set<std::string> common;
  for (const auto& s : enroll_subjects) {
    if (verify_subjects.count(s) > 0) common.insert(s);
    else log_warn("subject " + s + " present only in the enrollment set; skipped");
  }
  for (const auto& s : verify_subjects) {
    if (enroll_subjects.count(s) == 0) {
      log_warn("subject " + s + " present only in the verification set; skipped");
    }
  }
  if (common.empty()) {
    throw protocol_error("no subject appears in both enrollment and verification sets");
  }

  ScoreSet scores;
  for (const auto& [key, probe] : verify_cents) {
    if (common.count(key.first) == 0) continue;
    for (const auto& gallery : common) {
      const double s = metriclearn::cosine_similarity(probe, enroll_cents.at(gallery));
      if (gallery == key.first) scores.genuine.push_back(s);
      else scores.impostor.push_back(s);
    }
  }
  return scores;
}

std::vector<fusion::ScorePair> build_score_pairs(const core::EmbeddingSet& gaze_enroll,
                                                 const core::EmbeddingSet& gaze_verify,
                                                 const core::EmbeddingSet& peri_enroll,
                                                 const core::EmbeddingSet& peri_verify,
                                                 const fusion::AggregationSpec& spec) {
  if (spec.gaze_chunks < 1 || spec.periocular_images < 1) {
    throw argument_error("aggregation spec counts must be >= 1");
  }
  const auto g_enroll = enrollment_centroids(
      session_centroids(gaze_enroll, core::Modality::gaze, spec.gaze_chunks));
  const auto g_verify = session_centroids(gaze_verify, core::Modality::gaze, spec.gaze_chunks);
  const auto p_enroll = enrollment_centroids(
      session_centroids(peri_enroll, core::Modality::periocular, spec.periocular_images));
  const auto p_verify =
      session_centroids(peri_verify, core::Modality::periocular, spec.periocular_images);

  std::set<std::string> common;
  for (const auto& [subject, cent] : g_enroll) {
    if (p_enroll.count(subject) > 0) common.insert(subject);
  }

  std::vector<fusion::ScorePair> pairs;
  for (const auto& [key, g_probe] : g_verify) {
    if (common.count(key.first) == 0) continue;
    auto p_it = p_verify.find(key);
    if (p_it == p_verify.end()) {
      log_warn("probe (" + key.first + ", " + key.second +
               ") lacks a periocular counterpart; skipped");
      continue;
    }
    for (const auto& gallery : common) {
      fusion::ScorePair pair;
      pair.probe_subject = key.first;
      pair.gallery_subject = gallery;
      pair.s_gaze = metriclearn::cosine_similarity(g_probe, g_enroll.at(gallery));
      pair.s_periocular = metriclearn::cosine_similarity(p_it->second, p_enroll.at(gallery));
      pair.genuine = gallery == key.first;
      pairs.push_back(std::move(pair));
    }
  }
  if (pairs.empty()) {
    throw protocol_error("no bimodal probe/gallery pairs could be built");
  }
  return pairs;
}

ScoreSet score_set_from_pairs(const std::vector<fusion::ScorePair>& pairs,
                              const fusion::FusionWeights& w) {
  ScoreSet scores;
  for (const auto& p : pairs) {
    const double s = fusion::sf1_fuse(p.s_gaze, p.s_periocular, w);
    if (p.genuine) scores.genuine.push_back(s);
    else scores.impostor.push_back(s);
  }
  return scores;
}

core::EmbeddingSet fuse_embedding_sets(const core::EmbeddingSet& gaze,
                                       const core::EmbeddingSet& peri,
                                       const fusion::AggregationSpec& spec,
                                       const metriclearn::LinearFusionModel* model) {
  const auto g_cents = session_centroids(gaze, core::Modality::gaze, spec.gaze_chunks);
  const auto p_cents =
      session_centroids(peri, core::Modality::periocular, spec.periocular_images);
  core::EmbeddingSet fused;
  for (const auto& [key, g] : g_cents) {
    auto p_it = p_cents.find(key);
    if (p_it == p_cents.end()) continue;
    core::EmbeddingRecord rec;
    rec.subject = key.first;
    rec.session = key.second;
    rec.modality = core::Modality::fused;
    rec.chunk = 0;
    rec.vector = model != nullptr ? fusion::ef1_apply(*model, g, p_it->second)
                                  : fusion::ef2_concat(g, p_it->second);
    fused.add(std::move(rec));
  }
  if (fused.empty()) throw protocol_error("no session is covered by both modalities");
  return fused;
}

EvalReport evaluate_protocol(const ProtocolData& data, const MethodSpec& method,
                             const fusion::AggregationSpec& spec,
                             const std::vector<double>& far_targets, FrrMode mode) {
  auto require = [](const core::EmbeddingSet* set, const char* name) -> const core::EmbeddingSet& {
    if (set == nullptr) throw argument_error(std::string("evaluate_protocol: missing ") + name);
    return *set;
  };

  ScoreSet scores;
  switch (method.method) {
    case Method::ema:
      scores = build_trial_scores(require(data.gaze_enroll, "gaze enrollment set"),
                                  require(data.gaze_verify, "gaze verification set"), spec);
      break;
    case Method::pia:
      scores = build_trial_scores(require(data.peri_enroll, "periocular enrollment set"),
                                  require(data.peri_verify, "periocular verification set"), spec);
      break;
    case Method::sf1:
    case Method::sf2_rank_opt:
    case Method::sf2_rank1_opt: {
      const auto pairs = build_score_pairs(require(data.gaze_enroll, "gaze enrollment set"),
                                           require(data.gaze_verify, "gaze verification set"),
                                           require(data.peri_enroll, "periocular enrollment set"),
                                           require(data.peri_verify, "periocular verification set"),
                                           spec);
      scores = score_set_from_pairs(pairs, method.weights);
      break;
    }
    case Method::ef1:
    case Method::ef2: {
      const metriclearn::LinearFusionModel* model = nullptr;
      if (method.method == Method::ef1) {
        if (method.model == nullptr) throw argument_error("evaluate_protocol: EF1 needs a model");
        model = method.model;
      }
      const auto fused_enroll =
          fuse_embedding_sets(require(data.gaze_enroll, "gaze enrollment set"),
                              require(data.peri_enroll, "periocular enrollment set"), spec, model);
      const auto fused_verify =
          fuse_embedding_sets(require(data.gaze_verify, "gaze verification set"),
                              require(data.peri_verify, "periocular verification set"), spec, model);
      scores = build_trial_scores(fused_enroll, fused_verify, spec);
      break;
    }
  }

  const auto curve = roc_curve(scores);
  EvalReport report;
  report.condition.gaze_seconds = 5.0 * static_cast<double>(spec.gaze_chunks);
  report.condition.images = spec.periocular_images;
  report.condition.method = to_string(method.method);
  report.eer = eer(curve);
  for (double target : far_targets) {
    report.frr_at[target] = frr_at_far(curve, target, mode);
  }
  report.n_genuine = scores.genuine.size();
  report.n_impostor = scores.impostor.size();
  return report;
}

}  // namespace ocufuse::evalkit

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocufuse/core.hpp"
#include "ocufuse/fusion.hpp"

namespace ocufuse::evalkit {

// Genuine and impostor cosine similarities for one evaluation condition.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

// Operating points at strictly decreasing thresholds (accept iff score >=
// threshold). FAR is non-decreasing and FRR non-increasing along the list;
// the first point covers FAR = 0 and the last FAR = 1.
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

enum class FrrMode { conservative, interpolated };

struct FrrResult {
  double frr = 1.0;
  // No finite threshold reaches the FAR target; frr reported as 1.
  bool unreachable = false;
  // Fewer impostor pairs than 1/far_target: the target is below resolution.
  bool low_resolution = false;
};

RocCurve roc_curve(const ScoreSet& scores);

// Equal error rate: the FAR = FRR crossing, linearly interpolated between
// the bracketing operating points when no exact crossing exists.
double eer(const RocCurve& curve);

// Conservative mode returns the FRR at the most permissive threshold whose
// FAR does not exceed the target; interpolated mode interpolates FRR between
// the bracketing FAR values.
FrrResult frr_at_far(const RocCurve& curve, double far_target,
                     FrrMode mode = FrrMode::conservative);

struct EvalCondition {
  double gaze_seconds = 5.0;
  std::size_t images = 1;
  std::string method;
};

struct EvalReport {
  EvalCondition condition;
  double eer = 0.0;
  std::map<double, FrrResult> frr_at;  // FAR target (fraction) -> result
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

struct FidoResult {
  bool pass = false;
  double frr = 1.0;
  double verification_seconds = 0.0;
  std::string reason;
};

// FIDO conformance: FRR at FAR 0.002% no greater than 3% within a
// verification duration of at most 30 seconds.
FidoResult fido_check(const EvalReport& report, double verification_seconds);

// Enrollment/verification trial scores for one modality. Enrollment
// centroids use the first sorted session per subject; every verification
// session yields one probe. Genuine pairs are same-subject, impostor pairs
// are each probe against every other subject's enrollment centroid.
ScoreSet build_trial_scores(const core::EmbeddingSet& enroll, const core::EmbeddingSet& verify,
                            const fusion::AggregationSpec& spec);

// Aligned bimodal pairs for score-level fusion: same traversal as
// build_trial_scores restricted to subjects covered by both modalities.
std::vector<fusion::ScorePair> build_score_pairs(const core::EmbeddingSet& gaze_enroll,
                                                 const core::EmbeddingSet& gaze_verify,
                                                 const core::EmbeddingSet& peri_enroll,
                                                 const core::EmbeddingSet& peri_verify,
                                                 const fusion::AggregationSpec& spec);

ScoreSet score_set_from_pairs(const std::vector<fusion::ScorePair>& pairs,
                              const fusion::FusionWeights& w);

enum class Method { ema, pia, sf1, sf2_rank_opt, sf2_rank1_opt, ef1, ef2 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct MethodSpec {
  Method method = Method::ema;
  fusion::FusionWeights weights;                       // sf1 / sf2
  const metriclearn::LinearFusionModel* model = nullptr;  // ef1
};

struct ProtocolData {
  const core::EmbeddingSet* gaze_enroll = nullptr;
  const core::EmbeddingSet* gaze_verify = nullptr;
  const core::EmbeddingSet* peri_enroll = nullptr;
  const core::EmbeddingSet* peri_verify = nullptr;
};

// One report cell: trial scores -> fusion -> ROC -> EER and FRR@FAR.
// Unimodal methods touch only their own modality's sets.
EvalReport evaluate_protocol(const ProtocolData& data, const MethodSpec& method,
                             const fusion::AggregationSpec& spec,
                             const std::vector<double>& far_targets = {2e-5},
                             FrrMode mode = FrrMode::conservative);

// Per-(subject, session) centroids over the first `count` chunks (0 = all).
// Used by the protocol builders and by embedding-level fusion.
std::map<std::pair<std::string, std::string>, std::vector<double>> session_centroids(
    const core::EmbeddingSet& set, core::Modality modality, std::size_t count);

// Embedding-level fusion of per-session centroids: ef1_apply through the
// model when one is given, ef2_concat otherwise. Sessions lacking either
// modality are dropped.
core::EmbeddingSet fuse_embedding_sets(const core::EmbeddingSet& gaze,
                                       const core::EmbeddingSet& peri,
                                       const fusion::AggregationSpec& spec,
                                       const metriclearn::LinearFusionModel* model);

}  // namespace ocufuse::evalkit

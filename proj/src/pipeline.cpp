#include "ocufuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <sstream>

#include "ocufuse/error.hpp"
#include "ocufuse/fusion.hpp"
#include "ocufuse/gazeprep.hpp"
#include "ocufuse/logging.hpp"
#include "ocufuse/reliability.hpp"
#include "ocufuse/rng.hpp"

namespace ocufuse::pipeline {

namespace {

using nlohmann::json;

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// "0.002" -> "0p002" for CSV column names.
std::string pct_key(double pct) {
  std::string s = fmt(pct);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

evalkit::FrrMode primary_mode(const std::string& mode) {
  if (mode == "interpolated") return evalkit::FrrMode::interpolated;
  if (mode == "conservative" || mode == "both") return evalkit::FrrMode::conservative;
  throw argument_error("frr_mode must be conservative, interpolated, or both");
}

const std::vector<std::string> kCanonicalMethods{"EMA",           "PIA", "SF1",
                                                 "SF2-rank-opt",  "SF2-rank1-opt",
                                                 "EF1",           "EF2"};

}  // namespace

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  if (!doc.is_object()) throw schema_error("config must be a JSON object");
  try {
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("synth")) {
      const auto& s = doc.at("synth");
      if (s.contains("n_subjects")) cfg.synth.n_subjects = s.at("n_subjects").get<std::size_t>();
      if (s.contains("rounds")) cfg.synth.rounds = s.at("rounds").get<std::size_t>();
      if (s.contains("gaze_dim")) cfg.synth.gaze_dim = s.at("gaze_dim").get<std::size_t>();
      if (s.contains("peri_dim")) cfg.synth.peri_dim = s.at("peri_dim").get<std::size_t>();
      if (s.contains("gaze_chunks")) cfg.synth.gaze_chunks = s.at("gaze_chunks").get<std::size_t>();
      if (s.contains("peri_chunks")) cfg.synth.peri_chunks = s.at("peri_chunks").get<std::size_t>();
      if (s.contains("gaze_within")) cfg.synth.gaze_within = s.at("gaze_within").get<double>();
      if (s.contains("gaze_between")) cfg.synth.gaze_between = s.at("gaze_between").get<double>();
      if (s.contains("peri_within")) cfg.synth.peri_within = s.at("peri_within").get<double>();
      if (s.contains("peri_between")) cfg.synth.peri_between = s.at("peri_between").get<double>();
      if (s.contains("persistence")) cfg.synth.persistence = s.at("persistence").get<double>();
      if (s.contains("noisy_fraction")) cfg.synth.noisy_fraction = s.at("noisy_fraction").get<double>();
      if (s.contains("noisy_multiplier")) {
        cfg.synth.noisy_multiplier = s.at("noisy_multiplier").get<double>();
      }
    }
    if (doc.contains("paths")) {
      const auto& p = doc.at("paths");
      if (p.contains("gaze_embeddings")) cfg.gaze_embeddings_path = p.at("gaze_embeddings");
      if (p.contains("peri_embeddings")) cfg.peri_embeddings_path = p.at("peri_embeddings");
    }
    if (doc.contains("protocol")) {
      const auto& p = doc.at("protocol");
      if (p.contains("gaze_lengths")) cfg.gaze_lengths = p.at("gaze_lengths").get<std::vector<double>>();
      if (p.contains("image_counts")) {
        cfg.image_counts = p.at("image_counts").get<std::vector<std::size_t>>();
      }
      if (p.contains("methods")) cfg.methods = p.at("methods").get<std::vector<std::string>>();
    }
    if (doc.contains("fusion")) {
      const auto& f = doc.at("fusion");
      if (f.contains("w_opt")) cfg.w_opt = f.at("w_opt").get<double>();
      if (f.contains("sweep_step")) cfg.sweep_step = f.at("sweep_step").get<double>();
      if (f.contains("sf2_shared_weights")) cfg.sf2_shared_weights = f.at("sf2_shared_weights");
    }
    if (doc.contains("ef1")) {
      const auto& e = doc.at("ef1");
      if (e.contains("out_dim")) cfg.ef1_out_dim = e.at("out_dim").get<std::size_t>();
      if (e.contains("max_epochs")) cfg.ef1_max_epochs = e.at("max_epochs").get<std::size_t>();
      if (e.contains("validate_every")) {
        cfg.ef1_validate_every = e.at("validate_every").get<std::size_t>();
      }
      if (e.contains("learning_rate")) cfg.ef1_learning_rate = e.at("learning_rate").get<double>();
      if (e.contains("train_sessions")) {
        cfg.ef1_train_sessions = e.at("train_sessions").get<std::size_t>();
      }
      if (e.contains("per_condition")) cfg.ef1_per_condition = e.at("per_condition");
    }
    if (doc.contains("far_targets")) {
      cfg.far_targets_pct = doc.at("far_targets").get<std::vector<double>>();
    }
    if (doc.contains("frr_mode")) cfg.frr_mode = doc.at("frr_mode");
    if (doc.contains("reliability")) {
      const auto& r = doc.at("reliability");
      if (r.contains("enabled")) cfg.reliability_enabled = r.at("enabled");
      if (r.contains("normality_draws")) {
        cfg.normality_draws = r.at("normality_draws").get<std::size_t>();
      }
    }
    if (doc.contains("threads")) cfg.threads = doc.at("threads").get<int>();
  } catch (const json::exception& e) {
    throw schema_error(std::string("config: ") + e.what());
  }
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw argument_error("--set expects key.path=value, got \"" + assignment + "\"");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw argument_error("--set: empty key segment in \"" + path + "\"");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw io_error("cannot write " + tmp);
    out << content;
    if (!out) throw io_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::pair<core::EmbeddingSet, core::EmbeddingSet> split_by_session(const core::EmbeddingSet& set,
                                                                   core::Modality modality) {
  std::map<std::string, std::string> first_session;
  for (const auto& [key, positions] : set.index()) {
    if (std::get<2>(key) != modality) continue;
    auto it = first_session.find(std::get<0>(key));
    if (it == first_session.end() || std::get<1>(key) < it->second) {
      first_session[std::get<0>(key)] = std::get<1>(key);
    }
  }
  core::EmbeddingSet enroll;
  core::EmbeddingSet verify;
  for (const auto& rec : set.records()) {
    if (rec.modality != modality) continue;
    if (first_session.at(rec.subject) == rec.session) enroll.add(rec);
    else verify.add(rec);
  }
  return {std::move(enroll), std::move(verify)};
}

core::EmbeddingSet filter_subjects(const core::EmbeddingSet& set,
                                   const std::set<std::string>& subjects) {
  core::EmbeddingSet out;
  for (const auto& rec : set.records()) {
    if (subjects.count(rec.subject) > 0) out.add(rec);
  }
  return out;
}

json model_to_json(const metriclearn::Ef1TrainResult& result) {
  json doc;
  doc["in_dim"] = result.model.in_dim();
  doc["out_dim"] = result.model.out_dim();
  doc["seed"] = result.model.seed;
  doc["weights"] = result.model.weights.data;  // row-major
  doc["best_epoch"] = result.best_epoch;
  doc["best_val_frr"] = result.best_val_frr;
  json log = json::array();
  for (const auto& entry : result.log) {
    json e;
    e["epoch"] = entry.epoch;
    e["loss"] = entry.loss;
    // null marks epochs without a validation pass
    e["val_frr"] = std::isnan(entry.val_frr) ? json(nullptr) : json(entry.val_frr);
    e["val_eer"] = std::isnan(entry.val_eer) ? json(nullptr) : json(entry.val_eer);
    log.push_back(std::move(e));
  }
  doc["training_log"] = std::move(log);
  return doc;
}

metriclearn::LinearFusionModel model_from_json(const json& doc) {
  metriclearn::LinearFusionModel model;
  try {
    const auto in_dim = doc.at("in_dim").get<std::size_t>();
    const auto out_dim = doc.at("out_dim").get<std::size_t>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.weights = metriclearn::Matrix(out_dim, in_dim);
    const auto weights = doc.at("weights").get<std::vector<double>>();
    if (weights.size() != out_dim * in_dim) {
      throw schema_error("model weights length does not match in_dim * out_dim");
    }
    model.weights.data = weights;
  } catch (const json::exception& e) {
    throw schema_error(std::string("model file: ") + e.what());
  }
  return model;
}

namespace {

struct SplitSets {
  core::EmbeddingSet gaze_enroll, gaze_verify, peri_enroll, peri_verify;

  evalkit::ProtocolData data() const {
    return {&gaze_enroll, &gaze_verify, &peri_enroll, &peri_verify};
  }
};

SplitSets make_split_sets(const core::EmbeddingSet& gaze, const core::EmbeddingSet& peri) {
  SplitSets s;
  std::tie(s.gaze_enroll, s.gaze_verify) = split_by_session(gaze, core::Modality::gaze);
  std::tie(s.peri_enroll, s.peri_verify) = split_by_session(peri, core::Modality::periocular);
  return s;
}

SplitSets filter_split(const SplitSets& s, const std::set<std::string>& subjects) {
  SplitSets out;
  out.gaze_enroll = filter_subjects(s.gaze_enroll, subjects);
  out.gaze_verify = filter_subjects(s.gaze_verify, subjects);
  out.peri_enroll = filter_subjects(s.peri_enroll, subjects);
  out.peri_verify = filter_subjects(s.peri_verify, subjects);
  return out;
}

// Probe-vs-gallery similarity matrices for both matchers plus the mate
// indices, from the tuning half. Inputs to the rank-based weight computation.
struct RankInputs {
  std::vector<metriclearn::Matrix> sims;  // [gaze, periocular]
  std::vector<std::size_t> true_identity;
};

RankInputs build_rank_inputs(const SplitSets& sets, const fusion::AggregationSpec& spec) {
  const auto g_enroll =
      evalkit::session_centroids(sets.gaze_enroll, core::Modality::gaze, spec.gaze_chunks);
  const auto g_verify =
      evalkit::session_centroids(sets.gaze_verify, core::Modality::gaze, spec.gaze_chunks);
  const auto p_enroll = evalkit::session_centroids(sets.peri_enroll, core::Modality::periocular,
                                                   spec.periocular_images);
  const auto p_verify = evalkit::session_centroids(sets.peri_verify, core::Modality::periocular,
                                                   spec.periocular_images);

  std::vector<std::string> gallery;
  for (const auto& [key, cent] : g_enroll) {
    if (p_enroll.count({key.first, key.second}) > 0 ||
        std::any_of(p_enroll.begin(), p_enroll.end(),
                    [&](const auto& kv) { return kv.first.first == key.first; })) {
      gallery.push_back(key.first);
    }
  }
  std::map<std::string, std::size_t> gallery_index;
  std::map<std::string, std::vector<double>> g_gallery, p_gallery;
  for (const auto& subject : gallery) gallery_index.emplace(subject, gallery_index.size());
  for (const auto& [key, cent] : g_enroll) {
    if (gallery_index.count(key.first) > 0) g_gallery.try_emplace(key.first, cent);
  }
  for (const auto& [key, cent] : p_enroll) {
    if (gallery_index.count(key.first) > 0) p_gallery.try_emplace(key.first, cent);
  }

  RankInputs inputs;
  std::vector<std::pair<std::string, std::pair<std::vector<double>, std::vector<double>>>> probes;
  for (const auto& [key, g_cent] : g_verify) {
    auto p_it = p_verify.find(key);
    if (p_it == p_verify.end() || gallery_index.count(key.first) == 0) continue;
    probes.push_back({key.first, {g_cent, p_it->second}});
  }
  if (probes.empty()) throw protocol_error("rank-weight tuning has no usable probes");

  metriclearn::Matrix g_sims(probes.size(), gallery.size());
  metriclearn::Matrix p_sims(probes.size(), gallery.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    inputs.true_identity.push_back(gallery_index.at(probes[i].first));
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      g_sims.at(i, g) =
          metriclearn::cosine_similarity(probes[i].second.first, g_gallery.at(gallery[g]));
      p_sims.at(i, g) =
          metriclearn::cosine_similarity(probes[i].second.second, p_gallery.at(gallery[g]));
    }
  }
  inputs.sims.push_back(std::move(g_sims));
  inputs.sims.push_back(std::move(p_sims));
  return inputs;
}

json frr_block(const evalkit::RocCurve& curve, const std::vector<double>& targets_pct,
               const std::string& mode) {
  json out = json::object();
  for (double pct : targets_pct) {
    const double frac = pct / 100.0;
    json entry;
    if (mode == "conservative" || mode == "both") {
      const auto res = evalkit::frr_at_far(curve, frac, evalkit::FrrMode::conservative);
      entry["frr"] = res.frr;
      entry["frr_pct"] = res.frr * 100.0;
      entry["unreachable"] = res.unreachable;
      entry["low_resolution"] = res.low_resolution;
    }
    if (mode == "interpolated" || mode == "both") {
      const auto res = evalkit::frr_at_far(curve, frac, evalkit::FrrMode::interpolated);
      if (mode == "interpolated") {
        entry["frr"] = res.frr;
        entry["frr_pct"] = res.frr * 100.0;
        entry["unreachable"] = res.unreachable;
        entry["low_resolution"] = res.low_resolution;
      } else {
        entry["interpolated_frr"] = res.frr;
      }
    }
    out[fmt(pct)] = std::move(entry);
  }
  return out;
}

json cell_from_scores(const evalkit::ScoreSet& scores, double gaze_seconds, std::size_t images,
                      const std::string& method, const std::vector<double>& targets_pct,
                      const std::string& mode, const std::string& eval_subjects) {
  const auto curve = evalkit::roc_curve(scores);
  json cell;
  cell["gaze_seconds"] = gaze_seconds;
  cell["images"] = images;
  cell["method"] = method;
  cell["eer"] = evalkit::eer(curve);
  cell["eer_pct"] = evalkit::eer(curve) * 100.0;
  cell["frr"] = frr_block(curve, targets_pct, mode);
  cell["n_genuine"] = scores.genuine.size();
  cell["n_impostor"] = scores.impostor.size();
  cell["eval_subjects"] = eval_subjects;
  return cell;
}

struct ConditionOutput {
  json cells = json::array();
  json sweep;
  json sf2_weights = json::object();
};

json weights_to_json(const fusion::MatcherWeights& w) {
  json doc;
  doc["variant"] = fusion::to_string(w.variant);
  doc["w_opt"] = w.w_opt;
  doc["raw"] = w.raw;
  doc["normalized"] = w.normalized;
  doc["rescaled"] = w.rescaled;
  doc["final"] = w.final_weights;
  doc["rescale_skipped"] = w.rescale_skipped;
  return doc;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir,
               std::size_t n_gaze_csv) {
  std::filesystem::create_directories(out_dir);

  synthgen::SynthEmbeddingConfig gaze_cfg;
  gaze_cfg.n_subjects = cfg.synth.n_subjects;
  gaze_cfg.rounds = cfg.synth.rounds;
  gaze_cfg.chunks_per_round = cfg.synth.gaze_chunks;
  gaze_cfg.dim = cfg.synth.gaze_dim;
  gaze_cfg.within_spread = cfg.synth.gaze_within;
  gaze_cfg.between_spread = cfg.synth.gaze_between;
  gaze_cfg.persistence = cfg.synth.persistence;
  gaze_cfg.noisy_dim_fraction = cfg.synth.noisy_fraction;
  gaze_cfg.noisy_dim_multiplier = cfg.synth.noisy_multiplier;
  gaze_cfg.seed = mix_seed(cfg.seed, 101);
  gaze_cfg.modality = core::Modality::gaze;

  synthgen::SynthEmbeddingConfig peri_cfg = gaze_cfg;
  peri_cfg.chunks_per_round = cfg.synth.peri_chunks;
  peri_cfg.dim = cfg.synth.peri_dim;
  peri_cfg.within_spread = cfg.synth.peri_within;
  peri_cfg.between_spread = cfg.synth.peri_between;
  peri_cfg.seed = mix_seed(cfg.seed, 102);
  peri_cfg.modality = core::Modality::periocular;

  core::save_embeddings(synthgen::gen_embeddings(gaze_cfg), out_dir / "gaze_embeddings.jsonl");
  core::save_embeddings(synthgen::gen_embeddings(peri_cfg), out_dir / "peri_embeddings.jsonl");

  for (std::size_t i = 0; i < n_gaze_csv; ++i) {
    synthgen::SynthGazeConfig rec_cfg;
    rec_cfg.seed = mix_seed(cfg.seed, 200 + i);
    const std::string name = "gaze_recording_" + std::to_string(i);
    gazeprep::save_gaze_csv(synthgen::gen_gaze_recording("s" + std::to_string(i), "r00", rec_cfg),
                            out_dir / (name + ".csv"));
  }

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["synth"] = {{"n_subjects", cfg.synth.n_subjects},
                       {"rounds", cfg.synth.rounds},
                       {"gaze_dim", cfg.synth.gaze_dim},
                       {"peri_dim", cfg.synth.peri_dim},
                       {"gaze_chunks", cfg.synth.gaze_chunks},
                       {"peri_chunks", cfg.synth.peri_chunks},
                       {"gaze_within", cfg.synth.gaze_within},
                       {"gaze_between", cfg.synth.gaze_between},
                       {"peri_within", cfg.synth.peri_within},
                       {"peri_between", cfg.synth.peri_between},
                       {"persistence", cfg.synth.persistence},
                       {"noisy_fraction", cfg.synth.noisy_fraction},
                       {"noisy_multiplier", cfg.synth.noisy_multiplier}};
  manifest["derived_seeds"] = {{"gaze_embeddings", gaze_cfg.seed},
                               {"peri_embeddings", peri_cfg.seed}};
  manifest["files"] = {"gaze_embeddings.jsonl", "peri_embeddings.jsonl"};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json cmd_eval(const EvalArgs& args) {
  const auto method = evalkit::method_from_string(args.method);
  fusion::AggregationSpec spec{args.gaze_chunks, args.images};

  core::EmbeddingSet gaze, peri;
  SplitSets sets;
  const bool needs_gaze = method != evalkit::Method::pia;
  const bool needs_peri = method != evalkit::Method::ema;
  if (needs_gaze) {
    if (args.gaze_path.empty()) throw argument_error("method " + args.method + " needs --gaze");
    gaze = core::load_embeddings(args.gaze_path, core::Modality::gaze);
    std::tie(sets.gaze_enroll, sets.gaze_verify) = split_by_session(gaze, core::Modality::gaze);
  }
  if (needs_peri) {
    if (args.peri_path.empty()) throw argument_error("method " + args.method + " needs --peri");
    peri = core::load_embeddings(args.peri_path, core::Modality::periocular);
    std::tie(sets.peri_enroll, sets.peri_verify) =
        split_by_session(peri, core::Modality::periocular);
  }

  metriclearn::LinearFusionModel model;
  evalkit::MethodSpec method_spec;
  method_spec.method = method;
  method_spec.weights = fusion::FusionWeights{args.w_g, 1.0 - args.w_g};
  if (method == evalkit::Method::ef1) {
    if (args.model_path.empty()) throw argument_error("EF1 needs --model");
    std::ifstream in(args.model_path);
    if (!in) throw io_error("cannot open " + args.model_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw parse_error(args.model_path + ": " + e.what());
    }
    model = model_from_json(doc);
    method_spec.model = &model;
  }

  std::vector<double> targets_frac;
  for (double pct : args.far_targets_pct) targets_frac.push_back(pct / 100.0);

  const auto report = evalkit::evaluate_protocol(sets.data(), method_spec, spec, targets_frac,
                                                 primary_mode(args.frr_mode));

  json out;
  out["method"] = args.method;
  out["gaze_seconds"] = report.condition.gaze_seconds;
  out["images"] = report.condition.images;
  out["eer"] = report.eer;
  out["eer_pct"] = report.eer * 100.0;
  json frr = json::object();
  for (const auto& [target, res] : report.frr_at) {
    json entry;
    entry["frr"] = res.frr;
    entry["frr_pct"] = res.frr * 100.0;
    entry["unreachable"] = res.unreachable;
    entry["low_resolution"] = res.low_resolution;
    frr[fmt(target * 100.0)] = std::move(entry);
  }
  out["frr"] = std::move(frr);
  out["n_genuine"] = report.n_genuine;
  out["n_impostor"] = report.n_impostor;
  return out;
}

namespace {

struct RunState {
  RunConfig cfg;
  core::EmbeddingSet gaze_all, peri_all;
  SplitSets all_sets;    // full subject pool
  SplitSets val_sets;    // reporting half (EF1 cells)
  SplitSets tune_sets;   // tuning half (SF2 weights, EF1 training)
  std::set<std::string> tune_subjects, val_subjects;
  std::map<std::size_t, metriclearn::Ef1TrainResult> ef1_by_images;  // per image count
  std::map<std::pair<std::size_t, std::size_t>, metriclearn::Ef1TrainResult> ef1_by_condition;
  // Filled when sf2_shared_weights: weights from the first condition, reused
  // by every other condition.
  std::map<fusion::RankVariant, fusion::MatcherWeights> shared_sf2;
};

std::size_t chunks_of(double gaze_seconds) {
  const double chunks = gaze_seconds / 5.0;
  if (chunks < 1.0 || chunks != std::floor(chunks)) {
    throw argument_error("gaze length " + fmt(gaze_seconds) +
                         " s is not a positive multiple of the 5 s window");
  }
  return static_cast<std::size_t>(chunks);
}

void validate_config(const RunConfig& cfg) {
  if (cfg.gaze_lengths.empty() || cfg.image_counts.empty() || cfg.methods.empty()) {
    throw argument_error("protocol lists must be non-empty");
  }
  for (double n : cfg.gaze_lengths) chunks_of(n);
  for (std::size_t k : cfg.image_counts) {
    if (k < 1) throw argument_error("image counts must be >= 1");
  }
  for (const auto& m : cfg.methods) {
    if (std::find(kCanonicalMethods.begin(), kCanonicalMethods.end(), m) ==
        kCanonicalMethods.end()) {
      throw argument_error("unknown method \"" + m + "\"");
    }
  }
  for (double pct : cfg.far_targets_pct) {
    if (pct <= 0.0 || pct >= 100.0) throw argument_error("far targets must be percentages in (0, 100)");
  }
  if (cfg.w_opt <= 0.0 || cfg.w_opt > 1.0) throw argument_error("w_opt must be in (0, 1]");
  primary_mode(cfg.frr_mode);
  if (cfg.threads < 1) throw argument_error("threads must be >= 1");
  if (!cfg.gaze_embeddings_path.empty() && !std::filesystem::exists(cfg.gaze_embeddings_path)) {
    throw argument_error("gaze embeddings path does not exist: " + cfg.gaze_embeddings_path);
  }
  if (!cfg.peri_embeddings_path.empty() && !std::filesystem::exists(cfg.peri_embeddings_path)) {
    throw argument_error("periocular embeddings path does not exist: " + cfg.peri_embeddings_path);
  }
  if (cfg.gaze_embeddings_path.empty() != cfg.peri_embeddings_path.empty()) {
    throw argument_error("provide both embedding paths or neither");
  }
}

bool wants(const RunConfig& cfg, const std::string& method) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
}

metriclearn::Ef1TrainResult train_ef1_for(const RunState& state, std::size_t gaze_chunks,
                                          std::size_t images) {
  metriclearn::Ef1TrainConfig tc;
  tc.out_dim = state.cfg.ef1_out_dim;
  tc.learning_rate = state.cfg.ef1_learning_rate;
  tc.max_epochs = state.cfg.ef1_max_epochs;
  tc.validate_every = state.cfg.ef1_validate_every;
  tc.seed = state.cfg.seed;  // root seed flows straight into EF1
  tc.gaze_chunks = gaze_chunks;
  tc.periocular_images = images;
  tc.train_sessions = state.cfg.ef1_train_sessions;
  return metriclearn::train_ef1(state.gaze_all, state.peri_all, state.tune_subjects,
                                state.val_subjects, tc);
}

ConditionOutput run_condition(const RunState& state, double gaze_seconds, std::size_t images) {
  const RunConfig& cfg = state.cfg;
  const fusion::AggregationSpec spec{chunks_of(gaze_seconds), images};
  const auto mode = cfg.frr_mode;
  ConditionOutput out;

  const bool any_score_fusion = wants(cfg, "EMA") || wants(cfg, "PIA") || wants(cfg, "SF1") ||
                                wants(cfg, "SF2-rank-opt") || wants(cfg, "SF2-rank1-opt");
  std::vector<fusion::ScorePair> pairs;
  if (any_score_fusion) {
    pairs = evalkit::build_score_pairs(state.all_sets.gaze_enroll, state.all_sets.gaze_verify,
                                       state.all_sets.peri_enroll, state.all_sets.peri_verify,
                                       spec);
  }

  auto add_pair_cell = [&](const std::string& method, const fusion::FusionWeights& w, json extra) {
    auto scores = evalkit::score_set_from_pairs(pairs, w);
    json cell = cell_from_scores(scores, gaze_seconds, images, method, cfg.far_targets_pct, mode,
                                 "all");
    for (auto& [key, value] : extra.items()) cell[key] = value;
    out.cells.push_back(std::move(cell));
  };

  if (wants(cfg, "EMA")) add_pair_cell("EMA", {1.0, 0.0}, json::object());
  if (wants(cfg, "PIA")) add_pair_cell("PIA", {0.0, 1.0}, json::object());

  if (wants(cfg, "SF1")) {
    std::vector<double> targets_frac;
    for (double pct : cfg.far_targets_pct) targets_frac.push_back(pct / 100.0);
    const auto rows = fusion::sf1_weight_sweep(pairs, targets_frac, cfg.sweep_step);
    const auto best = std::min_element(rows.begin(), rows.end(),
                                       [](const fusion::SweepRow& a, const fusion::SweepRow& b) {
                                         if (a.eer != b.eer) return a.eer < b.eer;
                                         return a.w_g < b.w_g;  // deterministic tie-break
                                       });
    json sweep_rows = json::array();
    for (const auto& row : rows) {
      json r;
      r["w_g"] = row.w_g;
      r["eer"] = row.eer;
      json frr = json::object();
      for (const auto& [target, value] : row.frr_at) frr[fmt(target * 100.0)] = value;
      r["frr"] = std::move(frr);
      sweep_rows.push_back(std::move(r));
    }
    out.sweep = std::move(sweep_rows);
    add_pair_cell("SF1", {best->w_g, 1.0 - best->w_g}, json{{"w_g", best->w_g}});
  }

  const bool any_sf2 = wants(cfg, "SF2-rank-opt") || wants(cfg, "SF2-rank1-opt");
  if (any_sf2) {
    std::optional<RankInputs> rank_inputs;
    if (!cfg.sf2_shared_weights) rank_inputs = build_rank_inputs(state.tune_sets, spec);
    for (const auto variant : {fusion::RankVariant::rank_opt, fusion::RankVariant::rank1_opt}) {
      const std::string name =
          variant == fusion::RankVariant::rank_opt ? "SF2-rank-opt" : "SF2-rank1-opt";
      if (!wants(cfg, name)) continue;
      const auto weights = cfg.sf2_shared_weights
                               ? state.shared_sf2.at(variant)
                               : fusion::compute_matcher_weights(rank_inputs->sims,
                                                                 rank_inputs->true_identity,
                                                                 {variant, cfg.w_opt});
      out.sf2_weights[name] = weights_to_json(weights);
      add_pair_cell(name, fusion::to_fusion_weights(weights),
                    json{{"w_g", weights.final_weights[0]}});
    }
  }

  if (wants(cfg, "EF2")) {
    evalkit::MethodSpec ms;
    ms.method = evalkit::Method::ef2;
    std::vector<double> targets_frac;
    for (double pct : cfg.far_targets_pct) targets_frac.push_back(pct / 100.0);
    const auto fused_enroll = evalkit::fuse_embedding_sets(
        state.all_sets.gaze_enroll, state.all_sets.peri_enroll, spec, nullptr);
    const auto fused_verify = evalkit::fuse_embedding_sets(
        state.all_sets.gaze_verify, state.all_sets.peri_verify, spec, nullptr);
    const auto scores = evalkit::build_trial_scores(fused_enroll, fused_verify, spec);
    out.cells.push_back(cell_from_scores(scores, gaze_seconds, images, "EF2",
                                         cfg.far_targets_pct, mode, "all"));
  }

  if (wants(cfg, "EF1")) {
    const metriclearn::Ef1TrainResult* trained = nullptr;
    if (cfg.ef1_per_condition) {
      trained = &state.ef1_by_condition.at({spec.gaze_chunks, images});
    } else {
      trained = &state.ef1_by_images.at(images);
    }
    const auto fused_enroll = evalkit::fuse_embedding_sets(
        state.val_sets.gaze_enroll, state.val_sets.peri_enroll, spec, &trained->model);
    const auto fused_verify = evalkit::fuse_embedding_sets(
        state.val_sets.gaze_verify, state.val_sets.peri_verify, spec, &trained->model);
    const auto scores = evalkit::build_trial_scores(fused_enroll, fused_verify, spec);
    json cell = cell_from_scores(scores, gaze_seconds, images, "EF1", cfg.far_targets_pct, mode,
                                 "val-half");
    cell["ef1_best_epoch"] = trained->best_epoch;
    cell["ef1_out_dim"] = cfg.ef1_out_dim;
    out.cells.push_back(std::move(cell));
  }

  return out;
}

json reliability_rows(const RunState& state) {
  const RunConfig& cfg = state.cfg;
  json rows = json::array();
  if (!cfg.reliability_enabled) return rows;

  const double max_len = *std::max_element(cfg.gaze_lengths.begin(), cfg.gaze_lengths.end());
  const std::size_t max_images =
      *std::max_element(cfg.image_counts.begin(), cfg.image_counts.end());

  // Full distributional analysis runs on one representative condition per
  // family; every condition gets the (cheap) concordance summary.
  auto add_row = [&](const std::string& family, double gaze_seconds, std::size_t images,
                     const reliability::FeatureMatrix& matrix, bool representative,
                     const std::string& subjects, std::size_t row_index) {
    json row;
    row["family"] = family;
    row["gaze_seconds"] = gaze_seconds;
    row["images"] = images;
    row["subjects"] = subjects;
    row["n_features"] = matrix.n_features;
    const auto kcc = reliability::kcc_report(matrix);
    row["kcc_min"] = kcc.min;
    row["kcc_med"] = kcc.median;
    row["kcc_max"] = kcc.max;
    if (representative && matrix.subjects.size() >= 20) {
      const auto normality = reliability::normality_report(
          matrix, cfg.normality_draws, {2.5, 97.5}, mix_seed(cfg.seed, 400 + row_index));
      const auto corr = reliability::intercorrelation(matrix);
      row["normal_count"] = normality.count_normal;
      row["intercorr_median"] = corr.median_abs;
      row["intercorr_max"] = corr.max_abs;
    } else {
      row["normal_count"] = nullptr;
      row["intercorr_median"] = nullptr;
      row["intercorr_max"] = nullptr;
    }
    rows.push_back(std::move(row));
  };

  std::size_t row_index = 0;
  if (wants(cfg, "EMA")) {
    for (double n : cfg.gaze_lengths) {
      const auto matrix = reliability::feature_matrix_from_embeddings(
          state.gaze_all, core::Modality::gaze, chunks_of(n));
      add_row("EMA", n, 0, matrix, n == max_len, "all", row_index++);
    }
  }
  if (wants(cfg, "PIA")) {
    for (std::size_t k : cfg.image_counts) {
      const auto matrix = reliability::feature_matrix_from_embeddings(
          state.peri_all, core::Modality::periocular, k);
      add_row("PIA", 0, k, matrix, k == max_images, "all", row_index++);
    }
  }
  if (wants(cfg, "EF1")) {
    for (double n : cfg.gaze_lengths) {
      for (std::size_t k : cfg.image_counts) {
        const fusion::AggregationSpec spec{chunks_of(n), k};
        const auto& trained = cfg.ef1_per_condition
                                  ? state.ef1_by_condition.at({spec.gaze_chunks, k})
                                  : state.ef1_by_images.at(k);
        // Fuse per-session centroids over the validation half, mirroring the
        // subjects that produce the EF1 cells.
        core::EmbeddingSet gaze_val = filter_subjects(state.gaze_all, state.val_subjects);
        core::EmbeddingSet peri_val = filter_subjects(state.peri_all, state.val_subjects);
        const auto fused = evalkit::fuse_embedding_sets(gaze_val, peri_val, spec, &trained.model);
        const auto matrix =
            reliability::feature_matrix_from_embeddings(fused, core::Modality::fused, 0);
        add_row("EF1", n, k, matrix, n == max_len && k == max_images, "val-half", row_index++);
      }
    }
  }
  return rows;
}

// (median KCC, cell EER) points across families and conditions.
json fit_from_reliability(const json& rows, const json& cells) {
  std::vector<double> kcc, eer;
  json points = json::array();
  auto cell_eer = [&](const std::string& method, double gaze_seconds,
                      std::size_t images) -> std::optional<double> {
    for (const auto& cell : cells) {
      if (cell.at("method") == method &&
          (gaze_seconds == 0.0 || cell.at("gaze_seconds").get<double>() == gaze_seconds) &&
          (images == 0 || cell.at("images").get<std::size_t>() == images)) {
        return cell.at("eer").get<double>();
      }
    }
    return std::nullopt;
  };
  bool clamped = false;
  for (const auto& row : rows) {
    const std::string family = row.at("family");
    const auto e = cell_eer(family, row.at("gaze_seconds").get<double>(),
                            row.at("images").get<std::size_t>());
    if (!e.has_value()) continue;
    kcc.push_back(row.at("kcc_med").get<double>());
    // Perfectly separated cells report EER 0; the log-space fit needs the
    // same 1e-6 floor the fitter applies to sub-threshold values.
    if (*e < 1e-6) clamped = true;
    eer.push_back(std::max(*e, 1e-6));
    points.push_back({{"family", family},
                      {"kcc_med", kcc.back()},
                      {"eer", *e}});
  }
  json out;
  out["points"] = std::move(points);
  if (kcc.size() < 3) {
    out["fit"] = nullptr;
    out["note"] = "fewer than 3 (KCC, EER) points; fit skipped";
    return out;
  }
  try {
    const auto fit = reliability::fit_exponential(kcc, eer);
    out["fit"] = {{"a", fit.a},
                  {"b", fit.b},
                  {"adj_r2", fit.adj_r2},
                  {"n_points", fit.n_points},
                  {"clamped_inputs", fit.clamped_inputs || clamped}};
  } catch (const statistics_error& e) {
    out["fit"] = nullptr;
    out["note"] = e.what();
  }
  return out;
}

}  // namespace

void cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  validate_config(cfg);

  RunState state;
  state.cfg = cfg;
  if (!cfg.gaze_embeddings_path.empty()) {
    state.gaze_all = core::load_embeddings(cfg.gaze_embeddings_path, core::Modality::gaze);
    state.peri_all = core::load_embeddings(cfg.peri_embeddings_path, core::Modality::periocular);
  } else {
    synthgen::SynthEmbeddingConfig gaze_cfg;
    gaze_cfg.n_subjects = cfg.synth.n_subjects;
    gaze_cfg.rounds = cfg.synth.rounds;
    gaze_cfg.chunks_per_round = cfg.synth.gaze_chunks;
    gaze_cfg.dim = cfg.synth.gaze_dim;
    gaze_cfg.within_spread = cfg.synth.gaze_within;
    gaze_cfg.between_spread = cfg.synth.gaze_between;
    gaze_cfg.persistence = cfg.synth.persistence;
    gaze_cfg.noisy_dim_fraction = cfg.synth.noisy_fraction;
    gaze_cfg.noisy_dim_multiplier = cfg.synth.noisy_multiplier;
    gaze_cfg.seed = mix_seed(cfg.seed, 101);
    gaze_cfg.modality = core::Modality::gaze;
    synthgen::SynthEmbeddingConfig peri_cfg = gaze_cfg;
    peri_cfg.chunks_per_round = cfg.synth.peri_chunks;
    peri_cfg.dim = cfg.synth.peri_dim;
    peri_cfg.within_spread = cfg.synth.peri_within;
    peri_cfg.between_spread = cfg.synth.peri_between;
    peri_cfg.seed = mix_seed(cfg.seed, 102);
    peri_cfg.modality = core::Modality::periocular;
    state.gaze_all = synthgen::gen_embeddings(gaze_cfg);
    state.peri_all = synthgen::gen_embeddings(peri_cfg);
  }

  // Chunk availability must cover the requested conditions.
  for (double n : cfg.gaze_lengths) chunks_of(n);

  state.all_sets = make_split_sets(state.gaze_all, state.peri_all);

  std::set<std::string> common;
  const auto gaze_subjects = state.gaze_all.subjects(core::Modality::gaze);
  for (const auto& s : state.peri_all.subjects(core::Modality::periocular)) {
    if (gaze_subjects.count(s) > 0) common.insert(s);
  }
  if (common.size() < 4) {
    throw protocol_error("need at least 4 subjects covered by both modalities");
  }

  const auto split = core::split_subjects(common, cfg.seed);
  state.tune_subjects = split.part_a;
  state.val_subjects = split.part_b;
  state.tune_sets = filter_split(state.all_sets, state.tune_subjects);
  state.val_sets = filter_split(state.all_sets, state.val_subjects);

  const double max_len = *std::max_element(cfg.gaze_lengths.begin(), cfg.gaze_lengths.end());
  json ef1_doc = json::object();
  if (wants(cfg, "EF1")) {
    if (cfg.ef1_per_condition) {
      for (double n : cfg.gaze_lengths) {
        for (std::size_t k : cfg.image_counts) {
          auto trained = train_ef1_for(state, chunks_of(n), k);
          ef1_doc["n" + fmt(n) + "_k" + std::to_string(k)] = model_to_json(trained);
          state.ef1_by_condition.emplace(std::make_pair(chunks_of(n), k), std::move(trained));
        }
      }
    } else {
      for (std::size_t k : cfg.image_counts) {
        auto trained = train_ef1_for(state, chunks_of(max_len), k);
        ef1_doc["k" + std::to_string(k)] = model_to_json(trained);
        state.ef1_by_images.emplace(k, std::move(trained));
      }
    }
  }

  // Shared-weights mode pins the SF2 rank weights to the first condition.
  if (cfg.sf2_shared_weights &&
      (wants(cfg, "SF2-rank-opt") || wants(cfg, "SF2-rank1-opt"))) {
    const fusion::AggregationSpec first{chunks_of(cfg.gaze_lengths.front()),
                                        cfg.image_counts.front()};
    const auto rank_inputs = build_rank_inputs(state.tune_sets, first);
    for (const auto variant : {fusion::RankVariant::rank_opt, fusion::RankVariant::rank1_opt}) {
      state.shared_sf2.emplace(
          variant, fusion::compute_matcher_weights(rank_inputs.sims, rank_inputs.true_identity,
                                                   {variant, cfg.w_opt}));
    }
  }

  // Condition cells, evaluated in parallel when asked; output order is fixed
  // regardless of the thread count.
  std::vector<std::pair<double, std::size_t>> conditions;
  for (std::size_t k : cfg.image_counts) {
    for (double n : cfg.gaze_lengths) conditions.emplace_back(n, k);
  }
  std::vector<ConditionOutput> outputs(conditions.size());
  if (cfg.threads > 1) {
    std::vector<std::future<ConditionOutput>> futures;
    futures.reserve(conditions.size());
    for (const auto& [n, k] : conditions) {
      futures.push_back(std::async(std::launch::async,
                                   [&state, n = n, k = k] { return run_condition(state, n, k); }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) outputs[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < conditions.size(); ++i) {
      outputs[i] = run_condition(state, conditions[i].first, conditions[i].second);
    }
  }

  json cells = json::array();
  json sweeps = json::object();
  json sf2_weights = json::object();
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    for (auto& cell : outputs[i].cells) cells.push_back(std::move(cell));
    const std::string key =
        "n" + fmt(conditions[i].first) + "_k" + std::to_string(conditions[i].second);
    if (!outputs[i].sweep.is_null()) sweeps[key] = std::move(outputs[i].sweep);
    if (!outputs[i].sf2_weights.empty()) sf2_weights[key] = std::move(outputs[i].sf2_weights);
  }

  // FIDO conformance of every cell carrying the 0.002% target; the
  // verification duration is the gaze length.
  json fido = json::array();
  const bool has_fido_target =
      std::any_of(cfg.far_targets_pct.begin(), cfg.far_targets_pct.end(),
                  [](double pct) { return std::fabs(pct - 0.002) < 1e-12; });
  if (has_fido_target) {
    for (const auto& cell : cells) {
      const auto& entry = cell.at("frr").at("0.002");
      json row;
      row["method"] = cell.at("method");
      row["gaze_seconds"] = cell.at("gaze_seconds");
      row["images"] = cell.at("images");
      const double frr = entry.at("frr").get<double>();
      const double seconds = cell.at("gaze_seconds").get<double>();
      row["frr_pct"] = frr * 100.0;
      row["pass"] = frr <= 0.03 && seconds <= 30.0;
      fido.push_back(std::move(row));
    }
  }

  const json reliability_doc = reliability_rows(state);
  const json fit_doc = fit_from_reliability(reliability_doc, cells);

  json cells_doc;
  cells_doc["seed"] = cfg.seed;
  cells_doc["methods"] = cfg.methods;
  cells_doc["gaze_lengths"] = cfg.gaze_lengths;
  cells_doc["image_counts"] = cfg.image_counts;
  cells_doc["far_targets_pct"] = cfg.far_targets_pct;
  cells_doc["frr_mode"] = cfg.frr_mode;
  cells_doc["n_subjects_total"] = common.size();
  cells_doc["n_subjects_tune"] = state.tune_subjects.size();
  cells_doc["n_subjects_val"] = state.val_subjects.size();
  cells_doc["cells"] = cells;
  cells_doc["sf1_sweep"] = sweeps;
  cells_doc["sf2_weights"] = sf2_weights;
  cells_doc["fido"] = fido;
  cells_doc["reliability"] = reliability_doc;
  cells_doc["eer_vs_kcc"] = fit_doc;

  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "cells.json", cells_doc.dump(2) + "\n");
  write_file_atomic(out_dir / "ef1_models.json", ef1_doc.dump(2) + "\n");
  write_file_atomic(out_dir / "report.csv", render_report_csv(cells_doc));
  write_file_atomic(out_dir / "report.md", render_report_markdown(cells_doc));

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["config"] = {{"gaze_lengths", cfg.gaze_lengths},
                        {"image_counts", cfg.image_counts},
                        {"methods", cfg.methods},
                        {"w_opt", cfg.w_opt},
                        {"sweep_step", cfg.sweep_step},
                        {"ef1_out_dim", cfg.ef1_out_dim},
                        {"ef1_max_epochs", cfg.ef1_max_epochs},
                        {"ef1_validate_every", cfg.ef1_validate_every},
                        {"ef1_learning_rate", cfg.ef1_learning_rate},
                        {"ef1_per_condition", cfg.ef1_per_condition},
                        {"far_targets_pct", cfg.far_targets_pct},
                        {"frr_mode", cfg.frr_mode},
                        {"sf2_shared_weights", cfg.sf2_shared_weights},
                        {"normality_draws", cfg.normality_draws}};
  if (cfg.gaze_embeddings_path.empty()) {
    manifest["synth"] = {{"n_subjects", cfg.synth.n_subjects},
                         {"rounds", cfg.synth.rounds},
                         {"gaze_dim", cfg.synth.gaze_dim},
                         {"peri_dim", cfg.synth.peri_dim},
                         {"gaze_chunks", cfg.synth.gaze_chunks},
                         {"peri_chunks", cfg.synth.peri_chunks},
                         {"gaze_within", cfg.synth.gaze_within},
                         {"gaze_between", cfg.synth.gaze_between},
                         {"peri_within", cfg.synth.peri_within},
                         {"peri_between", cfg.synth.peri_between},
                         {"persistence", cfg.synth.persistence},
                         {"noisy_fraction", cfg.synth.noisy_fraction},
                         {"noisy_multiplier", cfg.synth.noisy_multiplier}};
  } else {
    manifest["paths"] = {{"gaze_embeddings", cfg.gaze_embeddings_path},
                         {"peri_embeddings", cfg.peri_embeddings_path}};
  }
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

struct BlockValue {
  double value = 0.0;
  bool present = false;
};

// One metric block (EER or FRR) as markdown. Rows are grouped by image
// count; a column constant across a group is printed once with a dagger.
std::string render_block(const json& doc, const std::string& title,
                         const std::vector<std::string>& methods,
                         const std::function<BlockValue(const json&)>& metric) {
  const auto gaze_lengths = doc.at("gaze_lengths").get<std::vector<double>>();
  const auto image_counts = doc.at("image_counts").get<std::vector<std::size_t>>();
  const auto& cells = doc.at("cells");

  auto lookup = [&](double n, std::size_t k, const std::string& method) -> BlockValue {
    for (const auto& cell : cells) {
      if (cell.at("method") == method && cell.at("gaze_seconds").get<double>() == n &&
          cell.at("images").get<std::size_t>() == k) {
        return metric(cell);
      }
    }
    return {};
  };

  // Block minimum over present values.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k : image_counts) {
    for (double n : gaze_lengths) {
      for (const auto& m : methods) {
        const auto v = lookup(n, k, m);
        if (v.present) best = std::min(best, v.value);
      }
    }
  }

  std::ostringstream md;
  md << "## " << title << "\n\n";
  md << "| Images | Gaze length (s) |";
  for (const auto& m : methods) md << ' ' << m << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < methods.size(); ++i) md << "---|";
  md << '\n';

  for (std::size_t k : image_counts) {
    // Columns identical across the group share one printed value.
    std::map<std::string, bool> constant;
    for (const auto& m : methods) {
      bool all_same = true;
      BlockValue first = lookup(gaze_lengths.front(), k, m);
      for (double n : gaze_lengths) {
        const auto v = lookup(n, k, m);
        if (v.present != first.present || (v.present && v.value != first.value)) {
          all_same = false;
          break;
        }
      }
      constant[m] = all_same && gaze_lengths.size() > 1;
    }
    for (std::size_t row = 0; row < gaze_lengths.size(); ++row) {
      const double n = gaze_lengths[row];
      md << "| " << k << " | " << fmt(n, "%.4g") << " |";
      for (const auto& m : methods) {
        const auto v = lookup(n, k, m);
        std::string text;
        if (!v.present) {
          text = "-";
        } else if (constant.at(m) && row > 0) {
          text = "";
        } else {
          text = fmt(v.value, "%.4g");
          if (v.value == best) text = "**" + text + "**";
          if (constant.at(m)) text += " †";
        }
        md << ' ' << text << " |";
      }
      md << '\n';
    }
  }
  md << '\n';
  return md.str();
}

}  // namespace

std::string render_report_markdown(const json& cells_doc) {
  if (cells_doc.at("cells").empty()) {
    log_warn("render_report_markdown: no cells; rendering empty tables");
  }
  std::vector<std::string> methods;
  for (const auto& m : kCanonicalMethods) {
    for (const auto& requested : cells_doc.at("methods")) {
      if (requested == m) methods.push_back(m);
    }
  }

  std::ostringstream md;
  md << "# Evaluation report\n\n";
  md << "Lower values are better. Bold marks the best value in a block; † marks a\n"
        "column identical across all gaze lengths of an image-count group.\n\n";
  md << render_block(cells_doc, "EER (%)", methods, [](const json& cell) {
    return BlockValue{cell.at("eer_pct").get<double>(), true};
  });

  const auto targets = cells_doc.at("far_targets_pct").get<std::vector<double>>();
  for (double pct : targets) {
    const std::string key = fmt(pct);
    md << render_block(cells_doc, "FRR at FAR " + key + "% (%)", methods,
                       [key](const json& cell) {
                         const auto& frr = cell.at("frr");
                         if (!frr.contains(key)) return BlockValue{};
                         return BlockValue{frr.at(key).at("frr_pct").get<double>(), true};
                       });
  }
  return md.str();
}

std::string render_report_csv(const json& cells_doc) {
  const auto targets = cells_doc.at("far_targets_pct").get<std::vector<double>>();
  std::ostringstream csv;
  csv << "gaze_seconds,images,method,eer_pct";
  for (double pct : targets) csv << ",frr_at_" << pct_key(pct) << "_pct";
  csv << ",n_genuine,n_impostor\n";
  for (const auto& cell : cells_doc.at("cells")) {
    csv << fmt(cell.at("gaze_seconds").get<double>()) << ','
        << cell.at("images").get<std::size_t>() << ',' << cell.at("method").get<std::string>()
        << ',' << fmt(cell.at("eer_pct").get<double>());
    for (double pct : targets) {
      const std::string key = fmt(pct);
      const auto& frr = cell.at("frr");
      csv << ',';
      if (frr.contains(key)) csv << fmt(frr.at(key).at("frr_pct").get<double>());
    }
    csv << ',' << cell.at("n_genuine").get<std::size_t>() << ','
        << cell.at("n_impostor").get<std::size_t>() << '\n';
  }
  return csv.str();
}

}  // namespace ocufuse::pipeline

// ocufuse: desk-scale multimodal ocular-authentication toolkit.
//
// Subcommands: synth, prep, train-ef1, fuse, eval, reliability, report,
// fido-check, run. Every stage reads and writes plain files so stages can be
// chained from a shell. OCUFUSE_LOG={debug,info,warn,error,quiet} controls
// stderr verbosity.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ocufuse/core.hpp"
#include "ocufuse/error.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/fusion.hpp"
#include "ocufuse/gazeprep.hpp"
#include "ocufuse/logging.hpp"
#include "ocufuse/metriclearn.hpp"
#include "ocufuse/pipeline.hpp"
#include "ocufuse/reliability.hpp"
#include "ocufuse/synthgen.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ocufuse::io_error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ocufuse::parse_error(path + ": " + e.what());
  }
  return doc;
}

ocufuse::pipeline::RunConfig config_from_args(const std::string& config_path,
                                              const std::vector<std::string>& overrides,
                                              std::uint64_t seed, bool seed_given) {
  json doc = json::object();
  if (!config_path.empty()) doc = load_json(config_path);
  for (const auto& assignment : overrides) ocufuse::pipeline::apply_override(doc, assignment);
  auto cfg = ocufuse::pipeline::parse_run_config(doc);
  if (seed_given) cfg.seed = seed;
  return cfg;
}

std::vector<double> parse_far_targets(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string item = csv.substr(start, comma - start);
    if (!item.empty()) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ocufuse::argument_error("bad FAR target \"" + item + "\"");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ocufuse::argument_error("--far-targets is empty");
  return out;
}

// subject__session.csv -> (subject, session); bare stem -> (stem, "r00").
std::pair<std::string, std::string> ids_from_filename(const fs::path& path) {
  const std::string stem = path.stem().string();
  const auto sep = stem.find("__");
  if (sep == std::string::npos) return {stem, "r00"};
  return {stem.substr(0, sep), stem.substr(sep + 2)};
}

int cmd_prep(const std::vector<std::string>& inputs, const std::string& out_dir,
             double rate_hz, std::size_t window_samples, double clamp_limit) {
  namespace gz = ocufuse::gazeprep;
  std::vector<gz::GazeRecording> recordings;
  for (const auto& input : inputs) {
    const auto [subject, session] = ids_from_filename(input);
    recordings.push_back(gz::load_gaze_csv(input, subject, session, rate_hz));
  }

  // Fit standardization on every input window, then apply recording by
  // recording, matching the train-time pipeline order.
  std::vector<gz::VelocityWindow> all_windows;
  for (const auto& rec : recordings) {
    auto windows =
        gz::segment_windows(gz::clamp_velocities(gz::differentiate(rec), clamp_limit),
                            window_samples);
    all_windows.insert(all_windows.end(), windows.begin(), windows.end());
  }
  const auto stats = gz::fit_standardization(all_windows);

  fs::create_directories(out_dir);
  std::string lines;
  char buf[64];
  for (const auto& rec : recordings) {
    const auto windows = gz::preprocess_recording(rec, stats, window_samples, clamp_limit);
    for (const auto& win : windows) {
      json obj;
      obj["subject"] = rec.subject;
      obj["session"] = rec.session;
      obj["window"] = win.window_index;
      json h = json::array();
      json v = json::array();
      for (const auto& row : win.samples) {
        h.push_back(row[0]);
        v.push_back(row[1]);
      }
      obj["h"] = std::move(h);
      obj["v"] = std::move(v);
      lines += obj.dump();
      lines += '\n';
    }
  }
  ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "windows.jsonl", lines);

  json stats_doc;
  std::snprintf(buf, sizeof buf, "%.17g", stats.mean[0]);
  stats_doc["mean"] = {stats.mean[0], stats.mean[1]};
  stats_doc["std"] = {stats.stddev[0], stats.stddev[1]};
  stats_doc["window_samples"] = window_samples;
  stats_doc["clamp_limit"] = clamp_limit;
  stats_doc["sample_rate_hz"] = rate_hz;
  ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "prep_stats.json",
                                       stats_doc.dump(2) + "\n");
  std::printf("wrote %s/windows.jsonl and prep_stats.json\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ocufuse: gaze + periocular authentication fusion toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::uint64_t seed = 42;
  bool seed_given = false;
  int threads = 1;
  std::string frr_mode = "conservative";
  app.add_option("--config", config_path, "JSON run configuration")->capture_default_str();
  app.add_option("--set", overrides, "Override config values: key.path=value")->take_all();
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Root random seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for independent cells");
  auto* frr_mode_opt = app.add_option("--frr-mode", frr_mode, "conservative | interpolated | both");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic embeddings and gaze recordings");
  std::size_t synth_csvs = 2;
  synth->add_option("--gaze-csvs", synth_csvs, "Number of gaze CSV recordings to emit");

  // prep
  auto* prep = app.add_subcommand("prep", "Preprocess gaze CSVs into standardized velocity windows");
  std::vector<std::string> prep_inputs;
  double prep_rate = 72.0;
  std::size_t prep_window = 360;
  double prep_clamp = 1000.0;
  prep->add_option("inputs", prep_inputs, "Gaze CSV files (subject__session.csv)")->required();
  prep->add_option("--rate", prep_rate, "Sample rate in Hz");
  prep->add_option("--window", prep_window, "Window length in samples");
  prep->add_option("--clamp", prep_clamp, "Velocity clamp in deg/s");

  // train-ef1
  auto* train = app.add_subcommand("train-ef1", "Train the linear embedding-fusion model");
  std::string train_gaze, train_peri;
  std::size_t train_out_dim = 256;
  std::size_t train_epochs = 1000;
  std::size_t train_validate = 100;
  double train_lr = 3e-4;
  std::size_t train_chunks = 0;
  std::size_t train_images = 0;
  train->add_option("--gaze", train_gaze, "Gaze embeddings JSONL")->required();
  train->add_option("--peri", train_peri, "Periocular embeddings JSONL")->required();
  train->add_option("--out-dim", train_out_dim, "Fused embedding dimension");
  train->add_option("--epochs", train_epochs, "Maximum training epochs");
  train->add_option("--validate-every", train_validate, "Validation cadence in epochs");
  train->add_option("--lr", train_lr, "Fixed learning rate");
  train->add_option("--gaze-chunks", train_chunks, "Chunks per gaze centroid (0 = all)");
  train->add_option("--images", train_images, "Images per periocular centroid (0 = all)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse score pairs or embeddings");
  std::string fuse_method = "SF1";
  std::string fuse_pairs, fuse_gaze, fuse_peri, fuse_model;
  double fuse_wg = 0.5;
  double fuse_wopt = 0.5;
  fuse->add_option("--method", fuse_method, "SF1 | SF2-rank-opt | SF2-rank1-opt | EF1 | EF2")
      ->capture_default_str();
  fuse->add_option("--pairs", fuse_pairs, "Score-pair CSV (score-level methods)");
  fuse->add_option("--gaze", fuse_gaze, "Gaze embeddings JSONL (embedding-level methods)");
  fuse->add_option("--peri", fuse_peri, "Periocular embeddings JSONL");
  fuse->add_option("--model", fuse_model, "Trained EF1 model JSON");
  fuse->add_option("--w-g", fuse_wg, "Gaze weight for SF1");
  fuse->add_option("--w-opt", fuse_wopt, "Rank-fusion optimization parameter");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate one method at one condition");
  ocufuse::pipeline::EvalArgs eval_args;
  std::string eval_far_csv = "0.002";
  eval->add_option("--gaze", eval_args.gaze_path, "Gaze embeddings JSONL");
  eval->add_option("--peri", eval_args.peri_path, "Periocular embeddings JSONL");
  eval->add_option("--model", eval_args.model_path, "Trained EF1 model JSON");
  eval->add_option("--method", eval_args.method, "EMA|PIA|SF1|SF2-rank-opt|SF2-rank1-opt|EF1|EF2")
      ->capture_default_str();
  eval->add_option("--gaze-chunks", eval_args.gaze_chunks, "Chunks per gaze centroid");
  eval->add_option("--images", eval_args.images, "Images per periocular centroid");
  eval->add_option("--w-g", eval_args.w_g, "Gaze weight for SF1/SF2 scoring");
  eval->add_option("--far-targets", eval_far_csv, "Comma-separated FAR targets in percent");

  // reliability
  auto* rel = app.add_subcommand("reliability", "Concordance, normality, and intercorrelation");
  std::string rel_embeddings, rel_modality = "gaze", rel_corr = "pearson", rel_fit_csv;
  std::size_t rel_chunks = 0;
  std::size_t rel_draws = 1000;
  rel->add_option("--embeddings", rel_embeddings, "Embeddings JSONL")->required();
  rel->add_option("--modality", rel_modality, "gaze | periocular | fused");
  rel->add_option("--chunks", rel_chunks, "Chunks per session centroid (0 = all)");
  rel->add_option("--draws", rel_draws, "Reference draws for the normality bands");
  rel->add_option("--corr", rel_corr, "pearson | spearman");
  rel->add_option("--eer-kcc", rel_fit_csv, "CSV of kcc,eer rows for the exponential fit");

  // report
  auto* report = app.add_subcommand("report", "Render markdown + CSV tables from cells JSON");
  std::string report_cells;
  report->add_option("--cells", report_cells, "cells.json from a run")->required();

  // fido-check
  auto* fido = app.add_subcommand("fido-check", "Check FRR/duration against the FIDO targets");
  double fido_frr_pct = -1.0;
  double fido_seconds = -1.0;
  fido->add_option("--frr-pct", fido_frr_pct, "FRR at FAR 0.002%, in percent")->required();
  fido->add_option("--seconds", fido_seconds, "Verification duration in seconds")->required();

  // run
  auto* run = app.add_subcommand("run", "Full pipeline: synth/load, fuse, evaluate, report");

  CLI11_PARSE(app, argc, argv);
  seed_given = seed_opt->count() > 0;

  try {
    if (*synth) {
      auto cfg = config_from_args(config_path, overrides, seed, seed_given);
      ocufuse::pipeline::cmd_synth(cfg, out_dir, synth_csvs);
      std::printf("synthetic dataset written to %s\n", out_dir.c_str());
      return 0;
    }

    if (*prep) return cmd_prep(prep_inputs, out_dir, prep_rate, prep_window, prep_clamp);

    if (*train) {
      const auto gaze = ocufuse::core::load_embeddings(train_gaze, ocufuse::core::Modality::gaze);
      const auto peri =
          ocufuse::core::load_embeddings(train_peri, ocufuse::core::Modality::periocular);
      std::set<std::string> common;
      for (const auto& s : gaze.subjects()) {
        if (peri.subjects().count(s) > 0) common.insert(s);
      }
      const auto split = ocufuse::core::split_subjects(common, seed);
      ocufuse::metriclearn::Ef1TrainConfig tc;
      tc.out_dim = train_out_dim;
      tc.max_epochs = train_epochs;
      tc.validate_every = train_validate;
      tc.learning_rate = train_lr;
      tc.seed = seed;
      tc.gaze_chunks = train_chunks;
      tc.periocular_images = train_images;
      const auto result =
          ocufuse::metriclearn::train_ef1(gaze, peri, split.part_a, split.part_b, tc);
      fs::create_directories(out_dir);
      ocufuse::pipeline::write_file_atomic(
          fs::path(out_dir) / "ef1_model.json",
          ocufuse::pipeline::model_to_json(result).dump(2) + "\n");
      std::printf("model written to %s/ef1_model.json (best epoch %zu, val FRR %.6g)\n",
                  out_dir.c_str(), result.best_epoch, result.best_val_frr);
      return 0;
    }

    if (*fuse) {
      fs::create_directories(out_dir);
      if (fuse_method == "SF1" || fuse_method == "SF2-rank-opt" ||
          fuse_method == "SF2-rank1-opt") {
        if (fuse_pairs.empty()) throw ocufuse::argument_error(fuse_method + " needs --pairs");
        const auto pairs = ocufuse::fusion::load_score_pairs(fuse_pairs);
        ocufuse::fusion::FusionWeights w{fuse_wg, 1.0 - fuse_wg};
        if (fuse_method != "SF1") {
          // Rank weights from the pair table itself: each probe's row of
          // gallery scores is a ranking; the genuine pair marks the mate.
          std::map<std::string, std::vector<const ocufuse::fusion::ScorePair*>> by_probe;
          for (const auto& p : pairs) by_probe[p.probe_subject].push_back(&p);
          std::vector<ocufuse::metriclearn::Matrix> sims(2);
          std::vector<std::size_t> mates;
          const std::size_t gallery = by_probe.empty() ? 0 : by_probe.begin()->second.size();
          sims[0] = ocufuse::metriclearn::Matrix(by_probe.size(), gallery);
          sims[1] = ocufuse::metriclearn::Matrix(by_probe.size(), gallery);
          std::size_t row = 0;
          for (const auto& [probe, list] : by_probe) {
            if (list.size() != gallery) {
              throw ocufuse::schema_error("probe " + probe + " has a ragged gallery");
            }
            std::size_t mate = gallery;
            for (std::size_t g = 0; g < gallery; ++g) {
              sims[0].at(row, g) = list[g]->s_gaze;
              sims[1].at(row, g) = list[g]->s_periocular;
              if (list[g]->genuine) mate = g;
            }
            if (mate == gallery) {
              throw ocufuse::schema_error("probe " + probe + " has no genuine pair");
            }
            mates.push_back(mate);
            ++row;
          }
          const auto variant = fuse_method == "SF2-rank-opt"
                                   ? ocufuse::fusion::RankVariant::rank_opt
                                   : ocufuse::fusion::RankVariant::rank1_opt;
          const auto mw =
              ocufuse::fusion::compute_matcher_weights(sims, mates, {variant, fuse_wopt});
          w = ocufuse::fusion::to_fusion_weights(mw);
          json wdoc;
          wdoc["variant"] = ocufuse::fusion::to_string(mw.variant);
          wdoc["w_opt"] = mw.w_opt;
          wdoc["raw"] = mw.raw;
          wdoc["normalized"] = mw.normalized;
          wdoc["rescaled"] = mw.rescaled;
          wdoc["final"] = mw.final_weights;
          ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "sf2_weights.json",
                                               wdoc.dump(2) + "\n");
        }
        std::string csv = "probe_subject,gallery_subject,score,genuine\n";
        char buf[64];
        for (const auto& p : pairs) {
          const double fused = ocufuse::fusion::sf1_fuse(p.s_gaze, p.s_periocular, w);
          std::snprintf(buf, sizeof buf, "%.17g", fused);
          csv += p.probe_subject + "," + p.gallery_subject + "," + buf + "," +
                 (p.genuine ? "1" : "0") + "\n";
        }
        ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "fused_scores.csv", csv);
        std::printf("fused scores written to %s/fused_scores.csv (w_g=%.6g)\n", out_dir.c_str(),
                    w.w_g);
        return 0;
      }
      if (fuse_method == "EF1" || fuse_method == "EF2") {
        if (fuse_gaze.empty() || fuse_peri.empty()) {
          throw ocufuse::argument_error(fuse_method + " needs --gaze and --peri");
        }
        const auto gaze = ocufuse::core::load_embeddings(fuse_gaze, ocufuse::core::Modality::gaze);
        const auto peri =
            ocufuse::core::load_embeddings(fuse_peri, ocufuse::core::Modality::periocular);
        ocufuse::metriclearn::LinearFusionModel model;
        const ocufuse::metriclearn::LinearFusionModel* model_ptr = nullptr;
        if (fuse_method == "EF1") {
          if (fuse_model.empty()) throw ocufuse::argument_error("EF1 needs --model");
          model = ocufuse::pipeline::model_from_json(load_json(fuse_model));
          model_ptr = &model;
        }
        const auto fused = ocufuse::evalkit::fuse_embedding_sets(
            gaze, peri, ocufuse::fusion::AggregationSpec{0, 0}, model_ptr);
        ocufuse::core::save_embeddings(fused, fs::path(out_dir) / "fused_embeddings.jsonl");
        std::printf("fused embeddings written to %s/fused_embeddings.jsonl\n", out_dir.c_str());
        return 0;
      }
      throw ocufuse::argument_error("unknown fuse method \"" + fuse_method + "\"");
    }

    if (*eval) {
      eval_args.far_targets_pct = parse_far_targets(eval_far_csv);
      eval_args.frr_mode = frr_mode;
      const auto result = ocufuse::pipeline::cmd_eval(eval_args);
      fs::create_directories(out_dir);
      ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "eval.json",
                                           result.dump(2) + "\n");
      std::printf("%s\n", result.dump(2).c_str());
      return 0;
    }

    if (*rel) {
      const auto modality = ocufuse::core::modality_from_string(rel_modality);
      const auto set = ocufuse::core::load_embeddings(rel_embeddings, modality);
      const auto matrix =
          ocufuse::reliability::feature_matrix_from_embeddings(set, modality, rel_chunks);
      const auto kcc = ocufuse::reliability::kcc_report(matrix);
      const auto normality =
          ocufuse::reliability::normality_report(matrix, rel_draws, {2.5, 97.5}, seed);
      const auto corr = ocufuse::reliability::intercorrelation(
          matrix, rel_corr == "spearman" ? ocufuse::reliability::CorrMethod::spearman
                                         : ocufuse::reliability::CorrMethod::pearson);
      json doc;
      doc["n_subjects"] = matrix.subjects.size();
      doc["n_rounds"] = matrix.rounds.size();
      doc["n_features"] = matrix.n_features;
      doc["kcc"] = {{"min", kcc.min}, {"med", kcc.median}, {"max", kcc.max}};
      doc["normal_count"] = normality.count_normal;
      doc["intercorrelation"] = {{"median", corr.median_abs}, {"max", corr.max_abs}};
      doc["corr_method"] = rel_corr;
      if (!rel_fit_csv.empty()) {
        std::ifstream in(rel_fit_csv);
        if (!in) throw ocufuse::io_error("cannot open " + rel_fit_csv);
        std::vector<double> ks, es;
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty() || line.rfind("kcc", 0) == 0) continue;
          const auto comma = line.find(',');
          if (comma == std::string::npos) {
            throw ocufuse::parse_error(rel_fit_csv + ": expected kcc,eer rows");
          }
          ks.push_back(std::stod(line.substr(0, comma)));
          es.push_back(std::stod(line.substr(comma + 1)));
        }
        const auto fit = ocufuse::reliability::fit_exponential(ks, es);
        doc["eer_vs_kcc"] = {{"a", fit.a},
                             {"b", fit.b},
                             {"adj_r2", fit.adj_r2},
                             {"n_points", fit.n_points},
                             {"clamped_inputs", fit.clamped_inputs}};
      }
      // Per-feature CSV alongside the JSON summary.
      std::string csv = "feature_index,kcc,normal\n";
      char buf[64];
      for (std::size_t f = 0; f < matrix.n_features; ++f) {
        std::snprintf(buf, sizeof buf, "%.17g", kcc.per_feature_w[f]);
        csv += std::to_string(f);
        csv += ',';
        csv += buf;
        csv += ',';
        csv += normality.per_feature_normal[f] ? '1' : '0';
        csv += '\n';
      }
      fs::create_directories(out_dir);
      ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "reliability.json",
                                           doc.dump(2) + "\n");
      ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "reliability.csv", csv);
      std::printf("%s\n", doc.dump(2).c_str());
      return 0;
    }

    if (*report) {
      const auto cells = load_json(report_cells);
      fs::create_directories(out_dir);
      ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "report.md",
                                           ocufuse::pipeline::render_report_markdown(cells));
      ocufuse::pipeline::write_file_atomic(fs::path(out_dir) / "report.csv",
                                           ocufuse::pipeline::render_report_csv(cells));
      std::printf("report written to %s/report.md and report.csv\n", out_dir.c_str());
      return 0;
    }

    if (*fido) {
      ocufuse::evalkit::EvalReport rep;
      ocufuse::evalkit::FrrResult frr;
      frr.frr = fido_frr_pct / 100.0;
      rep.frr_at[2e-5] = frr;
      const auto result = ocufuse::evalkit::fido_check(rep, fido_seconds);
      std::printf("%s: FRR %.6g%% at FAR 0.002%%, %.6g s (%s)\n",
                  result.pass ? "PASS" : "FAIL", fido_frr_pct, fido_seconds,
                  result.reason.c_str());
      return 0;
    }

    if (*run) {
      auto cfg = config_from_args(config_path, overrides, seed, seed_given);
      if (threads_opt->count() > 0) cfg.threads = threads;
      if (frr_mode_opt->count() > 0) cfg.frr_mode = frr_mode;
      ocufuse::pipeline::cmd_run(cfg, out_dir);
      std::printf("run complete; reports under %s\n", out_dir.c_str());
      return 0;
    }
  } catch (const ocufuse::validation_error& e) {
    ocufuse::log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    ocufuse::log_error(std::string("internal error: ") + e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ocufuse/core.hpp"
#include "ocufuse/evalkit.hpp"
#include "ocufuse/metriclearn.hpp"
#include "ocufuse/synthgen.hpp"

namespace ocufuse::pipeline {

// Dataset synthesis block of the run config. The defaults keep the standard
// embedding dimensions (128 gaze, 256 periocular) and mark a fraction of
// each modality's dimensions as unreliable so the desk-scale report shows
// non-trivial error rates and a real fusion benefit.
struct SynthSpec {
  std::size_t n_subjects = 200;
  std::size_t rounds = 3;  // first session enrolls, the rest verify
  std::size_t gaze_dim = 128;
  std::size_t peri_dim = 256;
  std::size_t gaze_chunks = 4;
  std::size_t peri_chunks = 5;
  double gaze_within = 0.9;
  double gaze_between = 1.0;
  double peri_within = 0.6;
  double peri_between = 1.0;
  double persistence = 0.95;
  double noisy_fraction = 0.5;
  double noisy_multiplier = 4.0;
};

struct RunConfig {
  std::uint64_t seed = 42;
  SynthSpec synth;
  std::string gaze_embeddings_path;  // when set, loaded instead of synthesized
  std::string peri_embeddings_path;
  std::vector<double> gaze_lengths{5, 10, 15, 20};
  std::vector<std::size_t> image_counts{1, 5};
  std::vector<std::string> methods{"EMA", "PIA", "SF1", "SF2-rank-opt",
                                   "SF2-rank1-opt", "EF1", "EF2"};
  double w_opt = 0.5;
  double sweep_step = 0.1;
  // Desk-scale training defaults; the full protocol (out_dim 256, 1000
  // epochs, validation every 100) is a config change away.
  std::size_t ef1_out_dim = 64;
  std::size_t ef1_max_epochs = 600;
  std::size_t ef1_validate_every = 100;
  double ef1_learning_rate = 3e-4;
  std::size_t ef1_train_sessions = 0;  // 0 = all sessions
  bool ef1_per_condition = false;      // default: one model per image count
  std::vector<double> far_targets_pct{0.002};
  std::string frr_mode = "conservative";  // conservative | interpolated | both
  bool sf2_shared_weights = false;
  bool reliability_enabled = true;
  std::size_t normality_draws = 300;
  int threads = 1;
};

RunConfig parse_run_config(const nlohmann::json& doc);

// Applies a --set key=value override with a dot-separated path; the value is
// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Full pipeline: synthesis/loading, subject split, per-condition fusion and
// evaluation, reliability analysis, and report files under out_dir. Inputs
// are validated before anything is written.
void cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Individual stages, chained via files by the CLI subcommands.
void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir,
               std::size_t n_gaze_csv = 2);

struct EvalArgs {
  std::string gaze_path;
  std::string peri_path;
  std::string model_path;  // EF1
  std::string method = "EMA";
  std::size_t gaze_chunks = 1;
  std::size_t images = 1;
  double w_g = 0.5;
  std::vector<double> far_targets_pct{0.002};
  std::string frr_mode = "conservative";
};

nlohmann::json cmd_eval(const EvalArgs& args);

// Markdown report with an EER block and an FRR block; per-block minima are
// bold and per-column values identical across a condition group carry the
// identical-values marker.
std::string render_report_markdown(const nlohmann::json& cells_doc);
std::string render_report_csv(const nlohmann::json& cells_doc);

nlohmann::json model_to_json(const metriclearn::Ef1TrainResult& result);
metriclearn::LinearFusionModel model_from_json(const nlohmann::json& doc);

// Writes via a temp file and rename, so readers never observe partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// First sorted session of each subject becomes the enrollment set; all other
// sessions become verification probes.
std::pair<core::EmbeddingSet, core::EmbeddingSet> split_by_session(const core::EmbeddingSet& set,
                                                                   core::Modality modality);

core::EmbeddingSet filter_subjects(const core::EmbeddingSet& set,
                                   const std::set<std::string>& subjects);

}  // namespace ocufuse::pipeline

//
// Copyright 2026 The SpeechDP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef SPEECHDP_PIPELINE_HPP_
#define SPEECHDP_PIPELINE_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "speechdp/dsp.hpp"
#include "speechdp/eval.hpp"
#include "speechdp/nn.hpp"
#include "speechdp/synthdata.hpp"

namespace speechdp {
namespace pipeline {

// Declared output already exists and --force was not given.
class OverwriteRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SeedSpec {
  std::uint64_t split = 1;
  std::uint64_t init = 2;
  std::uint64_t noise = 3;
  std::uint64_t crop = 4;
  std::uint64_t order = 5;
};

struct ModelSpec {
  int n_frames = 180;
  std::vector<nn::ConvBlockConfig> blocks = {{16, 3, 16}, {32, 3, 32}};
  nn::NormKind norm = nn::NormKind::kGroup;
};

struct TrainSpec {
  double lr = 0.0;  // 0 means mode default: 5e-5 non-DP (Adam), 5e-4 DP (NAdam)
  int epochs = 50;
  long dp_steps = 500;
  int batch_size = 128;  // minibatch (non-DP) or expected lot size (DP)
  double clip_norm = 1.5;
  std::optional<double> target_epsilon;
  std::optional<double> sigma;
  double delta = 1e-3;
};

struct AttackSpec {
  int victim_mels = 16;
  int victim_frames = 12;
  std::vector<nn::ConvBlockConfig> victim_blocks = {{4, 3, 2}};
  int iters = 100;
  double lr = 0.1;
  std::uint64_t seed = 7;
  double clip_norm = 1.5;
  std::optional<double> sigma;  // used when attacking a non-DP run in dp mode
  int step = 0;                 // victim training steps before the leak
};

// Versioned experiment configuration; unknown JSON keys are rejected at
// every level so typos cannot silently break paired comparisons.
struct ExperimentConfig {
  int version = 1;
  std::string mode;  // "non_dp" | "dp"
  std::string manifest;
  ModelSpec model;
  TrainSpec train;
  SeedSpec seeds;
  double split_frac = 0.7;
  int repeats = 50;
  std::vector<eval::SubgroupPair> fairness_pairs;  // empty -> defaults
  AttackSpec attack;

  double effective_lr() const;
  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
std::string config_hash(const nlohmann::json& j);

// In-memory feature set for one manifest: full-length log-mel spectrograms
// plus speaker attributes.
struct Features {
  struct Utterance {
    std::string speaker_id;
    std::string sex;
    std::string age_band;
    int label = 0;
    int utt_index = 0;
    dsp::LogMelSpectrogram lms;
  };
  std::vector<std::string> classes;
  std::vector<Utterance> utterances;
  // Unique speakers in manifest order with their class ids.
  std::vector<std::pair<std::string, std::string>> speakers;
  std::map<std::string, std::vector<std::size_t>> utterances_by_speaker;
};

Features compute_features(const std::string& manifest_path);

struct RunRecord {
  std::string run_dir;
  std::string config_hash;
  std::string mode;
  std::string manifest;
  std::vector<std::string> classes;
  std::string checkpoint_path;
  std::string loss_log_path;
  std::string accountant_log_path;  // empty for non-DP
  double sigma = 0.0;               // DP only
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 0.0;
  double best_order = 0.0;
  double wall_seconds = 0.0;
  SeedSpec seeds;
  double split_frac = 0.7;
  int repeats = 50;
  ModelSpec model;
  std::vector<eval::SubgroupPair> fairness_pairs;
  AttackSpec attack;
  double train_lr = 0.0;
  int train_batch = 0;
  double clip_norm = 1.5;
};

RunRecord run_train(const ExperimentConfig& cfg, const std::string& out_dir, bool force);
RunRecord load_run_record(const std::string& run_dir);

struct EvaluateOutputs {
  std::string metrics_csv;
  std::string fairness_json;
  std::string predictions_csv;
  eval::FairnessReport report;
};

// Scores the run's checkpoint on its held-out test split, `repeats` times
// with freshly seeded frame crops. Evaluating the training split is refused
// (leak guard).
EvaluateOutputs run_evaluate(const std::string& run_dir, int repeats, bool force,
                             const std::string& split = "test");

// Gradient-inversion audit of one sample. mode is "raw" (exact single-sample
// gradient) or "dp" (clipped and noised with the run's sigma). sample_id is
// "<speaker>:<utterance>". Returns the report JSON.
nlohmann::json run_attack(const std::string& run_dir, const std::string& sample_id,
                          const std::string& mode, const std::string& out_dir, bool force);

// Figure-data CSVs across a set of evaluated runs (accuracy/PtD/EOD vs
// epsilon, ROC points, Pearson correlations, paired Wilcoxon tests).
void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                bool force);

// Parses a cohort spec JSON (strict keys) and renders the corpus + manifest
// under out_dir. Returns the manifest path.
synth::CohortSpec parse_cohort_spec(const nlohmann::json& j);
std::string run_synth(const std::string& spec_path, const std::string& out_dir, bool force);

// Shortest round-trip decimal formatting; keeps CSV output byte-stable.
std::string format_double(double v);

// Block-mean downsampling of a [rows x cols] matrix (used to fit log-mels to
// the lightweight attack victim).
Mat block_mean_resize(const Mat& m, int out_rows, int out_cols);

}  // namespace pipeline
}  // namespace speechdp

#endif  // SPEECHDP_PIPELINE_HPP_

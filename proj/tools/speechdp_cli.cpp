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

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "speechdp/pipeline.hpp"

namespace {

using speechdp::pipeline::ExperimentConfig;

// Exit codes: 0 ok, 2 config error, 3 overwrite refusal, 4 runtime failure.
constexpr int kOkExit = 0;
constexpr int kConfigExit = 2;
constexpr int kOverwriteExit = 3;
constexpr int kRuntimeExit = 4;

speechdp::pipeline::SeedSpec seeds_from_master(std::uint64_t master) {
  speechdp::pipeline::SeedSpec s;
  s.split = speechdp::Prng::mix(master, 1);
  s.init = speechdp::Prng::mix(master, 2);
  s.noise = speechdp::Prng::mix(master, 3);
  s.crop = speechdp::Prng::mix(master, 4);
  s.order = speechdp::Prng::mix(master, 5);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private speech-disorder classification toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic cohort from a spec file");
  std::string synth_spec, synth_out;
  bool synth_force = false;
  std::int64_t synth_seed = -1;
  synth->add_option("--spec", synth_spec, "Cohort spec JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--force", synth_force, "Overwrite existing outputs");
  synth->add_option("--seed", synth_seed, "Override the spec's master seed");

  // train
  auto* train = app.add_subcommand("train", "Train a non-DP or DP-SGD model");
  std::string train_config, train_out;
  bool train_force = false;
  std::int64_t train_seed = -1;
  double train_epsilon = -1.0, train_sigma = -1.0, train_delta = -1.0;
  train->add_option("--config", train_config, "Experiment config JSON")->required();
  train->add_option("--out", train_out, "Run output directory")->required();
  train->add_flag("--force", train_force, "Overwrite existing outputs");
  train->add_option("--seed", train_seed, "Override all run seeds from one master seed");
  train->add_option("--epsilon", train_epsilon, "Target epsilon (clears any configured sigma)");
  train->add_option("--sigma", train_sigma, "Noise multiplier (clears any configured epsilon)");
  train->add_option("--delta", train_delta, "Privacy delta");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a run on its held-out test split");
  std::string eval_run, eval_split = "test";
  int eval_repeats = 0;
  bool eval_force = false;
  evaluate->add_option("--run", eval_run, "Run directory")->required();
  evaluate->add_option("--repeats", eval_repeats, "Evaluation repeats (default: from config)");
  evaluate->add_option("--split", eval_split, "Split to score (only 'test' is allowed)");
  evaluate->add_flag("--force", eval_force, "Overwrite existing outputs");

  // attack
  auto* attack = app.add_subcommand("attack", "Gradient-inversion audit of one sample");
  std::string attack_run, attack_sample, attack_mode, attack_out;
  bool attack_force = false;
  attack->add_option("--run", attack_run, "Run directory")->required();
  attack->add_option("--sample", attack_sample, "Sample id '<speaker>:<utterance>'")->required();
  attack->add_option("--mode", attack_mode, "raw or dp")->required();
  attack->add_option("--out", attack_out, "Report directory (default inside the run)");
  attack->add_flag("--force", attack_force, "Overwrite existing outputs");

  // report
  auto* report = app.add_subcommand("report", "Figure-data CSVs across evaluated runs");
  std::vector<std::string> report_runs;
  std::string report_out;
  bool report_force = false;
  report->add_option("--out", report_out, "Report output directory")->required();
  report->add_option("runs", report_runs, "Evaluated run directories")->required();
  report->add_flag("--force", report_force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (synth->parsed()) {
      std::string spec_path = synth_spec;
      if (synth_seed >= 0) {
        // Re-parse with the seed substituted; written next to the outputs so
        // the run stays reproducible from on-disk artifacts.
        std::ifstream in(spec_path);
        if (!in) throw speechdp::IoError("cannot open cohort spec: " + spec_path);
        nlohmann::json j;
        in >> j;
        j["master_seed"] = static_cast<std::uint64_t>(synth_seed);
        std::filesystem::create_directories(synth_out);
        const auto effective = std::filesystem::path(synth_out) / "cohort_spec.json";
        std::ofstream out(effective);
        out << j.dump(2) << '\n';
        spec_path = effective.string();
      }
      const std::string manifest = speechdp::pipeline::run_synth(spec_path, synth_out, synth_force);
      std::cout << "manifest: " << manifest << '\n';
    } else if (train->parsed()) {
      ExperimentConfig cfg = speechdp::pipeline::load_experiment_config(train_config);
      if (train_seed >= 0) cfg.seeds = seeds_from_master(static_cast<std::uint64_t>(train_seed));
      if (train_epsilon > 0.0) {
        cfg.train.target_epsilon = train_epsilon;
        cfg.train.sigma.reset();
      }
      if (train_sigma > 0.0) {
        cfg.train.sigma = train_sigma;
        cfg.train.target_epsilon.reset();
      }
      if (train_delta > 0.0) cfg.train.delta = train_delta;
      cfg.validate();
      const auto rec = speechdp::pipeline::run_train(cfg, train_out, train_force);
      std::cout << "checkpoint: " << rec.checkpoint_path << '\n';
      if (rec.mode == "dp") {
        std::cout << "sigma: " << speechdp::pipeline::format_double(rec.sigma)
                  << "  epsilon: " << speechdp::pipeline::format_double(rec.epsilon)
                  << "  (delta " << speechdp::pipeline::format_double(rec.delta) << ")\n";
      }
    } else if (evaluate->parsed()) {
      const auto outputs =
          speechdp::pipeline::run_evaluate(eval_run, eval_repeats, eval_force, eval_split);
      std::cout << "metrics: " << outputs.metrics_csv << '\n'
                << "fairness: " << outputs.fairness_json << '\n';
    } else if (attack->parsed()) {
      const auto rep = speechdp::pipeline::run_attack(attack_run, attack_sample, attack_mode,
                                                      attack_out, attack_force);
      std::cout << rep.dump(2) << '\n';
    } else if (report->parsed()) {
      speechdp::pipeline::run_report(report_runs, report_out, report_force);
      std::cout << "report written to " << report_out << '\n';
    }
  } catch (const speechdp::pipeline::OverwriteRefusal& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOverwriteExit;
  } catch (const speechdp::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const speechdp::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return kOkExit;
}

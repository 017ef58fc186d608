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

#ifndef SPEECHDP_SYNTHDATA_HPP_
#define SPEECHDP_SYNTHDATA_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "speechdp/dsp.hpp"

namespace speechdp {
namespace synth {

struct ClassSpec {
  std::string id;
  double prevalence = 0.0;
};

// Additive-noise and attenuation factors keyed by subgroup value ("F", "M",
// age band names). A speaker's SNR is the base plus the offsets of every
// subgroup it belongs to; attenuations multiply. An infinite SNR renders a
// noiseless waveform.
struct DifficultyProfile {
  double base_snr_db = 40.0;
  std::map<std::string, double> snr_offset_db;
  std::map<std::string, double> attenuation;
};

struct CohortSpec {
  int n_speakers = 0;
  std::vector<ClassSpec> classes;
  std::vector<std::pair<std::string, double>> sex_proportions = {{"F", 0.5}, {"M", 0.5}};
  std::vector<std::pair<std::string, double>> age_proportions = {{"child", 0.2},
                                                                 {"young", 0.2},
                                                                 {"early_adult", 0.2},
                                                                 {"middle", 0.2},
                                                                 {"older", 0.2}};
  int utterances_per_speaker = 3;
  double utterance_seconds = 2.0;
  DifficultyProfile difficulty;
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct SpeakerRecord {
  std::string id;
  std::string class_id;
  int class_index = 0;
  std::string sex;
  std::string age_band;
  double fundamental_hz = 0.0;
  std::uint64_t seed = 0;
};

// Deterministic cohort: marginal class/sex/age counts match the spec within
// rounding (largest-remainder allocation), axes decorrelated by seeded
// shuffles, per-speaker seeds derived by stable hashing of (master_seed, id).
std::vector<SpeakerRecord> generate_cohort(const CohortSpec& spec);

// 16 kHz mono waveform for one utterance: three class-specific formant-like
// sinusoids with class-specific amplitude envelopes, the speaker's
// fundamental plus harmonics, and subgroup-difficulty noise. Deterministic
// per (speaker seed, index).
dsp::AudioSignal render_utterance(const SpeakerRecord& speaker, const CohortSpec& spec,
                                  int index);

struct ManifestRow {
  std::string speaker_id;
  std::string class_id;
  std::string sex;
  std::string age_band;
  int utterance_index = 0;
  std::string wav_path;  // relative to the manifest's directory
};

// Writes corpus/<speaker_id>/<index>.wav under out_dir plus manifest.csv
// (one row per WAV). Returns the manifest path.
std::string export_manifest(const std::vector<SpeakerRecord>& cohort,
                            const CohortSpec& spec, const std::string& out_dir);

std::vector<ManifestRow> load_manifest(const std::string& manifest_path);

// Sorted unique class ids of a manifest, defining the label indexing.
std::vector<std::string> manifest_classes(const std::vector<ManifestRow>& rows);

}  // namespace synth
}  // namespace speechdp

#endif  // SPEECHDP_SYNTHDATA_HPP_

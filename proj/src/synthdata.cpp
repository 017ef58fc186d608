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

#include "speechdp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "speechdp/wav.hpp"

namespace speechdp {
namespace synth {
namespace {

namespace fs = std::filesystem;

// Largest-remainder allocation of n items over the given proportions.
// Ties on the fractional part go to the earlier entry.
std::vector<int> apportion(int n, const std::vector<double>& proportions,
                           const std::string& what) {
  std::vector<int> counts(proportions.size());
  std::vector<std::pair<double, std::size_t>> fractions;
  int assigned = 0;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double exact = proportions[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    fractions.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(fractions.begin(), fractions.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < n - assigned; ++r) {
    counts[fractions[static_cast<std::size_t>(r)].second] += 1;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (proportions[i] > 0.0 && counts[i] == 0) {
      throw ParameterError("infeasible " + what + " proportions for " + std::to_string(n) +
                           " speakers");
    }
  }
  return counts;
}

void check_proportions(const std::vector<double>& p, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ParameterError(what + " proportions must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError(what + " proportions must sum to 1");
}

double subgroup_snr_db(const DifficultyProfile& d, const SpeakerRecord& s) {
  double snr = d.base_snr_db;
  if (const auto it = d.snr_offset_db.find(s.sex); it != d.snr_offset_db.end()) {
    snr += it->second;
  }
  if (const auto it = d.snr_offset_db.find(s.age_band); it != d.snr_offset_db.end()) {
    snr += it->second;
  }
  return snr;
}

double subgroup_attenuation(const DifficultyProfile& d, const SpeakerRecord& s) {
  double a = 1.0;
  if (const auto it = d.attenuation.find(s.sex); it != d.attenuation.end()) a *= it->second;
  if (const auto it = d.attenuation.find(s.age_band); it != d.attenuation.end()) {
    a *= it->second;
  }
  return a;
}

std::string csv_safe(const std::string& s) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos) {
    throw ParameterError("identifiers must not contain commas or newlines: " + s);
  }
  return s;
}

}  // namespace

void CohortSpec::validate() const {
  if (n_speakers < 1) throw ParameterError("n_speakers must be >= 1");
  if (classes.empty()) throw ParameterError("at least one class required");
  if (utterances_per_speaker < 1) throw ParameterError("utterances_per_speaker must be >= 1");
  if (!(utterance_seconds > 0.0)) throw ParameterError("utterance_seconds must be positive");
  std::vector<double> prev;
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!seen.insert(c.id).second) throw ParameterError("duplicate class id: " + c.id);
    prev.push_back(c.prevalence);
  }
  check_proportions(prev, "class");
  std::vector<double> sex_p, age_p;
  for (const auto& [_, v] : sex_proportions) sex_p.push_back(v);
  for (const auto& [_, v] : age_proportions) age_p.push_back(v);
  check_proportions(sex_p, "sex");
  check_proportions(age_p, "age");
}

std::vector<SpeakerRecord> generate_cohort(const CohortSpec& spec) {
  spec.validate();
  const int n = spec.n_speakers;

  std::vector<double> class_p, sex_p, age_p;
  for (const auto& c : spec.classes) class_p.push_back(c.prevalence);
  for (const auto& [_, v] : spec.sex_proportions) sex_p.push_back(v);
  for (const auto& [_, v] : spec.age_proportions) age_p.push_back(v);
  const auto class_counts = apportion(n, class_p, "class");
  const auto sex_counts = apportion(n, sex_p, "sex");
  const auto age_counts = apportion(n, age_p, "age");

  auto expand = [n](const std::vector<int>& counts) {
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < counts.size(); ++i) {
      for (int k = 0; k < counts[i]; ++k) out.push_back(i);
    }
    return out;
  };
  auto class_assign = expand(class_counts);
  auto sex_assign = expand(sex_counts);
  auto age_assign = expand(age_counts);

  // Decorrelate the three attribute axes with independent seeded shuffles.
  Prng class_rng(Prng::mix(spec.master_seed, 0x11));
  Prng sex_rng(Prng::mix(spec.master_seed, 0x22));
  Prng age_rng(Prng::mix(spec.master_seed, 0x33));
  deterministic_shuffle(class_assign, class_rng);
  deterministic_shuffle(sex_assign, sex_rng);
  deterministic_shuffle(age_assign, age_rng);

  std::vector<SpeakerRecord> cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SpeakerRecord s;
    std::ostringstream id;
    id << "spk" << std::setw(4) << std::setfill('0') << i;
    s.id = id.str();
    s.class_index = static_cast<int>(class_assign[static_cast<std::size_t>(i)]);
    s.class_id = spec.classes[static_cast<std::size_t>(s.class_index)].id;
    s.sex = spec.sex_proportions[sex_assign[static_cast<std::size_t>(i)]].first;
    s.age_band = spec.age_proportions[age_assign[static_cast<std::size_t>(i)]].first;
    s.seed = Prng::mix(spec.master_seed, Prng::hash_string(s.id));

    Prng rng(Prng::mix(s.seed, 0xF0));
    double base = s.sex == "F" ? 200.0 : 120.0;
    if (s.age_band == "child") base *= 1.4;
    s.fundamental_hz = base * (0.92 + 0.16 * rng.next_double());
    cohort.push_back(std::move(s));
  }
  return cohort;
}

dsp::AudioSignal render_utterance(const SpeakerRecord& speaker, const CohortSpec& spec,
                                  int index) {
  spec.validate();
  if (index < 0 || index >= spec.utterances_per_speaker) {
    throw ParameterError("utterance index out of range");
  }
  const int sr = wav::kRequiredSampleRate;
  const auto n = static_cast<Eigen::Index>(std::llround(spec.utterance_seconds * sr));
  Prng rng(Prng::mix(speaker.seed, static_cast<std::uint64_t>(index)));

  // Class signature: three formant-like tones with class-specific envelope
  // rates. Frequencies depend only on the class so every utterance of a
  // class carries the same signature.
  const int k = speaker.class_index;
  const double formants[3] = {420.0 + 170.0 * k, 1150.0 + 230.0 * k, 2350.0 + 270.0 * k};
  double env_rate[3], formant_phase[3], env_phase[3];
  for (int j = 0; j < 3; ++j) {
    env_rate[j] = 1.3 + 0.8 * k + 0.45 * j;
    formant_phase[j] = 2.0 * M_PI * rng.next_double();
    env_phase[j] = 2.0 * M_PI * rng.next_double();
  }
  double harmonic_phase[4];
  for (double& p : harmonic_phase) p = 2.0 * M_PI * rng.next_double();

  const double atten = subgroup_attenuation(spec.difficulty, speaker);
  Vec x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * env_rate[j] * t + env_phase[j]);
      v += env * std::sin(2.0 * M_PI * formants[j] * t + formant_phase[j]);
    }
    v *= 0.18;
    for (int h = 1; h <= 4; ++h) {
      v += (0.12 / h) *
           std::sin(2.0 * M_PI * h * speaker.fundamental_hz * t + harmonic_phase[h - 1]);
    }
    x[i] = atten * v;
  }

  const double snr_db = subgroup_snr_db(spec.difficulty, speaker);
  if (std::isfinite(snr_db)) {
    const double signal_power = x.squaredNorm() / static_cast<double>(n);
    const double noise_std = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
    for (Eigen::Index i = 0; i < n; ++i) x[i] += noise_std * rng.next_gaussian();
  }

  dsp::AudioSignal out;
  out.sample_rate = sr;
  out.samples = std::move(x);
  return out;
}

std::string export_manifest(const std::vector<SpeakerRecord>& cohort,
                            const CohortSpec& spec, const std::string& out_dir) {
  if (cohort.empty()) throw ParameterError("cohort is empty");
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "corpus", ec);
  if (ec) throw IoError("cannot create " + (root / "corpus").string() + ": " + ec.message());

  const fs::path manifest_path = root / "manifest.csv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot create manifest: " + manifest_path.string());
  manifest << "speaker_id,class,sex,age_band,utterance_index,wav_path\n";
  for (const auto& s : cohort) {
    const fs::path speaker_dir = root / "corpus" / s.id;
    fs::create_directories(speaker_dir, ec);
    if (ec) throw IoError("cannot create " + speaker_dir.string() + ": " + ec.message());
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      const fs::path wav_path = speaker_dir / (std::to_string(u) + ".wav");
      wav::write_wav(wav_path.string(), render_utterance(s, spec, u));
      const std::string rel = "corpus/" + s.id + "/" + std::to_string(u) + ".wav";
      manifest << csv_safe(s.id) << ',' << csv_safe(s.class_id) << ',' << csv_safe(s.sex)
               << ',' << csv_safe(s.age_band) << ',' << u << ',' << rel << '\n';
    }
  }
  manifest.close();
  if (!manifest) throw IoError("short write to manifest: " + manifest_path.string());
  return manifest_path.string();
}

std::vector<ManifestRow> load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest: " + manifest_path);
  if (line != "speaker_id,class,sex,age_band,utterance_index,wav_path") {
    throw FormatError("unexpected manifest header in " + manifest_path);
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw FormatError("malformed manifest row: " + line);
    ManifestRow row;
    row.speaker_id = fields[0];
    row.class_id = fields[1];
    row.sex = fields[2];
    row.age_band = fields[3];
    row.utterance_index = std::stoi(fields[4]);
    row.wav_path = fields[5];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> manifest_classes(const std::vector<ManifestRow>& rows) {
  std::set<std::string> unique;
  for (const auto& r : rows) unique.insert(r.class_id);
  return {unique.begin(), unique.end()};
}

}  // namespace synth
}  // namespace speechdp

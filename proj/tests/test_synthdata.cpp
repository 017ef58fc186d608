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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "speechdp/synthdata.hpp"
#include "speechdp/wav.hpp"

using namespace speechdp;

namespace {

synth::CohortSpec small_spec(int n_speakers, std::uint64_t seed) {
  synth::CohortSpec spec;
  spec.n_speakers = n_speakers;
  spec.classes = {{"healthy", 0.25}, {"dysarthria", 0.25}, {"dysglossia", 0.25}, {"clp", 0.25}};
  spec.utterances_per_speaker = 2;
  spec.utterance_seconds = 1.0;
  spec.master_seed = seed;
  return spec;
}

// Mean log-mel vector per speaker, averaged over its utterances.
Vec mean_logmel(const synth::SpeakerRecord& s, const synth::CohortSpec& spec,
                const dsp::MelFilterbank& fb) {
  Vec acc = Vec::Zero(fb.n_mels);
  for (int u = 0; u < spec.utterances_per_speaker; ++u) {
    const auto audio = synth::render_utterance(s, spec, u);
    const auto lms = dsp::log_mel(dsp::stft_power(audio), fb);
    acc += lms.values.rowwise().mean();
  }
  return acc / spec.utterances_per_speaker;
}

// Closed-form one-vs-all least-squares classifier on mean log-mel vectors.
double oracle_accuracy(const std::vector<synth::SpeakerRecord>& cohort,
                       const synth::CohortSpec& spec) {
  const auto fb = dsp::build_mel_filterbank(dsp::kDefaultNumMels, 0.0, 8000.0,
                                            dsp::kDefaultFftSize, 16000);
  const int n = static_cast<int>(cohort.size());
  const int n_classes = static_cast<int>(spec.classes.size());
  Mat a(n, fb.n_mels + 1);
  Mat y = Mat::Zero(n, n_classes);
  for (int i = 0; i < n; ++i) {
    a.row(i).head(fb.n_mels) = mean_logmel(cohort[static_cast<std::size_t>(i)], spec, fb);
    a(i, fb.n_mels) = 1.0;
    y(i, cohort[static_cast<std::size_t>(i)].class_index) = 1.0;
  }
  const Mat w = (a.transpose() * a + 1e-8 * Mat::Identity(a.cols(), a.cols()))
                    .ldlt()
                    .solve(a.transpose() * y);
  const Mat pred = a * w;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Index argmax = 0;
    pred.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == cohort[static_cast<std::size_t>(i)].class_index) ++correct;
  }
  return static_cast<double>(correct) / n;
}

}  // namespace

TEST_CASE("cohort marginals match the spec within rounding") {
  auto spec = small_spec(100, 7);
  const auto cohort = synth::generate_cohort(spec);
  REQUIRE(cohort.size() == 100);
  std::map<std::string, int> per_class, per_sex;
  for (const auto& s : cohort) {
    per_class[s.class_id] += 1;
    per_sex[s.sex] += 1;
  }
  for (const auto& [cls, count] : per_class) CHECK(count == 25);
  CHECK(per_sex["F"] == 50);
  CHECK(per_sex["M"] == 50);
}

TEST_CASE("odd speaker counts split 50/51") {
  synth::CohortSpec spec = small_spec(101, 3);
  const auto cohort = synth::generate_cohort(spec);
  std::map<std::string, int> per_sex;
  for (const auto& s : cohort) per_sex[s.sex] += 1;
  const int a = per_sex["F"], b = per_sex["M"];
  CHECK(std::min(a, b) == 50);
  CHECK(std::max(a, b) == 51);
}

TEST_CASE("cohort generation is deterministic and ids unique") {
  const auto spec = small_spec(40, 99);
  const auto a = synth::generate_cohort(spec);
  const auto b = synth::generate_cohort(spec);
  REQUIRE(a.size() == b.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].class_id == b[i].class_id);
    CHECK(a[i].sex == b[i].sex);
    CHECK(a[i].age_band == b[i].age_band);
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].fundamental_hz == b[i].fundamental_hz);
    ids.insert(a[i].id);
  }
  CHECK(ids.size() == a.size());
}

TEST_CASE("infeasible proportions are rejected") {
  synth::CohortSpec spec = small_spec(3, 1);  // 4 classes over 3 speakers
  CHECK_THROWS_AS(synth::generate_cohort(spec), ParameterError);

  synth::CohortSpec bad = small_spec(10, 1);
  bad.classes[0].prevalence = 0.7;  // sums to 1.45
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("utterances differ per index but share the class signature") {
  const auto spec = small_spec(8, 11);
  const auto cohort = synth::generate_cohort(spec);
  const auto& s = cohort.front();
  const auto u0 = synth::render_utterance(s, spec, 0);
  const auto u1 = synth::render_utterance(s, spec, 1);
  REQUIRE(u0.samples.size() == u1.samples.size());
  CHECK((u0.samples - u1.samples).cwiseAbs().maxCoeff() > 1e-3);

  // Same class signature: spectral peaks coincide. Compare mean log-mel
  // between two utterances of one speaker vs utterances of a speaker from a
  // different class.
  const auto fb = dsp::build_mel_filterbank(80, 0.0, 8000.0, 1024, 16000);
  const Vec m0 = dsp::log_mel(dsp::stft_power(u0), fb).values.rowwise().mean();
  const Vec m1 = dsp::log_mel(dsp::stft_power(u1), fb).values.rowwise().mean();
  const synth::SpeakerRecord* other = nullptr;
  for (const auto& cand : cohort) {
    if (cand.class_id != s.class_id) {
      other = &cand;
      break;
    }
  }
  REQUIRE(other != nullptr);
  const auto uo = synth::render_utterance(*other, spec, 0);
  const Vec mo = dsp::log_mel(dsp::stft_power(uo), fb).values.rowwise().mean();
  CHECK((m0 - m1).norm() < (m0 - mo).norm());

  CHECK_THROWS_AS(synth::render_utterance(s, spec, 2), ParameterError);
}

TEST_CASE("infinite SNR renders a noiseless deterministic waveform") {
  auto spec = small_spec(4, 5);
  spec.difficulty.base_snr_db = std::numeric_limits<double>::infinity();
  const auto cohort = synth::generate_cohort(spec);
  const auto a = synth::render_utterance(cohort[0], spec, 0);
  const auto b = synth::render_utterance(cohort[0], spec, 0);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
  // A pure sum of sinusoids has bounded amplitude well inside [-1, 1].
  CHECK(a.samples.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("classes are linearly separable for the least-squares oracle") {
  const auto spec = small_spec(100, 2026);
  const auto cohort = synth::generate_cohort(spec);
  CHECK(oracle_accuracy(cohort, spec) >= 0.95);
}

TEST_CASE("lower subgroup SNR never helps that subgroup's oracle accuracy") {
  double prev = 1.1;
  for (double snr : {40.0, 0.0, -10.0, -18.0}) {
    auto spec = small_spec(60, 99);
    spec.difficulty.base_snr_db = 40.0;
    spec.difficulty.snr_offset_db["F"] = snr - 40.0;
    const auto cohort = synth::generate_cohort(spec);
    std::vector<synth::SpeakerRecord> females;
    for (const auto& s : cohort) {
      if (s.sex == "F") females.push_back(s);
    }
    // Fit on the whole cohort, score the females.
    const auto fb = dsp::build_mel_filterbank(80, 0.0, 8000.0, 1024, 16000);
    const int n = static_cast<int>(cohort.size());
    Mat a(n, fb.n_mels + 1);
    Mat y = Mat::Zero(n, 4);
    for (int i = 0; i < n; ++i) {
      a.row(i).head(fb.n_mels) = mean_logmel(cohort[static_cast<std::size_t>(i)], spec, fb);
      a(i, fb.n_mels) = 1.0;
      y(i, cohort[static_cast<std::size_t>(i)].class_index) = 1.0;
    }
    const Mat w = (a.transpose() * a + 1e-8 * Mat::Identity(a.cols(), a.cols()))
                      .ldlt()
                      .solve(a.transpose() * y);
    int correct = 0, total = 0;
    for (int i = 0; i < n; ++i) {
      if (cohort[static_cast<std::size_t>(i)].sex != "F") continue;
      Eigen::Index argmax = 0;
      (a.row(i) * w).maxCoeff(&argmax);
      correct += static_cast<int>(argmax) == cohort[static_cast<std::size_t>(i)].class_index;
      ++total;
    }
    const double acc = static_cast<double>(correct) / total;
    CHECK(acc <= prev + 1e-12);
    prev = acc;
  }
}

TEST_CASE("manifest round trip and WAV format contract") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "speechdp_synth_test";
  fs::remove_all(dir);
  auto spec = small_spec(10, 77);
  const auto cohort = synth::generate_cohort(spec);
  const std::string manifest = synth::export_manifest(cohort, spec, dir.string());

  const auto rows = synth::load_manifest(manifest);
  CHECK(rows.size() == 20);  // 10 speakers x 2 utterances
  std::map<std::string, const synth::SpeakerRecord*> by_id;
  for (const auto& s : cohort) by_id[s.id] = &s;
  for (const auto& row : rows) {
    const auto* s = by_id.at(row.speaker_id);
    CHECK(row.class_id == s->class_id);
    CHECK(row.sex == s->sex);
    CHECK(row.age_band == s->age_band);
    const auto audio = wav::read_wav((dir / row.wav_path).string());
    CHECK(audio.sample_rate == 16000);
    CHECK(audio.samples.size() == 16000);
  }
  fs::remove_all(dir);
}

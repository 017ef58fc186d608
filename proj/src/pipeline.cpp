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

#include "speechdp/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "speechdp/attack.hpp"
#include "speechdp/checkpoint.hpp"
#include "speechdp/optim.hpp"
#include "speechdp/privacy.hpp"
#include "speechdp/wav.hpp"

namespace speechdp {
namespace pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNonDpDefaultLr = 5e-5;  // Adam
constexpr double kDpDefaultLr = 5e-4;     // NAdam

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& context) {
  if (!j.is_object()) throw ParameterError("config section '" + context + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw ParameterError("unknown config key '" + key + "' in " + context);
    }
  }
}

std::uint64_t fnv_bytes(std::uint64_t h, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[v & 0xf];
    v >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

void refuse_existing(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw OverwriteRefusal("output already exists (pass --force to overwrite): " +
                           path.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot create " + path.string());
  return f;
}

std::vector<nn::ConvBlockConfig> parse_blocks(const json& arr, const std::string& ctx) {
  if (!arr.is_array() || arr.empty()) throw ParameterError(ctx + " must be a non-empty array");
  std::vector<nn::ConvBlockConfig> blocks;
  for (const auto& b : arr) {
    reject_unknown_keys(b, {"channels", "kernel", "norm_groups"}, ctx);
    nn::ConvBlockConfig c;
    c.out_channels = b.at("channels").get<int>();
    c.kernel = b.value("kernel", 3);
    c.norm_groups = b.value("norm_groups", std::min(32, c.out_channels));
    blocks.push_back(c);
  }
  return blocks;
}

json blocks_to_json(const std::vector<nn::ConvBlockConfig>& blocks) {
  json arr = json::array();
  for (const auto& b : blocks) {
    arr.push_back({{"channels", b.out_channels},
                   {"kernel", b.kernel},
                   {"norm_groups", b.norm_groups}});
  }
  return arr;
}

json seeds_to_json(const SeedSpec& s) {
  return {{"split", s.split},
          {"init", s.init},
          {"noise", s.noise},
          {"crop", s.crop},
          {"order", s.order}};
}

SeedSpec seeds_from_json(const json& j) {
  reject_unknown_keys(j, {"split", "init", "noise", "crop", "order"}, "seeds");
  SeedSpec s;
  s.split = j.value("split", s.split);
  s.init = j.value("init", s.init);
  s.noise = j.value("noise", s.noise);
  s.crop = j.value("crop", s.crop);
  s.order = j.value("order", s.order);
  return s;
}

std::vector<eval::SubgroupPair> parse_pairs(const json& arr) {
  std::vector<eval::SubgroupPair> pairs;
  for (const auto& p : arr) {
    reject_unknown_keys(p, {"axis", "minority", "majority"}, "fairness_pairs");
    eval::SubgroupPair sp;
    sp.axis = p.at("axis").get<std::string>();
    if (sp.axis != "sex" && sp.axis != "age_band") {
      throw ParameterError("fairness pair axis must be 'sex' or 'age_band'");
    }
    sp.minority = p.at("minority").get<std::string>();
    sp.majority = p.at("majority").get<std::string>();
    pairs.push_back(std::move(sp));
  }
  return pairs;
}

json pairs_to_json(const std::vector<eval::SubgroupPair>& pairs) {
  json arr = json::array();
  for (const auto& p : pairs) {
    arr.push_back({{"axis", p.axis}, {"minority", p.minority}, {"majority", p.majority}});
  }
  return arr;
}

AttackSpec parse_attack(const json& j) {
  reject_unknown_keys(j,
                      {"victim_mels", "victim_frames", "victim_blocks", "iters", "lr",
                       "seed", "clip_norm", "sigma", "step"},
                      "attack");
  AttackSpec a;
  a.victim_mels = j.value("victim_mels", a.victim_mels);
  a.victim_frames = j.value("victim_frames", a.victim_frames);
  if (j.contains("victim_blocks")) a.victim_blocks = parse_blocks(j["victim_blocks"], "attack.victim_blocks");
  a.iters = j.value("iters", a.iters);
  a.lr = j.value("lr", a.lr);
  a.seed = j.value("seed", a.seed);
  a.clip_norm = j.value("clip_norm", a.clip_norm);
  if (j.contains("sigma") && !j["sigma"].is_null()) a.sigma = j["sigma"].get<double>();
  a.step = j.value("step", a.step);
  return a;
}

json attack_to_json(const AttackSpec& a) {
  json j = {{"victim_mels", a.victim_mels},
            {"victim_frames", a.victim_frames},
            {"victim_blocks", blocks_to_json(a.victim_blocks)},
            {"iters", a.iters},
            {"lr", a.lr},
            {"seed", a.seed},
            {"clip_norm", a.clip_norm},
            {"step", a.step}};
  j["sigma"] = a.sigma.has_value() ? json(*a.sigma) : json(nullptr);
  return j;
}

// Default orientation: female as minority, plus every ordered age-band pair
// (alphabetical minority first) present in the declared taxonomy.
std::vector<eval::SubgroupPair> default_pairs(const std::vector<std::string>& age_bands) {
  std::vector<eval::SubgroupPair> pairs = {{"sex", "F", "M"}};
  std::vector<std::string> bands = age_bands;
  std::sort(bands.begin(), bands.end());
  for (std::size_t i = 0; i < bands.size(); ++i) {
    for (std::size_t j = i + 1; j < bands.size(); ++j) {
      pairs.push_back({"age_band", bands[i], bands[j]});
    }
  }
  return pairs;
}

nn::ModelConfig make_model_config(const ModelSpec& spec, int n_mels, int n_classes,
                                  std::uint64_t init_seed) {
  nn::ModelConfig cfg;
  cfg.input_shape = {1, n_mels, spec.n_frames};
  cfg.conv_blocks = spec.blocks;
  cfg.n_classes = n_classes;
  cfg.seed = init_seed;
  cfg.norm = spec.norm;
  return cfg;
}

nn::Sample make_sample(const Features::Utterance& utt, int n_frames, Prng& rng) {
  dsp::LogMelSpectrogram crop = dsp::frame_crop(utt.lms, n_frames, rng);
  const int mels = crop.n_mels();
  Tensor x({1, mels, n_frames});
  RowMajorMap(x.data.data(), mels, n_frames) = crop.values;
  return {std::move(x), utt.label};
}

std::uint64_t hash_tensor(std::uint64_t h, const Tensor& t) {
  return fnv_bytes(h, t.data.data(), static_cast<std::size_t>(t.data.size()) * sizeof(double));
}

Vec speaker_scores(const ModelParameters& params, const nn::ModelConfig& mcfg,
                   const Features& feats, const std::vector<std::size_t>& utt_indices,
                   std::uint64_t crop_stream, int repeat, std::uint64_t* crop_hash) {
  Vec sum = Vec::Zero(mcfg.n_classes);
  for (std::size_t ui : utt_indices) {
    Prng rng(Prng::mix(crop_stream, Prng::mix(static_cast<std::uint64_t>(repeat),
                                              static_cast<std::uint64_t>(ui))));
    const nn::Sample s = make_sample(feats.utterances[ui], mcfg.input_shape[2], rng);
    if (crop_hash != nullptr) *crop_hash = hash_tensor(*crop_hash, s.x);
    const auto [logits, cache] = nn::model_forward(params, mcfg, s.x);
    for (int c = 0; c < mcfg.n_classes; ++c) sum[c] += stable_sigmoid(logits[c]);
  }
  return sum / static_cast<double>(utt_indices.size());
}

json summary_to_json(const eval::MetricOverRepeats& m) {
  json j;
  j["defined"] = m.defined;
  if (m.defined) {
    j["mean"] = m.summary.mean;
    j["sd"] = m.summary.sd;
    j["ci_low"] = m.summary.ci_low;
    j["ci_high"] = m.summary.ci_high;
  }
  j["by_repeat"] = m.by_repeat;
  return j;
}

json class_summary_to_json(const eval::ClassSummary& cs) {
  return {{"class", cs.class_id},
          {"auroc", summary_to_json(cs.auroc)},
          {"accuracy", summary_to_json(cs.accuracy)},
          {"sensitivity", summary_to_json(cs.sensitivity)},
          {"specificity", summary_to_json(cs.specificity)}};
}

void write_matrix_csv(const fs::path& path, const Mat& m) {
  auto f = open_out(path);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) f << ',';
      f << format_double(m(r, c));
    }
    f << '\n';
  }
}

struct LoadedEvaluation {
  RunRecord record;
  json fairness;
};

LoadedEvaluation load_evaluation(const std::string& run_dir) {
  LoadedEvaluation le;
  le.record = load_run_record(run_dir);
  const fs::path path = fs::path(run_dir) / "fairness.json";
  std::ifstream in(path);
  if (!in) throw ParameterError("run has no evaluation (fairness.json missing): " + run_dir);
  in >> le.fairness;
  return le;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Mat block_mean_resize(const Mat& m, int out_rows, int out_cols) {
  if (out_rows < 1 || out_cols < 1 || out_rows > m.rows() || out_cols > m.cols()) {
    throw ParameterError("block_mean_resize target must be within the source size");
  }
  Mat out(out_rows, out_cols);
  for (int i = 0; i < out_rows; ++i) {
    const auto r0 = static_cast<Eigen::Index>(static_cast<long>(i) * m.rows() / out_rows);
    const auto r1 =
        static_cast<Eigen::Index>(static_cast<long>(i + 1) * m.rows() / out_rows);
    for (int j = 0; j < out_cols; ++j) {
      const auto c0 = static_cast<Eigen::Index>(static_cast<long>(j) * m.cols() / out_cols);
      const auto c1 =
          static_cast<Eigen::Index>(static_cast<long>(j + 1) * m.cols() / out_cols);
      out(i, j) = m.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

double ExperimentConfig::effective_lr() const {
  if (train.lr > 0.0) return train.lr;
  return mode == "dp" ? kDpDefaultLr : kNonDpDefaultLr;
}

void ExperimentConfig::validate() const {
  if (version != 1) throw ParameterError("unsupported config version");
  if (mode != "dp" && mode != "non_dp") throw ParameterError("mode must be 'dp' or 'non_dp'");
  if (manifest.empty()) throw ParameterError("manifest path required");
  if (mode == "dp") {
    if (train.target_epsilon.has_value() == train.sigma.has_value()) {
      throw ParameterError("dp mode requires exactly one of train.target_epsilon / train.sigma");
    }
    if (train.dp_steps < 1) throw ParameterError("train.dp_steps must be >= 1");
  } else {
    if (train.epochs < 1) throw ParameterError("train.epochs must be >= 1");
  }
  if (!(train.delta > 0.0) || !(train.delta < 1.0)) {
    throw ParameterError("train.delta must lie in (0, 1)");
  }
  if (train.batch_size < 1) throw ParameterError("train.batch_size must be >= 1");
  if (!(train.clip_norm > 0.0)) throw ParameterError("train.clip_norm must be positive");
  if (!(split_frac > 0.0) || !(split_frac < 1.0)) {
    throw ParameterError("split_frac must lie in (0, 1)");
  }
  if (repeats < 1) throw ParameterError("repeats must be >= 1");
  if (model.n_frames < 4) throw ParameterError("model.n_frames too small");
}

ExperimentConfig parse_experiment_config(const json& j) {
  reject_unknown_keys(j,
                      {"version", "mode", "manifest", "model", "train", "seeds",
                       "split_frac", "repeats", "fairness_pairs", "attack"},
                      "config");
  ExperimentConfig cfg;
  cfg.version = j.value("version", 1);
  cfg.mode = j.at("mode").get<std::string>();
  cfg.manifest = j.at("manifest").get<std::string>();
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown_keys(m, {"n_frames", "blocks", "norm"}, "model");
    cfg.model.n_frames = m.value("n_frames", cfg.model.n_frames);
    if (m.contains("blocks")) cfg.model.blocks = parse_blocks(m["blocks"], "model.blocks");
    const std::string norm = m.value("norm", std::string("group"));
    if (norm == "group") {
      cfg.model.norm = nn::NormKind::kGroup;
    } else if (norm == "batch") {
      cfg.model.norm = nn::NormKind::kBatch;
    } else {
      throw ParameterError("model.norm must be 'group' or 'batch'");
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown_keys(t,
                        {"lr", "epochs", "dp_steps", "batch_size", "clip_norm",
                         "target_epsilon", "sigma", "delta"},
                        "train");
    cfg.train.lr = t.value("lr", 0.0);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.dp_steps = t.value("dp_steps", cfg.train.dp_steps);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
    if (t.contains("target_epsilon") && !t["target_epsilon"].is_null()) {
      cfg.train.target_epsilon = t["target_epsilon"].get<double>();
    }
    if (t.contains("sigma") && !t["sigma"].is_null()) {
      cfg.train.sigma = t["sigma"].get<double>();
    }
    cfg.train.delta = t.value("delta", cfg.train.delta);
  }
  if (j.contains("seeds")) cfg.seeds = seeds_from_json(j["seeds"]);
  cfg.split_frac = j.value("split_frac", cfg.split_frac);
  cfg.repeats = j.value("repeats", cfg.repeats);
  if (j.contains("fairness_pairs")) cfg.fairness_pairs = parse_pairs(j["fairness_pairs"]);
  if (j.contains("attack")) cfg.attack = parse_attack(j["attack"]);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParameterError("config is not valid JSON (" + std::string(e.what()) + "): " + path);
  }
  return parse_experiment_config(j);
}

std::string config_hash(const json& j) {
  const std::string dump = j.dump();
  return hex64(fnv_bytes(0xcbf29ce484222325ULL, dump.data(), dump.size()));
}

Features compute_features(const std::string& manifest_path) {
  const auto rows = synth::load_manifest(manifest_path);
  if (rows.empty()) throw ParameterError("manifest has no rows: " + manifest_path);
  Features feats;
  feats.classes = synth::manifest_classes(rows);
  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < feats.classes.size(); ++i) {
    class_index[feats.classes[i]] = static_cast<int>(i);
  }

  const fs::path base = fs::path(manifest_path).parent_path();
  const auto fb = dsp::build_mel_filterbank(dsp::kDefaultNumMels, 0.0, 8000.0,
                                            dsp::kDefaultFftSize, wav::kRequiredSampleRate);
  std::set<std::string> seen_speakers;
  for (const auto& row : rows) {
    Features::Utterance utt;
    utt.speaker_id = row.speaker_id;
    utt.sex = row.sex;
    utt.age_band = row.age_band;
    utt.label = class_index.at(row.class_id);
    utt.utt_index = row.utterance_index;

    const auto signal = wav::read_wav((base / row.wav_path).string());
    const auto filtered = dsp::zero_phase_highpass(signal, dsp::kDefaultHighpassHz);
    const Mat power = dsp::stft_power(filtered);
    utt.lms = dsp::log_mel(power, fb);
    utt.lms.origin_id = row.speaker_id + ":" + std::to_string(row.utterance_index);

    const std::size_t idx = feats.utterances.size();
    feats.utterances_by_speaker[row.speaker_id].push_back(idx);
    if (seen_speakers.insert(row.speaker_id).second) {
      feats.speakers.push_back({row.speaker_id, row.class_id});
    }
    feats.utterances.push_back(std::move(utt));
  }
  return feats;
}

RunRecord run_train(const ExperimentConfig& cfg, const std::string& out_dir, bool force) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  refuse_existing(out / "run.json", force);

  const Features feats = compute_features(cfg.manifest);
  const int n_classes = static_cast<int>(feats.classes.size());
  if (n_classes < 2) throw ParameterError("training needs at least two classes");
  const int n_mels = feats.utterances.front().lms.n_mels();
  const nn::ModelConfig mcfg =
      make_model_config(cfg.model, n_mels, n_classes, cfg.seeds.init);
  mcfg.validate();
  if (cfg.mode == "dp" && mcfg.norm != nn::NormKind::kGroup) {
    throw ParameterError(
        "DP training requires group normalization; batch normalization couples samples");
  }

  const auto split = eval::speaker_split(feats.speakers, cfg.split_frac, cfg.seeds.split);
  std::set<std::string> train_set(split.train_ids.begin(), split.train_ids.end());
  std::vector<std::size_t> train_utts;
  std::vector<int> train_labels;
  for (std::size_t i = 0; i < feats.utterances.size(); ++i) {
    if (train_set.count(feats.utterances[i].speaker_id) > 0) {
      train_utts.push_back(i);
      train_labels.push_back(feats.utterances[i].label);
    }
  }
  if (train_utts.empty()) throw ParameterError("empty training split");

  // The paper's recipe: weighted BCE for plain training, unweighted for DP.
  const Vec class_weights = cfg.mode == "non_dp"
                                ? nn::inverse_frequency_weights(train_labels, n_classes)
                                : Vec::Ones(n_classes);

  ModelParameters params = nn::init_parameters(mcfg);
  auto opt_state = optim::init_adam_state(params);
  const double lr = cfg.effective_lr();

  RunRecord rec;
  rec.run_dir = out.string();
  rec.mode = cfg.mode;
  rec.manifest = cfg.manifest;
  rec.classes = feats.classes;
  rec.seeds = cfg.seeds;
  rec.split_frac = cfg.split_frac;
  rec.repeats = cfg.repeats;
  rec.model = cfg.model;
  rec.fairness_pairs = cfg.fairness_pairs;
  rec.attack = cfg.attack;
  rec.train_lr = lr;
  rec.train_batch = cfg.train.batch_size;
  rec.clip_norm = cfg.train.clip_norm;
  rec.delta = cfg.train.delta;

  std::ostringstream loss_log;
  if (cfg.mode == "non_dp") {
    loss_log << "epoch,mean_loss\n";
    const int batch = cfg.train.batch_size;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
      std::vector<std::size_t> order = train_utts;
      Prng order_rng(Prng::mix(cfg.seeds.order, static_cast<std::uint64_t>(epoch)));
      deterministic_shuffle(order, order_rng);
      double epoch_loss = 0.0;
      long n_samples = 0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        std::vector<nn::Sample> samples;
        samples.reserve(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
          const std::size_t ui = order[k];
          Prng crop_rng(Prng::mix(cfg.seeds.crop,
                                  Prng::mix(static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(ui))));
          samples.push_back(make_sample(feats.utterances[ui], cfg.model.n_frames, crop_rng));
        }
        std::vector<double> losses;
        const auto grads =
            nn::per_example_gradients(params, mcfg, samples, class_weights, &losses);
        ModelParameters mean_grad = grads[0];
        for (std::size_t g = 1; g < grads.size(); ++g) mean_grad.axpy(1.0, grads[g]);
        mean_grad.scale(1.0 / static_cast<double>(grads.size()));
        optim::adam_step(params, mean_grad, opt_state, lr);
        for (double l : losses) epoch_loss += l;
        n_samples += static_cast<long>(losses.size());
      }
      loss_log << epoch << ',' << format_double(epoch_loss / static_cast<double>(n_samples))
               << '\n';
    }
  } else {
    // One synthetic speaker is one privacy unit; its gradient is the mean
    // over its utterances, then clipped as a whole.
    const auto& train_speakers = split.train_ids;
    const int n_units = static_cast<int>(train_speakers.size());
    const double q = std::min(1.0, static_cast<double>(cfg.train.batch_size) / n_units);
    double sigma;
    if (cfg.train.sigma.has_value()) {
      sigma = *cfg.train.sigma;
    } else {
      sigma = privacy::calibrate_sigma({*cfg.train.target_epsilon, cfg.train.delta}, q,
                                       cfg.train.dp_steps);
    }
    privacy::NoiseConfig ncfg;
    ncfg.sigma = sigma;
    ncfg.clip_norm = cfg.train.clip_norm;
    ncfg.sample_rate_q = q;
    ncfg.delta = cfg.train.delta;

    auto acc = privacy::AccountantState::with_default_orders();
    std::ostringstream acc_log;
    acc_log << "step,sigma,q,order_star,epsilon,delta\n";
    loss_log << "step,lot_size,mean_loss\n";

    for (long step = 0; step < cfg.train.dp_steps; ++step) {
      auto unit_at = [&](int unit_index) {
        privacy::PrivacyUnit unit;
        const auto& speaker = train_speakers[static_cast<std::size_t>(unit_index)];
        for (std::size_t ui : feats.utterances_by_speaker.at(speaker)) {
          Prng crop_rng(Prng::mix(cfg.seeds.crop,
                                  Prng::mix(static_cast<std::uint64_t>(step),
                                            static_cast<std::uint64_t>(ui))));
          unit.samples.push_back(
              make_sample(feats.utterances[ui], cfg.model.n_frames, crop_rng));
        }
        return unit;
      };
      Prng lot_rng(Prng::mix(cfg.seeds.order, static_cast<std::uint64_t>(step)));
      Prng noise_rng(Prng::mix(cfg.seeds.noise, static_cast<std::uint64_t>(step)));
      const auto info = privacy::dp_train_step(params, opt_state, ncfg, mcfg, n_units,
                                               unit_at, class_weights, lr, acc, lot_rng,
                                               noise_rng);
      const auto eps = privacy::rdp_to_epsilon(acc, cfg.train.delta);
      acc_log << (step + 1) << ',' << format_double(sigma) << ',' << format_double(q) << ','
              << format_double(eps.order) << ',' << format_double(eps.epsilon) << ','
              << format_double(cfg.train.delta) << '\n';
      loss_log << (step + 1) << ',' << info.lot_size << ',' << format_double(info.mean_loss)
               << '\n';
    }
    const auto eps = privacy::rdp_to_epsilon(acc, cfg.train.delta);
    rec.sigma = sigma;
    rec.epsilon = eps.epsilon;
    rec.best_order = eps.order;
    rec.accountant_log_path = (out / "accountant.csv").string();
    open_out(out / "accountant.csv") << acc_log.str();
  }

  rec.checkpoint_path = (out / "checkpoint.dpsm").string();
  checkpoint::save(rec.checkpoint_path, params);
  rec.loss_log_path = (out / "train_loss.csv").string();
  open_out(out / "train_loss.csv") << loss_log.str();

  // Echo the configuration into the run record so later stages need only the
  // run directory.
  json j;
  j["mode"] = rec.mode;
  j["manifest"] = rec.manifest;
  j["classes"] = rec.classes;
  j["checkpoint"] = "checkpoint.dpsm";
  j["loss_log"] = "train_loss.csv";
  j["accountant_log"] = rec.accountant_log_path.empty() ? json(nullptr) : json("accountant.csv");
  j["sigma"] = rec.mode == "dp" ? json(rec.sigma) : json(nullptr);
  j["epsilon"] = rec.mode == "dp" ? json(rec.epsilon) : json(nullptr);
  j["best_order"] = rec.mode == "dp" ? json(rec.best_order) : json(nullptr);
  j["delta"] = rec.delta;
  j["seeds"] = seeds_to_json(rec.seeds);
  j["split_frac"] = rec.split_frac;
  j["repeats"] = rec.repeats;
  j["model"] = {{"n_frames", rec.model.n_frames},
                {"blocks", blocks_to_json(rec.model.blocks)},
                {"norm", rec.model.norm == nn::NormKind::kGroup ? "group" : "batch"}};
  j["fairness_pairs"] = pairs_to_json(rec.fairness_pairs);
  j["attack"] = attack_to_json(rec.attack);
  j["train_lr"] = rec.train_lr;
  j["train_batch"] = rec.train_batch;
  j["clip_norm"] = rec.clip_norm;
  rec.config_hash = config_hash(j);
  j["config_hash"] = rec.config_hash;
  const auto t1 = std::chrono::steady_clock::now();
  rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  j["wall_seconds"] = rec.wall_seconds;
  open_out(out / "run.json") << j.dump(2) << '\n';
  return rec;
}

RunRecord load_run_record(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::ifstream in(dir / "run.json");
  if (!in) throw IoError("cannot open run record: " + (dir / "run.json").string());
  json j;
  in >> j;

  RunRecord rec;
  rec.run_dir = dir.string();
  rec.config_hash = j.at("config_hash").get<std::string>();
  rec.mode = j.at("mode").get<std::string>();
  rec.manifest = j.at("manifest").get<std::string>();
  rec.classes = j.at("classes").get<std::vector<std::string>>();
  rec.checkpoint_path = (dir / j.at("checkpoint").get<std::string>()).string();
  rec.loss_log_path = (dir / j.at("loss_log").get<std::string>()).string();
  if (!j.at("accountant_log").is_null()) {
    rec.accountant_log_path = (dir / j.at("accountant_log").get<std::string>()).string();
  }
  if (!j.at("sigma").is_null()) rec.sigma = j.at("sigma").get<double>();
  if (!j.at("epsilon").is_null()) rec.epsilon = j.at("epsilon").get<double>();
  if (!j.at("best_order").is_null()) rec.best_order = j.at("best_order").get<double>();
  rec.delta = j.at("delta").get<double>();
  rec.seeds = seeds_from_json(j.at("seeds"));
  rec.split_frac = j.at("split_frac").get<double>();
  rec.repeats = j.at("repeats").get<int>();
  const json& m = j.at("model");
  rec.model.n_frames = m.at("n_frames").get<int>();
  rec.model.blocks = parse_blocks(m.at("blocks"), "model.blocks");
  rec.model.norm =
      m.at("norm").get<std::string>() == "group" ? nn::NormKind::kGroup : nn::NormKind::kBatch;
  rec.fairness_pairs = parse_pairs(j.at("fairness_pairs"));
  rec.attack = parse_attack(j.at("attack"));
  rec.train_lr = j.at("train_lr").get<double>();
  rec.train_batch = j.at("train_batch").get<int>();
  rec.clip_norm = j.at("clip_norm").get<double>();
  rec.wall_seconds = j.at("wall_seconds").get<double>();
  return rec;
}

EvaluateOutputs run_evaluate(const std::string& run_dir, int repeats, bool force,
                             const std::string& split_name) {
  if (split_name == "train") {
    throw ParameterError(
        "evaluating a run against its own training split is refused (leak guard)");
  }
  if (split_name != "test") throw ParameterError("unknown split: " + split_name);
  const RunRecord rec = load_run_record(run_dir);
  if (repeats < 1) repeats = rec.repeats;

  const fs::path out(run_dir);
  refuse_existing(out / "fairness.json", force);

  const Features feats = compute_features(rec.manifest);
  if (feats.classes != rec.classes) {
    throw ParameterError("manifest classes do not match the trained checkpoint");
  }
  const int n_classes = static_cast<int>(rec.classes.size());
  const int n_mels = feats.utterances.front().lms.n_mels();
  const nn::ModelConfig mcfg =
      make_model_config(rec.model, n_mels, n_classes, rec.seeds.init);
  const ModelParameters params = checkpoint::load(rec.checkpoint_path);

  const auto split = eval::speaker_split(feats.speakers, rec.split_frac, rec.seeds.split);
  if (split.test_ids.empty()) throw ParameterError("empty test split");

  std::map<std::string, std::pair<std::string, std::string>> speaker_tags;  // sex, age
  std::map<std::string, int> speaker_class;
  for (const auto& u : feats.utterances) {
    speaker_tags[u.speaker_id] = {u.sex, u.age_band};
    speaker_class[u.speaker_id] = u.label;
  }

  const std::uint64_t eval_stream = Prng::mix(rec.seeds.crop, 0xE7A1u);
  std::vector<std::vector<eval::SpeakerPrediction>> repeats_preds;
  std::vector<std::uint64_t> crop_hashes;
  for (int r = 0; r < repeats; ++r) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    std::vector<eval::SpeakerPrediction> preds;
    preds.reserve(split.test_ids.size());
    for (const auto& speaker : split.test_ids) {
      eval::SpeakerPrediction p;
      p.speaker_id = speaker;
      p.true_class = speaker_class.at(speaker);
      p.sex = speaker_tags.at(speaker).first;
      p.age_band = speaker_tags.at(speaker).second;
      p.repeat_id = r;
      p.scores = speaker_scores(params, mcfg, feats, feats.utterances_by_speaker.at(speaker),
                                eval_stream, r, &hash);
      preds.push_back(std::move(p));
    }
    repeats_preds.push_back(std::move(preds));
    crop_hashes.push_back(hash);
  }

  const auto pairs = rec.fairness_pairs.empty()
                         ? default_pairs({"child", "young", "early_adult", "middle", "older"})
                         : rec.fairness_pairs;
  eval::FairnessReport report = eval::build_fairness_report(repeats_preds, rec.classes, pairs);
  report.crop_hashes = crop_hashes;

  EvaluateOutputs outputs;
  outputs.report = report;

  // Per-repeat per-class metrics CSV (plus the unweighted class mean).
  outputs.metrics_csv = (out / "metrics.csv").string();
  {
    auto f = open_out(out / "metrics.csv");
    f << "repeat,class,auroc,threshold,accuracy,sensitivity,specificity\n";
    for (int r = 0; r < repeats; ++r) {
      double mean_auc = 0.0, mean_acc = 0.0, mean_sens = 0.0, mean_spec = 0.0;
      for (int c = 0; c < n_classes; ++c) {
        const auto m = eval::evaluate_class(repeats_preds[static_cast<std::size_t>(r)], c);
        f << r << ',' << rec.classes[static_cast<std::size_t>(c)] << ','
          << format_double(m.auroc) << ',' << format_double(m.threshold) << ','
          << format_double(m.accuracy) << ',' << format_double(m.sensitivity) << ','
          << format_double(m.specificity) << '\n';
        mean_auc += m.auroc;
        mean_acc += m.accuracy;
        mean_sens += m.sensitivity;
        mean_spec += m.specificity;
      }
      f << r << ",mean," << format_double(mean_auc / n_classes) << ",,"
        << format_double(mean_acc / n_classes) << ',' << format_double(mean_sens / n_classes)
        << ',' << format_double(mean_spec / n_classes) << '\n';
    }
  }

  // Raw scores of the first repeat, for ROC curves.
  outputs.predictions_csv = (out / "predictions.csv").string();
  {
    auto f = open_out(out / "predictions.csv");
    f << "speaker_id,true_class,sex,age_band";
    for (const auto& c : rec.classes) f << ",score_" << c;
    f << '\n';
    for (const auto& p : repeats_preds.front()) {
      f << p.speaker_id << ',' << rec.classes[static_cast<std::size_t>(p.true_class)] << ','
        << p.sex << ',' << p.age_band;
      for (int c = 0; c < n_classes; ++c) f << ',' << format_double(p.scores[c]);
      f << '\n';
    }
  }

  // Fairness report JSON.
  outputs.fairness_json = (out / "fairness.json").string();
  {
    json j;
    j["config_hash"] = rec.config_hash;
    j["mode"] = rec.mode;
    j["epsilon"] = rec.mode == "dp" ? json(rec.epsilon) : json(nullptr);
    j["delta"] = rec.delta;
    j["sigma"] = rec.mode == "dp" ? json(rec.sigma) : json(nullptr);
    j["repeats"] = repeats;
    j["classes"] = rec.classes;
    j["overall"] = class_summary_to_json(report.overall);
    json per_class = json::array();
    for (const auto& cs : report.per_class) per_class.push_back(class_summary_to_json(cs));
    j["per_class"] = per_class;
    json fairness = json::array();
    for (const auto& e : report.fairness) {
      fairness.push_back({{"class", e.class_id},
                          {"axis", e.pair.axis},
                          {"minority", e.pair.minority},
                          {"majority", e.pair.majority},
                          {"ptd", summary_to_json(e.ptd)},
                          {"eod", summary_to_json(e.eod)}});
    }
    j["fairness"] = fairness;
    j["crop_hashes"] = crop_hashes;
    open_out(out / "fairness.json") << j.dump(2) << '\n';
  }
  return outputs;
}

nlohmann::json run_attack(const std::string& run_dir, const std::string& sample_id,
                          const std::string& mode, const std::string& out_dir, bool force) {
  if (mode != "raw" && mode != "dp") throw ParameterError("attack mode must be 'raw' or 'dp'");
  const RunRecord rec = load_run_record(run_dir);
  const AttackSpec& aspec = rec.attack;

  const auto colon = sample_id.find(':');
  if (colon == std::string::npos) {
    throw ParameterError("sample id must be '<speaker>:<utterance>': " + sample_id);
  }
  const std::string speaker = sample_id.substr(0, colon);
  const int utt_index = std::stoi(sample_id.substr(colon + 1));

  const Features feats = compute_features(rec.manifest);
  const Features::Utterance* target_utt = nullptr;
  for (const auto& u : feats.utterances) {
    if (u.speaker_id == speaker && u.utt_index == utt_index) {
      target_utt = &u;
      break;
    }
  }
  if (target_utt == nullptr) throw ParameterError("sample id not found: " + sample_id);

  const int n_classes = static_cast<int>(rec.classes.size());
  nn::ModelConfig vcfg;
  vcfg.input_shape = {1, aspec.victim_mels, aspec.victim_frames};
  vcfg.conv_blocks = aspec.victim_blocks;
  vcfg.n_classes = n_classes;
  vcfg.seed = Prng::mix(aspec.seed, 0x5EEDu);
  vcfg.validate();
  ModelParameters victim = nn::init_parameters(vcfg);

  // Victim-sized inputs: block-mean of the full log-mel.
  auto victim_input = [&](const Features::Utterance& u) {
    const Mat small = block_mean_resize(u.lms.values, aspec.victim_mels, aspec.victim_frames);
    Tensor x({1, aspec.victim_mels, aspec.victim_frames});
    RowMajorMap(x.data.data(), aspec.victim_mels, aspec.victim_frames) = small;
    return x;
  };

  // Optional victim warm-up: the attack step index is exposed because the
  // leak happens in the early stages of training.
  if (aspec.step > 0) {
    const auto split = eval::speaker_split(feats.speakers, rec.split_frac, rec.seeds.split);
    std::set<std::string> train_set(split.train_ids.begin(), split.train_ids.end());
    std::vector<std::size_t> train_utts;
    for (std::size_t i = 0; i < feats.utterances.size(); ++i) {
      if (train_set.count(feats.utterances[i].speaker_id) > 0) train_utts.push_back(i);
    }
    if (train_utts.empty()) throw ParameterError("empty training split for victim warm-up");
    auto opt = optim::init_adam_state(victim);
    const int batch = std::min<std::size_t>(16, train_utts.size());
    for (int step = 0; step < aspec.step; ++step) {
      ModelParameters grad = victim.zeros_like();
      for (int k = 0; k < batch; ++k) {
        const auto& u =
            feats.utterances[train_utts[(static_cast<std::size_t>(step) * batch + k) %
                                        train_utts.size()]];
        auto [logits, cache] = nn::model_forward(victim, vcfg, victim_input(u));
        const auto lg = nn::softmax_ce_loss(logits, u.label);
        grad.axpy(1.0 / batch,
                  nn::model_backward(victim, vcfg, cache, lg.grad_logits).param_grads);
      }
      optim::adam_step(victim, grad, opt, 1e-3);
    }
  }

  const Tensor target = victim_input(*target_utt);
  attack::LeakedGradient leaked =
      attack::leak_single_sample_gradient(victim, vcfg, target, target_utt->label);

  double sigma_used = 0.0;
  if (mode == "dp") {
    if (rec.mode == "dp") {
      sigma_used = rec.sigma;
    } else if (aspec.sigma.has_value()) {
      sigma_used = *aspec.sigma;
    } else {
      throw ParameterError(
          "dp attack mode needs a noise multiplier: attack a DP run or set attack.sigma");
    }
    Prng noise_rng(Prng::mix(aspec.seed, 0xD9u));
    const ModelParameters clipped =
        privacy::clip_gradient(leaked.param_grads, aspec.clip_norm);
    leaked.param_grads = privacy::dp_aggregate({clipped}, aspec.clip_norm, sigma_used,
                                               /*expected_lot=*/1.0, noise_rng, clipped);
    leaked.dp_applied = true;
  }

  attack::AttackOptions options;
  options.iters = aspec.iters;
  options.lr = aspec.lr;
  Prng init_rng(Prng::mix(aspec.seed, 0x1217u));
  const auto result = attack::lbfgs_reconstruct(leaked, victim, options, init_rng, &target);

  const fs::path out =
      out_dir.empty() ? fs::path(run_dir) / ("attack_" + mode + "_" + speaker + "_" +
                                             std::to_string(utt_index))
                      : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  refuse_existing(out / "attack_report.json", force);

  const json vjson = {{"input_shape", vcfg.input_shape},
                      {"blocks", blocks_to_json(vcfg.conv_blocks)},
                      {"n_classes", vcfg.n_classes},
                      {"seed", vcfg.seed}};
  json report;
  report["victim_config_hash"] = config_hash(vjson);
  report["sample_id"] = sample_id;
  report["true_class"] = rec.classes[static_cast<std::size_t>(target_utt->label)];
  report["dp_applied"] = leaked.dp_applied;
  report["sigma"] = leaked.dp_applied ? json(sigma_used) : json(nullptr);
  report["seed"] = aspec.seed;
  report["attack_step"] = aspec.step;
  report["inferred_label"] =
      result.inferred_label >= 0
          ? json(rec.classes[static_cast<std::size_t>(result.inferred_label)])
          : json(nullptr);
  report["label_extracted"] = result.label_extracted;
  report["final_match_loss"] = result.final_match_loss;
  report["snr_db"] = result.snr_db;
  report["lsd"] = result.lsd;
  report["iterations_used"] = result.iterations_used;
  report["line_search_failed"] = result.line_search_failed;
  open_out(out / "attack_report.json") << report.dump(2) << '\n';

  ConstRowMajorMap recovered(result.recovered_input.data.data(), aspec.victim_mels,
                             aspec.victim_frames);
  ConstRowMajorMap truth(target.data.data(), aspec.victim_mels, aspec.victim_frames);
  write_matrix_csv(out / "recovered_spectrogram.csv", recovered);
  write_matrix_csv(out / "target_spectrogram.csv", truth);
  return report;
}

void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                bool force) {
  if (run_dirs.empty()) throw ParameterError("report needs at least one evaluated run");
  std::vector<LoadedEvaluation> runs;
  for (const auto& dir : run_dirs) runs.push_back(load_evaluation(dir));
  std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return a.record.epsilon < b.record.epsilon;
  });

  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  refuse_existing(out / "accuracy_vs_epsilon.csv", force);

  const auto& classes = runs.front().record.classes;
  for (const auto& r : runs) {
    if (r.record.classes != classes) {
      throw ParameterError("runs in one report must share the class taxonomy");
    }
  }

  // Accuracy / AUROC vs epsilon.
  {
    auto f = open_out(out / "accuracy_vs_epsilon.csv");
    f << "epsilon,class,accuracy_mean,accuracy_sd,auroc_mean,auroc_sd\n";
    for (const auto& r : runs) {
      auto emit = [&](const json& cs) {
        f << format_double(r.record.epsilon) << ',' << cs.at("class").get<std::string>()
          << ',' << format_double(cs.at("accuracy").at("mean").get<double>()) << ','
          << format_double(cs.at("accuracy").at("sd").get<double>()) << ','
          << format_double(cs.at("auroc").at("mean").get<double>()) << ','
          << format_double(cs.at("auroc").at("sd").get<double>()) << '\n';
      };
      for (const auto& cs : r.fairness.at("per_class")) emit(cs);
      emit(r.fairness.at("overall"));
    }
  }

  // PtD / EOD vs epsilon, plus Pearson r of PtD against epsilon.
  struct PairSeries {
    std::vector<double> eps;
    std::vector<double> ptd_mean;
  };
  std::map<std::string, PairSeries> series;  // key: class|axis|minority|majority
  {
    auto fp = open_out(out / "ptd_vs_epsilon.csv");
    auto fe = open_out(out / "eod_vs_epsilon.csv");
    fp << "epsilon,class,axis,minority,majority,ptd_mean,ptd_sd\n";
    fe << "epsilon,class,axis,minority,majority,eod_mean,eod_sd\n";
    for (const auto& r : runs) {
      for (const auto& entry : r.fairness.at("fairness")) {
        const std::string cls = entry.at("class").get<std::string>();
        const std::string axis = entry.at("axis").get<std::string>();
        const std::string mino = entry.at("minority").get<std::string>();
        const std::string majo = entry.at("majority").get<std::string>();
        const std::string prefix = format_double(r.record.epsilon) + "," + cls + "," + axis +
                                   "," + mino + "," + majo + ",";
        const json& ptd = entry.at("ptd");
        const json& eod = entry.at("eod");
        if (ptd.at("defined").get<bool>()) {
          fp << prefix << format_double(ptd.at("mean").get<double>()) << ','
             << format_double(ptd.at("sd").get<double>()) << '\n';
          if (std::isfinite(r.record.epsilon)) {
            auto& s = series[cls + "|" + axis + "|" + mino + "|" + majo];
            s.eps.push_back(r.record.epsilon);
            s.ptd_mean.push_back(ptd.at("mean").get<double>());
          }
        } else {
          fp << prefix << "NA,NA\n";
        }
        if (eod.at("defined").get<bool>()) {
          fe << prefix << format_double(eod.at("mean").get<double>()) << ','
             << format_double(eod.at("sd").get<double>()) << '\n';
        } else {
          fe << prefix << "NA,NA\n";
        }
      }
    }
  }
  {
    auto f = open_out(out / "pearson_ptd_vs_epsilon.csv");
    f << "class,axis,minority,majority,pearson_r\n";
    for (const auto& [key, s] : series) {
      std::string row = key;
      std::replace(row.begin(), row.end(), '|', ',');
      const auto r = eval::pearson_r(s.eps, s.ptd_mean);
      f << row << ',' << (r.has_value() ? format_double(*r) : std::string("NA")) << '\n';
    }
  }

  // Paired Wilcoxon tests against the non-DP baseline, when present.
  {
    const LoadedEvaluation* baseline = nullptr;
    for (const auto& r : runs) {
      if (!std::isfinite(r.record.epsilon)) baseline = &r;
    }
    auto f = open_out(out / "wilcoxon_vs_nondp.csv");
    f << "epsilon,class,wilcoxon_p\n";
    if (baseline != nullptr) {
      auto acc_by_repeat = [](const json& run_json, const std::string& cls) {
        for (const auto& cs : run_json.at("per_class")) {
          if (cs.at("class").get<std::string>() == cls) {
            return cs.at("accuracy").at("by_repeat").get<std::vector<double>>();
          }
        }
        return run_json.at("overall").at("accuracy").at("by_repeat")
            .get<std::vector<double>>();
      };
      std::vector<std::string> test_classes = classes;
      test_classes.push_back("mean");
      for (const auto& r : runs) {
        if (&r == baseline || !std::isfinite(r.record.epsilon)) continue;
        for (const auto& cls : test_classes) {
          const auto a = acc_by_repeat(r.fairness, cls);
          const auto b = acc_by_repeat(baseline->fairness, cls);
          const std::size_t n = std::min(a.size(), b.size());
          std::vector<std::pair<double, double>> pairs;
          for (std::size_t i = 0; i < n; ++i) pairs.push_back({a[i], b[i]});
          const auto w = eval::wilcoxon_signed_rank(pairs);
          f << format_double(r.record.epsilon) << ',' << cls << ','
            << (w.has_value() ? format_double(w->p) : std::string("NA")) << '\n';
        }
      }
    }
  }

  // ROC curve points from the stored first-repeat predictions.
  {
    auto f = open_out(out / "roc_points.csv");
    f << "epsilon,class,threshold,fpr,tpr\n";
    for (const auto& r : runs) {
      const fs::path pred_path = fs::path(r.record.run_dir) / "predictions.csv";
      std::ifstream in(pred_path);
      if (!in) throw IoError("cannot open " + pred_path.string());
      std::string line;
      std::getline(in, line);  // header
      std::vector<std::vector<double>> scores(classes.size());
      std::vector<std::string> true_classes;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        true_classes.push_back(fields.at(1));
        for (std::size_t c = 0; c < classes.size(); ++c) {
          scores[c].push_back(std::stod(fields.at(4 + c)));
        }
      }
      for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<int> labels;
        labels.reserve(true_classes.size());
        for (const auto& tc : true_classes) labels.push_back(tc == classes[c] ? 1 : 0);
        for (const auto& point : eval::roc_points(scores[c], labels)) {
          f << format_double(r.record.epsilon) << ',' << classes[c] << ','
            << format_double(point.threshold) << ',' << format_double(point.fpr) << ','
            << format_double(point.tpr) << '\n';
        }
      }
    }
  }
}

synth::CohortSpec parse_cohort_spec(const json& j) {
  reject_unknown_keys(j,
                      {"version", "n_speakers", "classes", "sex", "age_bands",
                       "utterances_per_speaker", "utterance_seconds", "difficulty",
                       "master_seed"},
                      "cohort spec");
  if (j.value("version", 1) != 1) throw ParameterError("unsupported cohort spec version");
  synth::CohortSpec spec;
  spec.n_speakers = j.at("n_speakers").get<int>();
  spec.classes.clear();
  for (const auto& c : j.at("classes")) {
    reject_unknown_keys(c, {"id", "prevalence"}, "classes");
    spec.classes.push_back({c.at("id").get<std::string>(), c.at("prevalence").get<double>()});
  }
  if (j.contains("sex")) {
    spec.sex_proportions.clear();
    for (const auto& [key, value] : j.at("sex").items()) {
      spec.sex_proportions.push_back({key, value.get<double>()});
    }
  }
  if (j.contains("age_bands")) {
    spec.age_proportions.clear();
    for (const auto& [key, value] : j.at("age_bands").items()) {
      spec.age_proportions.push_back({key, value.get<double>()});
    }
  }
  spec.utterances_per_speaker = j.value("utterances_per_speaker", spec.utterances_per_speaker);
  spec.utterance_seconds = j.value("utterance_seconds", spec.utterance_seconds);
  if (j.contains("difficulty")) {
    const json& d = j.at("difficulty");
    reject_unknown_keys(d, {"base_snr_db", "snr_offset_db", "attenuation"}, "difficulty");
    spec.difficulty.base_snr_db = d.value("base_snr_db", spec.difficulty.base_snr_db);
    if (d.contains("snr_offset_db")) {
      for (const auto& [key, value] : d.at("snr_offset_db").items()) {
        spec.difficulty.snr_offset_db[key] = value.get<double>();
      }
    }
    if (d.contains("attenuation")) {
      for (const auto& [key, value] : d.at("attenuation").items()) {
        spec.difficulty.attenuation[key] = value.get<double>();
      }
    }
  }
  spec.master_seed = j.value("master_seed", spec.master_seed);
  spec.validate();
  return spec;
}

std::string run_synth(const std::string& spec_path, const std::string& out_dir, bool force) {
  std::ifstream in(spec_path);
  if (!in) throw IoError("cannot open cohort spec: " + spec_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParameterError("cohort spec is not valid JSON (" + std::string(e.what()) +
                         "): " + spec_path);
  }
  const synth::CohortSpec spec = parse_cohort_spec(j);
  refuse_existing(fs::path(out_dir) / "manifest.csv", force);
  const auto cohort = synth::generate_cohort(spec);
  return synth::export_manifest(cohort, spec, out_dir);
}

}  // namespace pipeline
}  // namespace speechdp

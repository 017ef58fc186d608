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

#include <cmath>

#include "speechdp/attack.hpp"
#include "speechdp/privacy.hpp"

using namespace speechdp;

namespace {

nn::ModelConfig victim_config(std::uint64_t seed, int n_classes = 4) {
  nn::ModelConfig cfg;
  cfg.input_shape = {1, 8, 8};
  cfg.conv_blocks = {{4, 3, 2}};
  cfg.n_classes = n_classes;
  cfg.seed = seed;
  return cfg;
}

Tensor random_input(const std::vector<int>& shape, std::uint64_t seed) {
  Tensor x(shape);
  Prng rng(seed);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data[i] = rng.next_gaussian();
  return x;
}

}  // namespace

TEST_CASE("iDLG picks the unique negative bias-gradient entry") {
  Vec bias_grad(3);
  bias_grad << -0.8, 0.5, 0.3;  // softmax probs (0.2, 0.5, 0.3), true class 0
  const auto label = attack::extract_label_idlg(bias_grad);
  REQUIRE(label.has_value());
  CHECK(*label == 0);

  Vec all_positive(3);
  all_positive << 0.1, 0.5, 0.4;
  CHECK(!attack::extract_label_idlg(all_positive).has_value());
  Vec two_negative(3);
  two_negative << -0.1, -0.5, 0.6;
  CHECK(!attack::extract_label_idlg(two_negative).has_value());
}

TEST_CASE("label extraction is perfect on clean single-sample gradients") {
  int correct = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Prng rng(Prng::mix(42, static_cast<std::uint64_t>(trial)));
    const auto cfg = victim_config(rng.next_u64());
    const auto params = nn::init_parameters(cfg);
    const int label = static_cast<int>(rng.next_int(0, cfg.n_classes - 1));
    const auto leak = attack::leak_single_sample_gradient(
        params, cfg, random_input(cfg.input_shape, rng.next_u64()), label);
    const auto got = attack::extract_label_idlg(leak.param_grads.entries.back().value.data);
    if (got.has_value() && *got == label) ++correct;
  }
  CHECK(correct == 100);
}

TEST_CASE("exactly one negative bias entry over a thousand random cases") {
  for (int trial = 0; trial < 1000; ++trial) {
    Prng rng(Prng::mix(7, static_cast<std::uint64_t>(trial)));
    const auto cfg = victim_config(rng.next_u64(), 2 + static_cast<int>(rng.next_int(0, 4)));
    const auto params = nn::init_parameters(cfg);
    const int label = static_cast<int>(rng.next_int(0, cfg.n_classes - 1));
    const auto leak = attack::leak_single_sample_gradient(
        params, cfg, random_input(cfg.input_shape, rng.next_u64()), label);
    const Vec& bias = leak.param_grads.entries.back().value.data;
    int negatives = 0;
    for (Eigen::Index i = 0; i < bias.size(); ++i) negatives += bias[i] < 0.0;
    CHECK(negatives == 1);
  }
}

TEST_CASE("noised gradients mostly defeat label extraction") {
  int failures = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Prng rng(Prng::mix(1001, static_cast<std::uint64_t>(trial)));
    const auto cfg = victim_config(rng.next_u64());
    const auto params = nn::init_parameters(cfg);
    const int label = static_cast<int>(rng.next_int(0, cfg.n_classes - 1));
    auto leak = attack::leak_single_sample_gradient(
        params, cfg, random_input(cfg.input_shape, rng.next_u64()), label);
    const auto clipped = privacy::clip_gradient(leak.param_grads, 1.5);
    Prng noise(rng.next_u64());
    leak.param_grads = privacy::dp_aggregate({clipped}, 1.5, 1.0, 1.0, noise, clipped);
    const auto got = attack::extract_label_idlg(leak.param_grads.entries.back().value.data);
    if (!got.has_value() || *got != label) ++failures;
  }
  CHECK(failures > trials / 2);
}

TEST_CASE("gradient matching loss is a flat squared distance") {
  const auto cfg = victim_config(5);
  const auto params = nn::init_parameters(cfg);
  const auto leak = attack::leak_single_sample_gradient(
      params, cfg, random_input(cfg.input_shape, 3), 1);

  CHECK(attack::gradient_matching_loss(leak.param_grads, leak) == 0.0);

  auto perturbed = leak.param_grads;
  perturbed.entries[0].value.data[4] += 1.0;
  CHECK(attack::gradient_matching_loss(perturbed, leak) == doctest::Approx(1.0).epsilon(1e-12));

  // Naive double-loop oracle on a random pair.
  ModelParameters random_grads = leak.param_grads;
  Prng rng(17);
  for (auto& e : random_grads.entries) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data[i] = rng.next_gaussian();
  }
  double naive = 0.0;
  for (std::size_t e = 0; e < random_grads.entries.size(); ++e) {
    for (Eigen::Index i = 0; i < random_grads.entries[e].value.size(); ++i) {
      const double d = random_grads.entries[e].value.data[i] -
                       leak.param_grads.entries[e].value.data[i];
      naive += d * d;
    }
  }
  CHECK(attack::gradient_matching_loss(random_grads, leak) ==
        doctest::Approx(naive).epsilon(1e-12));

  ModelParameters wrong;
  wrong.entries.push_back({"w", Tensor({2})});
  CHECK_THROWS_AS(attack::gradient_matching_loss(wrong, leak), ParameterError);
}

TEST_CASE("zero-iteration reconstruction returns the seeded initialization") {
  const auto cfg = victim_config(9);
  const auto params = nn::init_parameters(cfg);
  const auto target = random_input(cfg.input_shape, 31);
  const auto leak = attack::leak_single_sample_gradient(params, cfg, target, 2);

  attack::AttackOptions options;
  options.iters = 0;
  Prng rng(777);
  const auto result = attack::lbfgs_reconstruct(leak, params, options, rng, &target);

  Prng rng2(777);
  Vec expected(target.size());
  for (Eigen::Index i = 0; i < expected.size(); ++i) expected[i] = rng2.next_gaussian();
  CHECK((result.recovered_input.data - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(result.inferred_label == 2);
}

TEST_CASE("non-private reconstruction converges; DP reconstruction does not") {
  const auto cfg = victim_config(13);
  const auto params = nn::init_parameters(cfg);
  const auto target = random_input(cfg.input_shape, 55);
  const int label = 1;
  const auto leak = attack::leak_single_sample_gradient(params, cfg, target, label);

  attack::AttackOptions options;
  options.iters = 100;
  Prng rng(4242);
  const auto raw = attack::lbfgs_reconstruct(leak, params, options, rng, &target);
  CHECK(raw.inferred_label == label);
  CHECK(raw.label_extracted);
  CHECK(raw.final_match_loss < 1e-4);
  CHECK(raw.snr_db >= 10.0);

  // Accepted losses are monotone nonincreasing.
  for (std::size_t i = 1; i < raw.accepted_losses.size(); ++i) {
    CHECK(raw.accepted_losses[i] <= raw.accepted_losses[i - 1]);
  }

  // Same sample, same seeds, DP-noised gradient.
  auto noised = leak;
  const auto clipped = privacy::clip_gradient(leak.param_grads, 1.5);
  Prng noise(999);
  noised.param_grads = privacy::dp_aggregate({clipped}, 1.5, 0.7, 1.0, noise, clipped);
  noised.dp_applied = true;
  Prng rng_dp(4242);
  const auto dp = attack::lbfgs_reconstruct(noised, params, options, rng_dp, &target);
  CHECK(dp.snr_db <= raw.snr_db - 10.0);
}

TEST_CASE("reconstruction is deterministic given seeds") {
  const auto cfg = victim_config(21);
  const auto params = nn::init_parameters(cfg);
  const auto target = random_input(cfg.input_shape, 5);
  const auto leak = attack::leak_single_sample_gradient(params, cfg, target, 0);
  attack::AttackOptions options;
  options.iters = 15;
  Prng r1(33), r2(33);
  const auto a = attack::lbfgs_reconstruct(leak, params, options, r1, &target);
  const auto b = attack::lbfgs_reconstruct(leak, params, options, r2, &target);
  CHECK((a.recovered_input.data - b.recovered_input.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.final_match_loss == b.final_match_loss);
}

TEST_CASE("snr spot values") {
  Tensor ref({1, 2, 2});
  ref.data << 1.0, -1.0, 0.5, 0.25;
  CHECK(attack::snr_db(ref, ref) == 120.0);

  Tensor zero({1, 2, 2});
  CHECK(attack::snr_db(ref, zero) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor neg = ref;
  neg.data = -ref.data;
  CHECK(attack::snr_db(ref, neg) == doctest::Approx(-6.0206).epsilon(1e-4));

  CHECK_THROWS_AS(attack::snr_db(zero, ref), ParameterError);
  Tensor other({1, 4, 1});
  CHECK_THROWS_AS(attack::snr_db(ref, other), ParameterError);
}

TEST_CASE("log-spectral distance spot values and naive oracle") {
  const Mat ref = Mat::Random(6, 5);
  CHECK(attack::log_spectral_distance(ref, ref) == 0.0);

  const Mat shifted = ref.array() + 0.37;
  CHECK(attack::log_spectral_distance(ref, shifted) == doctest::Approx(0.37).epsilon(1e-12));

  const Mat est = Mat::Random(6, 5);
  double naive = 0.0;
  for (int t = 0; t < 5; ++t) {
    double frame = 0.0;
    for (int m = 0; m < 6; ++m) {
      frame += (ref(m, t) - est(m, t)) * (ref(m, t) - est(m, t));
    }
    naive += std::sqrt(frame / 6.0);
  }
  naive /= 5.0;
  CHECK(attack::log_spectral_distance(ref, est) == doctest::Approx(naive).epsilon(1e-12));

  CHECK_THROWS_AS(attack::log_spectral_distance(ref, Mat::Random(5, 5)), ParameterError);
}

#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dark/denoiser_net.hpp"
#include "dark/pair_sampler.hpp"
#include "dark/reflective_sampler.hpp"

namespace dark {

/// Which task-shaped masks a rollout may use when it is not a random partial mask.
enum class TaskSet { both, abduction, deduction };
std::string_view to_string(TaskSet t);
TaskSet parse_task_set(std::string_view s);

struct RLConfig {
  std::size_t group_size = 8;  // g
  std::size_t lambda = 2;
  double beta = 0.01;
  double clip = 0.2;
  double rho_min = 0.3;
  double rho_max = 0.7;
  double task_mix = 0.5;  // mu
  TaskSet tasks = TaskSet::both;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 20;
  std::size_t rollout_steps = 16;  // reverse steps per rollout
  AdamWConfig optimizer{1e-5, 0.9, 0.999, 1e-8, 1e-6, 0, 1.0};

  void validate() const;
};

enum class RolloutMode { random, abduction, deduction };
std::string_view to_string(RolloutMode m);

struct RolloutStart {
  DiffusionState state;
  std::vector<std::size_t> completion;  // S, ascending
  RolloutMode mode = RolloutMode::random;
};

/// Partially masked start canvas for one pair. BOS and SEP stay frozen.
RolloutStart make_rollout_start(const ReasoningPair& pair, const Vocabulary& vocab, const CanvasLayout& layout,
                                const RLConfig& cfg, Rng& rng);

struct RolloutRecord {
  RolloutStart start;
  TokenSequence generated;
  QueryDecode query;
  AnswerSet conclusion;  // decoded from the generated observation region
  double reward = 0.0;
  bool executed = false;  // the executor ran on the parsed query
  std::vector<double> logp_old;
  double advantage = 0.0;
};

/// Jaccard of the executed query against the conclusion; 0 on parse or executor failure.
double pair_reward(const QueryDecode& query, std::span<const EntityId> conclusion, const KGraph& graph,
                   bool* executed = nullptr);

/// Denoises S with temperature-1 sampling and scores the generated pair on `graph`.
RolloutRecord rollout(const Denoiser& model, const RolloutStart& start, const Vocabulary& vocab,
                      const CanvasLayout& layout, const NoiseSchedule& schedule, const KGraph& graph,
                      std::size_t steps, Rng& rng);

/// lambda bipartitions of S. in_a[j][i] says whether the i-th element of S is
/// masked in the first pass of pair j. Each pair draws t ~ U(0,1) and puts a
/// token in A with probability t, so the two passes mask fractions near t and 1 - t.
struct CoupledMasks {
  std::vector<std::vector<std::uint8_t>> in_a;
};
CoupledMasks draw_coupled_masks(std::size_t completion_size, std::size_t lambda, Rng& rng);

/// Per-token log-prob estimate over S: the mean of one reading per coupled
/// pair plus one from the pass masking all of S. When `grad` is non-empty,
/// accumulates the gradient of sum_i coeffs[i] * estimate_i.
template <typename Scalar>
std::vector<double> coupled_logprob(const Transformer<Scalar>& net, std::span<const TokenId> canvas,
                                    std::span<const std::size_t> completion, const CoupledMasks& masks,
                                    std::span<Scalar> grad = {}, std::span<const double> coeffs = {});

/// Group-normalized advantages; all zero when the population std is below 1e-8.
std::vector<double> group_advantages(std::span<const double> rewards);

struct GrpoStats {
  double objective = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double max_ratio_dev = 0.0;  // max |ratio - 1| over all tokens
  double grad_norm = 0.0;
  bool zero_std = false;
};

/// One ascent step on the clipped group objective minus beta * KL to `reference`.
/// Fills advantages and logp_old on the records.
GrpoStats grpo_step(DenoiserModel& model, OptimizerState& opt, const DenoiserModel& old_model,
                    const DenoiserModel& reference, std::span<RolloutRecord> group, const RLConfig& cfg, Rng& rng);

struct RLEpochMetrics {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  std::size_t distinct_pairs = 0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t zero_std_groups = 0;
};

/// Full loop: per step, snapshot theta_old, build one start from a random
/// pair, roll out g completions and take a GRPO step.
std::vector<RLEpochMetrics> train_rl(DenoiserModel& model, OptimizerState& opt, const DenoiserModel& reference,
                                     std::span<const ReasoningPair> pairs, const KGraph& reward_graph,
                                     const Vocabulary& vocab, const CanvasLayout& layout,
                                     const NoiseSchedule& schedule, const RLConfig& cfg, std::uint64_t seed,
                                     const std::function<void(const RLEpochMetrics&)>& on_epoch = {});

/// Mean rollout reward over a fixed set of starts drawn from `seed`.
double mean_rollout_reward(const Denoiser& model, std::span<const ReasoningPair> pairs, const KGraph& reward_graph,
                           const Vocabulary& vocab, const CanvasLayout& layout, const NoiseSchedule& schedule,
                           const RLConfig& cfg, std::size_t count, std::uint64_t seed);

}  // namespace dark

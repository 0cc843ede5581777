#include "dark/rl_explorer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace dark {

std::string_view to_string(TaskSet t) {
  switch (t) {
    case TaskSet::both: return "both";
    case TaskSet::abduction: return "abduction";
    case TaskSet::deduction: return "deduction";
  }
  return "?";
}

TaskSet parse_task_set(std::string_view s) {
  if (s == "both") return TaskSet::both;
  if (s == "abduction") return TaskSet::abduction;
  if (s == "deduction") return TaskSet::deduction;
  throw Error(ErrorCode::invalid_argument, "unknown task set '" + std::string(s) + "'");
}

std::string_view to_string(RolloutMode m) {
  switch (m) {
    case RolloutMode::random: return "random";
    case RolloutMode::abduction: return "abduction";
    case RolloutMode::deduction: return "deduction";
  }
  return "?";
}

void RLConfig::validate() const {
  if (group_size < 2) throw Error(ErrorCode::invalid_argument, "group size must be >= 2");
  if (lambda < 1) throw Error(ErrorCode::invalid_argument, "lambda must be >= 1");
  if (!(rho_min >= 0.0 && rho_min <= rho_max && rho_max <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "mask fraction range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(task_mix >= 0.0 && task_mix <= 1.0)) throw Error(ErrorCode::invalid_argument, "task mix must lie in [0, 1]");
  if (!(clip >= 0.0) || !(beta >= 0.0)) throw Error(ErrorCode::invalid_argument, "clip and beta must be >= 0");
  if (rollout_steps < 1) throw Error(ErrorCode::invalid_argument, "rollout steps must be >= 1");
}

RolloutStart make_rollout_start(const ReasoningPair& pair, const Vocabulary& vocab, const CanvasLayout& layout,
                                const RLConfig& cfg, Rng& rng) {
  const TokenSequence x0 = encode_pair(pair.query, pair.own_answers(), vocab, layout);
  RolloutStart out;
  std::vector<std::size_t> positions;
  if (uniform01(rng) < cfg.task_mix) {
    bool abduction = cfg.tasks == TaskSet::abduction;
    if (cfg.tasks == TaskSet::both) abduction = uniform01(rng) < 0.5;
    out.mode = abduction ? RolloutMode::abduction : RolloutMode::deduction;
    positions = region_positions(layout, abduction ? MaskRegion::query_only : MaskRegion::observation_only);
  } else {
    out.mode = RolloutMode::random;
    const auto open = region_positions(layout, MaskRegion::whole);
    std::vector<std::size_t> candidates;
    for (std::size_t i : open) {
      if (i != layout.sep_index()) candidates.push_back(i);
    }
    for (;;) {
      const double rho = cfg.rho_min + (cfg.rho_max - cfg.rho_min) * uniform01(rng);
      positions.clear();
      for (std::size_t i : candidates) {
        if (uniform01(rng) < rho) positions.push_back(i);
      }
      if (positions.size() < candidates.size() || candidates.empty()) break;
    }
  }
  out.state = masked_state(x0, positions, 1.0);
  out.completion = std::move(positions);
  return out;
}

double pair_reward(const QueryDecode& query, std::span<const EntityId> conclusion, const KGraph& graph,
                   bool* executed) {
  if (executed) *executed = false;
  if (!query.ok()) return 0.0;
  try {
    const AnswerSet result = execute(graph, *query.query);
    if (executed) *executed = true;
    return jaccard(result, conclusion);
  } catch (const Error&) {
    return 0.0;
  }
}

RolloutRecord rollout(const Denoiser& model, const RolloutStart& start, const Vocabulary& vocab,
                      const CanvasLayout& layout, const NoiseSchedule& schedule, const KGraph& graph,
                      std::size_t steps, Rng& rng) {
  RolloutRecord rec;
  rec.start = start;
  const SamplingContext ctx{model, vocab, layout, schedule};
  const DiffusionState done = denoise(ctx, start.state, steps, {DecodeMode::sample, 1.0}, rng);
  rec.generated = done.canvas;
  rec.query = try_decode_query(query_region(rec.generated, layout), vocab);
  rec.conclusion = decode_answers(obs_region(rec.generated, layout), vocab).answers;
  rec.reward = pair_reward(rec.query, rec.conclusion, graph, &rec.executed);
  return rec;
}

CoupledMasks draw_coupled_masks(std::size_t completion_size, std::size_t lambda, Rng& rng) {
  CoupledMasks m;
  m.in_a.resize(lambda);
  for (auto& pair : m.in_a) {
    const double t = uniform01(rng);
    pair.resize(completion_size);
    for (auto& bit : pair) bit = uniform01(rng) < t ? 1 : 0;
  }
  return m;
}

template <typename Scalar>
std::vector<double> coupled_logprob(const Transformer<Scalar>& net, std::span<const TokenId> canvas,
                                    std::span<const std::size_t> completion, const CoupledMasks& masks,
                                    std::span<Scalar> grad, std::span<const double> coeffs) {
  const std::size_t n = completion.size();
  std::vector<double> est(n, 0.0);
  if (n == 0) return est;
  if (!grad.empty() && coeffs.size() != n) {
    throw Error(ErrorCode::invalid_argument, "coupled_logprob: one coefficient per completion token required");
  }
  const double share = 1.0 / static_cast<double>(masks.in_a.size() + 1);

  // Runs one pass with the chosen completion indices masked and adds their
  // readings to the estimate.
  auto pass = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return;
    TokenSequence masked(canvas.begin(), canvas.end());
    std::vector<LogProbTarget> targets;
    targets.reserve(idx.size());
    for (std::size_t k : idx) {
      masked[completion[k]] = tok::mask;
      targets.push_back({completion[k], canvas[completion[k]], grad.empty() ? 0.0 : coeffs[k] * share});
    }
    std::vector<double> lps;
    logprob_objective(net, masked, targets, grad, &lps);
    for (std::size_t j = 0; j < idx.size(); ++j) est[idx[j]] += lps[j] * share;
  };

  std::vector<std::size_t> a, b;
  for (const auto& in_a : masks.in_a) {
    if (in_a.size() != n) throw Error(ErrorCode::invalid_argument, "coupled mask size does not match S");
    a.clear();
    b.clear();
    for (std::size_t k = 0; k < n; ++k) (in_a[k] ? a : b).push_back(k);
    pass(a);
    pass(b);
  }
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  pass(all);
  return est;
}

template std::vector<double> coupled_logprob<float>(const Transformer<float>&, std::span<const TokenId>,
                                                    std::span<const std::size_t>, const CoupledMasks&,
                                                    std::span<float>, std::span<const double>);
template std::vector<double> coupled_logprob<double>(const Transformer<double>&, std::span<const TokenId>,
                                                     std::span<const std::size_t>, const CoupledMasks&,
                                                     std::span<double>, std::span<const double>);

std::vector<double> group_advantages(std::span<const double> rewards) {
  std::vector<double> adv(rewards.size(), 0.0);
  if (rewards.empty()) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
  if (sd < 1e-8) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + 1e-8);
  return adv;
}

GrpoStats grpo_step(DenoiserModel& model, OptimizerState& opt, const DenoiserModel& old_model,
                    const DenoiserModel& reference, std::span<RolloutRecord> group, const RLConfig& cfg, Rng& rng) {
  if (group.empty()) throw Error(ErrorCode::invalid_argument, "grpo_step: empty group");
  GrpoStats st;
  std::vector<double> rewards;
  for (const auto& r : group) rewards.push_back(r.reward);
  const auto adv = group_advantages(rewards);
  st.zero_std = std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; });

  const std::size_t np = model.net().num_parameters();
  std::vector<float> grad(np, 0.0f);
  const double g = static_cast<double>(group.size());
  std::size_t tokens = 0, clipped = 0;
  double ratio_sum = 0.0;

  for (std::size_t i = 0; i < group.size(); ++i) {
    RolloutRecord& rec = group[i];
    rec.advantage = adv[i];
    st.mean_reward += rec.reward / g;
    const auto& S = rec.start.completion;
    if (S.empty()) {
      rec.logp_old.clear();
      continue;
    }
    const CoupledMasks masks = draw_coupled_masks(S.size(), cfg.lambda, rng);
    rec.logp_old = coupled_logprob<float>(old_model.net(), rec.generated, S, masks);
    const auto lp_ref = coupled_logprob<float>(reference.net(), rec.generated, S, masks);
    const auto lp = coupled_logprob<float>(model.net(), rec.generated, S, masks);

    const double per_tok = 1.0 / (g * static_cast<double>(S.size()));
    std::vector<double> coeffs(S.size());
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double ratio = std::exp(lp[k] - rec.logp_old[k]);
      const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
      const double unclipped_term = ratio * rec.advantage;
      const double clipped_term = clipped_ratio * rec.advantage;
      const bool use_unclipped = unclipped_term <= clipped_term;
      const double kl = lp[k] - lp_ref[k];
      st.surrogate += per_tok * std::min(unclipped_term, clipped_term);
      st.kl += per_tok * kl;
      ratio_sum += ratio;
      st.max_ratio_dev = std::max(st.max_ratio_dev, std::abs(ratio - 1.0));
      ++tokens;
      if (clipped_ratio != ratio) ++clipped;
      // d objective / d logp: ratio * A on the active unclipped branch, minus beta from the KL term.
      const double dobj = (use_unclipped ? unclipped_term : 0.0) - cfg.beta;
      coeffs[k] = -dobj * per_tok;  // gradient of the loss to minimize
    }
    coupled_logprob<float>(model.net(), rec.generated, S, masks, grad, coeffs);
  }
  st.objective = st.surrogate - cfg.beta * st.kl;
  if (!std::isfinite(st.objective)) {
    std::ostringstream msg;
    msg << "non-finite GRPO objective (surrogate=" << st.surrogate << ", kl=" << st.kl << ", rewards=";
    for (double r : rewards) msg << r << ' ';
    msg << ')';
    throw Error(ErrorCode::numeric, msg.str());
  }
  if (tokens > 0) {
    st.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
    st.mean_ratio = ratio_sum / static_cast<double>(tokens);
    st.grad_norm = apply_update(model, grad, opt);
  }
  return st;
}

std::vector<RLEpochMetrics> train_rl(DenoiserModel& model, OptimizerState& opt, const DenoiserModel& reference,
                                     std::span<const ReasoningPair> pairs, const KGraph& reward_graph,
                                     const Vocabulary& vocab, const CanvasLayout& layout,
                                     const NoiseSchedule& schedule, const RLConfig& cfg, std::uint64_t seed,
                                     const std::function<void(const RLEpochMetrics&)>& on_epoch) {
  cfg.validate();
  if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "train_rl: no pairs");
  Rng rng(seed);
  std::vector<RLEpochMetrics> out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RLEpochMetrics m;
    m.epoch = epoch + 1;
    std::set<TokenSequence> distinct;
    std::size_t rollouts = 0;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      const DenoiserModel old_model = model;
      const ReasoningPair& pair = pairs[uniform_index(rng, pairs.size())];
      const RolloutStart start = make_rollout_start(pair, vocab, layout, cfg, rng);
      std::vector<RolloutRecord> group;
      for (std::size_t i = 0; i < cfg.group_size; ++i) {
        Rng item_rng(rng());
        group.push_back(rollout(old_model, start, vocab, layout, schedule, reward_graph, cfg.rollout_steps, item_rng));
        distinct.insert(group.back().generated);
        m.mean_reward += group.back().reward;
        ++rollouts;
      }
      const GrpoStats st = grpo_step(model, opt, old_model, reference, group, cfg, rng);
      m.kl += st.kl / static_cast<double>(cfg.steps_per_epoch);
      m.clip_fraction += st.clip_fraction / static_cast<double>(cfg.steps_per_epoch);
      if (st.zero_std) ++m.zero_std_groups;
    }
    if (rollouts > 0) m.mean_reward /= static_cast<double>(rollouts);
    m.distinct_pairs = distinct.size();
    if (on_epoch) on_epoch(m);
    out.push_back(m);
  }
  return out;
}

double mean_rollout_reward(const Denoiser& model, std::span<const ReasoningPair> pairs, const KGraph& reward_graph,
                           const Vocabulary& vocab, const CanvasLayout& layout, const NoiseSchedule& schedule,
                           const RLConfig& cfg, std::size_t count, std::uint64_t seed) {
  if (pairs.empty() || count == 0) return 0.0;
  Rng rng(seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const ReasoningPair& pair = pairs[uniform_index(rng, pairs.size())];
    const RolloutStart start = make_rollout_start(pair, vocab, layout, cfg, rng);
    sum += rollout(model, start, vocab, layout, schedule, reward_graph, cfg.rollout_steps, rng).reward;
  }
  return sum / static_cast<double>(count);
}

}  // namespace dark

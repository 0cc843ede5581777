#include "dark/reflective_sampler.hpp"

#include <algorithm>

namespace dark {

void ReflectiveConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::invalid_argument, "steps must be >= 1");
  if (reflect_every < 1 || reflect_every > steps) {
    throw Error(ErrorCode::invalid_argument, "reflect interval must lie in [1, steps]");
  }
  if (candidates < 1) throw Error(ErrorCode::invalid_argument, "candidate count must be >= 1");
  if (verify == VerifyMode::graph && verify_graph == nullptr) {
    throw Error(ErrorCode::invalid_argument, "graph verification needs a graph");
  }
}

DiffusionState denoise(const SamplingContext& ctx, DiffusionState state, std::size_t steps, Decoding decoding,
                       Rng& rng, SamplerStats* stats) {
  if (steps < 1) throw Error(ErrorCode::invalid_argument, "steps must be >= 1");
  state.t = 1.0;
  for (std::size_t i = steps; i >= 1; --i) {
    if (state.fully_denoised()) break;
    const double s = ctx.schedule.grid_time(i - 1, steps);
    const Prediction pred = ctx.model.predict(state.canvas);
    if (stats) {
      ++stats->model_evals;
      ++stats->plain_steps;
    }
    state = reverse_step(state, s, pred, decoding, ctx.schedule, rng);
  }
  return state;
}

DiffusionState deduction_start(const QueryNode& q, const SamplingContext& ctx) {
  TokenSequence canvas(ctx.layout.length(), tok::mask);
  canvas[0] = tok::bos;
  const auto qt = encode_query(q, ctx.vocab, ctx.layout.query_len);
  std::copy(qt.begin(), qt.end(), canvas.begin() + static_cast<std::ptrdiff_t>(ctx.layout.query_begin()));
  canvas[ctx.layout.sep_index()] = tok::sep;
  DiffusionState s;
  s.canvas = std::move(canvas);
  s.t = 1.0;
  s.frozen.assign(ctx.layout.length(), 1);
  for (std::size_t i = ctx.layout.obs_begin(); i < ctx.layout.obs_end(); ++i) s.frozen[i] = 0;
  return s;
}

DiffusionState abduction_start(std::span<const EntityId> observation, const SamplingContext& ctx) {
  TokenSequence canvas(ctx.layout.length(), tok::mask);
  canvas[0] = tok::bos;
  canvas[ctx.layout.sep_index()] = tok::sep;
  const auto ot = encode_answers(observation, ctx.vocab, ctx.layout.obs_len);
  std::copy(ot.begin(), ot.end(), canvas.begin() + static_cast<std::ptrdiff_t>(ctx.layout.obs_begin()));
  DiffusionState s;
  s.canvas = std::move(canvas);
  s.t = 1.0;
  s.frozen.assign(ctx.layout.length(), 1);
  for (std::size_t i = ctx.layout.query_begin(); i < ctx.layout.query_end(); ++i) s.frozen[i] = 0;
  return s;
}

AnswerSet deduce(const SamplingContext& ctx, const QueryNode& q, const ReflectiveConfig& cfg, Rng& rng,
                 SamplerStats* stats) {
  const DiffusionState done = denoise(ctx, deduction_start(q, ctx), cfg.steps, cfg.deduction, rng, stats);
  return decode_answers(obs_region(done.canvas, ctx.layout), ctx.vocab).answers;
}

std::size_t select_best(std::span<const double> sims) {
  if (sims.empty()) throw Error(ErrorCode::invalid_argument, "select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < sims.size(); ++i) {
    if (sims[i] > sims[best]) best = i;
  }
  return best;
}

Reflection reflect(const SamplingContext& ctx, const DiffusionState& state, std::span<const EntityId> observation,
                   const ReflectiveConfig& cfg, Rng& rng, SamplerStats& stats) {
  Reflection out;
  ++stats.reflections;
  // All candidates condition on the same X^t, so one prediction serves them all.
  const Prediction pred = ctx.model.predict(state.canvas);
  ++stats.model_evals;
  ++stats.reflection_evals;
  check_normalized(pred);
  const Decoding sampling{DecodeMode::sample, cfg.temperature};
  for (std::size_t i = 0; i < cfg.candidates; ++i) out.candidates.push_back(draw_estimate(state, pred, sampling, rng));

  for (const auto& cand : out.candidates) {
    const auto qregion = query_region(cand, ctx.layout);
    if (cfg.verify == VerifyMode::graph) {
      const QueryDecode parsed = try_decode_query(qregion, ctx.vocab);
      double sim = -1.0;
      if (parsed.ok()) {
        try {
          sim = jaccard(execute(*cfg.verify_graph, *parsed.query), observation);
        } catch (const Error&) {
          sim = -1.0;
        }
      }
      out.sims.push_back(sim);
      continue;
    }
    TokenSequence probe(ctx.layout.length(), tok::mask);
    probe[0] = tok::bos;
    std::copy(qregion.begin(), qregion.end(), probe.begin() + static_cast<std::ptrdiff_t>(ctx.layout.query_begin()));
    probe[ctx.layout.sep_index()] = tok::sep;
    DiffusionState vs;
    vs.canvas = std::move(probe);
    const Prediction vpred = ctx.model.predict(vs.canvas);
    ++stats.model_evals;
    ++stats.reflection_evals;
    const TokenSequence filled = draw_estimate(vs, vpred, {DecodeMode::greedy, 1.0}, rng);
    const AnswerSet predicted = decode_answers(obs_region(filled, ctx.layout), ctx.vocab).answers;
    out.sims.push_back(jaccard(predicted, observation));
  }
  out.chosen = select_best(out.sims);
  return out;
}

AbductionResult abduce(const SamplingContext& ctx, std::span<const EntityId> observation, const ReflectiveConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  AbductionResult out;
  DiffusionState state = abduction_start(observation, ctx);
  const AnswerSet obs = make_answer_set({observation.begin(), observation.end()});
  const Decoding sampling{DecodeMode::sample, cfg.temperature};
  for (std::size_t i = cfg.steps; i >= 1; --i) {
    if (state.fully_denoised()) break;
    const double s = ctx.schedule.grid_time(i - 1, cfg.steps);
    TokenSequence estimate;
    if (i % cfg.reflect_every == 0) {
      Reflection r = reflect(ctx, state, obs, cfg, rng, out.stats);
      estimate = std::move(r.candidates[r.chosen]);
    } else {
      const Prediction pred = ctx.model.predict(state.canvas);
      ++out.stats.model_evals;
      ++out.stats.plain_steps;
      check_normalized(pred);
      estimate = draw_estimate(state, pred, sampling, rng);
    }
    state = reverse_step(state, s, estimate, ctx.schedule, rng);
  }
  out.canvas = state.canvas;
  const auto qr = query_region(state.canvas, ctx.layout);
  out.query_tokens.assign(qr.begin(), qr.end());
  out.query = try_decode_query(qr, ctx.vocab);
  return out;
}

}  // namespace dark

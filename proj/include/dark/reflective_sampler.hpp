#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dark/diffusion_core.hpp"
#include "dark/kg_store.hpp"
#include "dark/query_executor.hpp"
#include "dark/sequence_codec.hpp"

namespace dark {

/// Everything a sampler needs besides its own settings.
struct SamplingContext {
  const Denoiser& model;
  Vocabulary vocab;
  CanvasLayout layout;
  NoiseSchedule schedule;
};

enum class VerifyMode { model, graph };

struct ReflectiveConfig {
  std::size_t steps = 64;         // T
  std::size_t reflect_every = 8;  // k
  std::size_t candidates = 4;     // p
  double temperature = 1.0;       // candidate and plain-step sampling in abduction
  VerifyMode verify = VerifyMode::model;
  const KGraph* verify_graph = nullptr;  // required for VerifyMode::graph
  Decoding deduction{DecodeMode::greedy, 1.0};

  void validate() const;
  /// Number of reflective steps, floor(T / k).
  std::size_t reflective_steps() const noexcept { return steps / reflect_every; }
};

struct SamplerStats {
  std::size_t model_evals = 0;
  std::size_t reflections = 0;
  std::size_t reflection_evals = 0;
  std::size_t plain_steps = 0;
};

/// Plain reverse process over every MASK position of `state`, T uniform steps
/// from t = 1 down to t_min.
DiffusionState denoise(const SamplingContext& ctx, DiffusionState state, std::size_t steps, Decoding decoding,
                       Rng& rng, SamplerStats* stats = nullptr);

/// [BOS, query, SEP, MASK...] with everything but the observation region frozen.
DiffusionState deduction_start(const QueryNode& q, const SamplingContext& ctx);
/// [BOS, MASK..., SEP, observation] with everything but the query region frozen.
DiffusionState abduction_start(std::span<const EntityId> observation, const SamplingContext& ctx);

AnswerSet deduce(const SamplingContext& ctx, const QueryNode& q, const ReflectiveConfig& cfg, Rng& rng,
                 SamplerStats* stats = nullptr);

struct Reflection {
  std::vector<TokenSequence> candidates;  // full canvases, masked query positions filled
  std::vector<double> sims;               // -1 for candidates that fail graph verification
  std::size_t chosen = 0;
};

/// Index of the largest score, lowest index on ties.
std::size_t select_best(std::span<const double> sims);

/// Draws p candidates from one prediction of `state`, verifies each against
/// `observation` and picks the best.
Reflection reflect(const SamplingContext& ctx, const DiffusionState& state, std::span<const EntityId> observation,
                   const ReflectiveConfig& cfg, Rng& rng, SamplerStats& stats);

struct AbductionResult {
  QueryDecode query;
  TokenSequence query_tokens;
  TokenSequence canvas;
  SamplerStats stats;
};

/// Self-reflective reverse process over the query region: step index i runs
/// from T down to 1 and reflects whenever i % k == 0.
AbductionResult abduce(const SamplingContext& ctx, std::span<const EntityId> observation, const ReflectiveConfig& cfg,
                       Rng& rng);

}  // namespace dark

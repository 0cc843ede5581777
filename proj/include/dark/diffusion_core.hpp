#pragma once

#include <span>
#include <vector>

#include "dark/common.hpp"
#include "dark/sequence_codec.hpp"

namespace dark {

/// Row-major (positions × vocab) categorical distributions.
struct Prediction {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> probs;

  std::span<const double> row(std::size_t i) const { return std::span<const double>(probs).subspan(i * cols, cols); }
  std::span<double> row(std::size_t i) { return std::span<double>(probs).subspan(i * cols, cols); }
};

/// Mask predictor f(X^t): one categorical per canvas position.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t seq_len() const = 0;
  virtual Prediction predict(std::span<const TokenId> canvas) const = 0;
};

enum class WeightMode { elbo, uniform };

std::string_view to_string(WeightMode m);
WeightMode parse_weight_mode(std::string_view s);

/// Linear schedule alpha(t) = 1 - t. The loss weight is 1/t (elbo) or 1.
struct NoiseSchedule {
  WeightMode weight_mode = WeightMode::elbo;
  double t_min = 1e-3;

  double alpha(double t) const noexcept { return 1.0 - t; }
  double weight(double t) const noexcept { return weight_mode == WeightMode::elbo ? 1.0 / t : 1.0; }
  /// Time of reverse step index i on a uniform grid of T steps: 1 at i = T,
  /// t_min at i = 0.
  double grid_time(std::size_t i, std::size_t steps) const noexcept {
    return t_min + (1.0 - t_min) * static_cast<double>(i) / static_cast<double>(steps);
  }
};

enum class MaskRegion { whole, query_only, observation_only };

std::string_view to_string(MaskRegion r);

/// Canvas indices a region may mask. BOS is never included.
std::vector<std::size_t> region_positions(const CanvasLayout& layout, MaskRegion region);

struct DiffusionState {
  TokenSequence canvas;
  double t = 1.0;
  std::vector<std::uint8_t> frozen;  // 1 = conditioning position

  std::vector<std::size_t> masked_positions() const;
  bool fully_denoised() const;
};

/// Masks each position of `region` independently with probability
/// 1 - alpha(t); everything outside the region is frozen.
DiffusionState forward_mask(std::span<const TokenId> x0, const CanvasLayout& layout, MaskRegion region, double t,
                            const NoiseSchedule& schedule, Rng& rng);

/// State with the given positions replaced by MASK and all others frozen.
DiffusionState masked_state(std::span<const TokenId> x0, std::span<const std::size_t> positions, double t = 1.0);

enum class DecodeMode { greedy, sample };

struct Decoding {
  DecodeMode mode = DecodeMode::greedy;
  double temperature = 1.0;
};

/// Checks every row sums to 1 within `tol` and holds no negative entry.
void check_normalized(const Prediction& p, double tol = 1e-6);

/// An x0 estimate: every MASK position of `state` drawn from its row (MASK
/// itself excluded), other positions copied.
TokenSequence draw_estimate(const DiffusionState& state, const Prediction& pred, Decoding decoding, Rng& rng);

/// One transition t -> s driven by a concrete estimate. Each MASK position
/// stays masked with probability (1 - alpha(s)) / (1 - alpha(t)), otherwise
/// takes its estimate token; at s <= t_min everything is filled.
DiffusionState reverse_step(const DiffusionState& state, double s, std::span<const TokenId> estimate,
                            const NoiseSchedule& schedule, Rng& rng);

/// reverse_step with the estimate drawn from `pred`.
DiffusionState reverse_step(const DiffusionState& state, double s, const Prediction& pred, Decoding decoding,
                            const NoiseSchedule& schedule, Rng& rng);

/// weight(t) * sum over MASK positions of -log p(x0 token). Zero if nothing is masked.
double masked_cross_entropy(const Prediction& pred, std::span<const TokenId> x0, const DiffusionState& state,
                            const NoiseSchedule& schedule);

/// Whole before `phase_split`, then query-only or observation-only with equal odds.
MaskRegion two_phase_region(std::size_t epoch, std::size_t phase_split, Rng& rng);

/// t ~ Uniform(t_min, 1].
double sample_time(const NoiseSchedule& schedule, Rng& rng);

}  // namespace dark

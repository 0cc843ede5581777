#include "dark/diffusion_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dark {

std::string_view to_string(WeightMode m) { return m == WeightMode::elbo ? "elbo" : "uniform"; }

WeightMode parse_weight_mode(std::string_view s) {
  if (s == "elbo") return WeightMode::elbo;
  if (s == "uniform") return WeightMode::uniform;
  throw Error(ErrorCode::invalid_argument, "unknown weight mode '" + std::string(s) + "'");
}

std::string_view to_string(MaskRegion r) {
  switch (r) {
    case MaskRegion::whole: return "whole";
    case MaskRegion::query_only: return "query";
    case MaskRegion::observation_only: return "observation";
  }
  return "?";
}

std::vector<std::size_t> region_positions(const CanvasLayout& layout, MaskRegion region) {
  std::vector<std::size_t> out;
  std::size_t begin = 1, end = layout.length();
  if (region == MaskRegion::query_only) {
    begin = layout.query_begin();
    end = layout.query_end();
  } else if (region == MaskRegion::observation_only) {
    begin = layout.obs_begin();
    end = layout.obs_end();
  }
  for (std::size_t i = begin; i < end; ++i) out.push_back(i);
  return out;
}

std::vector<std::size_t> DiffusionState::masked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    if (canvas[i] == tok::mask) out.push_back(i);
  }
  return out;
}

bool DiffusionState::fully_denoised() const {
  return std::find(canvas.begin(), canvas.end(), tok::mask) == canvas.end();
}

DiffusionState forward_mask(std::span<const TokenId> x0, const CanvasLayout& layout, MaskRegion region, double t,
                            const NoiseSchedule& schedule, Rng& rng) {
  if (!(t >= schedule.t_min && t <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "forward_mask: t=" + std::to_string(t) + " outside [t_min, 1]");
  }
  if (x0.size() != layout.length()) throw Error(ErrorCode::invalid_argument, "forward_mask: canvas length mismatch");
  DiffusionState s;
  s.canvas.assign(x0.begin(), x0.end());
  s.t = t;
  s.frozen.assign(x0.size(), 1);
  const double p_mask = 1.0 - schedule.alpha(t);
  for (std::size_t i : region_positions(layout, region)) {
    s.frozen[i] = 0;
    if (uniform01(rng) < p_mask) s.canvas[i] = tok::mask;
  }
  return s;
}

DiffusionState masked_state(std::span<const TokenId> x0, std::span<const std::size_t> positions, double t) {
  DiffusionState s;
  s.canvas.assign(x0.begin(), x0.end());
  s.t = t;
  s.frozen.assign(x0.size(), 1);
  for (std::size_t i : positions) {
    s.canvas.at(i) = tok::mask;
    s.frozen[i] = 0;
  }
  return s;
}

void check_normalized(const Prediction& p, double tol) {
  for (std::size_t i = 0; i < p.rows; ++i) {
    double sum = 0.0;
    for (double v : p.row(i)) {
      if (!(v >= 0.0)) throw Error(ErrorCode::numeric, "prediction row " + std::to_string(i) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw Error(ErrorCode::numeric, "prediction row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

TokenSequence draw_estimate(const DiffusionState& state, const Prediction& pred, Decoding decoding, Rng& rng) {
  if (pred.rows != state.canvas.size()) throw Error(ErrorCode::invalid_argument, "prediction/canvas length mismatch");
  TokenSequence est = state.canvas;
  std::vector<double> w(pred.cols);
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i] != tok::mask) continue;
    const auto row = pred.row(i);
    if (decoding.mode == DecodeMode::greedy || decoding.temperature <= 0.0) {
      std::size_t best = 0;
      double best_p = -1.0;
      for (std::size_t v = 0; v < row.size(); ++v) {
        if (static_cast<TokenId>(v) == tok::mask) continue;
        if (row[v] > best_p) {
          best_p = row[v];
          best = v;
        }
      }
      est[i] = static_cast<TokenId>(best);
      continue;
    }
    const double inv_temp = 1.0 / decoding.temperature;
    double total = 0.0;
    for (std::size_t v = 0; v < row.size(); ++v) {
      w[v] = (static_cast<TokenId>(v) == tok::mask || row[v] <= 0.0) ? 0.0
             : inv_temp == 1.0                                        ? row[v]
                                                                      : std::pow(row[v], inv_temp);
      total += w[v];
    }
    if (!(total > 0.0)) throw Error(ErrorCode::numeric, "no non-MASK probability mass at position " + std::to_string(i));
    double u = uniform01(rng) * total;
    std::size_t pick = row.size() - 1;
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (w[v] <= 0.0) continue;
      pick = v;
      if (u < w[v]) break;
      u -= w[v];
    }
    est[i] = static_cast<TokenId>(pick);
  }
  return est;
}

DiffusionState reverse_step(const DiffusionState& state, double s, std::span<const TokenId> estimate,
                            const NoiseSchedule& schedule, Rng& rng) {
  const double t = state.t;
  if (!(s >= 0.0 && s < t && t <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "reverse_step requires 0 <= s < t <= 1 (s=" + std::to_string(s) + ", t=" + std::to_string(t) + ")");
  }
  if (estimate.size() != state.canvas.size()) throw Error(ErrorCode::invalid_argument, "estimate length mismatch");
  DiffusionState next = state;
  next.t = s;
  const bool force = s <= schedule.t_min;
  const double stay = (1.0 - schedule.alpha(s)) / (1.0 - schedule.alpha(t));
  for (std::size_t i = 0; i < next.canvas.size(); ++i) {
    if (next.canvas[i] != tok::mask) continue;
    if (!force && uniform01(rng) < stay) continue;
    if (estimate[i] == tok::mask) throw Error(ErrorCode::invalid_argument, "estimate holds MASK at a masked position");
    next.canvas[i] = estimate[i];
  }
  return next;
}

DiffusionState reverse_step(const DiffusionState& state, double s, const Prediction& pred, Decoding decoding,
                            const NoiseSchedule& schedule, Rng& rng) {
  check_normalized(pred);
  if (!(s < state.t)) throw Error(ErrorCode::invalid_argument, "reverse_step requires s < t");
  const TokenSequence est = draw_estimate(state, pred, decoding, rng);
  return reverse_step(state, s, est, schedule, rng);
}

double masked_cross_entropy(const Prediction& pred, std::span<const TokenId> x0, const DiffusionState& state,
                            const NoiseSchedule& schedule) {
  double sum = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < state.canvas.size(); ++i) {
    if (state.canvas[i] != tok::mask) continue;
    any = true;
    const double p = pred.row(i)[static_cast<std::size_t>(x0[i])];
    sum -= p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }
  return any ? schedule.weight(state.t) * sum : 0.0;
}

MaskRegion two_phase_region(std::size_t epoch, std::size_t phase_split, Rng& rng) {
  if (epoch < phase_split) return MaskRegion::whole;
  return uniform01(rng) < 0.5 ? MaskRegion::query_only : MaskRegion::observation_only;
}

double sample_time(const NoiseSchedule& schedule, Rng& rng) {
  // 1 - U with U in [0,1) gives (0,1]; map onto (t_min, 1].
  const double u = 1.0 - uniform01(rng);
  return schedule.t_min + (1.0 - schedule.t_min) * u;
}

}  // namespace dark

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dark/diffusion_core.hpp"
#include "dark/sequence_codec.hpp"
#include "dark/transformer.hpp"

namespace dark {

/// Objective term coeff * log p(token | canvas) at one position.
struct LogProbTarget {
  std::size_t position = 0;
  TokenId token = 0;
  double coeff = 0.0;
};

/// Runs the network on `canvas`, returns sum(coeff * log p) over `targets`
/// and, when `grad` is non-empty, accumulates its gradient. Per-target log
/// probabilities are written to `logps` when given.
template <typename Scalar>
double logprob_objective(const Transformer<Scalar>& net, std::span<const TokenId> canvas,
                         std::span<const LogProbTarget> targets, std::span<Scalar> grad,
                         std::vector<double>* logps = nullptr);

/// Masked-position cross entropy weight(t) * sum(-log p(x0_i)) for a
/// corrupted state; gradient accumulated into `grad` when non-empty.
template <typename Scalar>
double training_loss(const Transformer<Scalar>& net, std::span<const TokenId> x0, const DiffusionState& state,
                     const NoiseSchedule& schedule, std::span<Scalar> grad);

/// Float transformer exposed as a Denoiser.
class DenoiserModel final : public Denoiser {
 public:
  DenoiserModel() = default;
  DenoiserModel(const ModelConfig& cfg, std::uint64_t seed) : net_(cfg, seed) {}
  explicit DenoiserModel(Transformer<float> net) : net_(std::move(net)) {}

  std::size_t vocab_size() const override { return net_.config().vocab_size; }
  std::size_t seq_len() const override { return net_.config().seq_len; }
  Prediction predict(std::span<const TokenId> canvas) const override;

  Transformer<float>& net() noexcept { return net_; }
  const Transformer<float>& net() const noexcept { return net_; }
  const ModelConfig& config() const noexcept { return net_.config(); }

 private:
  Transformer<float> net_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  std::size_t warmup_steps = 0;
  double clip_norm = 1.0;
};

struct OptimizerState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;
};

OptimizerState make_optimizer(const DenoiserModel& model, const AdamWConfig& config);

/// Clips `grad` to config.clip_norm (global L2) and applies one AdamW update
/// with linear warmup. Returns the pre-clip gradient norm.
double apply_update(DenoiserModel& model, std::span<float> grad, OptimizerState& opt);

struct TrainExample {
  TokenSequence x0;
  MaskRegion region = MaskRegion::whole;
};

struct TrainStats {
  double mean_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t masked_tokens = 0;
};

/// One optimizer step on the batch mean of training_loss. Each item draws its
/// own t and mask from a seed taken from `rng`, so results do not depend on
/// how items are spread over `threads` except through the summation order.
TrainStats train_step(DenoiserModel& model, OptimizerState& opt, std::span<const TrainExample> batch,
                      const CanvasLayout& layout, const NoiseSchedule& schedule, Rng& rng, std::size_t threads = 1);

/// Deterministic evaluation loss: mean training_loss over `examples` with
/// corruption drawn from `seed`; no update.
double evaluation_loss(const DenoiserModel& model, std::span<const TrainExample> examples,
                       const CanvasLayout& layout, const NoiseSchedule& schedule, std::uint64_t seed);

/// What a checkpoint was trained against.
struct CheckpointMeta {
  Vocabulary vocab;
  CanvasLayout layout;
  NoiseSchedule schedule;
};

struct Checkpoint {
  DenoiserModel model;
  OptimizerState optimizer;
  CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model, const OptimizerState& opt,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws Error(format) when the checkpoint was built for another vocabulary or layout.
void check_compatible(const CheckpointMeta& meta, const Vocabulary& vocab, const CanvasLayout& layout);

}  // namespace dark

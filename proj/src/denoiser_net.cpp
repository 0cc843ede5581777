#include "dark/denoiser_net.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace dark {

namespace {

// Target positions index rows of the stacked canvases when `stacked` is set.
template <typename Scalar>
double objective_impl(const Transformer<Scalar>& net, std::span<const TokenId> canvas,
                      std::span<const LogProbTarget> targets, std::span<Scalar> grad, std::vector<double>* logps,
                      bool stacked) {
  using Mat = typename Transformer<Scalar>::Mat;
  typename Transformer<Scalar>::Activations acts;
  if (stacked) {
    net.forward_batch(canvas, acts);
  } else {
    net.forward(canvas, acts);
  }
  const Mat& logits = acts.logits;
  const auto V = logits.cols();
  const bool want_grad = !grad.empty();
  Mat dlogits;
  if (want_grad) dlogits = Mat::Zero(logits.rows(), V);
  if (logps) logps->assign(targets.size(), 0.0);

  double objective = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& tg = targets[k];
    const auto i = static_cast<Eigen::Index>(tg.position);
    if (tg.position >= static_cast<std::size_t>(logits.rows()) || tg.token < 0 || tg.token >= V) {
      throw Error(ErrorCode::out_of_range, "log-prob target outside the canvas or vocabulary");
    }
    const double mx = static_cast<double>(logits.row(i).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index v = 0; v < V; ++v) sum += std::exp(static_cast<double>(logits(i, v)) - mx);
    const double lse = mx + std::log(sum);
    const double lp = static_cast<double>(logits(i, tg.token)) - lse;
    objective += tg.coeff * lp;
    if (logps) (*logps)[k] = lp;
    if (want_grad && tg.coeff != 0.0) {
      for (Eigen::Index v = 0; v < V; ++v) {
        const double p = std::exp(static_cast<double>(logits(i, v)) - lse);
        dlogits(i, v) -= static_cast<Scalar>(tg.coeff * p);
      }
      dlogits(i, tg.token) += static_cast<Scalar>(tg.coeff);
    }
  }
  if (want_grad) net.backward(acts, dlogits, grad);
  return objective;
}

}  // namespace

template <typename Scalar>
double logprob_objective(const Transformer<Scalar>& net, std::span<const TokenId> canvas,
                         std::span<const LogProbTarget> targets, std::span<Scalar> grad, std::vector<double>* logps) {
  return objective_impl(net, canvas, targets, grad, logps, false);
}

template <typename Scalar>
double training_loss(const Transformer<Scalar>& net, std::span<const TokenId> x0, const DiffusionState& state,
                     const NoiseSchedule& schedule, std::span<Scalar> grad) {
  std::vector<LogProbTarget> targets;
  const double w = schedule.weight(state.t);
  for (std::size_t i = 0; i < state.canvas.size(); ++i) {
    if (state.canvas[i] == tok::mask) targets.push_back({i, x0[i], -w});
  }
  if (targets.empty()) return 0.0;
  return logprob_objective(net, state.canvas, targets, grad);
}

template double logprob_objective<float>(const Transformer<float>&, std::span<const TokenId>,
                                         std::span<const LogProbTarget>, std::span<float>, std::vector<double>*);
template double logprob_objective<double>(const Transformer<double>&, std::span<const TokenId>,
                                          std::span<const LogProbTarget>, std::span<double>, std::vector<double>*);
template double training_loss<float>(const Transformer<float>&, std::span<const TokenId>, const DiffusionState&,
                                     const NoiseSchedule&, std::span<float>);
template double training_loss<double>(const Transformer<double>&, std::span<const TokenId>, const DiffusionState&,
                                      const NoiseSchedule&, std::span<double>);

Prediction DenoiserModel::predict(std::span<const TokenId> canvas) const {
  Transformer<float>::Activations acts;
  net_.forward(canvas, acts);
  Prediction p;
  p.rows = static_cast<std::size_t>(acts.logits.rows());
  p.cols = static_cast<std::size_t>(acts.logits.cols());
  p.probs.resize(p.rows * p.cols);
  for (std::size_t i = 0; i < p.rows; ++i) {
    const auto r = acts.logits.row(static_cast<Eigen::Index>(i));
    const double mx = static_cast<double>(r.maxCoeff());
    auto out = p.row(i);
    double sum = 0.0;
    for (std::size_t v = 0; v < p.cols; ++v) {
      out[v] = std::exp(static_cast<double>(r(static_cast<Eigen::Index>(v))) - mx);
      sum += out[v];
    }
    for (double& x : out) x /= sum;
  }
  return p;
}

OptimizerState make_optimizer(const DenoiserModel& model, const AdamWConfig& config) {
  OptimizerState s;
  s.config = config;
  s.m.assign(model.net().num_parameters(), 0.0f);
  s.v.assign(model.net().num_parameters(), 0.0f);
  return s;
}

double apply_update(DenoiserModel& model, std::span<float> grad, OptimizerState& opt) {
  auto params = model.net().parameters();
  if (grad.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw Error(ErrorCode::invalid_argument, "optimizer state does not match the model");
  }
  double sq = 0.0;
  for (float g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error(ErrorCode::numeric, "non-finite gradient norm");
  const auto& c = opt.config;
  if (c.clip_norm > 0.0 && norm > c.clip_norm) {
    const auto scale = static_cast<float>(c.clip_norm / norm);
    for (float& g : grad) g *= scale;
  }
  ++opt.step;
  const double warm = c.warmup_steps == 0
                          ? 1.0
                          : std::min(1.0, static_cast<double>(opt.step) / static_cast<double>(c.warmup_steps));
  const double lr = c.lr * warm;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  const auto b1 = static_cast<float>(c.beta1);
  const auto b2 = static_cast<float>(c.beta2);
  for (const auto& t : model.net().tensors()) {
    const double wd = t.decay ? c.weight_decay : 0.0;
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i) {
      const float g = grad[i];
      opt.m[i] = b1 * opt.m[i] + (1.0f - b1) * g;
      opt.v[i] = b2 * opt.v[i] + (1.0f - b2) * g * g;
      if (lr == 0.0) continue;
      const double mhat = opt.m[i] / bc1;
      const double vhat = opt.v[i] / bc2;
      const double p = params[i];
      params[i] = static_cast<float>(p - lr * (mhat / (std::sqrt(vhat) + c.eps) + wd * p));
    }
  }
  return norm;
}

namespace {

struct ItemResult {
  double loss = 0.0;
  double t = 0.0;
  std::size_t masked = 0;
};

constexpr std::size_t kMaxStack = 4;

// Corrupts items [begin, end) and runs them as one stacked forward/backward.
void run_items(const Transformer<float>& net, std::span<const TrainExample> batch, std::span<const std::uint64_t> seeds,
               std::size_t begin, std::size_t end, const CanvasLayout& layout, const NoiseSchedule& schedule,
               std::span<float> grad, std::span<ItemResult> results) {
  const std::size_t L = layout.length();
  std::vector<TokenId> stack;
  std::vector<LogProbTarget> targets;
  std::vector<std::size_t> owner;
  for (std::size_t i = begin; i < end; ++i) {
    Rng r(seeds[i]);
    const double t = sample_time(schedule, r);
    const DiffusionState state = forward_mask(batch[i].x0, layout, batch[i].region, t, schedule, r);
    results[i] = {0.0, t, 0};
    const double w = schedule.weight(t);
    const std::size_t base = (i - begin) * L;
    for (std::size_t j = 0; j < state.canvas.size(); ++j) {
      if (state.canvas[j] != tok::mask) continue;
      targets.push_back({base + j, batch[i].x0[j], -w});
      owner.push_back(i);
      ++results[i].masked;
    }
    stack.insert(stack.end(), state.canvas.begin(), state.canvas.end());
  }
  if (targets.empty()) return;
  std::vector<double> lps;
  objective_impl<float>(net, stack, targets, grad, &lps, true);
  for (std::size_t k = 0; k < targets.size(); ++k) results[owner[k]].loss += targets[k].coeff * lps[k];
}

}  // namespace

TrainStats train_step(DenoiserModel& model, OptimizerState& opt, std::span<const TrainExample> batch,
                      const CanvasLayout& layout, const NoiseSchedule& schedule, Rng& rng, std::size_t threads) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "train_step: empty batch");
  std::vector<std::uint64_t> seeds(batch.size());
  for (auto& s : seeds) s = rng();
  const std::size_t n = model.net().num_parameters();
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<std::vector<float>> grads(workers, std::vector<float>(n, 0.0f));
  std::vector<ItemResult> results(batch.size());
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](std::size_t w) {
    try {
      const std::size_t begin = batch.size() * w / workers;
      const std::size_t end = batch.size() * (w + 1) / workers;
      for (std::size_t b = begin; b < end; b += kMaxStack) {
        run_items(model.net(), batch, seeds, b, std::min(end, b + kMaxStack), layout, schedule, grads[w], results);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TrainStats stats;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!std::isfinite(results[i].loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at batch item " << i << " (t=" << results[i].t << ", masked=" << results[i].masked << ")";
      throw Error(ErrorCode::numeric, msg.str());
    }
    stats.mean_loss += results[i].loss;
    stats.masked_tokens += results[i].masked;
  }
  stats.mean_loss /= static_cast<double>(batch.size());

  auto& total = grads[0];
  for (std::size_t w = 1; w < workers; ++w) {
    for (std::size_t i = 0; i < n; ++i) total[i] += grads[w][i];
  }
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (float& g : total) g *= inv;
  stats.grad_norm = apply_update(model, total, opt);
  return stats;
}

double evaluation_loss(const DenoiserModel& model, std::span<const TrainExample> examples, const CanvasLayout& layout,
                       const NoiseSchedule& schedule, std::uint64_t seed) {
  if (examples.empty()) return 0.0;
  std::vector<std::uint64_t> seeds(examples.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, i);
  std::vector<ItemResult> results(examples.size());
  for (std::size_t b = 0; b < examples.size(); b += kMaxStack) {
    run_items(model.net(), examples, seeds, b, std::min(examples.size(), b + kMaxStack), layout, schedule, {},
              results);
  }
  double sum = 0.0;
  for (const auto& r : results) sum += r.loss;
  return sum / static_cast<double>(examples.size());
}

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'A', 'R', 'K', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_floats(std::ostream& out, std::span<const float> xs) {
  std::vector<char> buf(xs.size() * 4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &xs[i], 4);
    for (int b = 0; b < 4; ++b) buf[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffU);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_exact(std::istream& in, char* dst, std::size_t n, const std::string& what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw Error(ErrorCode::format, "truncated checkpoint (" + what + ")");
}

std::uint64_t get_uint(std::istream& in, int bytes, const std::string& what) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), static_cast<std::size_t>(bytes), what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

void get_floats(std::istream& in, std::span<float> dst, const std::string& what) {
  std::vector<unsigned char> buf(dst.size() * 4);
  read_exact(in, reinterpret_cast<char*>(buf.data()), buf.size(), what);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&dst[i], &bits, 4);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model, const OptimizerState& opt,
                     const CheckpointMeta& meta) {
  const auto& cfg = model.config();
  nlohmann::ordered_json h;
  h["model"] = {{"vocab_size", cfg.vocab_size}, {"seq_len", cfg.seq_len}, {"dim", cfg.dim},
                {"heads", cfg.heads},           {"layers", cfg.layers},   {"ffn_dim", cfg.ffn_dim},
                {"init_std", cfg.init_std}};
  h["vocab"] = {{"num_relations", meta.vocab.num_relations()}, {"num_entities", meta.vocab.num_entities()}};
  h["layout"] = {{"query_len", meta.layout.query_len}, {"obs_len", meta.layout.obs_len}};
  h["schedule"] = {{"name", "linear"},
                   {"weight_mode", std::string(to_string(meta.schedule.weight_mode))},
                   {"t_min", meta.schedule.t_min}};
  const bool has_moments = opt.m.size() == model.net().num_parameters();
  h["optimizer"] = {{"step", opt.step},
                    {"lr", opt.config.lr},
                    {"beta1", opt.config.beta1},
                    {"beta2", opt.config.beta2},
                    {"eps", opt.config.eps},
                    {"weight_decay", opt.config.weight_decay},
                    {"warmup_steps", opt.config.warmup_steps},
                    {"clip_norm", opt.config.clip_norm},
                    {"has_moments", has_moments}};
  auto& tensors = h["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : model.net().tensors()) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  h["parameter_count"] = model.net().num_parameters();
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_floats(out, model.net().parameters());
  if (has_moments) {
    put_floats(out, opt.m);
    put_floats(out, opt.v);
  }
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::array<char, 8> magic{};
  read_exact(in, magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw Error(ErrorCode::format, path.string() + " is not a checkpoint (bad magic)");
  const auto version = static_cast<std::uint32_t>(get_uint(in, 4, "version"));
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::format, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_uint(in, 8, "header length");
  if (header_len > (std::uint64_t{1} << 30)) throw Error(ErrorCode::format, "implausible checkpoint header length");
  std::string header(header_len, '\0');
  read_exact(in, header.data(), header.size(), "header");

  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(header);
    const auto& m = h.at("model");
    ModelConfig cfg;
    cfg.vocab_size = m.at("vocab_size");
    cfg.seq_len = m.at("seq_len");
    cfg.dim = m.at("dim");
    cfg.heads = m.at("heads");
    cfg.layers = m.at("layers");
    cfg.ffn_dim = m.at("ffn_dim");
    cfg.init_std = m.at("init_std");
    ck.meta.vocab = Vocabulary(h.at("vocab").at("num_relations"), h.at("vocab").at("num_entities"));
    ck.meta.layout.query_len = h.at("layout").at("query_len");
    ck.meta.layout.obs_len = h.at("layout").at("obs_len");
    ck.meta.schedule.weight_mode = parse_weight_mode(h.at("schedule").at("weight_mode").get<std::string>());
    ck.meta.schedule.t_min = h.at("schedule").at("t_min");
    if (ck.meta.vocab.size() != cfg.vocab_size || ck.meta.layout.length() != cfg.seq_len) {
      throw Error(ErrorCode::format, "checkpoint header is inconsistent");
    }
    const auto& o = h.at("optimizer");
    ck.optimizer.config.lr = o.at("lr");
    ck.optimizer.config.beta1 = o.at("beta1");
    ck.optimizer.config.beta2 = o.at("beta2");
    ck.optimizer.config.eps = o.at("eps");
    ck.optimizer.config.weight_decay = o.at("weight_decay");
    ck.optimizer.config.warmup_steps = o.at("warmup_steps");
    ck.optimizer.config.clip_norm = o.at("clip_norm");
    ck.optimizer.step = o.at("step");
    const bool has_moments = o.at("has_moments");

    ck.model = DenoiserModel(Transformer<float>(cfg, 0));
    const auto& expected = ck.model.net().tensors();
    const auto& listed = h.at("tensors");
    if (listed.size() != expected.size()) throw Error(ErrorCode::format, "checkpoint tensor list mismatch");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (listed[i].at("name") != expected[i].name || listed[i].at("rows") != expected[i].rows ||
          listed[i].at("cols") != expected[i].cols) {
        throw Error(ErrorCode::format, "checkpoint tensor " + expected[i].name + " does not match the architecture");
      }
    }
    get_floats(in, ck.model.net().parameters(), "parameters");
    if (has_moments) {
      ck.optimizer.m.resize(ck.model.net().num_parameters());
      ck.optimizer.v.resize(ck.model.net().num_parameters());
      get_floats(in, ck.optimizer.m, "first moments");
      get_floats(in, ck.optimizer.v, "second moments");
    } else {
      ck.optimizer.m.assign(ck.model.net().num_parameters(), 0.0f);
      ck.optimizer.v.assign(ck.model.net().num_parameters(), 0.0f);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad checkpoint header: ") + e.what());
  }
  return ck;
}

void check_compatible(const CheckpointMeta& meta, const Vocabulary& vocab, const CanvasLayout& layout) {
  if (!(meta.vocab == vocab)) {
    throw Error(ErrorCode::format, "checkpoint vocabulary (" + std::to_string(meta.vocab.num_relations()) +
                                       " relations, " + std::to_string(meta.vocab.num_entities()) +
                                       " entities) does not match this run (" + std::to_string(vocab.num_relations()) +
                                       " relations, " + std::to_string(vocab.num_entities()) + " entities)");
  }
  if (!(meta.layout == layout)) {
    throw Error(ErrorCode::format, "checkpoint canvas layout does not match this run");
  }
}

}  // namespace dark

#pragma once

#include <atomic>
#include <functional>

#include "dark/diffusion_core.hpp"

namespace testing {

using namespace dark;

// Puts all mass on the token `target` holds at each position.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(TokenSequence target, std::size_t vocab) : target_(std::move(target)), vocab_(vocab) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::size_t seq_len() const override { return target_.size(); }
  Prediction predict(std::span<const TokenId>) const override {
    ++calls;
    Prediction p{target_.size(), vocab_, std::vector<double>(target_.size() * vocab_, 0.0)};
    for (std::size_t i = 0; i < target_.size(); ++i) p.row(i)[static_cast<std::size_t>(target_[i])] = 1.0;
    return p;
  }
  mutable std::atomic<std::size_t> calls{0};

 private:
  TokenSequence target_;
  std::size_t vocab_;
};

// Uniform rows, or any rule given as a function of (canvas, position, token).
class FunctionDenoiser : public Denoiser {
 public:
  using Rule = std::function<double(std::span<const TokenId>, std::size_t, TokenId)>;
  FunctionDenoiser(std::size_t len, std::size_t vocab, Rule rule = {}) : len_(len), vocab_(vocab), rule_(std::move(rule)) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::size_t seq_len() const override { return len_; }
  Prediction predict(std::span<const TokenId> canvas) const override {
    ++calls;
    Prediction p{len_, vocab_, std::vector<double>(len_ * vocab_, 1.0 / static_cast<double>(vocab_))};
    if (!rule_) return p;
    for (std::size_t i = 0; i < len_; ++i) {
      double sum = 0.0;
      auto row = p.row(i);
      for (std::size_t v = 0; v < vocab_; ++v) sum += row[v] = rule_(canvas, i, static_cast<TokenId>(v));
      for (double& x : row) x /= sum;
    }
    return p;
  }
  mutable std::atomic<std::size_t> calls{0};

 private:
  std::size_t len_;
  std::size_t vocab_;
  Rule rule_;
};

}  // namespace testing

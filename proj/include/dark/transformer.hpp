#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dark/common.hpp"

namespace dark {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t seq_len = 50;
  std::size_t dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_dim = 512;
  double init_std = 0.02;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool decay = false;  // weight matrices and embeddings; not biases or norm gains

  std::size_t size() const noexcept { return rows * cols; }
};

/// Pre-norm bidirectional transformer encoder over a fixed-length canvas with
/// hand-written backward. Parameters live in one flat buffer described by
/// tensors(); gradients use the same layout.
template <typename Scalar>
class Transformer {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;

  struct LayerActs {
    Mat x_in, xhat1, h1, q, k, v, o, x_mid, xhat2, h2, u, th, g;  // th caches the GELU tanh
    RowVec rstd1, rstd2;
    std::vector<Mat> probs;  // per canvas and head, L x L
  };

  struct Activations {
    std::vector<TokenId> tokens;
    std::vector<LayerActs> layers;
    Mat x_final, xhatf, hf, logits;
    RowVec rstdf;
  };

  Transformer() = default;

  Transformer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate();
    build_layout();
    params_.assign(total_, Scalar(0));
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, cfg_.init_std);
    for (const auto& t : tensors_) {
      auto* p = params_.data() + t.offset;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t.name.ends_with("_g")) {
          p[i] = Scalar(1);
        } else if (!t.decay) {
          p[i] = Scalar(0);
        } else {
          double x;
          do {
            x = normal(rng);
          } while (std::abs(x) > 2.0 * cfg_.init_std);
          p[i] = static_cast<Scalar>(x);
        }
      }
    }
  }

  /// Same layout, parameters copied and converted.
  template <typename Other>
  static Transformer convert(const Transformer<Other>& src) {
    Transformer t;
    t.cfg_ = src.config();
    t.build_layout();
    t.params_.resize(t.total_);
    const auto sp = src.parameters();
    for (std::size_t i = 0; i < sp.size(); ++i) t.params_[i] = static_cast<Scalar>(sp[i]);
    return t;
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
  std::size_t num_parameters() const noexcept { return total_; }
  std::span<Scalar> parameters() noexcept { return params_; }
  std::span<const Scalar> parameters() const noexcept { return params_; }

  void forward(std::span<const TokenId> tokens, Activations& a) const {
    if (tokens.size() != cfg_.seq_len) {
      throw Error(ErrorCode::invalid_argument, "canvas length " + std::to_string(tokens.size()) + " != " +
                                                   std::to_string(cfg_.seq_len));
    }
    forward_batch(tokens, a);
  }

  /// Runs several canvases stacked row-wise (B*L tokens) through one pass.
  /// Attention stays within each canvas; logits row b*L+i belongs to canvas b.
  void forward_batch(std::span<const TokenId> tokens, Activations& a) const {
    const auto L = static_cast<Eigen::Index>(cfg_.seq_len);
    const auto d = static_cast<Eigen::Index>(cfg_.dim);
    if (tokens.empty() || tokens.size() % cfg_.seq_len != 0) {
      throw Error(ErrorCode::invalid_argument, "stacked canvas length " + std::to_string(tokens.size()) +
                                                   " is not a multiple of " + std::to_string(cfg_.seq_len));
    }
    const auto N = static_cast<Eigen::Index>(tokens.size());
    const Eigen::Index B = N / L;
    a.tokens.assign(tokens.begin(), tokens.end());
    a.layers.resize(cfg_.layers);

    const auto emb = map(tok_emb_);
    const auto pos = map(pos_emb_);
    Mat x(N, d);
    for (Eigen::Index i = 0; i < N; ++i) {
      const TokenId t = tokens[static_cast<std::size_t>(i)];
      if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
        throw Error(ErrorCode::out_of_range, "token " + std::to_string(t) + " outside vocabulary");
      }
      x.row(i) = emb.row(t) + pos.row(i % L);
    }

    const auto dh = static_cast<Eigen::Index>(cfg_.dim / cfg_.heads);
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& p = layer_[l];
      auto& s = a.layers[l];
      s.x_in = x;
      layer_norm(x, vec(p.ln1_g), vec(p.ln1_b), s.xhat1, s.rstd1, s.h1);
      s.q.noalias() = s.h1 * map(p.wq);
      s.q.rowwise() += vec(p.bq);
      s.k.noalias() = s.h1 * map(p.wk);
      s.k.rowwise() += vec(p.bk);
      s.v.noalias() = s.h1 * map(p.wv);
      s.v.rowwise() += vec(p.bv);
      s.probs.resize(static_cast<std::size_t>(B) * cfg_.heads);
      s.o.resize(N, d);
      for (Eigen::Index b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
          const auto off = static_cast<Eigen::Index>(h) * dh;
          Mat& P = s.probs[static_cast<std::size_t>(b) * cfg_.heads + h];
          P.noalias() = (s.q.block(b * L, off, L, dh) * s.k.block(b * L, off, L, dh).transpose()) * scale;
          softmax_rows(P);
          s.o.block(b * L, off, L, dh).noalias() = P * s.v.block(b * L, off, L, dh);
        }
      }
      s.x_mid = x;
      s.x_mid.noalias() += s.o * map(p.wo);
      s.x_mid.rowwise() += vec(p.bo);
      layer_norm(s.x_mid, vec(p.ln2_g), vec(p.ln2_b), s.xhat2, s.rstd2, s.h2);
      s.u.noalias() = s.h2 * map(p.w1);
      s.u.rowwise() += vec(p.b1);
      gelu(s.u, s.th, s.g);
      x = s.x_mid;
      x.noalias() += s.g * map(p.w2);
      x.rowwise() += vec(p.b2);
    }
    a.x_final = x;
    layer_norm(a.x_final, vec(lnf_g_), vec(lnf_b_), a.xhatf, a.rstdf, a.hf);
    a.logits.noalias() = a.hf * map(w_out_);
    a.logits.rowwise() += vec(b_out_);
  }

  /// Accumulates d(objective)/d(params) into `grad` given d(objective)/d(logits).
  void backward(const Activations& a, const Mat& dlogits, std::span<Scalar> grad) const {
    if (grad.size() != total_) throw Error(ErrorCode::invalid_argument, "gradient buffer size mismatch");
    const auto L = static_cast<Eigen::Index>(cfg_.seq_len);
    const auto d = static_cast<Eigen::Index>(cfg_.dim);
    const auto dh = static_cast<Eigen::Index>(cfg_.dim / cfg_.heads);
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const auto N = static_cast<Eigen::Index>(a.tokens.size());
    const Eigen::Index B = N / L;
    Scalar* G = grad.data();

    accumulate(gmap(G, w_out_), a.hf.transpose() * dlogits);
    accumulate(gvec(G, b_out_), dlogits.colwise().sum());
    Mat dh_f = dlogits * map(w_out_).transpose();
    Mat dx(N, d);
    layer_norm_backward(dh_f, a.xhatf, a.rstdf, vec(lnf_g_), gvec(G, lnf_g_), gvec(G, lnf_b_), dx);

    Mat dmid(N, d), tmp(N, d), dO(N, d), dq(N, d), dk(N, d), dv(N, d), dP, dS;
    for (std::size_t li = cfg_.layers; li-- > 0;) {
      const auto& p = layer_[li];
      const auto& s = a.layers[li];
      // x_out = x_mid + g W2 + b2
      accumulate(gmap(G, p.w2), s.g.transpose() * dx);
      accumulate(gvec(G, p.b2), dx.colwise().sum());
      Mat du = dx * map(p.w2).transpose();
      du.array() *= gelu_grad(s.u, s.th);
      accumulate(gmap(G, p.w1), s.h2.transpose() * du);
      accumulate(gvec(G, p.b1), du.colwise().sum());
      Mat dh2 = du * map(p.w1).transpose();
      layer_norm_backward(dh2, s.xhat2, s.rstd2, vec(p.ln2_g), gvec(G, p.ln2_g), gvec(G, p.ln2_b), tmp);
      dmid = dx + tmp;

      // x_mid = x_in + o Wo + bo
      accumulate(gmap(G, p.wo), s.o.transpose() * dmid);
      accumulate(gvec(G, p.bo), dmid.colwise().sum());
      dO.noalias() = dmid * map(p.wo).transpose();
      for (Eigen::Index b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
          const auto off = static_cast<Eigen::Index>(h) * dh;
          const Mat& P = s.probs[static_cast<std::size_t>(b) * cfg_.heads + h];
          const auto dOb = dO.block(b * L, off, L, dh);
          dP.noalias() = dOb * s.v.block(b * L, off, L, dh).transpose();
          dv.block(b * L, off, L, dh).noalias() = P.transpose() * dOb;
          const auto rowdot = (dP.array() * P.array()).rowwise().sum().eval();
          dS = (P.array() * (dP.array().colwise() - rowdot)).matrix() * scale;
          dq.block(b * L, off, L, dh).noalias() = dS * s.k.block(b * L, off, L, dh);
          dk.block(b * L, off, L, dh).noalias() = dS.transpose() * s.q.block(b * L, off, L, dh);
        }
      }
      accumulate(gmap(G, p.wq), s.h1.transpose() * dq);
      accumulate(gvec(G, p.bq), dq.colwise().sum());
      accumulate(gmap(G, p.wk), s.h1.transpose() * dk);
      accumulate(gvec(G, p.bk), dk.colwise().sum());
      accumulate(gmap(G, p.wv), s.h1.transpose() * dv);
      accumulate(gvec(G, p.bv), dv.colwise().sum());
      Mat dh1 = dq * map(p.wq).transpose();
      dh1.noalias() += dk * map(p.wk).transpose();
      dh1.noalias() += dv * map(p.wv).transpose();
      layer_norm_backward(dh1, s.xhat1, s.rstd1, vec(p.ln1_g), gvec(G, p.ln1_g), gvec(G, p.ln1_b), tmp);
      dx = dmid + tmp;
    }

    auto demb = gmap(G, tok_emb_);
    for (Eigen::Index i = 0; i < N; ++i) demb.row(a.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    auto dpos = gmap(G, pos_emb_);
    for (Eigen::Index b = 0; b < B; ++b) dpos += dx.middleRows(b * L, L);
  }

  static void softmax_rows(Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      auto r = m.row(i);
      const Scalar mx = r.maxCoeff();
      r = (r.array() - mx).exp();
      r /= r.sum();
    }
  }

 private:
  template <typename>
  friend class Transformer;

  struct LayerIndex {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  static constexpr Scalar kGeluC = static_cast<Scalar>(0.7978845608028654);
  static constexpr Scalar kGeluA = static_cast<Scalar>(0.044715);

  static void gelu(const Mat& u, Mat& th, Mat& g) {
    th = (kGeluC * (u.array() + kGeluA * u.array().cube())).tanh();
    g = Scalar(0.5) * u.array() * (Scalar(1) + th.array());
  }

  static auto gelu_grad(const Mat& u, const Mat& th) {
    return (Scalar(0.5) * (Scalar(1) + th.array()) +
            Scalar(0.5) * u.array() * (Scalar(1) - th.array().square()) * kGeluC *
                (Scalar(1) + Scalar(3) * kGeluA * u.array().square()))
        .eval();
  }

  void validate() const {
    if (cfg_.vocab_size == 0 || cfg_.seq_len == 0 || cfg_.dim == 0 || cfg_.heads == 0 || cfg_.layers == 0 ||
        cfg_.ffn_dim == 0 || cfg_.dim % cfg_.heads != 0) {
      throw Error(ErrorCode::invalid_argument, "invalid model configuration");
    }
  }

  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols, bool decay) {
    tensors_.push_back({name, rows, cols, total_, decay});
    total_ += rows * cols;
    return tensors_.size() - 1;
  }

  void build_layout() {
    tensors_.clear();
    layer_.clear();
    total_ = 0;
    const auto d = cfg_.dim, f = cfg_.ffn_dim;
    tok_emb_ = add("tok_emb", cfg_.vocab_size, d, true);
    pos_emb_ = add("pos_emb", cfg_.seq_len, d, true);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerIndex li{};
      li.ln1_g = add(p + "ln1_g", 1, d, false);
      li.ln1_b = add(p + "ln1_b", 1, d, false);
      li.wq = add(p + "wq", d, d, true);
      li.bq = add(p + "bq", 1, d, false);
      li.wk = add(p + "wk", d, d, true);
      li.bk = add(p + "bk", 1, d, false);
      li.wv = add(p + "wv", d, d, true);
      li.bv = add(p + "bv", 1, d, false);
      li.wo = add(p + "wo", d, d, true);
      li.bo = add(p + "bo", 1, d, false);
      li.ln2_g = add(p + "ln2_g", 1, d, false);
      li.ln2_b = add(p + "ln2_b", 1, d, false);
      li.w1 = add(p + "w1", d, f, true);
      li.b1 = add(p + "b1", 1, f, false);
      li.w2 = add(p + "w2", f, d, true);
      li.b2 = add(p + "b2", 1, d, false);
      layer_.push_back(li);
    }
    lnf_g_ = add("lnf_g", 1, d, false);
    lnf_b_ = add("lnf_b", 1, d, false);
    w_out_ = add("w_out", d, cfg_.vocab_size, true);
    b_out_ = add("b_out", 1, cfg_.vocab_size, false);
  }

  CMapM map(std::size_t idx) const {
    const auto& t = tensors_[idx];
    return CMapM(params_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  Eigen::Map<const RowVec> vec(std::size_t idx) const {
    const auto& t = tensors_[idx];
    return Eigen::Map<const RowVec>(params_.data() + t.offset, static_cast<Eigen::Index>(t.size()));
  }
  MapM gmap(Scalar* g, std::size_t idx) const {
    const auto& t = tensors_[idx];
    return MapM(g + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  Eigen::Map<RowVec> gvec(Scalar* g, std::size_t idx) const {
    const auto& t = tensors_[idx];
    return Eigen::Map<RowVec>(g + t.offset, static_cast<Eigen::Index>(t.size()));
  }

  // Evaluating into an aligned temporary first keeps the arithmetic independent of
  // where the gradient buffer sits in memory.
  template <typename Dst, typename Expr>
  static void accumulate(Dst&& dst, const Expr& e) {
    const typename std::decay_t<Dst>::PlainObject t = e;
    dst += t;
  }

  static constexpr Scalar kLnEps = static_cast<Scalar>(1e-5);

  static void layer_norm(const Mat& x, const Eigen::Map<const RowVec>& gain, const Eigen::Map<const RowVec>& bias,
                         Mat& xhat, RowVec& rstd, Mat& y) {
    const auto n = x.cols();
    xhat.resize(x.rows(), n);
    rstd.resize(x.rows());
    y.resize(x.rows(), n);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Scalar mean = x.row(i).mean();
      const Scalar var = (x.row(i).array() - mean).square().mean();
      const Scalar r = Scalar(1) / std::sqrt(var + kLnEps);
      rstd(i) = r;
      xhat.row(i) = (x.row(i).array() - mean) * r;
      y.row(i) = xhat.row(i).cwiseProduct(gain) + bias;
    }
  }

  static void layer_norm_backward(const Mat& dy, const Mat& xhat, const RowVec& rstd,
                                  const Eigen::Map<const RowVec>& gain, Eigen::Map<RowVec> dgain,
                                  Eigen::Map<RowVec> dbias, Mat& dx) {
    accumulate(dgain, (dy.array() * xhat.array()).colwise().sum().matrix());
    accumulate(dbias, dy.colwise().sum());
    dx.resize(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const RowVec dxhat = dy.row(i).cwiseProduct(gain);
      const Scalar m1 = dxhat.mean();
      const Scalar m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
      dx.row(i) = ((dxhat.array() - m1 - xhat.row(i).array() * m2) * rstd(i)).matrix();
    }
  }

  ModelConfig cfg_;
  std::vector<TensorInfo> tensors_;
  std::vector<LayerIndex> layer_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, w_out_ = 0, b_out_ = 0;
  std::size_t total_ = 0;
  std::vector<Scalar> params_;
};

}  // namespace dark

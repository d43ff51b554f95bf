#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ebert/masking.hpp"
#include "ebert/matrix.hpp"
#include "ebert/rand.hpp"
#include "ebert/tokenizer.hpp"

namespace ebert {

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int hidden = 32;
  int filter_size = 64;
  int dna_vocab = 0;
  int ideas_vocab = kIdeasVocab;  // 0 disables the epigenetic-state channel
  int l_input = 150;
  double dropout = 0.1;
  double attention_dropout = 0.1;
  bool with_aux = false;

  int head_dim() const { return hidden / heads; }
  bool has_ideas() const { return ideas_vocab > 0; }
  int head_channels() const { return hidden + (with_aux ? 2 : 0); }

  void validate() const {
    if (hidden % heads != 0) throw std::invalid_argument("hidden size must be divisible by heads");
    if (layers < 1 || heads < 1 || hidden < 1 || filter_size < 1 || l_input < 1 || dna_vocab < 4)
      throw std::invalid_argument("degenerate model configuration");
  }

  static ModelConfig bert_base(int dna_vocab, int l_input = 150, int ideas_vocab = kIdeasVocab) {
    ModelConfig c;
    c.layers = 12;
    c.heads = 12;
    c.hidden = 768;
    c.filter_size = 3072;
    c.dna_vocab = dna_vocab;
    c.ideas_vocab = ideas_vocab;
    c.l_input = l_input;
    return c;
  }

  static ModelConfig tiny(int dna_vocab, int l_input, int ideas_vocab = kIdeasVocab) {
    ModelConfig c;
    c.layers = 2;
    c.heads = 2;
    c.hidden = 32;
    c.filter_size = 64;
    c.dna_vocab = dna_vocab;
    c.ideas_vocab = ideas_vocab;
    c.l_input = l_input;
    c.dropout = 0.0;
    c.attention_dropout = 0.0;
    return c;
  }
};

constexpr int kConvWidth = 3;
constexpr int kConv1Channels = 256;
constexpr int kConv2Channels = 128;
constexpr int kDense1Units = 64;

template <typename T>
struct LayerParams {
  Mat<T> wq, wk, wv, wo;          // [H x H]
  Mat<T> bq, bk, bv, bo;          // [1 x H]
  Mat<T> ln1_gain, ln1_bias;      // [1 x H]
  Mat<T> ff_w1, ff_b1;            // [H x F], [1 x F]
  Mat<T> ff_w2, ff_b2;            // [F x H], [1 x H]
  Mat<T> ln2_gain, ln2_bias;      // [1 x H]
};

/// Every learnable tensor of the model. `visit` enumerates them in a fixed
/// order with a stable name and a weight-decay flag; the checkpoint layout
/// and the optimizer state both follow that order.
template <typename T>
struct Parameters {
  Mat<T> dna_emb;    // [dna_vocab x H]
  Mat<T> ideas_emb;  // [ideas_vocab x H], empty when disabled
  Mat<T> pos_emb;    // [l_input x H]
  std::vector<LayerParams<T>> layers;
  Mat<T> final_ln_gain, final_ln_bias;
  Mat<T> mlm_dna_w, mlm_dna_b;      // [H x dna_vocab], [1 x dna_vocab]
  Mat<T> mlm_ideas_w, mlm_ideas_b;  // empty when disabled
  Mat<T> conv1_w, conv1_b;          // [3*C x 256] with C = H (+2 with aux)
  Mat<T> conv2_w, conv2_b;          // [3*256 x 128]
  Mat<T> dense1_w, dense1_b;        // [128 x 64]
  Mat<T> dense2_w, dense2_b;        // [64 x 1]

  template <typename F>
  void visit(F&& f) {
    const_cast<const Parameters*>(this)->visit(
        [&](const std::string& name, const Mat<T>& m, bool decay) {
          f(name, const_cast<Mat<T>&>(m), decay);
        });
  }

  template <typename F>
  void visit(F&& f) const {
    auto emit = [&](const std::string& name, const Mat<T>& m, bool decay) {
      if (!m.empty()) f(name, m, decay);
    };
    emit("embed.dna", dna_emb, true);
    emit("embed.ideas", ideas_emb, true);
    emit("embed.pos", pos_emb, true);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      const auto& l = layers[i];
      emit(p + "ln1.gain", l.ln1_gain, false);
      emit(p + "ln1.bias", l.ln1_bias, false);
      emit(p + "attn.wq", l.wq, true);
      emit(p + "attn.bq", l.bq, false);
      emit(p + "attn.wk", l.wk, true);
      emit(p + "attn.bk", l.bk, false);
      emit(p + "attn.wv", l.wv, true);
      emit(p + "attn.bv", l.bv, false);
      emit(p + "attn.wo", l.wo, true);
      emit(p + "attn.bo", l.bo, false);
      emit(p + "ln2.gain", l.ln2_gain, false);
      emit(p + "ln2.bias", l.ln2_bias, false);
      emit(p + "ff.w1", l.ff_w1, true);
      emit(p + "ff.b1", l.ff_b1, false);
      emit(p + "ff.w2", l.ff_w2, true);
      emit(p + "ff.b2", l.ff_b2, false);
    }
    emit("final_ln.gain", final_ln_gain, false);
    emit("final_ln.bias", final_ln_bias, false);
    emit("mlm.dna.w", mlm_dna_w, true);
    emit("mlm.dna.b", mlm_dna_b, false);
    emit("mlm.ideas.w", mlm_ideas_w, true);
    emit("mlm.ideas.b", mlm_ideas_b, false);
    emit("head.conv1.w", conv1_w, true);
    emit("head.conv1.b", conv1_b, false);
    emit("head.conv2.w", conv2_w, true);
    emit("head.conv2.b", conv2_b, false);
    emit("head.dense1.w", dense1_w, true);
    emit("head.dense1.b", dense1_b, false);
    emit("head.dense2.w", dense2_w, true);
    emit("head.dense2.b", dense2_b, false);
  }

  std::size_t count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<T>& m, bool) { n += m.size(); });
    return n;
  }

  Parameters<T> zeros_like() const {
    Parameters<T> z = *this;
    z.visit([](const std::string&, Mat<T>& m, bool) { m.fill(T(0)); });
    return z;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Mat<T>& m, bool) { ok = ok && m.all_finite(); });
    return ok;
  }

  /// Truncated-normal weights (sigma 0.02), zero biases, unit norm gains.
  static Parameters<T> init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const int h = cfg.hidden;
    auto tn = [&](int r, int c) {
      Mat<T> m(r, c);
      for (auto& x : m.v) x = static_cast<T>(rng.truncated_normal(0.0, 0.02));
      return m;
    };
    auto ones = [&](int c) {
      Mat<T> m(1, c);
      m.fill(T(1));
      return m;
    };

    Parameters<T> p;
    p.dna_emb = tn(cfg.dna_vocab, h);
    if (cfg.has_ideas()) p.ideas_emb = tn(cfg.ideas_vocab, h);
    p.pos_emb = tn(cfg.l_input, h);
    p.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& l : p.layers) {
      l.wq = tn(h, h);
      l.wk = tn(h, h);
      l.wv = tn(h, h);
      l.wo = tn(h, h);
      l.bq = Mat<T>(1, h);
      l.bk = Mat<T>(1, h);
      l.bv = Mat<T>(1, h);
      l.bo = Mat<T>(1, h);
      l.ln1_gain = ones(h);
      l.ln1_bias = Mat<T>(1, h);
      l.ln2_gain = ones(h);
      l.ln2_bias = Mat<T>(1, h);
      l.ff_w1 = tn(h, cfg.filter_size);
      l.ff_b1 = Mat<T>(1, cfg.filter_size);
      l.ff_w2 = tn(cfg.filter_size, h);
      l.ff_b2 = Mat<T>(1, h);
    }
    p.final_ln_gain = ones(h);
    p.final_ln_bias = Mat<T>(1, h);
    p.mlm_dna_w = tn(h, cfg.dna_vocab);
    p.mlm_dna_b = Mat<T>(1, cfg.dna_vocab);
    if (cfg.has_ideas()) {
      p.mlm_ideas_w = tn(h, cfg.ideas_vocab);
      p.mlm_ideas_b = Mat<T>(1, cfg.ideas_vocab);
    }
    const int c_in = cfg.head_channels();
    p.conv1_w = tn(kConvWidth * c_in, kConv1Channels);
    p.conv1_b = Mat<T>(1, kConv1Channels);
    p.conv2_w = tn(kConvWidth * kConv1Channels, kConv2Channels);
    p.conv2_b = Mat<T>(1, kConv2Channels);
    p.dense1_w = tn(kConv2Channels, kDense1Units);
    p.dense1_b = Mat<T>(1, kDense1Units);
    p.dense2_w = tn(kDense1Units, 1);
    p.dense2_b = Mat<T>(1, 1);
    return p;
  }
};

/// Learnable-tensor count from the configuration alone (no allocation).
inline std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t h = static_cast<std::size_t>(cfg.hidden);
  const std::size_t f = static_cast<std::size_t>(cfg.filter_size);
  std::size_t n = 0;
  n += static_cast<std::size_t>(cfg.dna_vocab) * h;
  if (cfg.has_ideas()) n += static_cast<std::size_t>(cfg.ideas_vocab) * h;
  n += static_cast<std::size_t>(cfg.l_input) * h;
  n += static_cast<std::size_t>(cfg.layers) * (4 * h * h + 4 * h      // attention
                                               + 4 * h                // two layer norms
                                               + h * f + f + f * h + h);  // feed-forward
  n += 2 * h;  // final layer norm
  n += h * static_cast<std::size_t>(cfg.dna_vocab) + static_cast<std::size_t>(cfg.dna_vocab);
  if (cfg.has_ideas())
    n += h * static_cast<std::size_t>(cfg.ideas_vocab) + static_cast<std::size_t>(cfg.ideas_vocab);
  const std::size_t c_in = static_cast<std::size_t>(cfg.head_channels());
  n += kConvWidth * c_in * kConv1Channels + kConv1Channels;
  n += static_cast<std::size_t>(kConvWidth) * kConv1Channels * kConv2Channels + kConv2Channels;
  n += static_cast<std::size_t>(kConv2Channels) * kDense1Units + kDense1Units;
  n += kDense1Units + 1;
  return n;
}

enum class RunMode { Train, Eval };

// ---------------------------------------------------------------------------
// Elementwise pieces

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
  const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
  return cdf + x * pdf;
}

constexpr double kLayerNormEps = 1e-12;

template <typename T>
struct LayerNormCache {
  Mat<T> normalized;     // (x - mean) / sqrt(var + eps), per row
  std::vector<T> rstd;   // 1 / sqrt(var + eps), per row
};

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias,
                  LayerNormCache<T>* cache) {
  Mat<T> y(x.rows, x.cols);
  if (cache) {
    cache->normalized = Mat<T>(x.rows, x.cols);
    cache->rstd.assign(static_cast<std::size_t>(x.rows), T(0));
  }
  for (int i = 0; i < x.rows; ++i) {
    const T* row = x[i];
    T mean = T(0);
    for (int j = 0; j < x.cols; ++j) mean += row[j];
    mean /= static_cast<T>(x.cols);
    T var = T(0);
    for (int j = 0; j < x.cols; ++j) {
      const T d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(x.cols);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    if (cache) cache->rstd[static_cast<std::size_t>(i)] = rstd;
    for (int j = 0; j < x.cols; ++j) {
      const T n = (row[j] - mean) * rstd;
      if (cache) cache->normalized[i][j] = n;
      y[i][j] = n * gain[0][j] + bias[0][j];
    }
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& cache, const Mat<T>& dy, const Mat<T>& gain,
                           Mat<T>& dgain, Mat<T>& dbias) {
  const int rows = dy.rows, cols = dy.cols;
  Mat<T> dx(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const T* dyr = dy[i];
    const T* nr = cache.normalized[i];
    T sum_dn = T(0), sum_dnn = T(0);
    for (int j = 0; j < cols; ++j) {
      const T dn = dyr[j] * gain[0][j];
      sum_dn += dn;
      sum_dnn += dn * nr[j];
      dgain[0][j] += dyr[j] * nr[j];
      dbias[0][j] += dyr[j];
    }
    const T inv_n = T(1) / static_cast<T>(cols);
    const T rstd = cache.rstd[static_cast<std::size_t>(i)];
    for (int j = 0; j < cols; ++j) {
      const T dn = dyr[j] * gain[0][j];
      dx[i][j] = rstd * (dn - inv_n * sum_dn - nr[j] * inv_n * sum_dnn);
    }
  }
  return dx;
}

template <typename T>
Mat<T> dropout_mask(int rows, int cols, double p, Rng& rng) {
  Mat<T> m(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& x : m.v) x = rng.uniform() < p ? T(0) : scale;
  return m;
}

// ---------------------------------------------------------------------------
// Embedding

template <typename T>
Mat<T> embed(const std::vector<TokenId>& dna_ids, const std::vector<TokenId>& ideas_ids,
             const Parameters<T>& params, const ModelConfig& cfg) {
  if (static_cast<int>(dna_ids.size()) != cfg.l_input)
    throw std::invalid_argument("embed: wrong sequence length");
  const bool use_ideas = !ideas_ids.empty();
  if (use_ideas && ideas_ids.size() != dna_ids.size())
    throw std::invalid_argument("embed: ideas channel length mismatch");
  if (use_ideas && !cfg.has_ideas())
    throw std::invalid_argument("embed: ideas channel supplied to a DNA-only model");

  Mat<T> h(cfg.l_input, cfg.hidden);
  for (int i = 0; i < cfg.l_input; ++i) {
    const TokenId d = dna_ids[static_cast<std::size_t>(i)];
    if (d < 0 || d >= cfg.dna_vocab) throw std::out_of_range("embed: DNA token id out of range");
    const T* drow = params.dna_emb[d];
    const T* prow = params.pos_emb[i];
    T* out = h[i];
    for (int j = 0; j < cfg.hidden; ++j) out[j] = drow[j] + prow[j];
    if (use_ideas) {
      const TokenId s = ideas_ids[static_cast<std::size_t>(i)];
      if (s < 0 || s >= cfg.ideas_vocab)
        throw std::out_of_range("embed: state token id out of range");
      const T* srow = params.ideas_emb[s];
      for (int j = 0; j < cfg.hidden; ++j) out[j] += srow[j];
    }
  }
  return h;
}

template <typename T>
void embed_backward(const std::vector<TokenId>& dna_ids, const std::vector<TokenId>& ideas_ids,
                    const Mat<T>& d_h, Parameters<T>& grads) {
  for (int i = 0; i < d_h.rows; ++i) {
    const T* src = d_h[i];
    T* drow = grads.dna_emb[dna_ids[static_cast<std::size_t>(i)]];
    T* prow = grads.pos_emb[i];
    for (int j = 0; j < d_h.cols; ++j) {
      drow[j] += src[j];
      prow[j] += src[j];
    }
    if (!ideas_ids.empty()) {
      T* srow = grads.ideas_emb[ideas_ids[static_cast<std::size_t>(i)]];
      for (int j = 0; j < d_h.cols; ++j) srow[j] += src[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Encoder

template <typename T>
struct LayerTrace {
  Mat<T> x_in;                      // layer input
  LayerNormCache<T> ln1;
  Mat<T> a;                         // ln1 output
  Mat<T> q, k, v;                   // projections
  std::vector<Mat<T>> probs;        // per head, pre-dropout softmax
  std::vector<Mat<T>> attn_drop;    // per head multiplier masks (empty if off)
  Mat<T> ctx;                       // concatenated heads
  Mat<T> attn_out;                  // after Wo, pre-dropout
  Mat<T> drop1;                     // multiplier mask (empty if off)
  Mat<T> x_mid;
  LayerNormCache<T> ln2;
  Mat<T> b;                         // ln2 output
  Mat<T> z1;                        // ff pre-activation
  Mat<T> a1;                        // gelu(z1)
  Mat<T> ff_out;                    // pre-dropout
  Mat<T> drop2;
};

template <typename T>
struct EncoderTrace {
  Mat<T> emb_drop;  // mask over the embedding output (empty if off)
  std::vector<LayerTrace<T>> layers;
  LayerNormCache<T> final_ln;
  Mat<T> pre_final;
  Mat<T> h_out;
};

namespace detail {

// softmax over unmasked keys only; masked entries get exactly zero weight
template <typename T>
void masked_softmax_row(T* row, const std::vector<std::uint8_t>& key_mask, int n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j < n; ++j)
    if (key_mask[static_cast<std::size_t>(j)] && row[j] > mx) mx = row[j];
  T sum = T(0);
  for (int j = 0; j < n; ++j) {
    if (key_mask[static_cast<std::size_t>(j)]) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    } else {
      row[j] = T(0);
    }
  }
  for (int j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace detail

/// Pre-layer-norm transformer stack with an additive key mask on PAD
/// positions and a final layer norm. `trace` is required for backward.
template <typename T>
Mat<T> encode(const Mat<T>& embedded, const std::vector<std::uint8_t>& attention_mask,
              const Parameters<T>& params, const ModelConfig& cfg, RunMode mode, Rng& rng,
              std::type_identity_t<EncoderTrace<T>*> trace = nullptr) {
  const int l = cfg.l_input;
  const int h = cfg.hidden;
  const int nh = cfg.heads;
  const int d = cfg.head_dim();
  if (embedded.rows != l || embedded.cols != h) throw std::invalid_argument("encode: bad hidden shape");
  if (static_cast<int>(attention_mask.size()) != l)
    throw std::invalid_argument("encode: bad attention mask length");
  if (std::count(attention_mask.begin(), attention_mask.end(), 1) == 0)
    throw std::invalid_argument("encode: attention mask has no real positions");
  const bool train = mode == RunMode::Train;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));

  if (trace) trace->layers.assign(static_cast<std::size_t>(cfg.layers), {});

  Mat<T> x = embedded;
  if (train && cfg.dropout > 0.0) {
    Mat<T> m = dropout_mask<T>(l, h, cfg.dropout, rng);
    hadamard_acc(x, m);
    if (trace) trace->emb_drop = std::move(m);
  }

  for (int li = 0; li < cfg.layers; ++li) {
    LayerTrace<T> lt;
    const LayerParams<T>& lp = params.layers[static_cast<std::size_t>(li)];
    lt.x_in = x;

    lt.a = layer_norm(x, lp.ln1_gain, lp.ln1_bias, trace ? &lt.ln1 : nullptr);
    lt.q = mm(lt.a, lp.wq);
    add_row_bias(lt.q, lp.bq);
    lt.k = mm(lt.a, lp.wk);
    add_row_bias(lt.k, lp.bk);
    lt.v = mm(lt.a, lp.wv);
    add_row_bias(lt.v, lp.bv);

    lt.ctx = Mat<T>(l, h);
    lt.probs.resize(static_cast<std::size_t>(nh));
    lt.attn_drop.resize(static_cast<std::size_t>(nh));
    for (int head = 0; head < nh; ++head) {
      const int c0 = head * d;
      Mat<T> scores(l, l);
      for (int i = 0; i < l; ++i) {
        const T* qi = lt.q[i] + c0;
        for (int j = 0; j < l; ++j) {
          const T* kj = lt.k[j] + c0;
          T s = T(0);
          for (int t = 0; t < d; ++t) s += qi[t] * kj[t];
          scores[i][j] = s * scale;
        }
        detail::masked_softmax_row(scores[i], attention_mask, l);
      }
      Mat<T> dropped = scores;  // post-softmax probabilities
      if (train && cfg.attention_dropout > 0.0) {
        Mat<T> m = dropout_mask<T>(l, l, cfg.attention_dropout, rng);
        hadamard_acc(dropped, m);
        lt.attn_drop[static_cast<std::size_t>(head)] = std::move(m);
      }
      for (int i = 0; i < l; ++i) {
        T* out = lt.ctx[i] + c0;
        const T* pr = dropped[i];
        for (int j = 0; j < l; ++j) {
          const T p = pr[j];
          if (p == T(0)) continue;
          const T* vj = lt.v[j] + c0;
          for (int t = 0; t < d; ++t) out[t] += p * vj[t];
        }
      }
      lt.probs[static_cast<std::size_t>(head)] = std::move(scores);
    }

    lt.attn_out = mm(lt.ctx, lp.wo);
    add_row_bias(lt.attn_out, lp.bo);
    lt.x_mid = lt.x_in;
    if (train && cfg.dropout > 0.0) {
      lt.drop1 = dropout_mask<T>(l, h, cfg.dropout, rng);
      for (std::size_t i = 0; i < lt.x_mid.v.size(); ++i)
        lt.x_mid.v[i] += lt.attn_out.v[i] * lt.drop1.v[i];
    } else {
      axpy(lt.x_mid, T(1), lt.attn_out);
    }

    lt.b = layer_norm(lt.x_mid, lp.ln2_gain, lp.ln2_bias, trace ? &lt.ln2 : nullptr);
    lt.z1 = mm(lt.b, lp.ff_w1);
    add_row_bias(lt.z1, lp.ff_b1);
    lt.a1 = Mat<T>(l, cfg.filter_size);
    for (std::size_t i = 0; i < lt.z1.v.size(); ++i) lt.a1.v[i] = gelu(lt.z1.v[i]);
    lt.ff_out = mm(lt.a1, lp.ff_w2);
    add_row_bias(lt.ff_out, lp.ff_b2);

    x = lt.x_mid;
    if (train && cfg.dropout > 0.0) {
      lt.drop2 = dropout_mask<T>(l, h, cfg.dropout, rng);
      for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += lt.ff_out.v[i] * lt.drop2.v[i];
    } else {
      axpy(x, T(1), lt.ff_out);
    }

    if (!x.all_finite())
      throw std::runtime_error("non-finite activation in encoder layer " + std::to_string(li));
    if (trace) trace->layers[static_cast<std::size_t>(li)] = std::move(lt);
  }

  LayerNormCache<T> fc;
  Mat<T> out = layer_norm(x, params.final_ln_gain, params.final_ln_bias, trace ? &fc : nullptr);
  if (trace) {
    trace->pre_final = std::move(x);
    trace->final_ln = std::move(fc);
    trace->h_out = out;
  }
  return out;
}

/// Reverse pass of `encode`; accumulates parameter gradients and returns the
/// gradient with respect to the embedding output (before embedding dropout).
template <typename T>
Mat<T> encoder_backward(const EncoderTrace<T>& trace,
                        const std::vector<std::uint8_t>& attention_mask, const Mat<T>& d_out,
                        const Parameters<T>& params, const ModelConfig& cfg,
                        Parameters<T>& grads) {
  const int l = cfg.l_input;
  const int h = cfg.hidden;
  const int nh = cfg.heads;
  const int d = cfg.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(d));

  Mat<T> dx = layer_norm_backward(trace.final_ln, d_out, params.final_ln_gain,
                                  grads.final_ln_gain, grads.final_ln_bias);

  for (int li = cfg.layers - 1; li >= 0; --li) {
    const LayerTrace<T>& lt = trace.layers[static_cast<std::size_t>(li)];
    const LayerParams<T>& lp = params.layers[static_cast<std::size_t>(li)];
    LayerParams<T>& lg = grads.layers[static_cast<std::size_t>(li)];

    // feed-forward block: dx is the gradient at the layer output
    Mat<T> d_ffout = dx;
    if (!lt.drop2.empty()) hadamard_acc(d_ffout, lt.drop2);
    Mat<T> d_a1(l, cfg.filter_size);
    mm_ABt_acc(d_ffout, lp.ff_w2, d_a1);
    mm_AtB_acc(lt.a1, d_ffout, lg.ff_w2);
    acc_col_sums(d_ffout, lg.ff_b2);
    Mat<T> d_z1 = std::move(d_a1);
    for (std::size_t i = 0; i < d_z1.v.size(); ++i) d_z1.v[i] *= gelu_grad(lt.z1.v[i]);
    Mat<T> d_b(l, h);
    mm_ABt_acc(d_z1, lp.ff_w1, d_b);
    mm_AtB_acc(lt.b, d_z1, lg.ff_w1);
    acc_col_sums(d_z1, lg.ff_b1);
    Mat<T> d_xmid = layer_norm_backward(lt.ln2, d_b, lp.ln2_gain, lg.ln2_gain, lg.ln2_bias);
    axpy(d_xmid, T(1), dx);  // residual branch

    // attention block
    Mat<T> d_attnout = d_xmid;
    if (!lt.drop1.empty()) hadamard_acc(d_attnout, lt.drop1);
    Mat<T> d_ctx(l, h);
    mm_ABt_acc(d_attnout, lp.wo, d_ctx);
    mm_AtB_acc(lt.ctx, d_attnout, lg.wo);
    acc_col_sums(d_attnout, lg.bo);

    Mat<T> d_q(l, h), d_k(l, h), d_v(l, h);
    for (int head = 0; head < nh; ++head) {
      const int c0 = head * d;
      const Mat<T>& probs = lt.probs[static_cast<std::size_t>(head)];
      const Mat<T>& drop = lt.attn_drop[static_cast<std::size_t>(head)];

      for (int i = 0; i < l; ++i) {
        // dropped probabilities actually used in the forward context
        // d_probs_dropped[j] = sum_t d_ctx[i, c0+t] * v[j, c0+t]
        std::vector<T> d_pd(static_cast<std::size_t>(l), T(0));
        const T* dci = d_ctx[i] + c0;
        for (int j = 0; j < l; ++j) {
          if (probs[i][j] == T(0) && drop.empty()) continue;
          const T* vj = lt.v[j] + c0;
          T s = T(0);
          for (int t = 0; t < d; ++t) s += dci[t] * vj[t];
          d_pd[static_cast<std::size_t>(j)] = s;
        }
        // dV[j] += probs_dropped[i,j] * d_ctx[i]
        for (int j = 0; j < l; ++j) {
          T pd = probs[i][j];
          if (!drop.empty()) pd *= drop[i][j];
          if (pd == T(0)) continue;
          T* dvj = d_v[j] + c0;
          for (int t = 0; t < d; ++t) dvj[t] += pd * dci[t];
        }
        // back through dropout then softmax
        std::vector<T> d_p(static_cast<std::size_t>(l));
        for (int j = 0; j < l; ++j)
          d_p[static_cast<std::size_t>(j)] =
              drop.empty() ? d_pd[static_cast<std::size_t>(j)]
                           : d_pd[static_cast<std::size_t>(j)] * drop[i][j];
        T dot = T(0);
        for (int j = 0; j < l; ++j) dot += probs[i][j] * d_p[static_cast<std::size_t>(j)];
        // d_scores = p * (d_p - dot); masked keys have p = 0
        for (int j = 0; j < l; ++j) {
          const T ds = probs[i][j] * (d_p[static_cast<std::size_t>(j)] - dot) * scale;
          if (ds == T(0)) continue;
          const T* kj = lt.k[j] + c0;
          const T* qi = lt.q[i] + c0;
          T* dqi = d_q[i] + c0;
          T* dkj = d_k[j] + c0;
          for (int t = 0; t < d; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }

    Mat<T> d_a(l, h);
    mm_ABt_acc(d_q, lp.wq, d_a);
    mm_AtB_acc(lt.a, d_q, lg.wq);
    acc_col_sums(d_q, lg.bq);
    mm_ABt_acc(d_k, lp.wk, d_a);
    mm_AtB_acc(lt.a, d_k, lg.wk);
    acc_col_sums(d_k, lg.bk);
    mm_ABt_acc(d_v, lp.wv, d_a);
    mm_AtB_acc(lt.a, d_v, lg.wv);
    acc_col_sums(d_v, lg.bv);

    Mat<T> d_xin = layer_norm_backward(lt.ln1, d_a, lp.ln1_gain, lg.ln1_gain, lg.ln1_bias);
    axpy(d_xin, T(1), d_xmid);  // residual branch
    dx = std::move(d_xin);
  }

  if (!trace.emb_drop.empty()) hadamard_acc(dx, trace.emb_drop);
  (void)attention_mask;
  return dx;
}

// ---------------------------------------------------------------------------
// MLM projections

template <typename T>
void mlm_forward(const Mat<T>& hidden, const Parameters<T>& params, Mat<T>& dna_logits,
                 Mat<T>& ideas_logits) {
  dna_logits = mm(hidden, params.mlm_dna_w);
  add_row_bias(dna_logits, params.mlm_dna_b);
  if (!params.mlm_ideas_w.empty()) {
    ideas_logits = mm(hidden, params.mlm_ideas_w);
    add_row_bias(ideas_logits, params.mlm_ideas_b);
  } else {
    ideas_logits = Mat<T>();
  }
}

template <typename T>
Mat<T> mlm_backward(const Mat<T>& hidden, const Mat<T>& d_dna_logits,
                    const Mat<T>& d_ideas_logits, const Parameters<T>& params,
                    Parameters<T>& grads) {
  Mat<T> d_hidden(hidden.rows, hidden.cols);
  mm_ABt_acc(d_dna_logits, params.mlm_dna_w, d_hidden);
  mm_AtB_acc(hidden, d_dna_logits, grads.mlm_dna_w);
  acc_col_sums(d_dna_logits, grads.mlm_dna_b);
  if (!d_ideas_logits.empty() && !params.mlm_ideas_w.empty()) {
    mm_ABt_acc(d_ideas_logits, params.mlm_ideas_w, d_hidden);
    mm_AtB_acc(hidden, d_ideas_logits, grads.mlm_ideas_w);
    acc_col_sums(d_ideas_logits, grads.mlm_ideas_b);
  }
  return d_hidden;
}

// ---------------------------------------------------------------------------
// TF binding head: two width-3 same-padded convolutions over the sequence,
// global max-pool, two dense layers, sigmoid.

namespace detail {

template <typename T>
Mat<T> conv1d3(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  const int l = x.rows, cin = x.cols, cout = w.cols;
  Mat<T> y(l, cout);
  for (int t = 0; t < l; ++t) {
    T* yr = y[t];
    for (int j = 0; j < cout; ++j) yr[j] = b[0][j];
    for (int off = 0; off < kConvWidth; ++off) {
      const int s = t + off - 1;
      if (s < 0 || s >= l) continue;
      const T* xr = x[s];
      for (int c = 0; c < cin; ++c) {
        const T xv = xr[c];
        if (xv == T(0)) continue;
        const T* wr = w[off * cin + c];
        for (int j = 0; j < cout; ++j) yr[j] += xv * wr[j];
      }
    }
  }
  return y;
}

template <typename T>
Mat<T> conv1d3_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& dy, Mat<T>& dw,
                        Mat<T>& db) {
  const int l = x.rows, cin = x.cols, cout = w.cols;
  Mat<T> dx(l, cin);
  acc_col_sums(dy, db);
  for (int t = 0; t < l; ++t) {
    const T* dyr = dy[t];
    for (int off = 0; off < kConvWidth; ++off) {
      const int s = t + off - 1;
      if (s < 0 || s >= l) continue;
      const T* xr = x[s];
      T* dxr = dx[s];
      for (int c = 0; c < cin; ++c) {
        T* dwr = dw[off * cin + c];
        const T* wr = w[off * cin + c];
        const T xv = xr[c];
        T acc = T(0);
        for (int j = 0; j < cout; ++j) {
          dwr[j] += xv * dyr[j];
          acc += wr[j] * dyr[j];
        }
        dxr[c] += acc;
      }
    }
  }
  return dx;
}

}  // namespace detail

template <typename T>
struct TfHeadTrace {
  Mat<T> input;            // hidden (+ aux columns)
  Mat<T> z1, r1, z2, r2;   // conv pre/post activations
  std::vector<int> argmax; // max-pool winners per channel
  Mat<T> pooled;           // [1 x 128]
  Mat<T> d1_pre, d1_act;   // dense1 pre/post ReLU
  T logit = T(0);
};

template <typename T>
T tf_head_forward(const Mat<T>& hidden, std::type_identity_t<const Mat<T>*> aux,
                  const Parameters<T>& params, const ModelConfig& cfg,
                  std::type_identity_t<TfHeadTrace<T>*> trace = nullptr) {
  if (cfg.with_aux != (aux != nullptr && !aux->empty()))
    throw std::invalid_argument("auxiliary channels do not match the configuration");
  const int l = hidden.rows;

  Mat<T> input(l, cfg.head_channels());
  for (int t = 0; t < l; ++t) {
    T* row = input[t];
    const T* hr = hidden[t];
    for (int j = 0; j < cfg.hidden; ++j) row[j] = hr[j];
    if (cfg.with_aux) {
      row[cfg.hidden] = (*aux)[t][0];
      row[cfg.hidden + 1] = (*aux)[t][1];
    }
  }

  Mat<T> z1 = detail::conv1d3(input, params.conv1_w, params.conv1_b);
  Mat<T> r1 = z1;
  for (auto& x : r1.v) x = x > T(0) ? x : T(0);
  Mat<T> z2 = detail::conv1d3(r1, params.conv2_w, params.conv2_b);
  Mat<T> r2 = z2;
  for (auto& x : r2.v) x = x > T(0) ? x : T(0);

  Mat<T> pooled(1, kConv2Channels);
  std::vector<int> argmax(kConv2Channels, 0);
  for (int c = 0; c < kConv2Channels; ++c) {
    T best = r2[0][c];
    int bt = 0;
    for (int t = 1; t < l; ++t)
      if (r2[t][c] > best) {
        best = r2[t][c];
        bt = t;
      }
    pooled[0][c] = best;
    argmax[static_cast<std::size_t>(c)] = bt;
  }

  Mat<T> d1 = mm(pooled, params.dense1_w);
  add_row_bias(d1, params.dense1_b);
  Mat<T> d1a = d1;
  for (auto& x : d1a.v) x = x > T(0) ? x : T(0);
  Mat<T> d2 = mm(d1a, params.dense2_w);
  const T logit = d2[0][0] + params.dense2_b[0][0];
  const T prob = T(1) / (T(1) + std::exp(-logit));

  if (trace) {
    trace->input = std::move(input);
    trace->z1 = std::move(z1);
    trace->r1 = std::move(r1);
    trace->z2 = std::move(z2);
    trace->r2 = std::move(r2);
    trace->argmax = std::move(argmax);
    trace->pooled = std::move(pooled);
    trace->d1_pre = std::move(d1);
    trace->d1_act = std::move(d1a);
    trace->logit = logit;
  }
  return prob;
}

/// Backward from the pre-sigmoid logit gradient; returns the gradient with
/// respect to the encoder hidden states (auxiliary columns are inputs, not
/// parameters, so their gradient is dropped).
template <typename T>
Mat<T> tf_head_backward(const TfHeadTrace<T>& trace, T d_logit, const Parameters<T>& params,
                        const ModelConfig& cfg, Parameters<T>& grads) {
  const int l = trace.input.rows;

  grads.dense2_b[0][0] += d_logit;
  Mat<T> d_d1a(1, kDense1Units);
  for (int j = 0; j < kDense1Units; ++j) {
    grads.dense2_w[j][0] += trace.d1_act[0][j] * d_logit;
    d_d1a[0][j] = params.dense2_w[j][0] * d_logit;
  }
  for (int j = 0; j < kDense1Units; ++j)
    if (trace.d1_pre[0][j] <= T(0)) d_d1a[0][j] = T(0);

  Mat<T> d_pooled(1, kConv2Channels);
  mm_ABt_acc(d_d1a, params.dense1_w, d_pooled);
  mm_AtB_acc(trace.pooled, d_d1a, grads.dense1_w);
  acc_col_sums(d_d1a, grads.dense1_b);

  Mat<T> d_r2(l, kConv2Channels);
  for (int c = 0; c < kConv2Channels; ++c)
    d_r2[trace.argmax[static_cast<std::size_t>(c)]][c] = d_pooled[0][c];
  for (std::size_t i = 0; i < d_r2.v.size(); ++i)
    if (trace.z2.v[i] <= T(0)) d_r2.v[i] = T(0);

  Mat<T> d_r1 =
      detail::conv1d3_backward(trace.r1, params.conv2_w, d_r2, grads.conv2_w, grads.conv2_b);
  for (std::size_t i = 0; i < d_r1.v.size(); ++i)
    if (trace.z1.v[i] <= T(0)) d_r1.v[i] = T(0);

  Mat<T> d_input =
      detail::conv1d3_backward(trace.input, params.conv1_w, d_r1, grads.conv1_w, grads.conv1_b);

  Mat<T> d_hidden(l, cfg.hidden);
  for (int t = 0; t < l; ++t)
    for (int j = 0; j < cfg.hidden; ++j) d_hidden[t][j] = d_input[t][j];
  return d_hidden;
}

}  // namespace ebert

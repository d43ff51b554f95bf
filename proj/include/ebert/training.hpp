#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebert/masking.hpp"
#include "ebert/matrix.hpp"
#include "ebert/metrics.hpp"
#include "ebert/model.hpp"

namespace ebert {

struct LossConfig {
  double alpha = 0.5;  // DNA term weight; the state term gets 1 - alpha
};

struct PairedLossValue {
  double total = 0.0;
  double dna = 0.0;
  double ideas = 0.0;
};

namespace detail {

// mean softmax cross-entropy over non-IGNORE rows; optionally writes
// d(loss)/d(logits) scaled by `grad_scale` into d_logits
template <typename T>
double masked_cross_entropy(const Mat<T>& logits, const std::vector<TokenId>& labels,
                            Mat<T>* d_logits, double grad_scale) {
  int targets = 0;
  for (TokenId t : labels) targets += (t != kIgnore);
  if (targets == 0) return 0.0;

  double loss = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    const TokenId y = labels[static_cast<std::size_t>(i)];
    if (y == kIgnore) continue;
    const T* row = logits[i];
    T mx = row[0];
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double logsum = std::log(sum) + static_cast<double>(mx);
    loss += logsum - static_cast<double>(row[y]);
    if (d_logits) {
      const double inv = grad_scale / static_cast<double>(targets);
      T* drow = (*d_logits)[i];
      for (int j = 0; j < logits.cols; ++j)
        drow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - logsum) * inv);
      drow[y] -= static_cast<T>(inv);
    }
  }
  return loss / targets;
}

}  // namespace detail

/// Weighted paired objective: total = alpha * dna + (1 - alpha) * ideas, each
/// term a mean cross-entropy over its targeted positions. A batch with no
/// state targets contributes a zero ideas term.
template <typename T>
PairedLossValue paired_loss(const Mat<T>& dna_logits, const std::vector<TokenId>& dna_labels,
                            const Mat<T>& ideas_logits, const std::vector<TokenId>& ideas_labels,
                            const LossConfig& cfg, Mat<T>* d_dna_logits = nullptr,
                            Mat<T>* d_ideas_logits = nullptr) {
  int dna_targets = 0;
  for (TokenId t : dna_labels) dna_targets += (t != kIgnore);
  if (dna_targets == 0) throw std::invalid_argument("paired_loss: no DNA targets");

  PairedLossValue out;
  out.dna = detail::masked_cross_entropy(dna_logits, dna_labels, d_dna_logits, cfg.alpha);
  if (!ideas_logits.empty() && !ideas_labels.empty())
    out.ideas = detail::masked_cross_entropy(ideas_logits, ideas_labels, d_ideas_logits,
                                             1.0 - cfg.alpha);
  out.total = cfg.alpha * out.dna + (1.0 - cfg.alpha) * out.ideas;
  return out;
}

/// Binary cross-entropy of a probability against a 0/1 label.
inline double binding_loss(double prob, int label) {
  const double p = std::clamp(prob, 1e-12, 1.0 - 1e-12);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

/// d(binding_loss)/d(logit) through the sigmoid, in closed form.
inline double binding_loss_grad_logit(double prob, int label) { return prob - label; }

/// Linear warmup to the peak rate, constant afterward.
inline double lr_schedule(std::int64_t step, std::int64_t warmup, double peak) {
  if (step < 0) throw std::invalid_argument("negative step");
  if (warmup <= 0 || step >= warmup) return peak;
  return peak * static_cast<double>(step) / static_cast<double>(warmup);
}

// ---------------------------------------------------------------------------
// AdamW

struct OptimSettings {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-4;
  double weight_decay = 0.01;
};

template <typename T>
struct TensorRef {
  std::string name;
  Mat<T>* mat;
  bool decay;
};

template <typename T>
std::vector<TensorRef<T>> tensor_refs(Parameters<T>& p) {
  std::vector<TensorRef<T>> refs;
  p.visit([&](const std::string& name, Mat<T>& m, bool decay) { refs.push_back({name, &m, decay}); });
  return refs;
}

/// Decoupled-weight-decay Adam with bias correction. Decay is skipped for
/// biases and layer-norm parameters (their visit flag).
template <typename T>
struct AdamW {
  OptimSettings settings;
  Parameters<T> m, v;
  std::int64_t t = 0;

  static AdamW make(const Parameters<T>& shape, const OptimSettings& s) {
    AdamW a;
    a.settings = s;
    a.m = shape.zeros_like();
    a.v = shape.zeros_like();
    return a;
  }

  template <typename Filter>
  void step(Parameters<T>& params, Parameters<T>& grads, double lr, Filter&& trainable) {
    ++t;
    const double bc1 = 1.0 - std::pow(settings.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(settings.beta2, static_cast<double>(t));
    auto pr = tensor_refs(params);
    auto gr = tensor_refs(grads);
    auto mr = tensor_refs(m);
    auto vr = tensor_refs(v);
    if (pr.size() != gr.size() || pr.size() != mr.size() || pr.size() != vr.size())
      throw std::invalid_argument("optimizer state does not match the parameter set");
    const T b1 = static_cast<T>(settings.beta1);
    const T b2 = static_cast<T>(settings.beta2);
    const T eps = static_cast<T>(settings.epsilon);

    for (std::size_t i = 0; i < pr.size(); ++i) {
      if (!trainable(pr[i].name)) continue;
      Mat<T>& p = *pr[i].mat;
      Mat<T>& g = *gr[i].mat;
      Mat<T>& mm_ = *mr[i].mat;
      Mat<T>& vv = *vr[i].mat;
      if (!g.all_finite())
        throw std::runtime_error("non-finite gradient in tensor " + pr[i].name);
      const T decay = pr[i].decay ? static_cast<T>(settings.weight_decay) : T(0);
      for (std::size_t e = 0; e < p.v.size(); ++e) {
        const T ge = g.v[e];
        mm_.v[e] = b1 * mm_.v[e] + (T(1) - b1) * ge;
        vv.v[e] = b2 * vv.v[e] + (T(1) - b2) * ge * ge;
        const T mhat = mm_.v[e] / static_cast<T>(bc1);
        const T vhat = vv.v[e] / static_cast<T>(bc2);
        p.v[e] -= static_cast<T>(lr) * (mhat / (std::sqrt(vhat) + eps) + decay * p.v[e]);
      }
    }
  }

  void step(Parameters<T>& params, Parameters<T>& grads, double lr) {
    step(params, grads, lr, [](const std::string&) { return true; });
  }
};

// ---------------------------------------------------------------------------
// Fine-tune sampling

/// Index lists into a sample pool; Ambiguous bins must already be excluded.
struct FinetuneSampler {
  std::vector<int> positives;
  std::vector<int> negatives;
  int ratio = 10;
  std::uint64_t epoch_seed = 0;
};

/// All positives plus a fresh epoch draw of min(ratio*|P|, |N|) negatives,
/// shuffled; deterministic in (epoch_seed, epoch).
inline std::vector<int> resample_negatives(const FinetuneSampler& sampler, int epoch) {
  if (sampler.positives.empty()) throw std::invalid_argument("no positive samples");
  Rng rng(seed_combine(sampler.epoch_seed, static_cast<std::uint64_t>(epoch)));

  std::vector<int> negatives = sampler.negatives;
  const std::size_t want = std::min(
      negatives.size(), static_cast<std::size_t>(sampler.ratio) * sampler.positives.size());
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.uniform_int(negatives.size() - i);
    std::swap(negatives[i], negatives[j]);
  }
  std::vector<int> order = sampler.positives;
  order.insert(order.end(), negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(want));
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t j = i + rng.uniform_int(order.size() - i);
    std::swap(order[i], order[j]);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Pre-training loop

struct PretrainOptions {
  int steps = 500;
  int batch_size = 32;
  double alpha = 0.5;
  double mask_rate = 0.15;
  std::uint64_t seed = 42;
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 50;
  OptimSettings optim;
};

struct PretrainLogRow {
  std::int64_t step = 0;
  double lr = 0.0, total = 0.0, dna = 0.0, ideas = 0.0;
};

template <typename T>
struct PretrainResult {
  Parameters<T> params;
  AdamW<T> adam;
  std::vector<PretrainLogRow> log;
};

namespace detail {

template <typename T>
struct ExampleGrad {
  PairedLossValue loss;
};

// forward + backward for one masked example; gradients are accumulated
// scaled by 1/batch so the batch loss is a mean
template <typename T>
PairedLossValue mlm_example_pass(const MaskedExample& ex, const Parameters<T>& params,
                                 const ModelConfig& cfg, double alpha, double inv_batch, Rng& rng,
                                 Parameters<T>& grads) {
  EncoderTrace<T> trace;
  const Mat<T> embedded = embed(ex.input_dna, ex.input_ideas, params, cfg);
  const Mat<T> hidden = encode(embedded, ex.attention_mask, params, cfg, RunMode::Train, rng, &trace);
  Mat<T> dna_logits, ideas_logits;
  mlm_forward(hidden, params, dna_logits, ideas_logits);

  Mat<T> d_dna(dna_logits.rows, dna_logits.cols);
  Mat<T> d_ideas;
  if (!ideas_logits.empty()) d_ideas = Mat<T>(ideas_logits.rows, ideas_logits.cols);
  LossConfig lc{alpha};
  const PairedLossValue loss = paired_loss(dna_logits, ex.dna_labels, ideas_logits,
                                           ex.ideas_labels, lc, &d_dna,
                                           ideas_logits.empty() ? nullptr : &d_ideas);
  for (auto& x : d_dna.v) x *= static_cast<T>(inv_batch);
  for (auto& x : d_ideas.v) x *= static_cast<T>(inv_batch);

  Mat<T> d_hidden = mlm_backward(hidden, d_dna, d_ideas, params, grads);
  Mat<T> d_emb = encoder_backward(trace, ex.attention_mask, d_hidden, params, cfg, grads);
  embed_backward(ex.input_dna, ex.input_ideas, d_emb, grads);
  return loss;
}

}  // namespace detail

/// One masked-LM training run over an in-memory corpus of tokenized windows.
/// Every random draw derives from (seed, global step), so a run resumed from
/// a checkpoint replays the interrupted trajectory exactly.
template <typename T>
PretrainResult<T> pretrain_loop(const std::vector<TokenizedPair>& corpus, const ModelConfig& cfg,
                                const TokenizerConfig& tok, const PretrainOptions& opt,
                                Parameters<T> params, AdamW<T> adam,
                                std::int64_t start_step = 0) {
  if (corpus.empty()) throw std::invalid_argument("empty pre-training corpus");
  PretrainResult<T> res{std::move(params), std::move(adam), {}};
  Parameters<T> grads = res.params.zeros_like();
  const double inv_batch = 1.0 / opt.batch_size;
  const Vocab vocab = build_vocab(tok.k);

  for (std::int64_t step = start_step; step < opt.steps; ++step) {
    Rng rng(seed_combine(opt.seed, static_cast<std::uint64_t>(step)));
    grads.visit([](const std::string&, Mat<T>& m, bool) { m.fill(T(0)); });

    PretrainLogRow row;
    row.step = step + 1;
    for (int b = 0; b < opt.batch_size; ++b) {
      const auto& pair = corpus[rng.uniform_int(corpus.size())];
      const MaskPlan plan = sample_mask_plan(pair, opt.mask_rate, tok.k, rng);
      const MaskedExample ex = apply_paired_masking(pair, plan, vocab, rng);
      const PairedLossValue loss =
          detail::mlm_example_pass(ex, res.params, cfg, opt.alpha, inv_batch, rng, grads);
      row.total += loss.total * inv_batch;
      row.dna += loss.dna * inv_batch;
      row.ideas += loss.ideas * inv_batch;
    }

    row.lr = lr_schedule(res.adam.t + 1, opt.warmup_steps, opt.peak_lr);
    res.adam.step(res.params, grads, row.lr);
    res.log.push_back(row);
  }
  return res;
}

/// Masked-token prediction accuracy over fresh masked samples of the corpus,
/// in eval mode (the pre-training quality probe).
template <typename T>
double masked_dna_accuracy(const std::vector<TokenizedPair>& corpus, const Parameters<T>& params,
                           const ModelConfig& cfg, const TokenizerConfig& tok, int examples,
                           std::uint64_t seed) {
  const auto vocab = build_vocab(tok.k);
  Rng rng(seed);
  std::int64_t correct = 0, total = 0;
  for (int e = 0; e < examples; ++e) {
    const auto& pair = corpus[rng.uniform_int(corpus.size())];
    const MaskPlan plan = sample_mask_plan(pair, 0.15, tok.k, rng);
    const MaskedExample ex = apply_paired_masking(pair, plan, vocab, rng);
    const Mat<T> embedded = embed(ex.input_dna, ex.input_ideas, params, cfg);
    Rng eval_rng(0);
    const Mat<T> hidden =
        encode(embedded, ex.attention_mask, params, cfg, RunMode::Eval, eval_rng, nullptr);
    Mat<T> dna_logits, ideas_logits;
    mlm_forward(hidden, params, dna_logits, ideas_logits);
    for (int i = 0; i < dna_logits.rows; ++i) {
      const TokenId y = ex.dna_labels[static_cast<std::size_t>(i)];
      if (y == kIgnore) continue;
      int best = 0;
      const T* r = dna_logits[i];
      for (int j = 1; j < dna_logits.cols; ++j)
        if (r[j] > r[best]) best = j;
      correct += (best == y);
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Fine-tuning loop

struct TfSample {
  TokenizedPair pair;
  int label = 0;  // 1 = Bound, 0 = Unbound; Ambiguous never enters a dataset
};

struct FinetuneDataset {
  std::vector<TfSample> train;
  std::vector<TfSample> eval;
};

struct FinetuneOptions {
  int max_epochs = 20;
  int batch_size = 32;
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 25;
  OptimSettings optim{0.9, 0.99, 1e-5, 0.01};
  std::uint64_t seed = 42;
  double plateau_eps = 1e-4;   // stop when AUPRC gains stay at or below this
  int plateau_patience = 3;    // for this many consecutive evaluations
  int negative_ratio = 10;
  bool head_only = false;
};

struct FinetuneEpochRow {
  int epoch = 0;
  double auprc = 0.0, auroc = 0.0, loss = 0.0;
};

template <typename T>
struct FinetuneResult {
  Parameters<T> params;
  std::vector<FinetuneEpochRow> log;
  double best_auprc = 0.0;
  int epochs_run = 0;

  int first_epoch_reaching(double threshold) const {
    for (const auto& r : log)
      if (r.auprc >= threshold) return r.epoch;
    return -1;
  }
};

namespace detail {

template <typename T>
Mat<T> aux_matrix(const TokenizedPair& pair) {
  Mat<T> aux(static_cast<int>(pair.dnase.size()), 2);
  for (int i = 0; i < aux.rows; ++i) {
    aux[i][0] = static_cast<T>(pair.dnase[static_cast<std::size_t>(i)]);
    aux[i][1] = static_cast<T>(pair.mappability[static_cast<std::size_t>(i)]);
  }
  return aux;
}

template <typename T>
double tf_example_prob(const TfSample& s, const Parameters<T>& params, const ModelConfig& cfg) {
  const Mat<T> embedded = embed(s.pair.dna_ids, s.pair.ideas_ids, params, cfg);
  Rng rng(0);
  const Mat<T> hidden =
      encode(embedded, s.pair.attention_mask, params, cfg, RunMode::Eval, rng, nullptr);
  Mat<T> aux;
  if (cfg.with_aux) aux = aux_matrix<T>(s.pair);
  return static_cast<double>(
      tf_head_forward(hidden, cfg.with_aux ? &aux : nullptr, params, cfg, nullptr));
}

}  // namespace detail

/// End-to-end fine-tuning with per-epoch negative resampling and a plateau
/// halt on evaluation AUPRC. `head_only` freezes everything but the
/// convolutional/dense head.
template <typename T>
FinetuneResult<T> finetune_loop(const FinetuneDataset& data, const ModelConfig& cfg,
                                const FinetuneOptions& opt, Parameters<T> params) {
  FinetuneSampler sampler;
  sampler.ratio = opt.negative_ratio;
  sampler.epoch_seed = opt.seed;
  for (std::size_t i = 0; i < data.train.size(); ++i)
    (data.train[i].label ? sampler.positives : sampler.negatives).push_back(static_cast<int>(i));

  FinetuneResult<T> res;
  res.params = std::move(params);
  AdamW<T> adam = AdamW<T>::make(res.params, opt.optim);
  Parameters<T> grads = res.params.zeros_like();
  auto trainable = [&](const std::string& name) {
    return !opt.head_only || name.rfind("head.", 0) == 0;
  };

  double best = -1.0;
  int flat_evals = 0;
  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    const std::vector<int> order = resample_negatives(sampler, epoch);
    Rng rng(seed_combine(opt.seed ^ 0x9e3779b9ULL, static_cast<std::uint64_t>(epoch)));

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t to = std::min(order.size(), from + static_cast<std::size_t>(opt.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(to - from);
      grads.visit([](const std::string&, Mat<T>& m, bool) { m.fill(T(0)); });

      for (std::size_t idx = from; idx < to; ++idx) {
        const TfSample& s = data.train[static_cast<std::size_t>(order[idx])];
        EncoderTrace<T> trace;
        const Mat<T> embedded = embed(s.pair.dna_ids, s.pair.ideas_ids, res.params, cfg);
        const Mat<T> hidden = encode(embedded, s.pair.attention_mask, res.params, cfg,
                                     RunMode::Train, rng, &trace);
        Mat<T> aux;
        if (cfg.with_aux) aux = detail::aux_matrix<T>(s.pair);
        TfHeadTrace<T> head_trace;
        const T prob = tf_head_forward(hidden, cfg.with_aux ? &aux : nullptr, res.params, cfg,
                                       &head_trace);
        epoch_loss += binding_loss(static_cast<double>(prob), s.label);
        ++seen;

        const T d_logit = static_cast<T>(
            binding_loss_grad_logit(static_cast<double>(prob), s.label) * inv_batch);
        Mat<T> d_hidden = tf_head_backward(head_trace, d_logit, res.params, cfg, grads);
        if (!opt.head_only) {
          Mat<T> d_emb =
              encoder_backward(trace, s.pair.attention_mask, d_hidden, res.params, cfg, grads);
          embed_backward(s.pair.dna_ids, s.pair.ideas_ids, d_emb, grads);
        }
      }
      const double lr = lr_schedule(adam.t + 1, opt.warmup_steps, opt.peak_lr);
      adam.step(res.params, grads, lr, trainable);
    }

    PredictionSet eval_set;
    for (const auto& s : data.eval) {
      eval_set.scores.push_back(detail::tf_example_prob(s, res.params, cfg));
      eval_set.labels.push_back(s.label);
    }
    FinetuneEpochRow row;
    row.epoch = epoch;
    row.auprc = auprc(eval_set);
    row.auroc = auroc(eval_set);
    row.loss = epoch_loss / static_cast<double>(seen);
    res.log.push_back(row);
    res.epochs_run = epoch;

    if (row.auprc > best + opt.plateau_eps) {
      best = row.auprc;
      flat_evals = 0;
    } else {
      ++flat_evals;
      if (flat_evals >= opt.plateau_patience) break;
    }
  }
  res.best_auprc = best;
  return res;
}

}  // namespace ebert

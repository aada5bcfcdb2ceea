#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evfuse/data.hpp"
#include "evfuse/error.hpp"
#include "evfuse/losses.hpp"
#include "evfuse/networks.hpp"
#include "evfuse/rng.hpp"
#include "evfuse/subjective_logic.hpp"

namespace evfuse {

/// Training phases in schedule order: feature alignment with noise fill, VAE + evidence
/// learning with frozen extractors, joint fine-tuning.
enum class Phase : std::size_t { feature = 0, vae = 1, joint = 2 };

inline constexpr std::array<Phase, 3> kPhases{Phase::feature, Phase::vae, Phase::joint};

inline const char* phase_tag(Phase p) {
  switch (p) {
    case Phase::feature: return "F";
    case Phase::vae: return "V";
    case Phase::joint: return "J";
  }
  return "?";
}

/// How missing views are filled before the evidence heads.
enum class ImputerKind { vae, noise, zero, mean };

inline const char* imputer_tag(ImputerKind k) {
  switch (k) {
    case ImputerKind::vae: return "vae";
    case ImputerKind::noise: return "noise";
    case ImputerKind::zero: return "zero";
    case ImputerKind::mean: return "mean";
  }
  return "?";
}

struct TrainConfig {
  ModelConfig model;  ///< view_dims and classes are taken from the dataset when empty
  std::array<std::size_t, 3> epochs{50, 100, 100};
  std::size_t batch_size = 64;
  std::array<double, 3> learning_rate{1e-3, 1e-3, 3e-4};
  double lambda_horizon = 10.0;  ///< lambda_t = min(1, epoch / horizon)
  double eta = 0.0;              ///< mask-augmentation rate during the VAE phases
  std::size_t imputation_samples = 5;
  FusionMode fusion = FusionMode::balanced;
  bool per_view_acc = true;    ///< accuracy loss on every view as well as on the fused opinion
  bool conflict_loss = true;   ///< consistency loss in the V and J phases
  bool vae_recon_in_v = true;  ///< negative ELBO already in the V phase
  std::size_t baseline_epochs = 0;  ///< 0: same total budget as the three phases
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be positive");
    if (imputation_samples == 0) throw ContractError("TrainConfig: imputation_samples must be positive");
    for (double lr : learning_rate)
      if (!(lr > 0.0)) throw ContractError("TrainConfig: learning rates must be positive");
    if (!(lambda_horizon >= 0.0)) throw ContractError("TrainConfig: lambda_horizon must be non-negative");
    if (!(eta >= 0.0 && eta < 1.0)) throw ContractError("TrainConfig: eta must lie in [0, 1)");
  }

  double lambda(std::size_t epoch) const {
    if (lambda_horizon <= 0.0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / lambda_horizon);
  }

  /// Model configuration completed with the dataset's dimensions.
  ModelConfig model_for(const MultiViewDataset& ds) const {
    ModelConfig m = model;
    if (m.view_dims.empty()) m.view_dims = ds.dims();
    if (m.classes == 0) m.classes = ds.classes;
    if (m.view_dims != ds.dims() || m.classes != ds.classes) {
      throw ContractError("TrainConfig: model dimensions do not match the dataset");
    }
    return m;
  }
};

struct EpochRecord {
  std::string phase;
  std::size_t epoch = 0;
  double lambda = 0.0;
  loss::LossBundle losses;
  double train_accuracy = 0.0;
  double seconds = 0.0;
};

struct Prediction {
  Opinion fused;
  std::vector<double> probability;
  std::size_t predicted = 0;
  double uncertainty = 1.0;
  std::vector<double> fused_evidence;
  std::vector<std::vector<double>> view_evidence;  ///< averaged over imputation samples
  std::vector<std::vector<double>> conflict;       ///< V x V agreement matrix (empty when V = 1)
};

struct EvalMetrics {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double mean_uncertainty = 0.0;
  double median_uncertainty = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<double>> mean_conflict;  ///< mean over samples of the agreement matrix
  double mean_pairwise_js = 0.0;                    ///< mean off-diagonal 1 - c
};

struct Evaluation {
  EvalMetrics metrics;
  std::vector<Prediction> predictions;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> rows;  ///< source row ids
};

struct PhaseReport {
  std::string phase;
  std::vector<EpochRecord> epochs;
  std::optional<EvalMetrics> start;  ///< test metrics before the first update
  std::optional<EvalMetrics> end;    ///< test metrics after the last update
  double seconds = 0.0;
};

struct PhaseResult {
  ModelParams params;
  PhaseReport report;
};

/// What fills a missing view at inference time.
struct Imputer {
  ImputerKind kind = ImputerKind::vae;
  std::vector<std::vector<double>> view_means;  ///< raw per-view column means, for `mean`
};

/// Per-view column means of the observed rows.
inline std::vector<std::vector<double>> observed_view_means(const MultiViewDataset& ds) {
  std::vector<std::vector<double>> means;
  for (std::size_t v = 0; v < ds.view_count(); ++v) {
    std::vector<double> m(ds.views[v].cols(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!ds.observed(i, v)) continue;
      ++count;
      for (std::size_t c = 0; c < m.size(); ++c) m[c] += ds.views[v](i, c);
    }
    if (count > 0)
      for (auto& x : m) x /= static_cast<double>(count);
    means.push_back(std::move(m));
  }
  return means;
}

namespace detail {

struct Batch {
  std::vector<Tensor> views;
  Tensor onehot;
  std::vector<std::uint8_t> mask;  ///< source mask, n x V
  std::vector<std::size_t> labels;
};

inline Batch gather(const MultiViewDataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  const std::size_t v_count = ds.view_count();
  for (const auto& view : ds.views) {
    Tensor t(rows.size(), view.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) t.mat().row(i) = view.mat().row(rows[i]);
    b.views.push_back(std::move(t));
  }
  b.onehot = Tensor(rows.size(), ds.classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.labels.push_back(ds.labels[rows[i]]);
    b.onehot(i, ds.labels[rows[i]]) = 1.0;
    for (std::size_t v = 0; v < v_count; ++v) b.mask.push_back(ds.mask[rows[i] * v_count + v]);
  }
  return b;
}

inline Tensor mask_tensor(const std::vector<std::uint8_t>& mask, std::size_t v_count) {
  Tensor m(mask.size() / v_count, v_count);
  for (std::size_t i = 0; i < mask.size(); ++i) m[i] = mask[i];
  return m;
}

/// Raw inputs with missing views replaced by zeros or by the training means.
inline std::vector<Tensor> fill_raw(const std::vector<Tensor>& views, const std::vector<std::uint8_t>& mask,
                                    const Imputer& imp) {
  std::vector<Tensor> out = views;
  const std::size_t v_count = views.size();
  for (std::size_t v = 0; v < v_count; ++v) {
    for (std::size_t i = 0; i < out[v].rows(); ++i) {
      if (mask[i * v_count + v]) continue;
      for (std::size_t c = 0; c < out[v].cols(); ++c) {
        out[v](i, c) = imp.kind == ImputerKind::mean ? imp.view_means[v][c] : 0.0;
      }
    }
  }
  return out;
}

inline std::size_t argmax_row(const Tensor& t, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < t.cols(); ++c)
    if (t(r, c) > t(r, best)) best = c;
  return best;
}

struct StepOutput {
  Var total;
  loss::LossBundle bundle;
  Var fused;
};

/// Accuracy losses on every view (optional) and on the fused evidence.
inline void add_accuracy_losses(const std::vector<Var>& evidence, const Var& fused, const Tensor& y,
                                double lambda, const TrainConfig& cfg, Var& total, loss::LossBundle& b) {
  auto add_one = [&](const Var& e) {
    const auto terms = loss::accuracy_terms(loss::alpha_from_evidence(e), y, lambda);
    b.ace += terms.ace.value()[0];
    b.kl += terms.kl.value()[0];
    total = total.valid() ? ad::add(total, terms.total) : terms.total;
  };
  if (cfg.per_view_acc)
    for (const auto& e : evidence) add_one(e);
  add_one(fused);
  b.acc = b.ace + lambda * b.kl;
}

/// One training step of the given phase, or of a fill baseline when `phase` is empty.
inline StepOutput forward_step(Tape& t, const ModelParams& p, const Batch& batch, std::optional<Phase> phase,
                               const Imputer& fill, const TrainConfig& cfg, double lambda, Rng& rng) {
  const auto& mc = p.config();
  const std::size_t n = batch.labels.size();
  const std::size_t v_count = mc.views();
  const bool sequential = cfg.fusion == FusionMode::sequential;
  StepOutput out;

  if (!phase || *phase == Phase::feature) {
    std::vector<Var> x;
    if (!phase) {
      for (auto& view : fill_raw(batch.views, batch.mask, fill)) x.push_back(t.constant(std::move(view)));
    } else {
      for (const auto& view : batch.views) x.push_back(t.constant(view));
    }
    auto z = extract_features(t, p, x);
    if (phase) {
      // Missing feature slots are replaced by fresh standard-normal noise.
      const Tensor m = mask_tensor(batch.mask, v_count);
      std::vector<Var> noise;
      for (std::size_t v = 0; v < v_count; ++v) noise.push_back(t.constant(standard_normal_tensor(n, mc.feature_dim, rng)));
      z = reconstruct_features(t, z, noise, m);
    }
    const auto e = evidence_heads(t, p, z);
    out.fused = fuse_evidence(e, sequential);
    add_accuracy_losses(e, out.fused, batch.onehot, lambda, cfg, out.total, out.bundle);
    out.bundle.total = out.bundle.acc;
    return out;
  }

  std::vector<Var> x;
  for (const auto& view : batch.views) x.push_back(t.constant(view));
  const auto z = extract_features(t, p, x);
  const auto aug = augment_mask(batch.mask, v_count, cfg.eta, rng);
  const Tensor m = mask_tensor(aug, v_count);
  const Var z_tilde = mask_and_concat(t, z, m);
  const Tensor eps = standard_normal_tensor(n, mc.latent_dim, rng);
  const auto sample = vae_forward(t, p, z_tilde, eps);
  const auto z_rc = reconstruct_features(t, z, sample.per_view, m);
  const auto e = evidence_heads(t, p, z_rc);
  out.fused = fuse_evidence(e, sequential);
  add_accuracy_losses(e, out.fused, batch.onehot, lambda, cfg, out.total, out.bundle);

  if (cfg.conflict_loss && v_count >= 2) {
    const Var con = loss::conflict(e);
    out.bundle.con = con.value()[0];
    out.total = ad::add(out.total, con);
  }
  if (*phase == Phase::joint || cfg.vae_recon_in_v) {
    // Ground truth exists only for views observed in the source data; the target is
    // held fixed so the reconstruction term cannot shrink the feature space.
    Tensor target(n, v_count * mc.feature_dim);
    Tensor observed(n, v_count * mc.feature_dim);
    for (std::size_t v = 0; v < v_count; ++v) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!batch.mask[i * v_count + v]) continue;
        for (std::size_t c = 0; c < mc.feature_dim; ++c) {
          target(i, v * mc.feature_dim + c) = z[v].value()(i, c);
          observed(i, v * mc.feature_dim + c) = 1.0;
        }
      }
    }
    const auto elbo = loss::elbo(sample.encoding.mu, sample.encoding.logvar, target, sample.decoded, observed);
    out.bundle.elbo = elbo.total.value()[0];
    out.total = ad::add(out.total, elbo.total);
  }
  out.bundle.total = out.bundle.acc + out.bundle.con + out.bundle.elbo;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Inference

/// Predicts a block of samples. Row i uses seed `row_seeds[i]`; imputation sample s of that
/// row draws its noise from `row_seeds[i] + s`, so an n-sample prediction is the average of
/// n single-sample predictions with consecutive seeds. Complete rows skip imputation.
inline std::vector<Prediction> predict_rows(const std::vector<Tensor>& views, const std::vector<std::uint8_t>& mask,
                                            const std::vector<std::uint64_t>& row_seeds, const ModelParams& p,
                                            const TrainConfig& cfg, const Imputer& imp) {
  const auto& mc = p.config();
  const std::size_t v_count = mc.views();
  const std::size_t k = mc.classes;
  if (views.size() != v_count) throw ContractError("predict: wrong number of views");
  const std::size_t n = views.front().rows();
  if (mask.size() != n * v_count || row_seeds.size() != n) throw ContractError("predict: mask/seed size mismatch");

  std::vector<bool> complete(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t obs = 0;
    for (std::size_t v = 0; v < v_count; ++v) obs += mask[i * v_count + v];
    if (obs == 0) throw ContractError("predict: sample has no observed view");
    complete[i] = obs == v_count;
  }

  // view_e[v] is n x K, accumulated over imputation samples.
  std::vector<Tensor> view_e(v_count, Tensor(n, k, 0.0));
  const Tensor m = detail::mask_tensor(mask, v_count);
  const bool any_missing = std::find(complete.begin(), complete.end(), false) != complete.end();

  Tape t(false);
  std::vector<Var> x;
  const bool raw_fill = imp.kind == ImputerKind::zero || imp.kind == ImputerKind::mean;
  if (raw_fill) {
    for (auto& view : detail::fill_raw(views, mask, imp)) x.push_back(t.constant(std::move(view)));
  } else {
    for (const auto& view : views) x.push_back(t.constant(view));
  }
  const auto z = extract_features(t, p, x);
  {
    const auto e = evidence_heads(t, p, z);
    for (std::size_t v = 0; v < v_count; ++v) view_e[v] = e[v].value();
  }

  if (any_missing && !raw_fill) {
    std::vector<Tensor> acc(v_count, Tensor(n, k, 0.0));
    const std::size_t samples = cfg.imputation_samples;
    Var z_tilde;
    std::optional<ImputationVAE::Encoding> enc;
    Var sigma;
    if (imp.kind == ImputerKind::vae) {
      z_tilde = mask_and_concat(t, z, m);
      enc = p.vae().encode(t, z_tilde);
      sigma = ad::exp(ad::scale(enc->logvar, 0.5));
    }
    for (std::size_t s = 0; s < samples; ++s) {
      std::vector<Var> fill;
      if (imp.kind == ImputerKind::vae) {
        Tensor eps(n, mc.latent_dim);
        for (std::size_t i = 0; i < n; ++i) {
          if (complete[i]) continue;
          Rng rng = make_rng(row_seeds[i] + s);
          for (std::size_t c = 0; c < mc.latent_dim; ++c) eps(i, c) = standard_normal(rng);
        }
        const Var dec = p.vae().decode(t, ad::add(enc->mu, ad::mul(sigma, t.constant(std::move(eps)))));
        for (std::size_t v = 0; v < v_count; ++v) fill.push_back(ad::slice_cols(dec, v * mc.feature_dim, mc.feature_dim));
      } else {
        std::vector<Tensor> noise(v_count, Tensor(n, mc.feature_dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
          if (complete[i]) continue;
          Rng rng = make_rng(row_seeds[i] + s);
          for (std::size_t v = 0; v < v_count; ++v)
            for (std::size_t c = 0; c < mc.feature_dim; ++c) noise[v](i, c) = standard_normal(rng);
        }
        for (auto& nz : noise) fill.push_back(t.constant(std::move(nz)));
      }
      const auto z_rc = reconstruct_features(t, z, fill, m);
      const auto e = evidence_heads(t, p, z_rc);
      for (std::size_t v = 0; v < v_count; ++v) acc[v].mat() += e[v].value().mat();
    }
    const double inv = 1.0 / static_cast<double>(samples);
    for (std::size_t i = 0; i < n; ++i) {
      if (complete[i]) continue;
      for (std::size_t v = 0; v < v_count; ++v)
        for (std::size_t c = 0; c < k; ++c) view_e[v](i, c) = acc[v](i, c) * inv;
    }
  }

  std::vector<Prediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Prediction& pr = out[i];
    std::vector<Opinion> ops;
    for (std::size_t v = 0; v < v_count; ++v) {
      std::vector<double> e(view_e[v].row_span(i).begin(), view_e[v].row_span(i).end());
      ops.push_back(opinion_from_evidence(EvidenceVector{e}));
      pr.view_evidence.push_back(std::move(e));
    }
    pr.fused = fuse_views(ops, cfg.fusion);
    pr.fused_evidence = evidence_from_opinion(pr.fused).evidence;
    pr.probability = project_probability(pr.fused);
    pr.predicted = static_cast<std::size_t>(
        std::max_element(pr.probability.begin(), pr.probability.end()) - pr.probability.begin());
    pr.uncertainty = pr.fused.uncertainty;
    if (v_count >= 2) pr.conflict = conflict_matrix(ops);
  }
  return out;
}

/// Single-sample prediction; `x[v]` is the raw feature vector of view v (ignored when
/// mask[v] == 0).
inline Prediction predict(const std::vector<std::vector<double>>& x, const std::vector<std::uint8_t>& mask,
                          const ModelParams& p, const TrainConfig& cfg, std::uint64_t seed,
                          const Imputer& imp = {}) {
  std::vector<Tensor> views;
  for (const auto& row : x) views.push_back(Tensor::row(row));
  return predict_rows(views, mask, {seed}, p, cfg, imp).front();
}

inline EvalMetrics summarize(const std::vector<Prediction>& preds, const std::vector<std::size_t>& labels,
                             std::size_t classes) {
  EvalMetrics m;
  m.samples = preds.size();
  if (preds.empty()) throw ContractError("evaluate: empty test set");
  std::vector<std::size_t> hit(classes, 0), seen(classes, 0);
  std::vector<double> u;
  std::size_t correct = 0;
  const std::size_t v_count = preds.front().view_evidence.size();
  if (v_count >= 2) m.mean_conflict.assign(v_count, std::vector<double>(v_count, 0.0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool ok = preds[i].predicted == labels[i];
    correct += ok;
    ++seen[labels[i]];
    hit[labels[i]] += ok;
    u.push_back(preds[i].uncertainty);
    m.mean_uncertainty += preds[i].uncertainty;
    for (std::size_t a = 0; a < m.mean_conflict.size(); ++a)
      for (std::size_t b = 0; b < v_count; ++b) m.mean_conflict[a][b] += preds[i].conflict[a][b];
  }
  const double n = static_cast<double>(preds.size());
  m.accuracy = static_cast<double>(correct) / n;
  m.mean_uncertainty /= n;
  std::sort(u.begin(), u.end());
  m.median_uncertainty = u.size() % 2 ? u[u.size() / 2] : 0.5 * (u[u.size() / 2 - 1] + u[u.size() / 2]);
  for (std::size_t c = 0; c < classes; ++c)
    m.per_class_accuracy.push_back(seen[c] ? static_cast<double>(hit[c]) / static_cast<double>(seen[c]) : 0.0);
  double js = 0.0;
  for (std::size_t a = 0; a < m.mean_conflict.size(); ++a) {
    for (std::size_t b = 0; b < v_count; ++b) {
      m.mean_conflict[a][b] /= n;
      if (a != b) js += 1.0 - m.mean_conflict[a][b];
    }
  }
  if (v_count >= 2) m.mean_pairwise_js = js / static_cast<double>(v_count * (v_count - 1));
  return m;
}

/// Accuracy, uncertainty and conflict statistics on a labelled split. Noise for row r is
/// seeded from (config seed, source row id), so results do not depend on block size.
inline Evaluation evaluate(const MultiViewDataset& ds, const ModelParams& p, const TrainConfig& cfg,
                           const Imputer& imp = {}) {
  if (ds.size() == 0) throw ContractError("evaluate: empty test set");
  constexpr std::size_t kBlock = 256;
  const std::uint64_t base = derive_seed(cfg.seed, "evaluate");
  Evaluation ev;
  for (std::size_t start = 0; start < ds.size(); start += kBlock) {
    const std::size_t stop = std::min(ds.size(), start + kBlock);
    std::vector<std::size_t> rows;
    std::vector<std::uint64_t> seeds;
    for (std::size_t r = start; r < stop; ++r) {
      rows.push_back(r);
      seeds.push_back(derive_seed(base, static_cast<std::uint64_t>(ds.source_rows[r])));
    }
    const auto batch = detail::gather(ds, rows);
    auto preds = predict_rows(batch.views, batch.mask, seeds, p, cfg, imp);
    for (auto& pr : preds) ev.predictions.push_back(std::move(pr));
    for (auto r : rows) {
      ev.labels.push_back(ds.labels[r]);
      ev.rows.push_back(ds.source_rows[r]);
    }
  }
  ev.metrics = summarize(ev.predictions, ev.labels, ds.classes);
  return ev;
}

// ---------------------------------------------------------------------------------------
// Training

namespace detail {

inline void freeze_for(ModelParams& p, std::optional<Phase> phase) {
  p.set_frozen(ParamGroup::features, phase == Phase::vae);
  p.set_frozen(ParamGroup::evidence, false);
  p.set_frozen(ParamGroup::vae, !phase || phase == Phase::feature);
}

inline Imputer inference_imputer(std::optional<Phase> phase, const Imputer& fill) {
  if (!phase) return fill;
  return Imputer{*phase == Phase::feature ? ImputerKind::noise : ImputerKind::vae, {}};
}

/// Shared epoch loop for the three phases (`phase` set) and fill baselines (`phase` empty).
inline PhaseResult run_training(const MultiViewDataset& train, ModelParams params, std::optional<Phase> phase,
                                const Imputer& fill, std::size_t epochs, double lr, const TrainConfig& cfg,
                                const MultiViewDataset* test, const std::string& name) {
  cfg.validate();
  train.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  freeze_for(params, phase);
  PhaseResult result{std::move(params), {}};
  result.report.phase = name;
  const Imputer eval_imp = inference_imputer(phase, fill);
  if (test != nullptr && epochs > 0) result.report.start = evaluate(*test, result.params, cfg, eval_imp).metrics;

  Adam opt(result.params, lr);
  Rng rng = make_rng(derive_seed(cfg.seed, "train/" + name));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lambda = cfg.lambda(epoch);
    shuffle(order.begin(), order.end(), rng);
    loss::LossBundle sum;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch = gather(train, std::span<const std::size_t>(order).subspan(start, stop - start));
      Tape tape;
      const auto step = forward_step(tape, result.params, batch, phase, fill, cfg, lambda, rng);
      const auto grads = tape.backward(step.total);
      opt.step(result.params, grads);
      sum += step.bundle.scaled(static_cast<double>(stop - start));
      for (std::size_t i = 0; i < batch.labels.size(); ++i)
        correct += argmax_row(step.fused.value(), i) == batch.labels[i];
    }
    const double n = static_cast<double>(train.size());
    EpochRecord rec;
    rec.phase = name;
    rec.epoch = epoch;
    rec.lambda = lambda;
    rec.losses = sum.scaled(1.0 / n);
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.report.epochs.push_back(rec);
  }
  if (test != nullptr) result.report.end = evaluate(*test, result.params, cfg, eval_imp).metrics;
  result.report.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

}  // namespace detail

/// Feature phase: extractors and evidence heads learn from noise-filled features; the VAE is frozen.
inline PhaseResult train_umae_f(const MultiViewDataset& train, const TrainConfig& cfg,
                                const MultiViewDataset* test = nullptr) {
  auto params = ModelParams::init(cfg.model_for(train), cfg.seed);
  return detail::run_training(train, std::move(params), Phase::feature, {}, cfg.epochs[0], cfg.learning_rate[0],
                              cfg, test, "F");
}

/// VAE phase: extractors frozen; VAE and evidence heads learn under accuracy, consistency
/// and (by default) reconstruction losses.
inline PhaseResult train_umae_v(const MultiViewDataset& train, ModelParams params, const TrainConfig& cfg,
                                const MultiViewDataset* test = nullptr) {
  return detail::run_training(train, std::move(params), Phase::vae, {}, cfg.epochs[1], cfg.learning_rate[1], cfg,
                              test, "V");
}

/// Joint phase: every group trainable under accuracy + consistency + negative ELBO.
inline PhaseResult train_umae_j(const MultiViewDataset& train, ModelParams params, const TrainConfig& cfg,
                                const MultiViewDataset* test = nullptr) {
  return detail::run_training(train, std::move(params), Phase::joint, {}, cfg.epochs[2], cfg.learning_rate[2], cfg,
                              test, "J");
}

/// Zero- or mean-imputation baseline through the same extractors and heads, trained with
/// the accuracy loss only.
inline PhaseResult train_fill_baseline(const MultiViewDataset& train, ImputerKind kind, const TrainConfig& cfg,
                                       const MultiViewDataset* test = nullptr) {
  if (kind != ImputerKind::zero && kind != ImputerKind::mean) {
    throw ContractError("train_fill_baseline: only zero and mean fills are baselines");
  }
  Imputer fill{kind, kind == ImputerKind::mean ? observed_view_means(train) : std::vector<std::vector<double>>{}};
  const std::size_t epochs =
      cfg.baseline_epochs > 0 ? cfg.baseline_epochs : cfg.epochs[0] + cfg.epochs[1] + cfg.epochs[2];
  auto params = ModelParams::init(cfg.model_for(train), cfg.seed);
  return detail::run_training(train, std::move(params), std::nullopt, fill, epochs, cfg.learning_rate[0], cfg, test,
                              kind == ImputerKind::zero ? "ZIMP" : "MIMP");
}

// ---------------------------------------------------------------------------------------
// Serialisation

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"phase", r.phase},   {"epoch", r.epoch},
                     {"lambda", r.lambda}, {"losses", r.losses},
                     {"train_accuracy", r.train_accuracy}, {"seconds", r.seconds}};
}

inline void to_json(nlohmann::json& j, const EvalMetrics& m) {
  j = nlohmann::json{{"samples", m.samples},
                     {"accuracy", m.accuracy},
                     {"mean_uncertainty", m.mean_uncertainty},
                     {"median_uncertainty", m.median_uncertainty},
                     {"per_class_accuracy", m.per_class_accuracy},
                     {"mean_conflict", m.mean_conflict},
                     {"mean_pairwise_js", m.mean_pairwise_js}};
}

inline void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{{"fused", p.fused},
                     {"probability", p.probability},
                     {"predicted", p.predicted},
                     {"uncertainty", p.uncertainty},
                     {"fused_evidence", p.fused_evidence},
                     {"view_evidence", p.view_evidence}};
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"lambda_horizon", c.lambda_horizon},
                     {"eta", c.eta},
                     {"imputation_samples", c.imputation_samples},
                     {"fusion", std::string(to_string(c.fusion))},
                     {"per_view_acc", c.per_view_acc},
                     {"conflict_loss", c.conflict_loss},
                     {"vae_recon_in_v", c.vae_recon_in_v},
                     {"baseline_epochs", c.baseline_epochs},
                     {"seed", c.seed}};
}

}  // namespace evfuse

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evfuse/error.hpp"
#include "evfuse/numerics/autodiff.hpp"
#include "evfuse/rng.hpp"

namespace evfuse {

using ad::Parameter;
using ad::Tape;
using ad::Var;

struct ModelConfig {
  std::vector<std::size_t> view_dims;
  std::size_t classes = 0;
  std::size_t feature_dim = 128;
  std::size_t latent_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t extractor_depth = 1;  ///< affine layers per feature extractor
  double leaky_slope = 0.01;
  double logvar_min = -20.0;
  double logvar_max = 5.0;

  std::size_t views() const { return view_dims.size(); }

  void validate() const {
    if (view_dims.empty()) throw ContractError("ModelConfig: no views");
    for (auto d : view_dims)
      if (d == 0) throw ContractError("ModelConfig: zero view dimension");
    if (classes < 2) throw ContractError("ModelConfig: at least two classes are required");
    if (feature_dim == 0 || latent_dim == 0 || hidden_dim == 0 || extractor_depth == 0) {
      throw ContractError("ModelConfig: layer sizes must be positive");
    }
    if (!(logvar_min < logvar_max)) throw ContractError("ModelConfig: empty log-variance range");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"view_dims", c.view_dims},     {"classes", c.classes},
                     {"feature_dim", c.feature_dim}, {"latent_dim", c.latent_dim},
                     {"hidden_dim", c.hidden_dim},   {"extractor_depth", c.extractor_depth},
                     {"leaky_slope", c.leaky_slope}, {"logvar_min", c.logvar_min},
                     {"logvar_max", c.logvar_max}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("view_dims").get_to(c.view_dims);
  j.at("classes").get_to(c.classes);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.extractor_depth = j.value("extractor_depth", c.extractor_depth);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.logvar_min = j.value("logvar_min", c.logvar_min);
  c.logvar_max = j.value("logvar_max", c.logvar_max);
}

/// Affine map x W + b with W stored (in x out).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight_(name + ".weight", Tensor(in, out)), bias_(name + ".bias", Tensor(1, out)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : weight_.value().values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    for (auto& v : bias_.value().values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  }

  Var forward(Tape& t, const Var& x) const {
    if (x.cols() != weight_.value().rows()) {
      throw ContractError(weight_.name() + ": input has " + std::to_string(x.cols()) +
                          " columns, expected " + std::to_string(weight_.value().rows()));
    }
    return ad::add(ad::matmul(x, t.parameter(weight_)), t.parameter(bias_));
  }

  std::size_t in() const { return weight_.value().rows(); }
  std::size_t out() const { return weight_.value().cols(); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

/// Per-view projection into the shared feature space: affine layers with leaky rectifiers.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(std::size_t view, const ModelConfig& c, Rng& rng) : slope_(c.leaky_slope) {
    std::size_t in = c.view_dims[view];
    for (std::size_t l = 0; l < c.extractor_depth; ++l) {
      layers_.emplace_back("extractor." + std::to_string(view) + "." + std::to_string(l), in,
                           c.feature_dim, rng);
      in = c.feature_dim;
    }
  }

  Var forward(Tape& t, Var x) const {
    for (auto& layer : layers_) x = ad::leaky_relu(layer.forward(t, x), slope_);
    return x;
  }

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  double slope_ = 0.01;
};

/// Maps reconstructed features to strictly positive class evidence (softplus activation).
class EvidenceHead {
 public:
  EvidenceHead() = default;
  EvidenceHead(std::size_t view, const ModelConfig& c, Rng& rng)
      : layer_("head." + std::to_string(view), c.feature_dim, c.classes, rng) {}

  Var forward(Tape& t, const Var& z) const { return ad::softplus(layer_.forward(t, z)); }

  Linear& layer() { return layer_; }
  const Linear& layer() const { return layer_; }

 private:
  Linear layer_;
};

/// Shared VAE over the concatenated masked features and the mask.
class ImputationVAE {
 public:
  struct Encoding {
    Var mu;
    Var logvar;
  };

  ImputationVAE() = default;
  ImputationVAE(const ModelConfig& c, Rng& rng)
      : enc_hidden_("vae.encoder.0", c.views() * c.feature_dim + c.views(), c.hidden_dim, rng),
        enc_out_("vae.encoder.1", c.hidden_dim, 2 * c.latent_dim, rng),
        dec_hidden_("vae.decoder.0", c.latent_dim, c.hidden_dim, rng),
        dec_out_("vae.decoder.1", c.hidden_dim, c.views() * c.feature_dim, rng),
        slope_(c.leaky_slope),
        logvar_min_(c.logvar_min),
        logvar_max_(c.logvar_max) {}

  Encoding encode(Tape& t, const Var& z_tilde) const {
    const Var h = ad::leaky_relu(enc_hidden_.forward(t, z_tilde), slope_);
    const Var out = enc_out_.forward(t, h);
    const std::size_t d = out.cols() / 2;
    return {ad::slice_cols(out, 0, d), ad::clamp(ad::slice_cols(out, d, d), logvar_min_, logvar_max_)};
  }

  Var decode(Tape& t, const Var& latent) const {
    return dec_out_.forward(t, ad::leaky_relu(dec_hidden_.forward(t, latent), slope_));
  }

  std::size_t latent_dim() const { return enc_out_.out() / 2; }

  std::array<Linear*, 4> layers() { return {&enc_hidden_, &enc_out_, &dec_hidden_, &dec_out_}; }
  std::array<const Linear*, 4> layers() const {
    return {&enc_hidden_, &enc_out_, &dec_hidden_, &dec_out_};
  }

 private:
  Linear enc_hidden_;
  Linear enc_out_;
  Linear dec_hidden_;
  Linear dec_out_;
  double slope_ = 0.01;
  double logvar_min_ = -20.0;
  double logvar_max_ = 5.0;
};

/// theta_c, theta_e, theta_v.
enum class ParamGroup : std::size_t { features = 0, evidence = 1, vae = 2 };

inline constexpr std::array<ParamGroup, 3> kAllGroups{ParamGroup::features, ParamGroup::evidence,
                                                      ParamGroup::vae};

inline const char* group_tag(ParamGroup g) {
  switch (g) {
    case ParamGroup::features: return "theta_c";
    case ParamGroup::evidence: return "theta_e";
    case ParamGroup::vae: return "theta_v";
  }
  return "?";
}

/// All trainable state, partitioned into three disjoint groups with per-group freeze flags.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config_ = config;
    Rng rng = make_rng(derive_seed(seed, "init"));
    for (std::size_t v = 0; v < config.views(); ++v) p.extractors_.emplace_back(v, config, rng);
    for (std::size_t v = 0; v < config.views(); ++v) p.heads_.emplace_back(v, config, rng);
    p.vae_ = ImputationVAE(config, rng);
    return p;
  }

  const ModelConfig& config() const { return config_; }
  std::vector<FeatureExtractor>& extractors() { return extractors_; }
  std::vector<EvidenceHead>& heads() { return heads_; }
  ImputationVAE& vae() { return vae_; }
  const std::vector<FeatureExtractor>& extractors() const { return extractors_; }
  const std::vector<EvidenceHead>& heads() const { return heads_; }
  const ImputationVAE& vae() const { return vae_; }

  std::vector<Parameter*> group(ParamGroup g) {
    std::vector<Parameter*> out;
    auto push = [&out](Linear& l) {
      out.push_back(&l.weight());
      out.push_back(&l.bias());
    };
    switch (g) {
      case ParamGroup::features:
        for (auto& e : extractors_)
          for (auto& l : e.layers()) push(l);
        break;
      case ParamGroup::evidence:
        for (auto& h : heads_) push(h.layer());
        break;
      case ParamGroup::vae:
        for (auto* l : vae_.layers()) push(*l);
        break;
    }
    return out;
  }
  std::vector<const Parameter*> group(ParamGroup g) const {
    auto mut = const_cast<ModelParams*>(this)->group(g);
    return {mut.begin(), mut.end()};
  }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    for (auto g : kAllGroups) {
      auto part = group(g);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

  bool frozen(ParamGroup g) const { return frozen_[static_cast<std::size_t>(g)]; }
  void set_frozen(ParamGroup g, bool f) { frozen_[static_cast<std::size_t>(g)] = f; }

  /// Bitwise equality of one group's values.
  bool group_equal(const ModelParams& other, ParamGroup g) const {
    const auto a = group(g);
    const auto b = other.group(g);
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a[i]->value() == b[i]->value())) return false;
    return true;
  }

 private:
  ModelConfig config_;
  std::vector<FeatureExtractor> extractors_;
  std::vector<EvidenceHead> heads_;
  ImputationVAE vae_;
  std::array<bool, 3> frozen_{false, false, false};
};

// ---------------------------------------------------------------------------------------
// Forward operations

/// z^v = f_c^v(x^v) for every view.
inline std::vector<Var> extract_features(Tape& t, const ModelParams& p, const std::vector<Var>& x) {
  if (x.size() != p.config().views()) {
    throw ContractError("extract_features: got " + std::to_string(x.size()) + " views, model has " +
                        std::to_string(p.config().views()));
  }
  std::vector<Var> z;
  z.reserve(x.size());
  for (std::size_t v = 0; v < x.size(); ++v) {
    if (x[v].cols() != p.config().view_dims[v]) {
      throw ContractError("extract_features: view " + std::to_string(v) + " has dimension " +
                          std::to_string(x[v].cols()) + ", expected " +
                          std::to_string(p.config().view_dims[v]));
    }
    z.push_back(p.extractors()[v].forward(t, x[v]));
  }
  return z;
}

/// Column v of a (n x V) mask as an (n x 1) tensor.
inline Tensor mask_column(const Tensor& mask, std::size_t v) {
  Tensor col(mask.rows(), 1);
  for (std::size_t r = 0; r < mask.rows(); ++r) col(r, 0) = mask(r, v);
  return col;
}

/// [m^1 z^1, ..., m^V z^V, m^1, ..., m^V].
inline Var mask_and_concat(Tape& t, const std::vector<Var>& z, const Tensor& mask) {
  if (mask.cols() != z.size()) throw ContractError("mask_and_concat: mask width != number of views");
  std::vector<Var> parts;
  parts.reserve(z.size() + 1);
  for (std::size_t v = 0; v < z.size(); ++v) {
    if (z[v].rows() != mask.rows()) throw ContractError("mask_and_concat: batch sizes differ");
    parts.push_back(ad::mul(z[v], t.constant(mask_column(mask, v))));
  }
  parts.push_back(t.constant(mask));
  return ad::concat_cols(parts);
}

struct VaeSample {
  ImputationVAE::Encoding encoding;
  Var decoded;                  ///< n x (V * d_f)
  std::vector<Var> per_view;    ///< V blocks of n x d_f
};

/// One reparameterised pass: latent = mu + exp(logvar / 2) * eps.
inline VaeSample vae_forward(Tape& t, const ModelParams& p, const Var& z_tilde, const Tensor& eps) {
  const auto& c = p.config();
  if (z_tilde.cols() != c.views() * c.feature_dim + c.views()) {
    throw ContractError("vae_forward: input width " + std::to_string(z_tilde.cols()) +
                        " != V * d_f + V");
  }
  VaeSample s;
  s.encoding = p.vae().encode(t, z_tilde);
  if (eps.rows() != z_tilde.rows() || eps.cols() != c.latent_dim) {
    throw ContractError("vae_forward: noise shape " + shape_string(eps) + " mismatch");
  }
  const Var sigma = ad::exp(ad::scale(s.encoding.logvar, 0.5));
  const Var latent = ad::add(s.encoding.mu, ad::mul(sigma, t.constant(eps)));
  s.decoded = p.vae().decode(t, latent);
  for (std::size_t v = 0; v < c.views(); ++v) {
    s.per_view.push_back(ad::slice_cols(s.decoded, v * c.feature_dim, c.feature_dim));
  }
  return s;
}

inline Tensor standard_normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = standard_normal(rng);
  return t;
}

/// Draws `n_samples` imputations from the VAE for a batch of VAE inputs. Result indexed
/// [sample][view], each n x d_f. Deterministic in `seed`.
inline std::vector<std::vector<Tensor>> vae_impute(const ModelParams& p, const Tensor& z_tilde,
                                                   std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw ContractError("vae_impute: n_samples must be positive");
  Rng rng = make_rng(seed);
  std::vector<std::vector<Tensor>> out;
  Tape t(false);
  const Var input = t.constant(z_tilde);
  const auto enc = p.vae().encode(t, input);
  const Var sigma = ad::exp(ad::scale(enc.logvar, 0.5));
  const auto& c = p.config();
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Var eps = t.constant(standard_normal_tensor(z_tilde.rows(), c.latent_dim, rng));
    const Var dec = p.vae().decode(t, ad::add(enc.mu, ad::mul(sigma, eps)));
    std::vector<Tensor> views;
    for (std::size_t v = 0; v < c.views(); ++v) {
      Tensor block(z_tilde.rows(), c.feature_dim);
      block.mat() = dec.value().mat().middleCols(v * c.feature_dim, c.feature_dim);
      views.push_back(std::move(block));
    }
    out.push_back(std::move(views));
  }
  return out;
}

/// z_rc^v = m^v z^v + (1 - m^v) zhat^v.
inline std::vector<Var> reconstruct_features(Tape& t, const std::vector<Var>& z,
                                             const std::vector<Var>& z_hat, const Tensor& mask) {
  if (z.size() != z_hat.size() || mask.cols() != z.size()) {
    throw ContractError("reconstruct_features: view counts differ");
  }
  std::vector<Var> out;
  out.reserve(z.size());
  for (std::size_t v = 0; v < z.size(); ++v) {
    if (!z[v].value().same_shape(z_hat[v].value())) {
      throw ContractError("reconstruct_features: feature shapes differ in view " + std::to_string(v));
    }
    const Tensor m = mask_column(mask, v);
    Tensor inv(m.rows(), 1);
    for (std::size_t r = 0; r < m.rows(); ++r) inv(r, 0) = 1.0 - m(r, 0);
    out.push_back(ad::add(ad::mul(z[v], t.constant(m)), ad::mul(z_hat[v], t.constant(inv))));
  }
  return out;
}

/// e^v = softplus(affine(z_rc^v)) for every view.
inline std::vector<Var> evidence_heads(Tape& t, const ModelParams& p, const std::vector<Var>& z_rc) {
  if (z_rc.size() != p.heads().size()) throw ContractError("evidence_heads: view count mismatch");
  std::vector<Var> e;
  e.reserve(z_rc.size());
  for (std::size_t v = 0; v < z_rc.size(); ++v) e.push_back(p.heads()[v].forward(t, z_rc[v]));
  return e;
}

/// Evidence fusion on graph nodes: mean of view evidences (balanced) or the pairwise
/// left fold (sequential).
inline Var fuse_evidence(const std::vector<Var>& e, bool sequential) {
  if (e.empty()) throw ContractError("fuse_evidence: no views");
  if (sequential) {
    Var acc = e.front();
    for (std::size_t v = 1; v < e.size(); ++v) acc = ad::scale(ad::add(acc, e[v]), 0.5);
    return acc;
  }
  Var acc = e.front();
  for (std::size_t v = 1; v < e.size(); ++v) acc = ad::add(acc, e[v]);
  return ad::scale(acc, 1.0 / static_cast<double>(e.size()));
}

// ---------------------------------------------------------------------------------------
// Optimisation

/// Adaptive moment estimation over every parameter; frozen groups are skipped entirely.
class Adam {
 public:
  Adam(ModelParams& p, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* param : p.all()) {
      m_.emplace_back(param->value().rows(), param->value().cols(), 0.0);
      v_.emplace_back(param->value().rows(), param->value().cols(), 0.0);
    }
  }

  void step(ModelParams& p, const ad::Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t slot = 0;
    for (auto g : kAllGroups) {
      auto params = p.group(g);
      if (p.frozen(g)) {
        slot += params.size();
        continue;
      }
      for (auto* param : params) {
        const Tensor* grad = grads.find(*param);
        auto& m = m_[slot];
        auto& v = v_[slot];
        ++slot;
        if (grad == nullptr) continue;
        auto& w = param->value();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = (*grad)[i];
          m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
          v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
          w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// ---------------------------------------------------------------------------------------
// Checkpoints
//
// JSON document:
//   { "format": "evfuse-checkpoint", "version": 1, "config_hash": "<16 hex>",
//     "model": { ModelConfig },
//     "groups": { "theta_c": [ {"name", "shape": [r, c], "values": [...]}, ... ],
//                 "theta_e": [...], "theta_v": [...] } }
// Values are written with shortest round-trip formatting, so a load restores every
// parameter bit for bit.

inline nlohmann::json checkpoint_json(const ModelParams& p, const std::string& config_hash) {
  nlohmann::json groups = nlohmann::json::object();
  for (auto g : kAllGroups) {
    auto arr = nlohmann::json::array();
    for (const auto* param : p.group(g)) {
      arr.push_back({{"name", param->name()},
                     {"shape", {param->value().rows(), param->value().cols()}},
                     {"values", std::vector<double>(param->value().values().begin(),
                                                    param->value().values().end())}});
    }
    groups[group_tag(g)] = std::move(arr);
  }
  return {{"format", "evfuse-checkpoint"},
          {"version", 1},
          {"config_hash", config_hash},
          {"model", p.config()},
          {"groups", std::move(groups)}};
}

inline void save_checkpoint(const std::string& path, const ModelParams& p, const std::string& config_hash) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot write checkpoint " + path);
  os << checkpoint_json(p, config_hash).dump() << '\n';
}

struct Checkpoint {
  ModelParams params;
  std::string config_hash;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "evfuse-checkpoint" || j.at("version") != 1) {
      throw LoadError("checkpoint: unsupported format or version");
    }
    Checkpoint cp;
    cp.config_hash = j.at("config_hash").get<std::string>();
    cp.params = ModelParams::init(j.at("model").get<ModelConfig>(), 0);
    for (auto g : kAllGroups) {
      const auto& arr = j.at("groups").at(group_tag(g));
      auto params = cp.params.group(g);
      if (arr.size() != params.size()) {
        throw LoadError(std::string("checkpoint: group ") + group_tag(g) + " has " +
                        std::to_string(arr.size()) + " tensors, expected " + std::to_string(params.size()));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& rec = arr[i];
        if (rec.at("name") != params[i]->name()) {
          throw LoadError("checkpoint: expected tensor " + params[i]->name());
        }
        const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
        auto values = rec.at("values").get<std::vector<double>>();
        Tensor t(shape, std::move(values));
        if (!t.same_shape(params[i]->value())) throw LoadError("checkpoint: shape mismatch for " + params[i]->name());
        params[i]->value() = std::move(t);
      }
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace evfuse

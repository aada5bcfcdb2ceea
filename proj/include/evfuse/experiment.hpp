#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evfuse/data.hpp"
#include "evfuse/error.hpp"
#include "evfuse/pipeline.hpp"

namespace evfuse {

struct SyntheticSpec {
  std::size_t samples = 2000;
  std::size_t views = 6;
  std::size_t classes = 10;
  std::size_t dim = 16;
  double separation = 2.0;
};

struct RunConfig {
  std::string dataset;  ///< directory with view_*.csv etc.; empty selects the synthetic generator
  SyntheticSpec synthetic;
  double conflict_fraction = 0.0;
  double eta = 0.0;  ///< missing rate applied to both splits
  double test_fraction = 0.2;
  bool baselines = false;
  std::string out = "run";  ///< output directory of the `train` command
  TrainConfig train;        ///< train.seed is the root seed of the whole run
};

struct ExperimentResult {
  std::array<PhaseResult, 3> phases;
  std::array<Evaluation, 3> evaluations;
  std::map<std::string, EvalMetrics> baselines;  ///< "ZIMP", "MIMP"
  std::vector<ConflictRecord> provenance;
  MultiViewDataset train;
  MultiViewDataset test;
};

inline MultiViewDataset load_run_dataset(const RunConfig& rc) {
  if (!rc.dataset.empty()) return load_dataset(rc.dataset);
  const auto& s = rc.synthetic;
  return synthesize_dataset(s.samples, s.views, s.classes, s.dim, s.separation, derive_seed(rc.train.seed, "data"));
}

/// Applies conflict injection, the train/test split and missing masks, in that order.
inline std::pair<MultiViewDataset, MultiViewDataset> prepare_splits(const MultiViewDataset& ds, const RunConfig& rc,
                                                                    std::vector<ConflictRecord>* provenance = nullptr) {
  const std::uint64_t seed = rc.train.seed;
  auto conflicted = inject_conflict(ds, rc.conflict_fraction, derive_seed(seed, "conflict"));
  if (provenance != nullptr) *provenance = conflicted.provenance;
  auto [train, test] = split(conflicted.dataset, rc.test_fraction, derive_seed(seed, "split"));
  if (rc.eta > 0.0) {
    if (missing_rate(ds.mask) > 0.0) {
      throw DomainError("missing-rate injection requires a dataset without missing entries");
    }
    train.mask = generate_missing_mask(train.size(), train.view_count(), rc.eta, derive_seed(seed, "mask/train"));
    test.mask = generate_missing_mask(test.size(), test.view_count(), rc.eta, derive_seed(seed, "mask/test"));
  }
  return {std::move(train), std::move(test)};
}

/// Full three-phase schedule with evaluation after every phase and optional fill baselines.
inline ExperimentResult run_experiment(const RunConfig& rc) {
  rc.train.validate();
  const auto ds = load_run_dataset(rc);
  ExperimentResult out;
  auto [train, test] = prepare_splits(ds, rc, &out.provenance);
  out.train = std::move(train);
  out.test = std::move(test);

  out.phases[0] = train_umae_f(out.train, rc.train, &out.test);
  out.phases[1] = train_umae_v(out.train, out.phases[0].params, rc.train, &out.test);
  out.phases[2] = train_umae_j(out.train, out.phases[1].params, rc.train, &out.test);
  out.evaluations[0] = evaluate(out.test, out.phases[0].params, rc.train, Imputer{ImputerKind::noise, {}});
  out.evaluations[1] = evaluate(out.test, out.phases[1].params, rc.train);
  out.evaluations[2] = evaluate(out.test, out.phases[2].params, rc.train);

  if (rc.baselines) {
    for (auto kind : {ImputerKind::zero, ImputerKind::mean}) {
      auto res = train_fill_baseline(out.train, kind, rc.train, &out.test);
      out.baselines[res.report.phase] = *res.report.end;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// JSON configuration

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"samples", s.samples}, {"views", s.views}, {"classes", s.classes},
                     {"dim", s.dim},         {"separation", s.separation}};
}

inline void to_json(nlohmann::json& j, const RunConfig& rc) {
  j = nlohmann::json{{"dataset", rc.dataset},
                     {"synthetic", rc.synthetic},
                     {"conflict_fraction", rc.conflict_fraction},
                     {"eta", rc.eta},
                     {"test_fraction", rc.test_fraction},
                     {"baselines", rc.baselines},
                     {"train", rc.train}};
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

/// Throws ConfigError for out-of-range settings.
inline void validate_run_config(const RunConfig& rc) {
  try {
    rc.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (!(rc.conflict_fraction >= 0.0 && rc.conflict_fraction <= 1.0))
    throw ConfigError("config.conflict_fraction must lie in [0, 1]");
  if (!(rc.eta >= 0.0 && rc.eta < 1.0)) throw ConfigError("config.eta must lie in [0, 1)");
  if (!(rc.test_fraction > 0.0 && rc.test_fraction < 1.0)) throw ConfigError("config.test_fraction must lie in (0, 1)");
  if (rc.out.empty()) throw ConfigError("config.out must not be empty");
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  RunConfig rc;
  detail::reject_unknown(
      j, {"dataset", "synthetic", "conflict_fraction", "eta", "test_fraction", "baselines", "out", "seed", "train"},
      "config");
  read_field(j, "dataset", rc.dataset, "config");
  read_field(j, "conflict_fraction", rc.conflict_fraction, "config");
  read_field(j, "eta", rc.eta, "config");
  read_field(j, "test_fraction", rc.test_fraction, "config");
  read_field(j, "baselines", rc.baselines, "config");
  read_field(j, "out", rc.out, "config");
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    detail::reject_unknown(s, {"samples", "views", "classes", "dim", "separation"}, "synthetic");
    read_field(s, "samples", rc.synthetic.samples, "synthetic");
    read_field(s, "views", rc.synthetic.views, "synthetic");
    read_field(s, "classes", rc.synthetic.classes, "synthetic");
    read_field(s, "dim", rc.synthetic.dim, "synthetic");
    read_field(s, "separation", rc.synthetic.separation, "synthetic");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    auto& tc = rc.train;
    detail::reject_unknown(t,
                           {"model", "epochs", "batch_size", "learning_rate", "lambda_horizon", "eta",
                            "imputation_samples", "fusion", "per_view_acc", "conflict_loss", "vae_recon_in_v",
                            "baseline_epochs", "seed"},
                           "train");
    if (t.contains("model")) {
      const auto& m = t.at("model");
      detail::reject_unknown(m,
                             {"view_dims", "classes", "feature_dim", "latent_dim", "hidden_dim", "extractor_depth",
                              "leaky_slope", "logvar_min", "logvar_max"},
                             "train.model");
      read_field(m, "view_dims", tc.model.view_dims, "train.model");
      read_field(m, "classes", tc.model.classes, "train.model");
      read_field(m, "feature_dim", tc.model.feature_dim, "train.model");
      read_field(m, "latent_dim", tc.model.latent_dim, "train.model");
      read_field(m, "hidden_dim", tc.model.hidden_dim, "train.model");
      read_field(m, "extractor_depth", tc.model.extractor_depth, "train.model");
      read_field(m, "leaky_slope", tc.model.leaky_slope, "train.model");
      read_field(m, "logvar_min", tc.model.logvar_min, "train.model");
      read_field(m, "logvar_max", tc.model.logvar_max, "train.model");
    }
    read_field(t, "epochs", tc.epochs, "train");
    read_field(t, "batch_size", tc.batch_size, "train");
    read_field(t, "learning_rate", tc.learning_rate, "train");
    read_field(t, "lambda_horizon", tc.lambda_horizon, "train");
    read_field(t, "eta", tc.eta, "train");
    read_field(t, "imputation_samples", tc.imputation_samples, "train");
    if (t.contains("fusion")) {
      try {
        tc.fusion = parse_fusion_mode(t.at("fusion").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("train.fusion: ") + e.what());
      }
    }
    read_field(t, "per_view_acc", tc.per_view_acc, "train");
    read_field(t, "conflict_loss", tc.conflict_loss, "train");
    read_field(t, "vae_recon_in_v", tc.vae_recon_in_v, "train");
    read_field(t, "baseline_epochs", tc.baseline_epochs, "train");
    read_field(t, "seed", tc.seed, "train");
  }
  read_field(j, "seed", rc.train.seed, "config");
  validate_run_config(rc);
  return rc;
}

/// Stable 64-bit FNV-1a hash of the canonical configuration dump, as 16 hex digits. The
/// output directory is not part of the dump.
inline std::string config_hash(const RunConfig& rc) {
  const std::string s = nlohmann::json(rc).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

}  // namespace evfuse

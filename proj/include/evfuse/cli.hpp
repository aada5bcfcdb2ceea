#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evfuse/data.hpp"
#include "evfuse/error.hpp"
#include "evfuse/experiment.hpp"
#include "evfuse/networks.hpp"
#include "evfuse/pipeline.hpp"
#include "evfuse/subjective_logic.hpp"

namespace evfuse::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kDomain = 4 };

struct TrainOptions {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<double> eta;
  std::optional<double> conflict_fraction;
  bool baselines = false;
};

struct CorruptOptions {
  std::string dataset;
  double eta = 0.0;
  double conflict_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct FuseOptions {
  std::string input;  ///< path, or "-" for standard input
  std::string mode = "balanced";
};

struct ExportOptions {
  std::string run;
  std::string what;
  std::optional<std::string> out;
};

struct SynthOptions {
  std::string out;
  SyntheticSpec spec{2000, 6, 10, 8, 3.0};
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_json_lines(const fs::path& path, const std::vector<nlohmann::json>& records) {
  std::string text;
  for (const auto& r : records) text += r.dump() + '\n';
  write_text(path, text);
}

inline nlohmann::json prediction_record(const Evaluation& ev, std::size_t i) {
  const auto& p = ev.predictions[i];
  nlohmann::json j = p;
  j["row"] = ev.rows[i];
  j["label"] = ev.labels[i];
  j["conflict"] = p.conflict;
  return j;
}

/// Runs `fn`, mapping library exceptions onto the exit-code contract.
inline int guarded(std::ostream& err, const std::function<int()>& fn, int contract_code = kUsage) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return contract_code;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// train

inline RunConfig resolve_train_config(const TrainOptions& o) {
  if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(o.config));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config " + o.config + ": " + e.what());
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  RunConfig rc = run_config_from_json(j);
  if (o.out) rc.out = *o.out;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.dataset) rc.dataset = *o.dataset;
  if (o.eta) rc.eta = *o.eta;
  if (o.conflict_fraction) rc.conflict_fraction = *o.conflict_fraction;
  if (o.baselines) rc.baselines = true;
  validate_run_config(rc);
  return rc;
}

/// Metrics document of a finished run. Contains no timings, so identical configurations
/// produce identical bytes.
inline nlohmann::json metrics_json(const RunConfig& rc, const ExperimentResult& r) {
  nlohmann::json phases = nlohmann::json::object();
  for (std::size_t p = 0; p < kPhases.size(); ++p) {
    const auto& rep = r.phases[p].report;
    nlohmann::json ph{{"epochs", rep.epochs.size()}, {"test", r.evaluations[p].metrics}};
    if (rep.start) ph["test_at_start"] = *rep.start;
    if (!rep.epochs.empty()) {
      const auto& last = rep.epochs.back();
      ph["last_epoch"] = {{"losses", last.losses}, {"lambda", last.lambda}, {"train_accuracy", last.train_accuracy}};
    }
    phases[phase_tag(kPhases[p])] = std::move(ph);
  }
  nlohmann::json base = nlohmann::json::object();
  for (const auto& [name, m] : r.baselines) base[name] = m;
  return {{"config_hash", config_hash(rc)},
          {"dataset", r.train.name},
          {"train_samples", r.train.size()},
          {"test_samples", r.test.size()},
          {"train_missing_rate", missing_rate(r.train.mask)},
          {"test_missing_rate", missing_rate(r.test.mask)},
          {"conflict_rows", r.provenance.size()},
          {"phases", std::move(phases)},
          {"baselines", std::move(base)}};
}

inline void write_run(const RunConfig& rc, const ExperimentResult& r) {
  const fs::path out = rc.out;
  fs::create_directories(out);
  nlohmann::json resolved = rc;
  resolved["out"] = rc.out;
  write_text(out / "config.json", resolved.dump(2) + "\n");
  const std::string hash = config_hash(rc);
  for (std::size_t p = 0; p < kPhases.size(); ++p) {
    const std::string tag = phase_tag(kPhases[p]);
    save_checkpoint((out / ("checkpoint_" + tag + ".json")).string(), r.phases[p].params, hash);
    std::vector<nlohmann::json> epochs(r.phases[p].report.epochs.begin(), r.phases[p].report.epochs.end());
    detail::write_json_lines(out / ("phase_" + tag + ".jsonl"), epochs);
    std::vector<nlohmann::json> preds;
    for (std::size_t i = 0; i < r.evaluations[p].predictions.size(); ++i)
      preds.push_back(detail::prediction_record(r.evaluations[p], i));
    detail::write_json_lines(out / ("predictions_" + tag + ".jsonl"), preds);
  }
  write_text(out / "metrics.json", metrics_json(rc, r).dump(2) + "\n");
}

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const RunConfig rc = resolve_train_config(o);
    const auto r = run_experiment(rc);
    write_run(rc, r);
    for (std::size_t p = 0; p < kPhases.size(); ++p) {
      const auto& m = r.evaluations[p].metrics;
      out << "phase " << phase_tag(kPhases[p]) << ": accuracy " << m.accuracy << ", mean uncertainty "
          << m.mean_uncertainty << ", " << r.phases[p].report.seconds << " s\n";
    }
    for (const auto& [name, m] : r.baselines) out << "baseline " << name << ": accuracy " << m.accuracy << '\n';
    out << "wrote " << rc.out << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------------------
// corrupt

inline int cmd_corrupt(const CorruptOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (!(o.eta >= 0.0 && o.eta <= 1.0)) throw DomainError("--eta must lie in [0, 1]");
    const fs::path in = o.dataset;
    const fs::path dst = o.out;
    const auto ds = load_dataset(in);
    if (fs::exists(dst) && fs::equivalent(in, dst)) throw ConfigError("--out must differ from the input directory");

    MultiViewDataset result = ds;
    std::vector<ConflictRecord> provenance;
    if (o.conflict_fraction > 0.0) {
      auto c = inject_conflict(ds, o.conflict_fraction, derive_seed(o.seed, "conflict"));
      result = std::move(c.dataset);
      provenance = std::move(c.provenance);
    }
    if (o.eta > 0.0) {
      if (missing_rate(ds.mask) > 0.0) {
        throw DomainError("input already has missing entries; corrupt a complete dataset");
      }
      result.mask = generate_missing_mask(ds.size(), ds.view_count(), o.eta, derive_seed(o.seed, "mask"));
    }

    fs::create_directories(dst);
    for (const auto& entry : fs::directory_iterator(in)) {
      if (!entry.is_regular_file()) continue;
      const auto name = entry.path().filename();
      if (name == "manifest.json" || name == "provenance.jsonl") continue;
      fs::copy_file(entry.path(), dst / name, fs::copy_options::overwrite_existing);
    }
    // Replaced rows take the donor's line verbatim, so untouched rows stay byte-identical.
    std::vector<bool> touched(ds.view_count(), false);
    for (const auto& rec : provenance) touched[rec.view] = true;
    for (std::size_t v = 0; v < ds.view_count(); ++v) {
      if (!touched[v]) continue;
      const auto src = ::evfuse::detail::read_lines(view_file(in, v));
      auto lines = src;
      for (const auto& rec : provenance)
        if (rec.view == v) lines[rec.row] = src[rec.donor];
      std::string text;
      for (const auto& l : lines) text += l + '\n';
      write_text(view_file(dst, v), text);
    }
    if (o.eta > 0.0) save_mask(result, dst);

    nlohmann::json manifest = nlohmann::json::parse(detail::read_file(in / "manifest.json"));
    manifest["corruption"] = {{"eta", o.eta},
                              {"conflict_fraction", o.conflict_fraction},
                              {"seed", o.seed},
                              {"masked_entries", static_cast<std::size_t>(std::llround(
                                                     missing_rate(result.mask) * static_cast<double>(result.mask.size())))},
                              {"conflict_rows", provenance.size()}};
    write_text(dst / "manifest.json", manifest.dump(2) + "\n");
    std::vector<nlohmann::json> prov(provenance.begin(), provenance.end());
    detail::write_json_lines(dst / "provenance.jsonl", prov);
    out << "wrote " << dst.string() << ": " << provenance.size() << " conflicted rows, missing rate "
        << missing_rate(result.mask) << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------------------
// fuse

/// Opinions from `[...]` or `{"opinions": [...]}`. Each record is either an opinion
/// (belief, uncertainty, optional base_rate) or {"evidence": [...]}.
inline std::vector<Opinion> parse_opinions(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object() && j.contains("opinions")) arr = &j.at("opinions");
  if (!arr->is_array()) throw ConfigError("expected an array of opinions or {\"opinions\": [...]}");
  if (arr->empty()) throw ConfigError("no opinions given");
  std::vector<Opinion> ops;
  for (const auto& rec : *arr) {
    if (!rec.is_object()) throw ConfigError("opinion records must be objects");
    Opinion w;
    if (rec.contains("evidence")) {
      EvidenceVector e{rec.at("evidence").get<std::vector<double>>()};
      for (double x : e.evidence)
        if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("evidence must be finite and non-negative");
      if (e.evidence.size() < 2) throw DomainError("evidence needs at least two classes");
      w = opinion_from_evidence(e);
    } else {
      w = rec.get<Opinion>();
    }
    w.validate();
    ops.push_back(std::move(w));
  }
  return ops;
}

inline nlohmann::json fuse_report(const std::vector<Opinion>& ops, FusionMode mode) {
  const Opinion fused = fuse_views(ops, mode);
  return {{"mode", std::string(to_string(mode))},
          {"fused", fused},
          {"evidence", evidence_from_opinion(fused).evidence},
          {"probability", project_probability(fused)},
          {"conflict", ops.size() > 1 ? conflict_matrix(ops) : std::vector<std::vector<double>>{{1.0}}}};
}

inline int cmd_fuse(const FuseOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(
      err,
      [&] {
        FusionMode mode;
        try {
          mode = parse_fusion_mode(o.mode);
        } catch (const ContractError& e) {
          throw ConfigError(e.what());
        }
        std::string text;
        if (o.input == "-") {
          text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
        } else {
          if (!fs::exists(o.input)) throw ConfigError("opinion file not found: " + o.input);
          text = detail::read_file(o.input);
        }
        const auto ops = parse_opinions(nlohmann::json::parse(text));
        out << fuse_report(ops, mode).dump(2) << '\n';
        return static_cast<int>(kOk);
      },
      kDomain);
}

// ---------------------------------------------------------------------------------------
// export

inline std::vector<nlohmann::json> read_json_lines(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("missing run artifact " + path.string());
  std::vector<nlohmann::json> out;
  std::istringstream is(detail::read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Writes one CSV per phase and returns their paths.
inline std::vector<fs::path> export_run(const fs::path& run, const std::string& what, const fs::path& dst) {
  if (what != "uncertainty" && what != "conflict" && what != "evidence") {
    throw ConfigError("--what must be uncertainty, conflict or evidence");
  }
  std::vector<fs::path> written;
  nlohmann::json metrics;
  if (what == "conflict") {
    const auto path = run / "metrics.json";
    if (!fs::exists(path)) throw LoadError("missing run artifact " + path.string());
    try {
      metrics = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": " + e.what());
    }
  }
  fs::create_directories(dst);
  for (auto phase : kPhases) {
    const std::string tag = phase_tag(phase);
    std::string text;
    try {
      if (what == "conflict") {
        const auto m = metrics.at("phases").at(tag).at("test").at("mean_conflict").get<std::vector<std::vector<double>>>();
        text = "view";
        for (std::size_t b = 0; b < m.size(); ++b) text += ",view_" + std::to_string(b + 1);
        text += '\n';
        for (std::size_t a = 0; a < m.size(); ++a) {
          text += "view_" + std::to_string(a + 1);
          for (double x : m[a]) text += ',' + ::evfuse::detail::format_double(x);
          text += '\n';
        }
      } else {
        const auto preds = read_json_lines(run / ("predictions_" + tag + ".jsonl"));
        if (what == "uncertainty") {
          text = "row,label,predicted,uncertainty\n";
          for (const auto& p : preds) {
            text += std::to_string(p.at("row").get<std::size_t>()) + ',' +
                    std::to_string(p.at("label").get<std::size_t>()) + ',' +
                    std::to_string(p.at("predicted").get<std::size_t>()) + ',' +
                    ::evfuse::detail::format_double(p.at("uncertainty").get<double>()) + '\n';
          }
        } else {
          const std::size_t k = preds.empty() ? 0 : preds.front().at("fused_evidence").size();
          text = "row,label";
          for (std::size_t c = 0; c < k; ++c) text += ",e_" + std::to_string(c);
          text += '\n';
          for (const auto& p : preds) {
            text += std::to_string(p.at("row").get<std::size_t>()) + ',' +
                    std::to_string(p.at("label").get<std::size_t>());
            for (double x : p.at("fused_evidence").get<std::vector<double>>())
              text += ',' + ::evfuse::detail::format_double(x);
            text += '\n';
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("run artifact for phase " + tag + " is malformed: " + e.what());
    }
    const fs::path path = dst / (what + "_" + tag + ".csv");
    write_text(path, text);
    written.push_back(path);
  }
  return written;
}

inline int cmd_export(const ExportOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (!fs::is_directory(o.run)) throw LoadError("run directory not found: " + o.run);
    for (const auto& p : export_run(o.run, o.what, o.out.value_or(o.run))) out << "wrote " << p.string() << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------------------
// synth

inline int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto& s = o.spec;
    auto ds = synthesize_dataset(s.samples, s.views, s.classes, s.dim, s.separation, o.seed);
    save_dataset(ds, o.out);
    out << "wrote " << o.out << ": N=" << ds.size() << " V=" << ds.view_count() << " K=" << ds.classes << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Evidential multi-view classification with missing views"};
  app.name("evfuse");
  app.require_subcommand(1);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Run the three training phases and write checkpoints, reports and metrics");
  t->add_option("config", train.config, "JSON run configuration")->required();
  t->add_option("--out", train.out, "Output directory (default: config 'out', else ./run)");
  t->add_option("--seed", train.seed, "Root seed (default: config value, else 0)");
  t->add_option("--dataset", train.dataset, "Dataset directory (default: config value, else synthetic)");
  t->add_option("--eta", train.eta, "Missing rate for both splits (default: config value, else 0)");
  t->add_option("--conflict-fraction", train.conflict_fraction,
                "Fraction of samples with one view replaced (default: config value, else 0)");
  t->add_flag("--baselines", train.baselines, "Also train zero- and mean-fill baselines (default: off)");

  CorruptOptions corrupt;
  auto* c = app.add_subcommand("corrupt", "Write a copy of a dataset with a missing mask and/or conflicted views");
  c->add_option("dataset", corrupt.dataset, "Input dataset directory")->required();
  c->add_option("--eta", corrupt.eta, "Target missing rate")->capture_default_str();
  c->add_option("--conflict-fraction", corrupt.conflict_fraction, "Fraction of samples to conflict")
      ->capture_default_str();
  c->add_option("--seed", corrupt.seed, "Seed")->capture_default_str();
  c->add_option("--out", corrupt.out, "Output dataset directory")->required();

  FuseOptions fuse;
  auto* f = app.add_subcommand("fuse", "Fuse opinions from a JSON file and print the result");
  f->add_option("opinions", fuse.input, "JSON file with an array of opinions, or - for stdin")->required();
  f->add_option("--mode", fuse.mode, "Fusion mode")
      ->check(CLI::IsMember({"balanced", "sequential"}))
      ->capture_default_str();

  ExportOptions exp;
  auto* e = app.add_subcommand("export", "Write per-phase CSV diagnostics from a finished run");
  e->add_option("run", exp.run, "Run directory written by train")->required();
  e->add_option("--what", exp.what, "Which arrays to export")
      ->required()
      ->check(CLI::IsMember({"uncertainty", "conflict", "evidence"}));
  e->add_option("--out", exp.out, "Output directory (default: the run directory)");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic Gaussian multi-view dataset");
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--samples", synth.spec.samples, "Number of samples")->capture_default_str();
  s->add_option("--views", synth.spec.views, "Number of views")->capture_default_str();
  s->add_option("--classes", synth.spec.classes, "Number of classes")->capture_default_str();
  s->add_option("--dim", synth.spec.dim, "Features per view")->capture_default_str();
  s->add_option("--separation", synth.spec.separation, "Norm of the class means")->capture_default_str();
  s->add_option("--seed", synth.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (t->parsed()) return cmd_train(train, out, err);
  if (c->parsed()) return cmd_corrupt(corrupt, out, err);
  if (f->parsed()) return cmd_fuse(fuse, out, err);
  if (e->parsed()) return cmd_export(exp, out, err);
  return cmd_synth(synth, out, err);
}

}  // namespace evfuse::cli

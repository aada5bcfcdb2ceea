#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evfuse/error.hpp"
#include "evfuse/numerics/tensor.hpp"
#include "evfuse/rng.hpp"

namespace evfuse {

/// V per-view feature matrices, labels and an N x V observation mask (1 = observed).
struct MultiViewDataset {
  std::string name = "dataset";
  std::size_t classes = 0;
  std::vector<Tensor> views;
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> mask;
  /// Row ids in the dataset this one was cut from (identity for loaded/generated data).
  std::vector<std::size_t> source_rows;

  std::size_t size() const { return labels.size(); }
  std::size_t view_count() const { return views.size(); }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    for (const auto& v : views) d.push_back(v.cols());
    return d;
  }
  bool observed(std::size_t row, std::size_t view) const { return mask[row * views.size() + view] != 0; }
  std::size_t observed_count(std::size_t row) const {
    std::size_t c = 0;
    for (std::size_t v = 0; v < views.size(); ++v) c += observed(row, v) ? 1 : 0;
    return c;
  }

  /// Throws ContractError describing the first broken invariant.
  void validate() const {
    const std::size_t n = labels.size();
    if (views.empty()) throw ContractError("dataset has no views");
    if (classes < 2) throw ContractError("dataset needs at least two classes");
    for (std::size_t v = 0; v < views.size(); ++v) {
      if (views[v].rows() != n) {
        throw ContractError("view " + std::to_string(v + 1) + " has " + std::to_string(views[v].rows()) +
                            " rows, labels have " + std::to_string(n));
      }
    }
    if (mask.size() != n * views.size()) throw ContractError("mask size does not match N x V");
    if (source_rows.size() != n) throw ContractError("source_rows size does not match N");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= classes) {
        throw ContractError("row " + std::to_string(i) + ": label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(classes) + ")");
      }
      if (observed_count(i) == 0) {
        throw ContractError("row " + std::to_string(i) +
                            " has no observed view; every sample needs at least one");
      }
    }
  }
};

/// Fraction of missing view entries: sum(1 - mask) / (V N).
inline double missing_rate(const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return 0.0;
  const auto zeros = static_cast<double>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
  return zeros / static_cast<double>(mask.size());
}

inline MultiViewDataset subset(const MultiViewDataset& ds, const std::vector<std::size_t>& rows) {
  MultiViewDataset out;
  out.name = ds.name;
  out.classes = ds.classes;
  const std::size_t v_count = ds.view_count();
  for (const auto& view : ds.views) {
    Tensor t(rows.size(), view.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) t.mat().row(i) = view.mat().row(rows[i]);
    out.views.push_back(std::move(t));
  }
  for (auto r : rows) {
    out.labels.push_back(ds.labels[r]);
    out.source_rows.push_back(ds.source_rows[r]);
    for (std::size_t v = 0; v < v_count; ++v) out.mask.push_back(ds.mask[r * v_count + v]);
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Corruption

/// Exactly round(eta V N) zeros placed uniformly at random subject to every row keeping
/// at least one observed view. Requires eta in [0, (V-1)/V].
inline std::vector<std::uint8_t> generate_missing_mask(std::size_t n, std::size_t v, double eta, Rng& rng) {
  if (v == 0) throw ContractError("generate_missing_mask: no views");
  const double max_eta = static_cast<double>(v - 1) / static_cast<double>(v);
  if (!(eta >= 0.0) || eta > max_eta + 1e-12) {
    throw DomainError("missing rate " + std::to_string(eta) + " is infeasible for " + std::to_string(v) +
                      " views (must lie in [0, " + std::to_string(max_eta) + "])");
  }
  std::vector<std::uint8_t> mask(n * v, 1);
  const auto target = std::min(static_cast<std::size_t>(std::llround(eta * static_cast<double>(v * n))),
                               (v - 1) * n);
  if (target == 0) return mask;
  std::vector<std::size_t> cells(n * v);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  shuffle(cells.begin(), cells.end(), rng);
  std::vector<std::size_t> missing_in_row(n, 0);
  std::size_t placed = 0;
  for (auto cell : cells) {
    if (placed == target) break;
    const std::size_t row = cell / v;
    if (missing_in_row[row] + 1 >= v) continue;
    mask[cell] = 0;
    ++missing_in_row[row];
    ++placed;
  }
  return mask;
}

inline std::vector<std::uint8_t> generate_missing_mask(std::size_t n, std::size_t v, double eta,
                                                       std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return generate_missing_mask(n, v, eta, rng);
}

/// Training-time mask augmentation: a fresh mask at rate eta intersected with the source
/// mask. Entries missing in the source stay missing; a row left empty gets one of its
/// source-observed views back.
inline std::vector<std::uint8_t> augment_mask(const std::vector<std::uint8_t>& source, std::size_t v,
                                              double eta, Rng& rng) {
  const std::size_t n = source.size() / v;
  auto mask = generate_missing_mask(n, v, eta, rng);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t kept = 0;
    for (std::size_t j = 0; j < v; ++j) {
      mask[r * v + j] &= source[r * v + j];
      kept += mask[r * v + j];
    }
    if (kept == 0) {
      std::vector<std::size_t> avail;
      for (std::size_t j = 0; j < v; ++j)
        if (source[r * v + j]) avail.push_back(j);
      if (avail.empty()) throw ContractError("augment_mask: source row has no observed view");
      mask[r * v + avail[uniform_index(rng, avail.size())]] = 1;
    }
  }
  return mask;
}

struct ConflictRecord {
  std::size_t row;
  std::size_t view;
  std::size_t donor;

  friend bool operator==(const ConflictRecord&, const ConflictRecord&) = default;
};

inline void to_json(nlohmann::json& j, const ConflictRecord& r) {
  j = nlohmann::json{{"row", r.row}, {"view", r.view}, {"donor", r.donor}};
}

struct ConflictResult {
  MultiViewDataset dataset;
  std::vector<ConflictRecord> provenance;
};

/// Replaces one uniformly chosen view in round(fraction N) distinct rows with the same
/// view of a donor row carrying a different label. Donors are drawn with replacement and
/// always contribute their original (uncorrupted) features. Labels are untouched.
inline ConflictResult inject_conflict(const MultiViewDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw DomainError("conflict fraction must lie in [0, 1], got " + std::to_string(fraction));
  }
  const std::size_t n = ds.size();
  ConflictResult out{ds, {}};
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (count == 0) return out;
  if (std::adjacent_find(ds.labels.begin(), ds.labels.end(), std::not_equal_to<>()) == ds.labels.end()) {
    throw DomainError("conflict injection needs at least two classes present");
  }
  Rng rng = make_rng(seed);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  shuffle(rows.begin(), rows.end(), rng);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  for (auto row : rows) {
    const std::size_t view = uniform_index(rng, ds.view_count());
    std::size_t donor;
    do {
      donor = uniform_index(rng, n);
    } while (ds.labels[donor] == ds.labels[row]);
    out.dataset.views[view].mat().row(row) = ds.views[view].mat().row(donor);
    out.provenance.push_back({row, view, donor});
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Generation and splitting

/// Balanced Gaussian classes: for class k and view v, x ~ N(mu_kv, I) with |mu_kv| = separation
/// in a random direction. Views share the label but have independent noise.
inline MultiViewDataset synthesize_dataset(std::size_t n, std::size_t v, std::size_t k, std::size_t d,
                                           double separation, std::uint64_t seed) {
  if (v == 0 || k < 2 || d == 0) throw ContractError("synthesize_dataset: need V >= 1, K >= 2, d >= 1");
  if (n < k * v) throw ContractError("synthesize_dataset: N must be at least K * V");
  Rng rng = make_rng(derive_seed(seed, "synth"));
  std::vector<std::vector<Tensor>> means(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < v; ++j) {
      Tensor mu(1, d);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (auto& x : mu.values()) {
          x = standard_normal(rng);
          norm += x * x;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (auto& x : mu.values()) x *= separation / norm;
      means[c].push_back(std::move(mu));
    }
  }
  MultiViewDataset ds;
  ds.name = "synthetic";
  ds.classes = k;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = i % k;
  shuffle(ds.labels.begin(), ds.labels.end(), rng);
  for (std::size_t j = 0; j < v; ++j) {
    Tensor x(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) x(i, c) = means[ds.labels[i]][j][c] + standard_normal(rng);
    ds.views.push_back(std::move(x));
  }
  ds.mask.assign(n * v, 1);
  ds.source_rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.source_rows[i] = i;
  return ds;
}

/// Stratified split: each class contributes round(test_fraction * n_k) rows to the test set.
inline std::pair<MultiViewDataset, MultiViewDataset> split(const MultiViewDataset& ds, double test_fraction,
                                                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("split: test_fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> train, test;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw ContractError("split: class " + std::to_string(c) + " has fewer than two samples");
    }
    shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test.insert(test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(ds, train), subset(ds, test)};
}

// ---------------------------------------------------------------------------------------
// Directory format
//
//   manifest.json   {"name", "V", "K", "dims": [d_1..d_V], "N"}
//   view_<i>.csv    N rows of d_i comma-separated reals, i = 1..V
//   labels.csv      N integers in [0, K)
//   mask.csv        optional, N rows of V binary digits (comma separated)

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_cell(std::string_view cell, const std::filesystem::path& path, std::size_t line) {
  cell = trim(cell);
  T value{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    throw LoadError(path.string() + ":" + std::to_string(line + 1) + ": non-numeric cell '" +
                    std::string(cell) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw LoadError(path.string() + ":" + std::to_string(line + 1) + ": non-finite value");
    }
  }
  return value;
}

template <class T>
std::vector<std::vector<T>> read_csv(const std::filesystem::path& path) {
  std::vector<std::vector<T>> rows;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<T> row;
    std::string_view rest = lines[i];
    while (true) {
      const auto comma = rest.find(',');
      row.push_back(parse_cell<T>(rest.substr(0, comma), path, i));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::filesystem::path view_file(const std::filesystem::path& dir, std::size_t view) {
  return dir / ("view_" + std::to_string(view + 1) + ".csv");
}

inline MultiViewDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream ms(manifest_path);
  if (!ms) throw LoadError("missing manifest " + manifest_path.string());
  nlohmann::json manifest;
  std::size_t v_count = 0;
  std::vector<std::size_t> dims;
  MultiViewDataset ds;
  try {
    ms >> manifest;
    v_count = manifest.at("V").get<std::size_t>();
    ds.classes = manifest.at("K").get<std::size_t>();
    dims = manifest.at("dims").get<std::vector<std::size_t>>();
    ds.name = manifest.value("name", std::string("dataset"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  if (dims.size() != v_count) throw LoadError("manifest: dims has " + std::to_string(dims.size()) + " entries, V = " + std::to_string(v_count));
  if (v_count == 0) throw LoadError("manifest: V must be positive");

  const auto label_rows = detail::read_csv<long long>(dir / "labels.csv");
  for (std::size_t i = 0; i < label_rows.size(); ++i) {
    if (label_rows[i].size() != 1) throw LoadError("labels.csv:" + std::to_string(i + 1) + ": expected one integer");
    const auto l = label_rows[i][0];
    if (l < 0 || static_cast<std::size_t>(l) >= ds.classes) {
      throw LoadError("labels.csv:" + std::to_string(i + 1) + ": label " + std::to_string(l) +
                      " outside [0, " + std::to_string(ds.classes) + ")");
    }
    ds.labels.push_back(static_cast<std::size_t>(l));
  }
  const std::size_t n = ds.labels.size();
  if (manifest.contains("N") && manifest["N"].get<std::size_t>() != n) {
    throw LoadError("manifest declares N = " + manifest["N"].dump() + " but labels.csv has " + std::to_string(n) + " rows");
  }

  for (std::size_t v = 0; v < v_count; ++v) {
    const auto path = view_file(dir, v);
    if (!std::filesystem::exists(path)) {
      throw LoadError("manifest declares V = " + std::to_string(v_count) + " but " + path.filename().string() +
                      " is missing");
    }
    const auto rows = detail::read_csv<double>(path);
    if (rows.size() != n) {
      throw LoadError(path.filename().string() + " has " + std::to_string(rows.size()) + " rows, labels.csv has " +
                      std::to_string(n));
    }
    Tensor x(n, dims[v]);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != dims[v]) {
        throw LoadError(path.filename().string() + ":" + std::to_string(i + 1) + ": expected " +
                        std::to_string(dims[v]) + " values, found " + std::to_string(rows[i].size()));
      }
      std::copy(rows[i].begin(), rows[i].end(), x.data() + i * dims[v]);
    }
    ds.views.push_back(std::move(x));
  }

  const auto mask_path = dir / "mask.csv";
  if (std::filesystem::exists(mask_path)) {
    const auto rows = detail::read_csv<int>(mask_path);
    if (rows.size() != n) throw LoadError("mask.csv has " + std::to_string(rows.size()) + " rows, expected " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != v_count) throw LoadError("mask.csv:" + std::to_string(i + 1) + ": expected " + std::to_string(v_count) + " entries");
      std::size_t observed = 0;
      for (int m : rows[i]) {
        if (m != 0 && m != 1) throw LoadError("mask.csv:" + std::to_string(i + 1) + ": entries must be 0 or 1");
        ds.mask.push_back(static_cast<std::uint8_t>(m));
        observed += static_cast<std::size_t>(m);
      }
      if (observed == 0) {
        throw LoadError("mask.csv:" + std::to_string(i + 1) +
                        ": sample has no observed view; every sample needs at least one");
      }
    }
  } else {
    ds.mask.assign(n * v_count, 1);
  }
  ds.source_rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.source_rows[i] = i;
  return ds;
}

inline nlohmann::json manifest_json(const MultiViewDataset& ds) {
  return {{"name", ds.name}, {"V", ds.view_count()}, {"K", ds.classes}, {"dims", ds.dims()}, {"N", ds.size()}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write " + path.string());
  os << text;
}

inline void save_view(const MultiViewDataset& ds, std::size_t v, const std::filesystem::path& dir) {
  std::string out;
  const auto& x = ds.views[v];
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (c) out += ',';
      out += detail::format_double(x(i, c));
    }
    out += '\n';
  }
  write_text(view_file(dir, v), out);
}

inline void save_mask(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t v = 0; v < ds.view_count(); ++v) {
      if (v) out += ',';
      out += ds.observed(i, v) ? '1' : '0';
    }
    out += '\n';
  }
  write_text(dir / "mask.csv", out);
}

inline void save_labels(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  std::string out;
  for (auto l : ds.labels) out += std::to_string(l) + '\n';
  write_text(dir / "labels.csv", out);
}

/// Writes the full directory. mask.csv is written only when some entry is missing.
inline void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "manifest.json", manifest_json(ds).dump(2) + "\n");
  for (std::size_t v = 0; v < ds.view_count(); ++v) save_view(ds, v, dir);
  save_labels(ds, dir);
  if (missing_rate(ds.mask) > 0.0) save_mask(ds, dir);
}

}  // namespace evfuse

#include "hypcd/dataset.hpp"

#include "hypcd/errors.hpp"
#include "hypcd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hypcd::data {

namespace fs = std::filesystem;
using Eigen::Index;

namespace {

constexpr std::array<char, 4> kMagic{'H', 'Y', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "HYPF IO assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

fs::path with_suffix(const fs::path& prefix, const char* suffix) { return fs::path(prefix.string() + suffix); }

int parse_int(const std::string& field, const fs::path& path, std::size_t line) {
  int v = 0;
  const char* end = field.data() + field.size();
  auto [p, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || p != end)
    throw DataError(path.string() + ":" + std::to_string(line) + ": expected an integer, got '" + field + "'");
  return v;
}

}  // namespace

std::size_t GcdDataset::num_labelled() const {
  return static_cast<std::size_t>(std::count(labelled.begin(), labelled.end(), true));
}

void GcdDataset::validate() const {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n || labelled.size() != n)
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (num_classes < 1) throw DataError("dataset: number of classes must be positive");
  if (static_cast<int>(old_classes.size()) > num_classes) throw DataError("dataset: more old classes than classes");
  if (!features.allFinite()) throw DataError("dataset: non-finite feature value");
  for (int c : old_classes)
    if (c < 0 || c >= num_classes) throw DataError("dataset: old class " + std::to_string(c) + " out of range");
  std::set<int> unlabelled_classes;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("dataset: row " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    if (labelled[i] && !old_classes.count(labels[i]))
      throw DataError("dataset: labelled row " + std::to_string(i) + " belongs to new class " +
                      std::to_string(labels[i]));
    if (!labelled[i]) unlabelled_classes.insert(labels[i]);
  }
  if (!discovery_empty())
    for (int c : old_classes)
      if (!unlabelled_classes.count(c))
        throw DataError("dataset: old class " + std::to_string(c) + " has no unlabelled rows");
}

void write_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) buf[k++] = static_cast<float>(m(i, j));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw DataError("write failed for " + path.string());
}

Matrix read_matrix(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  auto need = [&](std::size_t offset, std::size_t count, const char* what) {
    if (bytes.size() < offset + count)
      throw DataError(where + ": truncated at byte offset " + std::to_string(bytes.size()) + " while reading " + what +
                      " (needs " + std::to_string(offset + count) + " bytes)");
  };
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  need(0, 4, "magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw DataError(where + ": bad magic at byte offset 0 (expected HYPF)");
  need(4, 4, "version");
  if (u32_at(4) != kVersion)
    throw DataError(where + ": unsupported version " + std::to_string(u32_at(4)) + " at byte offset 4");
  need(8, 8, "shape");
  const std::uint64_t rows = u32_at(8), cols = u32_at(12);
  const std::size_t payload = static_cast<std::size_t>(rows * cols * 4);
  need(16, payload, "matrix data");
  if (bytes.size() != 16 + payload)
    throw DataError(where + ": " + std::to_string(bytes.size() - 16 - payload) +
                    " trailing bytes after matrix data at byte offset " + std::to_string(16 + payload));
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  const char* p = bytes.data() + 16;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j, p += 4) {
      float f;
      std::memcpy(&f, p, 4);
      m(i, j) = f;
    }
  return m;
}

void save_dataset(const fs::path& prefix, const GcdDataset& ds) {
  ds.validate();
  write_matrix(with_suffix(prefix, ".hypf"), ds.features);
  {
    const fs::path p = with_suffix(prefix, ".labels.csv");
    std::ofstream os(p);
    if (!os) throw DataError("cannot open " + p.string() + " for writing");
    os << "index,label,labelled\n";
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
      os << i << ',' << ds.labels[i] << ',' << (ds.labelled[i] ? 1 : 0) << '\n';
    if (!os) throw DataError("write failed for " + p.string());
  }
  const fs::path mp = with_suffix(prefix, ".meta.json");
  std::ofstream ms(mp);
  if (!ms) throw DataError("cannot open " + mp.string() + " for writing");
  nlohmann::json meta{{"num_classes", ds.num_classes},
                      {"old_classes", std::vector<int>(ds.old_classes.begin(), ds.old_classes.end())}};
  ms << meta.dump(2) << '\n';
}

GcdDataset load_features(const fs::path& prefix) {
  GcdDataset ds;
  ds.features = read_matrix(with_suffix(prefix, ".hypf"));
  const auto n = static_cast<std::size_t>(ds.features.rows());

  const fs::path lp = with_suffix(prefix, ".labels.csv");
  std::ifstream ls(lp);
  if (!ls) throw DataError("cannot open " + lp.string());
  std::string line;
  if (!std::getline(ls, line)) throw DataError(lp.string() + ": empty labels file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,label,labelled")
    throw DataError(lp.string() + ":1: expected header 'index,label,labelled', got '" + line + "'");
  ds.labels.assign(n, -1);
  ds.labelled.assign(n, false);
  std::vector<bool> seen(n, false);
  std::size_t lineno = 1;
  while (std::getline(ls, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 3)
      throw DataError(lp.string() + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                      std::to_string(f.size()));
    const int idx = parse_int(f[0], lp, lineno);
    const int label = parse_int(f[1], lp, lineno);
    const int flag = parse_int(f[2], lp, lineno);
    if (idx < 0 || static_cast<std::size_t>(idx) >= n)
      throw DataError(lp.string() + ":" + std::to_string(lineno) + ": row index " + std::to_string(idx) +
                      " outside [0, " + std::to_string(n) + ")");
    if (flag != 0 && flag != 1)
      throw DataError(lp.string() + ":" + std::to_string(lineno) + ": labelled flag must be 0 or 1");
    if (label < 0) throw DataError(lp.string() + ":" + std::to_string(lineno) + ": negative label");
    if (seen[static_cast<std::size_t>(idx)])
      throw DataError(lp.string() + ":" + std::to_string(lineno) + ": duplicate row index " + std::to_string(idx));
    seen[static_cast<std::size_t>(idx)] = true;
    ds.labels[static_cast<std::size_t>(idx)] = label;
    ds.labelled[static_cast<std::size_t>(idx)] = flag == 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw DataError(lp.string() + ": no label for row " + std::to_string(i));

  const fs::path mp = with_suffix(prefix, ".meta.json");
  if (fs::exists(mp)) {
    std::ifstream ms(mp);
    nlohmann::json meta;
    try {
      ms >> meta;
      ds.num_classes = meta.at("num_classes").get<int>();
      for (int c : meta.at("old_classes").get<std::vector<int>>()) ds.old_classes.insert(c);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(mp.string() + ": " + e.what());
    }
  } else {
    ds.num_classes = n == 0 ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    for (std::size_t i = 0; i < n; ++i)
      if (ds.labelled[i]) ds.old_classes.insert(ds.labels[i]);
  }
  ds.validate();
  return ds;
}

namespace {

void check_params(const SynthParams& p) {
  if (p.num_classes < 1 || p.tree_depth < 0 || p.tree_depth > 20 || p.dim < 1 || p.per_class < 1)
    throw std::invalid_argument("synth_dataset: sizes must be positive");
  if (p.num_classes > (1 << p.tree_depth))
    throw std::invalid_argument("synth_dataset: K = " + std::to_string(p.num_classes) + " exceeds 2^depth = " +
                                std::to_string(1 << p.tree_depth));
  if (!(p.step >= 0.0) || !(p.noise >= 0.0) || !std::isfinite(p.step) || !std::isfinite(p.noise))
    throw std::invalid_argument("synth_dataset: step and noise must be finite and non-negative");
}

}  // namespace

Matrix synth_class_means(const SynthParams& p) {
  check_params(p);
  Rng rng = Rng(p.seed).split("data").split("tree");
  // Level-order complete binary tree rooted at the origin.
  std::vector<Eigen::VectorXd> level{Eigen::VectorXd::Zero(p.dim)};
  for (int depth = 0; depth < p.tree_depth; ++depth) {
    std::vector<Eigen::VectorXd> next;
    for (const auto& parent : level)
      for (int child = 0; child < 2; ++child) {
        Eigen::VectorXd v = parent;
        for (int j = 0; j < p.dim; ++j) v(j) += p.step * rng.normal();
        next.push_back(std::move(v));
      }
    level = std::move(next);
  }
  Matrix means(p.num_classes, p.dim);
  for (int k = 0; k < p.num_classes; ++k) means.row(k) = level[static_cast<std::size_t>(k)].transpose();
  return means;
}

GcdDataset synth_dataset(const SynthParams& p) {
  const Matrix means = synth_class_means(p);
  Rng rng = Rng(p.seed).split("data").split("samples");
  GcdDataset ds;
  ds.num_classes = p.num_classes;
  const Index n = static_cast<Index>(p.num_classes) * p.per_class;
  ds.features.resize(n, p.dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.labelled.assign(static_cast<std::size_t>(n), false);
  Index row = 0;
  for (int k = 0; k < p.num_classes; ++k)
    for (int s = 0; s < p.per_class; ++s, ++row) {
      for (int j = 0; j < p.dim; ++j)
        ds.features(row, j) = static_cast<float>(means(k, j) + p.noise * rng.normal());
      ds.labels[static_cast<std::size_t>(row)] = k;
    }
  return ds;
}

GcdDataset split_dataset(const GcdDataset& ds, double old_fraction, double labelled_fraction, std::uint64_t seed) {
  if (!(old_fraction > 0.0 && old_fraction <= 1.0)) throw std::invalid_argument("split_dataset: old_fraction outside (0, 1]");
  if (!(labelled_fraction > 0.0 && labelled_fraction <= 1.0))
    throw std::invalid_argument("split_dataset: labelled_fraction outside (0, 1]");
  GcdDataset out = ds;
  out.old_classes.clear();
  out.labelled.assign(ds.labels.size(), false);
  const int m = static_cast<int>(std::lround(old_fraction * ds.num_classes));
  for (int c = 0; c < m; ++c) out.old_classes.insert(c);
  Rng rng = Rng(seed).split("data").split("split");
  for (int c = 0; c < m; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
      if (ds.labels[i] == c) rows.push_back(i);
    shuffle(rows.begin(), rows.end(), rng);
    const auto take = static_cast<std::size_t>(std::lround(labelled_fraction * static_cast<double>(rows.size())));
    for (std::size_t t = 0; t < take; ++t) out.labelled[rows[t]] = true;
  }
  out.validate();
  return out;
}

}  // namespace hypcd::data

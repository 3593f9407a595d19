#pragma once

// GCD datasets: features plus a labelled/unlabelled split with an old/new
// class partition, the on-disk matrix and label formats, the synthetic tree
// generator and the class-stratified split protocol.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace hypcd::data {

using Matrix = Eigen::MatrixXd;

struct GcdDataset {
  Matrix features;  // N x d, entries representable as float32
  std::vector<int> labels;
  std::vector<bool> labelled;
  std::set<int> old_classes;
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  int num_old() const { return static_cast<int>(old_classes.size()); }
  std::size_t num_labelled() const;
  /// True when every row is labelled, leaving nothing to discover.
  bool discovery_empty() const { return num_labelled() == labels.size(); }

  /// Throws DataError when an invariant is broken: label outside [0, K),
  /// labelled row from a new class, more old classes than K, or an old
  /// class absent from the unlabelled rows while some rows are unlabelled.
  void validate() const;
};

/// HYPF matrix file: "HYPF", u32 version = 1, u32 rows, u32 cols, then
/// rows x cols float32, all little-endian, row-major.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
/// Throws DataError on IO failure, bad magic/version or truncation; the
/// message names the byte offset where reading failed.
Matrix read_matrix(const std::filesystem::path& path);

/// Writes prefix.hypf, prefix.labels.csv and prefix.meta.json.
void save_dataset(const std::filesystem::path& prefix, const GcdDataset& ds);

/// Reads prefix.hypf and prefix.labels.csv (header `index,label,labelled`),
/// plus prefix.meta.json when present (`num_classes`, `old_classes`).
/// Without metadata K = max label + 1 and the old classes are those with
/// labelled rows. Throws DataError on any malformed input.
GcdDataset load_features(const std::filesystem::path& prefix);

struct SynthParams {
  int num_classes = 8;
  int tree_depth = 3;
  int dim = 64;
  int per_class = 200;
  double step = 1.0;   // per-coordinate std of each tree edge
  double noise = 1.5;  // per-coordinate sample noise
  std::uint64_t seed = 0;
};

/// Class means from a binary-tree diffusion (child = parent + Gaussian step),
/// samples = mean + Gaussian noise, rounded to float32. All rows unlabelled.
/// Throws std::invalid_argument when K > 2^depth or a size is not positive.
GcdDataset synth_dataset(const SynthParams& p);

/// Class means of the leaves used by synth_dataset (K x dim).
Matrix synth_class_means(const SynthParams& p);

/// The first round(old_fraction K) class ids become old; within each old
/// class round(labelled_fraction n_c) rows, chosen by seed, are labelled.
/// Throws std::invalid_argument when a fraction lies outside (0, 1].
GcdDataset split_dataset(const GcdDataset& ds, double old_fraction, double labelled_fraction, std::uint64_t seed);

}  // namespace hypcd::data

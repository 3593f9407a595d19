#pragma once

// Training and evaluation orchestration: the small encoder/projector, the
// per-method objectives, checkpoints, metrics and embedding export.

#include "hypcd/assignment.hpp"
#include "hypcd/config.hpp"
#include "hypcd/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hypcd::train {

using Matrix = Eigen::MatrixXd;

/// Two-layer ReLU encoder, two-layer ReLU projector and the heads. Biases
/// are 1 x width rows. Only the head matching the space is populated.
struct ModelParams {
  Matrix input_mean;   // 1 x d, subtracted before the encoder
  Matrix input_scale;  // 1 x 1, global feature std
  Matrix enc_w1, enc_b1, enc_w2, enc_b2;
  Matrix proj_w1, proj_b1, proj_w2, proj_b2;
  Matrix protos;  // K x I, Euclidean head
  Matrix hyp_w;   // I x K, hyperbolic head weight
  Matrix hyp_s;   // 1 x K, hyperbolic head bias (ball point)

  /// Name -> tensor for every populated tensor, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

struct Checkpoint {
  TrainConfig config;
  int input_dim = 0;
  int num_classes = 0;
  ModelParams params;
};

/// Random initialisation from the "init" stream of cfg.seed.
ModelParams init_params(const TrainConfig& cfg, int input_dim, int num_classes);

/// Encoder features (N x I) for raw rows.
Matrix encode(const ModelParams& p, const Matrix& x);

/// Writes manifest.json plus one HYPF file per tensor into `dir`.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
/// Throws DataError on a missing or malformed checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct TrainResult {
  Checkpoint checkpoint;
  assignment::AccReport report;
  std::vector<double> epoch_losses;
  nlohmann::json metrics;
};

/// Runs cfg.epochs of training, then evaluates on the unlabelled rows.
/// Throws DivergenceError on a non-finite loss, ConfigError on a bad config.
TrainResult train_run(const data::GcdDataset& ds, const TrainConfig& cfg);

/// Non-parametric methods: semi-supervised k-means on encoder features of
/// all rows. Parametric: argmax of the trained head. Accuracy is reported
/// over the unlabelled rows. Throws DataError on a width mismatch.
assignment::AccReport eval_run(const data::GcdDataset& ds, const Checkpoint& ck);

/// Metrics document: acc_all, acc_old, acc_new, n_old, n_new,
/// per_epoch_losses, config, seed, wall_time_s.
nlohmann::json metrics_json(const assignment::AccReport& r, const std::vector<double>& losses,
                            const TrainConfig& cfg, double wall_time_s);

/// Writes prefix.features.hypf and, for the hyperbolic space,
/// prefix.ball.hypf, plus prefix.json with c, r, dims and space tag.
void export_embeddings(const data::GcdDataset& ds, const Checkpoint& ck, const std::filesystem::path& prefix,
                       const std::string& space_tag);

struct AblationCell {
  double curvature;
  double clip;
  nlohmann::json metrics;
  std::filesystem::path path;
};

/// One hyperbolic run per (c, r) pair, each written to
/// out_dir/c<c>_r<r>.json.
std::vector<AblationCell> ablate(const data::GcdDataset& ds, const TrainConfig& base,
                                 const std::vector<double>& curvatures, const std::vector<double>& clips,
                                 const std::filesystem::path& out_dir);

/// Runs the same config in both spaces; report holds both metrics and
/// acc deltas (hyperbolic minus euclidean).
nlohmann::json compare_spaces(const data::GcdDataset& ds, const TrainConfig& base);

/// Writes `j` pretty-printed; DataError on IO failure.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace hypcd::train

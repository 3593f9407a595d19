#include "hypcd/train.hpp"

#include "hypcd/autodiff.hpp"
#include "hypcd/ball_ops.hpp"
#include "hypcd/classifier.hpp"
#include "hypcd/errors.hpp"
#include "hypcd/optim.hpp"
#include "hypcd/replearn.hpp"
#include "hypcd/rng.hpp"
#include "hypcd/selex.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace hypcd::train {

namespace fs = std::filesystem;
using ad::Index;
using ad::Tape;
using ad::Var;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "hypcd-checkpoint";
constexpr int kCheckpointVersion = 1;

Matrix gaussian(Index rows, Index cols, double std, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
  return m;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix standardize(const ModelParams& p, const Matrix& x) {
  return (x.rowwise() - p.input_mean.row(0)) / p.input_scale(0, 0);
}

void round_to_float(ModelParams& p) {
  for (auto& [name, m] : p.named()) *m = m->cast<float>().cast<double>();
}

std::vector<bool> unlabelled_mask(const data::GcdDataset& ds) {
  std::vector<bool> u(ds.labelled.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = !ds.labelled[i];
  return u;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> ModelParams::named() {
  std::vector<std::pair<std::string, Matrix*>> out;
  const std::pair<const char*, Matrix*> all[] = {
      {"input_mean", &input_mean}, {"input_scale", &input_scale}, {"enc_w1", &enc_w1},   {"enc_b1", &enc_b1},
      {"enc_w2", &enc_w2},         {"enc_b2", &enc_b2},           {"proj_w1", &proj_w1}, {"proj_b1", &proj_b1},
      {"proj_w2", &proj_w2},       {"proj_b2", &proj_b2},         {"protos", &protos},   {"hyp_w", &hyp_w},
      {"hyp_s", &hyp_s}};
  for (const auto& [name, m] : all)
    if (m->size() > 0) out.emplace_back(name, m);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (const auto& [name, m] : const_cast<ModelParams*>(this)->named()) out.emplace_back(name, m);
  return out;
}

ModelParams init_params(const TrainConfig& cfg, int input_dim, int num_classes) {
  Rng rng = Rng(cfg.seed).split("init");
  ModelParams p;
  p.input_mean = Matrix::Zero(1, input_dim);
  p.input_scale = Matrix::Ones(1, 1);
  p.enc_w1 = gaussian(input_dim, cfg.hidden_dim, std::sqrt(2.0 / input_dim), rng);
  p.enc_b1 = Matrix::Zero(1, cfg.hidden_dim);
  p.enc_w2 = gaussian(cfg.hidden_dim, cfg.feature_dim, std::sqrt(1.0 / cfg.hidden_dim), rng);
  p.enc_b2 = Matrix::Zero(1, cfg.feature_dim);
  p.proj_w1 = gaussian(cfg.feature_dim, cfg.proj_hidden_dim, std::sqrt(2.0 / cfg.feature_dim), rng);
  p.proj_b1 = Matrix::Zero(1, cfg.proj_hidden_dim);
  p.proj_w2 = gaussian(cfg.proj_hidden_dim, cfg.proj_dim, std::sqrt(1.0 / cfg.proj_hidden_dim), rng);
  p.proj_b2 = Matrix::Zero(1, cfg.proj_dim);
  if (cfg.method == Method::simgcd) {
    if (cfg.space == Space::euclidean) {
      classifier::EuclidPrototypes c{gaussian(num_classes, cfg.feature_dim, 1.0, rng)};
      c.normalize();
      p.protos = c.protos;
    } else {
      p.hyp_w = gaussian(cfg.feature_dim, num_classes, 0.1 * std::sqrt(1.0 / cfg.feature_dim), rng);
      p.hyp_s = Matrix::Zero(1, num_classes);
    }
  }
  return p;
}

Matrix encode(const ModelParams& p, const Matrix& x) {
  const Matrix hidden = relu((standardize(p, x) * p.enc_w1).rowwise() + p.enc_b1.row(0));
  return (hidden * p.enc_w2).rowwise() + p.enc_b2.row(0);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw DataError("write failed for " + path.string());
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json tensors = json::object();
  for (const auto& [name, m] : ck.params.named()) {
    data::write_matrix(dir / (name + ".hypf"), *m);
    tensors[name] = name + ".hypf";
  }
  const TrainConfig& c = ck.config;
  json manifest{{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"method", to_string(c.method)},
                {"space", to_string(c.space)},
                {"ball", {{"curvature", c.curvature}, {"clip", c.clip}}},
                {"dims",
                 {{"input", ck.input_dim},
                  {"hidden", c.hidden_dim},
                  {"feature", c.feature_dim},
                  {"proj_hidden", c.proj_hidden_dim},
                  {"proj", c.proj_dim},
                  {"classes", ck.num_classes}}},
                {"config", to_json(c)},
                {"tensors", tensors}};
  write_json(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path mp = dir / "manifest.json";
  std::ifstream is(mp);
  if (!is) throw DataError("cannot open checkpoint manifest " + mp.string());
  Checkpoint ck;
  try {
    const json m = json::parse(is);
    if (m.at("format") != kCheckpointFormat || m.at("version") != kCheckpointVersion)
      throw DataError(mp.string() + ": unsupported checkpoint format");
    ck.config = resolve_config(m.at("config"), parse_profile(m.at("config").at("profile").get<std::string>()));
    ck.input_dim = m.at("dims").at("input").get<int>();
    ck.num_classes = m.at("dims").at("classes").get<int>();
    std::map<std::string, Matrix*> slots;
    ModelParams& p = ck.params;
    for (auto [name, ptr] : std::vector<std::pair<std::string, Matrix*>>{
             {"input_mean", &p.input_mean}, {"input_scale", &p.input_scale}, {"enc_w1", &p.enc_w1},
             {"enc_b1", &p.enc_b1},         {"enc_w2", &p.enc_w2},           {"enc_b2", &p.enc_b2},
             {"proj_w1", &p.proj_w1},       {"proj_b1", &p.proj_b1},         {"proj_w2", &p.proj_w2},
             {"proj_b2", &p.proj_b2},       {"protos", &p.protos},           {"hyp_w", &p.hyp_w},
             {"hyp_s", &p.hyp_s}})
      slots[name] = ptr;
    for (const auto& [name, file] : m.at("tensors").items()) {
      auto it = slots.find(name);
      if (it == slots.end()) throw DataError(mp.string() + ": unknown tensor '" + name + "'");
      *it->second = data::read_matrix(dir / file.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw DataError(mp.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(mp.string() + ": " + e.what());
  }
  const ModelParams& p = ck.params;
  const TrainConfig& c = ck.config;
  const bool ok = p.enc_w1.rows() == ck.input_dim && p.enc_w1.cols() == c.hidden_dim &&
                  p.enc_w2.rows() == c.hidden_dim && p.enc_w2.cols() == c.feature_dim &&
                  p.input_mean.cols() == ck.input_dim && p.input_scale.size() == 1;
  if (!ok) throw DataError(mp.string() + ": tensor shapes disagree with the manifest");
  if (c.method == Method::simgcd) {
    const bool head_ok = c.space == Space::euclidean
                             ? p.protos.rows() == ck.num_classes && p.protos.cols() == c.feature_dim
                             : p.hyp_w.rows() == c.feature_dim && p.hyp_w.cols() == ck.num_classes &&
                                   p.hyp_s.rows() == 1 && p.hyp_s.cols() == ck.num_classes;
    if (!head_ok) throw DataError(mp.string() + ": classifier head shape mismatch");
  }
  return ck;
}

namespace {

// Everything one optimisation step needs, rebuilt for every batch.
struct StepContext {
  const TrainConfig& cfg;
  const BallConfig* ball;
  int epoch;
  const selex::Hierarchy* hierarchy;
};

struct Optimizers {
  std::map<std::string, Matrix> momentum;
  optim::AdamMoments hyp_w;
  optim::RAdamState hyp_s;
};

Var forward_mlp(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
  return ad::add(ad::matmul(ad::relu(ad::add(ad::matmul(x, w1), b1)), w2), b2);
}

class Augmenter {
 public:
  Augmenter(const TrainConfig& cfg, Rng rng) : sigma_(cfg.jitter), drop_(cfg.dropout), rng_(rng) {}

  // Inputs are standardised, so the global feature std is 1.
  Matrix operator()(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) {
        const double v = x(i, j) + sigma_ * rng_.normal();
        out(i, j) = rng_.uniform() < drop_ ? 0.0 : v;
      }
    return out;
  }

 private:
  double sigma_;
  double drop_;
  Rng rng_;
};

double train_batch(ModelParams& p, Optimizers& opt, const Matrix& x1, const Matrix& x2,
                   const std::vector<Index>& rows, const data::GcdDataset& ds, double lr, const StepContext& ctx) {
  const TrainConfig& cfg = ctx.cfg;
  Tape t;
  std::vector<std::pair<std::string, Var>> leaves;
  auto leaf = [&](const char* name, const Matrix& m) {
    Var v = t.leaf(m);
    leaves.emplace_back(name, v);
    return v;
  };
  Var ew1 = leaf("enc_w1", p.enc_w1), eb1 = leaf("enc_b1", p.enc_b1);
  Var ew2 = leaf("enc_w2", p.enc_w2), eb2 = leaf("enc_b2", p.enc_b2);
  Var pw1 = leaf("proj_w1", p.proj_w1), pb1 = leaf("proj_b1", p.proj_b1);
  Var pw2 = leaf("proj_w2", p.proj_w2), pb2 = leaf("proj_b2", p.proj_b2);

  Var h1 = forward_mlp(t.constant(x1), ew1, eb1, ew2, eb2);
  Var h2 = forward_mlp(t.constant(x2), ew1, eb1, ew2, eb2);
  Var z1 = forward_mlp(h1, pw1, pb1, pw2, pb2);
  Var z2 = forward_mlp(h2, pw1, pb1, pw2, pb2);

  std::vector<bool> labelled(rows.size());
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labelled[i] = ds.labelled[static_cast<std::size_t>(rows[i])];
    labels[i] = ds.labels[static_cast<std::size_t>(rows[i])];
  }

  Var loss;
  if (cfg.method == Method::selex) {
    selex::SelexConfig sc;
    sc.alpha = cfg.selex_alpha;
    sc.lambda_b = cfg.lambda_b;
    sc.tau_pair = cfg.tau_pair;
    sc.tau_sup = cfg.tau_sup;
    sc.agreement_targets = cfg.agreement_targets;
    sc.alpha_d_max = cfg.alpha_d_max;
    sc.total_epochs = cfg.epochs;
    loss = selex::selex_total(z1, z2, *ctx.hierarchy, rows, ctx.epoch, sc, ctx.ball);
  } else {
    replearn::RepLossConfig rc;
    rc.tau_unsup = cfg.tau_unsup;
    rc.tau_sup = cfg.tau_sup;
    rc.lambda_b = cfg.lambda_b;
    rc.alpha_d_max = cfg.alpha_d_max;
    rc.total_epochs = cfg.epochs;
    replearn::RepBatch rb{z1, z2, labelled, labels};
    loss = ctx.ball ? replearn::hyp_rep_loss(rb, ctx.epoch, rc, *ctx.ball) : replearn::euclid_rep_loss(rb, rc);
  }

  Var protos, hw, hs;
  if (cfg.method == Method::simgcd) {
    Var out1, out2;
    if (ctx.ball) {
      hw = leaf("hyp_w", p.hyp_w);
      hs = leaf("hyp_s", p.hyp_s);
      out1 = classifier::hyp_linear_rows(manifold::lift_rows(h1, *ctx.ball), hw, hs, *ctx.ball);
      out2 = classifier::hyp_linear_rows(manifold::lift_rows(h2, *ctx.ball), hw, hs, *ctx.ball);
    } else {
      protos = leaf("protos", p.protos);
      out1 = ad::matmul(ad::normalize_rows(h1), ad::transpose(protos));
      out2 = ad::matmul(ad::normalize_rows(h2), ad::transpose(protos));
    }
    classifier::ClsBatch cb{ad::softmax_rows(ad::scale(out1, 1.0 / cfg.tau_student)),
                            ad::softmax_rows(ad::scale(out2, 1.0 / cfg.tau_student)),
                            softmax_rows(out1.value() / cfg.tau_teacher),
                            softmax_rows(out2.value() / cfg.tau_teacher),
                            labelled,
                            labels};
    classifier::DistillConfig dc{cfg.tau_student, cfg.tau_teacher, cfg.entropy_weight, cfg.lambda_b};
    loss = ad::add(loss, classifier::total_cls_loss(cb, dc));
  }

  const double value = loss.scalar();
  if (!std::isfinite(value)) throw DivergenceError("non-finite loss");
  t.backward(loss);

  std::map<std::string, Matrix*> slots;
  for (auto& [name, m] : p.named()) slots[name] = m;
  for (const auto& [name, v] : leaves) {
    if (name == "hyp_w") {
      optim::adam_step(p.hyp_w, v.grad(), opt.hyp_w, opt.hyp_s.adam, name);
    } else if (name == "hyp_s") {
      const PoincarePoint s(p.hyp_s.row(0).transpose(), *ctx.ball);
      p.hyp_s.row(0) =
          optim::riemannian_adam_step(s, v.grad().row(0).transpose(), opt.hyp_s, *ctx.ball).coords().transpose();
    } else {
      optim::sgd_step(*slots.at(name), v.grad(), opt.momentum[name], lr, cfg.momentum, name);
    }
  }
  if (protos.valid()) {
    classifier::EuclidPrototypes c{p.protos};
    c.normalize();
    p.protos = c.protos;
  }
  return value;
}

}  // namespace

json metrics_json(const assignment::AccReport& r, const std::vector<double>& losses, const TrainConfig& cfg,
                  double wall_time_s) {
  return json{{"acc_all", r.acc_all},
              {"acc_old", r.acc_old},
              {"acc_new", r.acc_new},
              {"n_old", r.n_old},
              {"n_new", r.n_new},
              {"per_epoch_losses", losses},
              {"config", to_json(cfg)},
              {"seed", cfg.seed},
              {"wall_time_s", wall_time_s}};
}

TrainResult train_run(const data::GcdDataset& ds, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  ds.validate();
  if (ds.discovery_empty()) throw DataError("dataset has no unlabelled rows to discover");
  const Index n = ds.size();
  if (n < 2) throw DataError("dataset needs at least 2 rows");

  std::optional<BallConfig> ball;
  if (cfg.space == Space::hyperbolic) ball.emplace(cfg.curvature, cfg.clip);

  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  ck.config = cfg;
  ck.input_dim = static_cast<int>(ds.features.cols());
  ck.num_classes = ds.num_classes;
  ModelParams& p = ck.params;
  p = init_params(cfg, ck.input_dim, ck.num_classes);
  p.input_mean = ds.features.colwise().mean();
  const double var = (ds.features.rowwise() - p.input_mean.row(0)).squaredNorm() / static_cast<double>(ds.features.size());
  p.input_scale(0, 0) = var > 0.0 ? std::sqrt(var) : 1.0;
  round_to_float(p);
  const Matrix x = standardize(p, ds.features);

  Rng root(cfg.seed);
  Augmenter augment(cfg, root.split("augmentation"));
  Rng batch_rng = root.split("data").split("batches");
  Optimizers opt;
  opt.hyp_s.adam.lr = cfg.hyp_lr;
  const optim::SgdState sched{cfg.lr, cfg.min_lr, std::max(cfg.epochs, 1), cfg.momentum};
  const Index bs = std::min<Index>(cfg.batch_size, n);

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = optim::cosine_lr(epoch, sched);
    std::optional<selex::Hierarchy> hierarchy;
    if (cfg.method == Method::selex)
      hierarchy = selex::build_hierarchy(encode(p, ds.features), ds.labelled, ds.labels, ds.num_classes,
                                         cfg.seed + static_cast<std::uint64_t>(epoch), cfg.kmeans_iters);
    const StepContext ctx{cfg, ball ? &*ball : nullptr, epoch, hierarchy ? &*hierarchy : nullptr};

    std::iota(order.begin(), order.end(), Index{0});
    shuffle(order.begin(), order.end(), batch_rng);
    double total = 0.0;
    int batches = 0;
    for (Index start_row = 0; start_row < n;) {
      Index end_row = std::min(start_row + bs, n);
      if (n - end_row < 2) end_row = n;  // fold a trailing singleton into this batch
      std::vector<Index> rows(order.begin() + start_row, order.begin() + end_row);
      Matrix xb(static_cast<Index>(rows.size()), x.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) xb.row(static_cast<Index>(i)) = x.row(rows[i]);
      const Matrix v1 = augment(xb);
      const Matrix v2 = augment(xb);
      try {
        total += train_batch(p, opt, v1, v2, rows, ds, lr, ctx);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      } catch (const std::domain_error& e) {
        // Inputs were validated up front, so a domain failure here means values blew up.
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      ++batches;
      start_row = end_row;
    }
    res.epoch_losses.push_back(total / batches);
  }

  // Checkpoints store float32; evaluate the rounded model so eval_run on a
  // saved checkpoint reproduces the reported numbers.
  round_to_float(p);
  res.report = eval_run(ds, ck);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.metrics = metrics_json(res.report, res.epoch_losses, cfg, wall);
  return res;
}

assignment::AccReport eval_run(const data::GcdDataset& ds, const Checkpoint& ck) {
  ds.validate();
  if (ds.features.cols() != ck.input_dim)
    throw DataError("feature width " + std::to_string(ds.features.cols()) + " does not match checkpoint input width " +
                    std::to_string(ck.input_dim));
  const TrainConfig& cfg = ck.config;
  const Matrix f = encode(ck.params, ds.features);
  const std::vector<bool> unl = unlabelled_mask(ds);

  std::vector<int> pred_all;
  if (cfg.method == Method::simgcd) {
    if (ds.num_classes != ck.num_classes)
      throw DataError("dataset has " + std::to_string(ds.num_classes) + " classes, head has " +
                      std::to_string(ck.num_classes));
    if (cfg.space == Space::hyperbolic) {
      classifier::HypClassifierParams head{ck.params.hyp_w, ck.params.hyp_s.row(0).transpose()};
      pred_all = assignment::parametric_predict(f, head, BallConfig(cfg.curvature, cfg.clip));
    } else {
      pred_all = assignment::parametric_predict(f, classifier::EuclidPrototypes{ck.params.protos});
    }
  } else {
    assignment::KMeansOptions opt{ds.num_classes, cfg.kmeans_iters, cfg.seed};
    pred_all = assignment::semi_sup_kmeans(f, ds.labelled, ds.labels, opt).assignments;
  }
  std::vector<int> y_true, y_pred;
  for (std::size_t i = 0; i < unl.size(); ++i)
    if (unl[i]) {
      y_true.push_back(ds.labels[i]);
      y_pred.push_back(pred_all[i]);
    }
  return assignment::hungarian_acc(y_true, y_pred, ds.num_classes, ds.old_classes);
}

void export_embeddings(const data::GcdDataset& ds, const Checkpoint& ck, const fs::path& prefix,
                       const std::string& space_tag) {
  const Space space = parse_space(space_tag);
  if (ds.features.cols() != ck.input_dim)
    throw DataError("feature width " + std::to_string(ds.features.cols()) + " does not match checkpoint input width " +
                    std::to_string(ck.input_dim));
  if (prefix.has_parent_path() && !fs::exists(prefix.parent_path()))
    throw DataError("export directory " + prefix.parent_path().string() + " does not exist");
  const Matrix f = encode(ck.params, ds.features);
  const fs::path feat_path = prefix.string() + ".features.hypf";
  data::write_matrix(feat_path, f);
  json side{{"space", to_string(space)},
            {"dims", {{"rows", f.rows()}, {"feature", f.cols()}}},
            {"features", feat_path.filename().string()}};
  if (space == Space::hyperbolic) {
    const BallConfig ball(ck.config.curvature, ck.config.clip);
    Tape t;
    const Matrix z = manifold::lift_rows(t.constant(f), ball).value();
    const fs::path ball_path = prefix.string() + ".ball.hypf";
    data::write_matrix(ball_path, z);
    side["curvature"] = ball.curvature();
    side["clip"] = ball.clip_radius();
    side["ball"] = ball_path.filename().string();
  }
  write_json(prefix.string() + ".json", side);
}

std::vector<AblationCell> ablate(const data::GcdDataset& ds, const TrainConfig& base,
                                 const std::vector<double>& curvatures, const std::vector<double>& clips,
                                 const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<AblationCell> cells;
  for (double c : curvatures)
    for (double r : clips) {
      TrainConfig cfg = base;
      cfg.space = Space::hyperbolic;
      cfg.curvature = c;
      cfg.clip = r;
      TrainResult res = train_run(ds, cfg);
      AblationCell cell{c, r, res.metrics, out_dir / ("c" + fmt_g(c) + "_r" + fmt_g(r) + ".json")};
      write_json(cell.path, cell.metrics);
      cells.push_back(std::move(cell));
    }
  return cells;
}

json compare_spaces(const data::GcdDataset& ds, const TrainConfig& base) {
  TrainConfig e = base, h = base;
  e.space = Space::euclidean;
  h.space = Space::hyperbolic;
  const json me = train_run(ds, e).metrics;
  const json mh = train_run(ds, h).metrics;
  json delta;
  for (const char* k : {"acc_all", "acc_old", "acc_new"}) delta[k] = mh[k].get<double>() - me[k].get<double>();
  return json{{"euclidean", me}, {"hyperbolic", mh}, {"delta", delta}};
}

}  // namespace hypcd::train

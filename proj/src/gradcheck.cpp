#include "hypcd/gradcheck.hpp"

#include "hypcd/autodiff.hpp"
#include "hypcd/ball_ops.hpp"
#include "hypcd/classifier.hpp"
#include "hypcd/replearn.hpp"
#include "hypcd/rng.hpp"
#include "hypcd/selex.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace hypcd::gradcheck {

using namespace hypcd::ad;

namespace {

Matrix gaussian(Index r, Index c, double std, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = std * rng.normal();
  return m;
}

Matrix softmax_rows_plain(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

Var top(const Var& x, Index b) {
  std::vector<Index> rows(static_cast<std::size_t>(b));
  std::iota(rows.begin(), rows.end(), Index{0});
  return select_rows(x, rows);
}

Var bottom(const Var& x, Index b) {
  std::vector<Index> rows(static_cast<std::size_t>(b));
  std::iota(rows.begin(), rows.end(), b);
  return select_rows(x, rows);
}

// Labelled mask and labels with at least one same-class labelled pair.
void random_labels(Index b, int classes, Rng& rng, std::vector<bool>& labelled, std::vector<int>& labels) {
  labelled.assign(static_cast<std::size_t>(b), false);
  labels.assign(static_cast<std::size_t>(b), 0);
  for (Index i = 0; i < b; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    labelled[static_cast<std::size_t>(i)] = rng.uniform() < 0.6;
  }
  labelled[0] = labelled[1] = true;
  labels[1] = labels[0];
}

struct Case {
  GraphFn f;
  Matrix x;
};

using CaseFactory = std::function<Case(Rng&)>;

std::vector<std::pair<std::string, CaseFactory>> factories() {
  std::vector<std::pair<std::string, CaseFactory>> out;
  constexpr Index kB = 6;
  constexpr Index kD = 5;

  out.emplace_back("rep_euclidean", [](Rng& rng) {
    std::vector<bool> lab;
    std::vector<int> y;
    random_labels(kB, 3, rng, lab, y);
    replearn::RepLossConfig cfg;
    return Case{[=](Tape&, const Var& x) {
                  return replearn::euclid_rep_loss({top(x, kB), bottom(x, kB), lab, y}, cfg);
                },
                gaussian(2 * kB, kD, 1.0, rng)};
  });
  for (double alpha : {0.0, 0.5, 1.0}) {
    out.emplace_back("rep_hyperbolic_alpha" + std::to_string(alpha).substr(0, 3), [alpha](Rng& rng) {
      std::vector<bool> lab;
      std::vector<int> y;
      random_labels(kB, 3, rng, lab, y);
      replearn::RepLossConfig cfg;
      const double c = 0.02 + 0.1 * rng.uniform();
      const double r = 1.0 + 1.5 * rng.uniform();
      return Case{[=](Tape&, const Var& x) {
                    return replearn::hyp_rep_loss({top(x, kB), bottom(x, kB), lab, y}, alpha, cfg, BallConfig(c, r));
                  },
                  // Inside the clip radius so the clip kink is not probed.
                  gaussian(2 * kB, kD, 0.3, rng)};
    });
  }

  constexpr Index kI = 16;
  constexpr int kK = 8;
  auto cls_labels = [](Rng& rng, std::vector<bool>& lab, std::vector<int>& y) {
    lab.assign(kB, false);
    y.assign(kB, 0);
    for (Index i = 0; i < kB; ++i) {
      lab[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(kK));
    }
    lab[0] = true;
  };

  // Euclidean head: packed features (2B x I), prototypes fixed; and the reverse.
  auto euclid_probs = [](const Var& h, const Var& c, double tau) {
    return classifier::proto_probs_rows(normalize_rows(h), c, tau);
  };
  out.emplace_back("cls_euclidean_features", [=](Rng& rng) {
    std::vector<bool> lab;
    std::vector<int> y;
    cls_labels(rng, lab, y);
    const Matrix protos = gaussian(kK, kI, 1.0, rng).rowwise().normalized();
    const Matrix h = gaussian(2 * kB, kI, 1.0, rng);
    const classifier::DistillConfig dc;
    const Matrix teach = softmax_rows_plain(h.rowwise().normalized() * protos.transpose() / dc.tau_teacher);
    return Case{[=](Tape& t, const Var& x) {
                  Var c = t.constant(protos);
                  classifier::ClsBatch b{euclid_probs(top(x, kB), c, dc.tau_student),
                                         euclid_probs(bottom(x, kB), c, dc.tau_student), teach.topRows(kB),
                                         teach.bottomRows(kB), lab, y};
                  return classifier::total_cls_loss(b, dc);
                },
                h};
  });
  out.emplace_back("cls_euclidean_prototypes", [=](Rng& rng) {
    std::vector<bool> lab;
    std::vector<int> y;
    cls_labels(rng, lab, y);
    const Matrix protos = gaussian(kK, kI, 1.0, rng).rowwise().normalized();
    const Matrix h = gaussian(2 * kB, kI, 1.0, rng);
    const classifier::DistillConfig dc;
    const Matrix teach = softmax_rows_plain(h.rowwise().normalized() * protos.transpose() / dc.tau_teacher);
    return Case{[=](Tape& t, const Var& x) {
                  Var hv = t.constant(h);
                  classifier::ClsBatch b{euclid_probs(top(hv, kB), x, dc.tau_student),
                                         euclid_probs(bottom(hv, kB), x, dc.tau_student), teach.topRows(kB),
                                         teach.bottomRows(kB), lab, y};
                  return classifier::total_cls_loss(b, dc);
                },
                protos};
  });

  // Hyperbolic head: gradient w.r.t. lifted inputs, weight and bias.
  enum class Wrt { features, weight, bias };
  for (auto [name, wrt] : {std::pair{"cls_hyperbolic_features", Wrt::features},
                           std::pair{"cls_hyperbolic_weight", Wrt::weight},
                           std::pair{"cls_hyperbolic_bias", Wrt::bias}}) {
    out.emplace_back(name, [=](Rng& rng) {
      std::vector<bool> lab;
      std::vector<int> y;
      cls_labels(rng, lab, y);
      const BallConfig ball(0.05, 2.3);
      const Matrix h = gaussian(2 * kB, kI, 0.4, rng);
      const Matrix w = gaussian(kI, kK, 0.25, rng);
      const Matrix s = gaussian(1, kK, 0.2, rng);
      const classifier::DistillConfig dc;
      Tape tt;
      const Matrix out_v =
          classifier::hyp_linear_rows(manifold::lift_rows(tt.constant(h), ball), tt.constant(w), tt.constant(s), ball)
              .value();
      const Matrix teach = softmax_rows_plain(out_v / dc.tau_teacher);
      const Matrix x0 = wrt == Wrt::features ? h : (wrt == Wrt::weight ? w : s);
      return Case{[=](Tape& t, const Var& x) {
                    Var hv = wrt == Wrt::features ? x : t.constant(h);
                    Var wv = wrt == Wrt::weight ? x : t.constant(w);
                    Var sv = wrt == Wrt::bias ? x : t.constant(s);
                    Var z = manifold::lift_rows(hv, ball);
                    auto probs = [&](const Var& zz) {
                      return classifier::hyp_probs_rows(zz, wv, sv, ball, dc.tau_student);
                    };
                    classifier::ClsBatch b{probs(top(z, kB)), probs(bottom(z, kB)), teach.topRows(kB),
                                           teach.bottomRows(kB), lab, y};
                    return classifier::total_cls_loss(b, dc);
                  },
                  x0};
    });
  }

  // Self-expertise objectives: |B| = 8, d = 32, K = 4.
  constexpr Index kSB = 8;
  constexpr Index kSD = 32;
  auto hierarchy_for = [](Rng& rng) {
    const Matrix feats = gaussian(kSB, 3, 1.0, rng);
    std::vector<bool> lab(kSB, false);
    std::vector<int> y(kSB, 0);
    lab[0] = lab[1] = true;
    y[0] = y[1] = 0;
    return selex::build_hierarchy(feats, lab, y, 4, rng(), 100);
  };
  std::vector<Index> ids(kSB);
  std::iota(ids.begin(), ids.end(), Index{0});
  for (bool hyperbolic : {false, true}) {
    const std::string tag = hyperbolic ? "_hyperbolic" : "_euclidean";
    out.emplace_back("selex_use" + tag, [=](Rng& rng) {
      const selex::Hierarchy h = hierarchy_for(rng);
      selex::SelexConfig cfg;
      cfg.alpha = rng.uniform();
      const double alpha_d = rng.uniform();
      const selex::TargetMatrix tm = selex::target_matrix(h, ids, cfg.alpha);
      return Case{[=](Tape&, const Var& x) {
                    const BallConfig ball(0.05, 2.3);
                    return selex::use_loss(top(x, kSB), bottom(x, kSB), tm, alpha_d, cfg, hyperbolic ? &ball : nullptr);
                  },
                  gaussian(2 * kSB, kSD, 0.1, rng)};
    });
    out.emplace_back("selex_sse" + tag, [=](Rng& rng) {
      const selex::Hierarchy h = hierarchy_for(rng);
      selex::SelexConfig cfg;
      const double alpha_d = rng.uniform();
      return Case{[=](Tape&, const Var& x) {
                    const BallConfig ball(0.05, 2.3);
                    return selex::sse_loss(top(x, kSB), bottom(x, kSB), h, ids, alpha_d, cfg,
                                           hyperbolic ? &ball : nullptr);
                  },
                  gaussian(2 * kSB, kSD, 0.1, rng)};
    });
    out.emplace_back("selex_total" + tag, [=](Rng& rng) {
      const selex::Hierarchy h = hierarchy_for(rng);
      selex::SelexConfig cfg;
      cfg.total_epochs = 10;
      const int epoch = static_cast<int>(rng.below(11));
      return Case{[=](Tape&, const Var& x) {
                    const BallConfig ball(0.05, 2.3);
                    return selex::selex_total(top(x, kSB), bottom(x, kSB), h, ids, epoch, cfg,
                                              hyperbolic ? &ball : nullptr);
                  },
                  gaussian(2 * kSB, kSD, 0.1, rng)};
    });
  }
  return out;
}

}  // namespace

std::vector<LossCheck> run_suite(int configs, std::uint64_t seed, double tol) {
  std::vector<LossCheck> results;
  const Rng root(seed);
  for (const auto& [name, make] : factories()) {
    LossCheck lc{name, 0, 0, 0.0};
    Rng rng = root.split(name);
    for (int i = 0; i < configs; ++i) {
      const Case c = make(rng);
      const GradCheckReport rep = finite_diff_check(c.f, c.x, 1e-5, tol);
      ++lc.configs;
      lc.max_rel_err = std::max(lc.max_rel_err, rep.max_rel_err);
      if (!rep.pass) ++lc.failures;
    }
    results.push_back(lc);
  }
  return results;
}

}  // namespace hypcd::gradcheck

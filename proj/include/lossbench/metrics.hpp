#ifndef LOSSBENCH_METRICS_HPP
#define LOSSBENCH_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossbench/autodiff.hpp"
#include "lossbench/graph.hpp"
#include "lossbench/graph_ops.hpp"
#include "lossbench/optim.hpp"

namespace lossbench {

// ---------------------------------------------------------------------------
// Metric schema
// ---------------------------------------------------------------------------

/// The 21 metric ids in canonical report order.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "node_cls_accuracy", "node_cls_precision", "node_cls_recall", "node_cls_f1",
      "LP_accuracy",       "LP_precision",       "LP_recall",       "LP_f1",
      "LP_auroc",          "LP_aupr",            "LP_specificity",  "cosine_adj_corr",
      "dot_adj_corr",      "euclidean_adj_corr", "graph_reconstruction_bce_loss",
      "silhouette",        "calinski_harabasz",  "knn_consistency", "coherence",
      "selfCluster",       "rankme"};
  return names;
}

inline bool metric_higher_is_better(const std::string& name) {
  return name != "graph_reconstruction_bce_loss" && name != "selfCluster";
}

struct MetricVector {
  std::map<std::string, double> values;
  std::set<std::string> degenerate;  // computed but statistically undefined, reported 0/inf
  std::set<std::string> absent;      // could not be computed at all

  std::string flags() const {
    std::string out;
    for (const std::string& m : absent) out += (out.empty() ? "" : ";") + ("absent:" + m);
    for (const std::string& m : degenerate)
      out += (out.empty() ? "" : ";") + ("degenerate:" + m);
    return out;
  }
};

inline std::string metric_csv_header() {
  std::string out = "model,loss,dataset,setting,seed";
  for (const std::string& m : metric_names()) out += "," + m;
  return out + ",flags";
}

inline std::string metric_csv_row(const std::string& model, const std::string& loss,
                                  const std::string& dataset, const std::string& setting,
                                  std::uint64_t seed, const MetricVector& mv) {
  std::ostringstream out;
  out.precision(17);
  out << model << ',' << loss << ',' << dataset << ',' << setting << ',' << seed;
  for (const std::string& m : metric_names()) {
    auto it = mv.values.find(m);
    out << ',' << (it == mv.values.end() ? 0.0 : it->second);
  }
  out << ',' << mv.flags();
  return out.str();
}

/// Scalar metric plus a flag for statistically undefined cases.
struct ScalarMetric {
  double value = 0.0;
  bool degenerate = false;
};

// ---------------------------------------------------------------------------
// Confusion-count arithmetic
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
  double precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  double recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  double specificity() const {
    return tn + fp == 0 ? 0.0 : static_cast<double>(tn) / static_cast<double>(tn + fp);
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

namespace detail {

inline double sq_dist(const Tensor& Z, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < Z.cols; ++c) {
    const double d = Z(i, c) - Z(j, c);
    s += d * d;
  }
  return s;
}

inline double dot_rows(const Tensor& Z, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < Z.cols; ++c) s += Z(i, c) * Z(j, c);
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Node classification probe
// ---------------------------------------------------------------------------

struct ProbeConfig {
  std::size_t repeats = 5;
  std::size_t epochs = 200;
  std::size_t hidden = 64;
  AdamConfig adam;
};

struct ProbeResult {
  double accuracy_mean = 0, accuracy_std = 0;
  double precision_mean = 0, precision_std = 0;
  double recall_mean = 0, recall_std = 0;
  double f1_mean = 0, f1_std = 0;
};

namespace detail {

struct StratifiedSplit {
  std::vector<std::size_t> train, val, test;
};

/// 60/20/20 per-class split over the labeled nodes.
inline StratifiedSplit stratified_split(const std::vector<int>& labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) by_class[labels[i]].push_back(i);
  StratifiedSplit s;
  std::mt19937_64 rng(seed);
  for (auto& [c, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = ids.size();
    const std::size_t n_test = n / 5;
    const std::size_t n_val = n / 5;
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_test)
        s.test.push_back(ids[k]);
      else if (k < n_test + n_val)
        s.val.push_back(ids[k]);
      else
        s.train.push_back(ids[k]);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Macro-averaged confusion metrics over the classes present in `truth`.
inline void macro_scores(const std::vector<int>& truth, const std::vector<int>& pred,
                         int num_classes, double& acc, double& prec, double& rec, double& f1) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == pred[i]) ++correct;
  acc = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  prec = rec = f1 = 0.0;
  std::size_t present = 0;
  for (int c = 0; c < num_classes; ++c) {
    bool in_test = false;
    for (int t : truth)
      if (t == c) in_test = true;
    if (!in_test) {
      std::fprintf(stderr, "probe: class %d absent from test split, excluded from macro\n", c);
      continue;
    }
    ConfusionCounts cc;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      if (t && p)
        ++cc.tp;
      else if (!t && p)
        ++cc.fp;
      else if (t && !p)
        ++cc.fn;
      else
        ++cc.tn;
    }
    prec += cc.precision();
    rec += cc.recall();
    f1 += cc.f1();
    ++present;
  }
  if (present > 0) {
    prec /= static_cast<double>(present);
    rec /= static_cast<double>(present);
    f1 /= static_cast<double>(present);
  }
}

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace detail

/// Freeze Z, train a 1-hidden-layer MLP on a stratified 60/20/20 split, and
/// report accuracy plus macro precision/recall/F1 (x100, mean/std over repeats).
inline ProbeResult node_cls_probe(const Tensor& Z, const std::vector<int>& labels,
                                  const ProbeConfig& cfg, std::uint64_t seed) {
  if (Z.rows != labels.size())
    throw std::invalid_argument("node_cls_probe: label count mismatch");
  int num_classes = 0;
  for (int l : labels) num_classes = std::max(num_classes, l + 1);
  if (num_classes < 2) throw std::invalid_argument("node_cls_probe: need >= 2 classes");
  if (cfg.repeats == 0) throw std::invalid_argument("node_cls_probe: repeats must be >= 1");

  std::vector<double> accs, precs, recs, f1s;
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    const std::uint64_t rep_seed = detail::mix_seed(seed + 0x51ull * rep);
    auto split = detail::stratified_split(labels, rep_seed);
    if (split.train.empty() || split.test.empty())
      throw std::invalid_argument("node_cls_probe: empty train or test split");
    {
      std::set<int> train_classes, test_classes;
      for (std::size_t i : split.train) train_classes.insert(labels[i]);
      for (std::size_t i : split.test) test_classes.insert(labels[i]);
      if (train_classes.size() < 2 || test_classes.size() < 2)
        throw std::invalid_argument("node_cls_probe: need >= 2 classes in train and test");
    }

    Tensor Xtr(split.train.size(), Z.cols), onehot(split.train.size(), num_classes);
    for (std::size_t r = 0; r < split.train.size(); ++r) {
      for (std::size_t c = 0; c < Z.cols; ++c) Xtr(r, c) = Z(split.train[r], c);
      onehot(r, labels[split.train[r]]) = 1.0;
    }

    std::map<std::string, Tensor> params = {
        {"W1", glorot_uniform(Z.cols, cfg.hidden, rep_seed ^ 0xa1ull)},
        {"b1", Tensor::zeros(1, cfg.hidden)},
        {"W2", glorot_uniform(cfg.hidden, num_classes, rep_seed ^ 0xa2ull)},
        {"b2", Tensor::zeros(1, num_classes)}};
    Adam opt(cfg.adam);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      Tape tape;
      std::map<std::string, NodeId> ids;
      for (auto& [name, t] : params) ids[name] = tape.parameter(t);
      NodeId X = tape.constant(Xtr);
      NodeId h = tape.relu(tape.add(tape.matmul(X, ids["W1"]), ids["b1"]));
      NodeId logits = tape.add(tape.matmul(h, ids["W2"]), ids["b2"]);
      NodeId probs = tape.softmax(logits, Axis::Cols);
      NodeId picked = tape.sum(tape.mul(probs, tape.constant(onehot)), Axis::Cols);
      NodeId loss = tape.scalar_mul(tape.sum(tape.log_op(picked)),
                                    -1.0 / static_cast<double>(split.train.size()));
      auto grads = tape.backward(loss);
      std::map<std::string, Tensor> named;
      for (auto& [name, id] : ids) named[name] = grads.at(id);
      opt.step(params, named);
    }

    // predict on the frozen probe
    std::vector<int> truth, pred;
    for (std::size_t i : split.test) {
      std::vector<double> hdn(cfg.hidden, 0.0);
      for (std::size_t hcol = 0; hcol < cfg.hidden; ++hcol) {
        double v = params["b1"](0, hcol);
        for (std::size_t c = 0; c < Z.cols; ++c) v += Z(i, c) * params["W1"](c, hcol);
        hdn[hcol] = std::max(0.0, v);
      }
      int best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (int cls = 0; cls < num_classes; ++cls) {
        double v = params["b2"](0, cls);
        for (std::size_t hcol = 0; hcol < cfg.hidden; ++hcol)
          v += hdn[hcol] * params["W2"](hcol, cls);
        if (v > best_v) {
          best_v = v;
          best = cls;
        }
      }
      truth.push_back(labels[i]);
      pred.push_back(best);
    }
    double a, p, r, f;
    detail::macro_scores(truth, pred, num_classes, a, p, r, f);
    accs.push_back(a * 100.0);
    precs.push_back(p * 100.0);
    recs.push_back(r * 100.0);
    f1s.push_back(f * 100.0);
  }

  ProbeResult out;
  detail::mean_std(accs, out.accuracy_mean, out.accuracy_std);
  detail::mean_std(precs, out.precision_mean, out.precision_std);
  detail::mean_std(recs, out.recall_mean, out.recall_std);
  detail::mean_std(f1s, out.f1_mean, out.f1_std);
  return out;
}

// ---------------------------------------------------------------------------
// Link prediction
// ---------------------------------------------------------------------------

struct LinkPredResult {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, specificity = 0;
  double auroc = 0, aupr = 0;
};

/// Metrics for a binary score set: counting metrics at `threshold`, AUROC by
/// midrank statistic, AUPR by precision-recall step integration. All x100.
inline LinkPredResult binary_scores_eval(const std::vector<double>& pos,
                                         const std::vector<double>& neg,
                                         double threshold = 0.5) {
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("binary_scores_eval: empty score set");
  ConfusionCounts cc;
  for (double s : pos) (s >= threshold ? cc.tp : cc.fn)++;
  for (double s : neg) (s >= threshold ? cc.fp : cc.tn)++;

  // AUROC: midranks of the pooled sorted scores
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
    for (std::size_t k = i; k < j; ++k)
      if (all[k].positive) rank_sum_pos += midrank;
    i = j;
  }
  const double P = static_cast<double>(pos.size()), N = static_cast<double>(neg.size());
  const double auroc = (rank_sum_pos - P * (P + 1.0) / 2.0) / (P * N);

  // AUPR: descend through score groups, accumulate precision * delta-recall
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });
  double aupr = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    for (std::size_t k = i; k < j; ++k) (all[k].positive ? tp : fp)++;
    const double recall = static_cast<double>(tp) / P;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    aupr += precision * (recall - prev_recall);
    prev_recall = recall;
    i = j;
  }

  LinkPredResult out;
  out.accuracy = cc.accuracy() * 100.0;
  out.precision = cc.precision() * 100.0;
  out.recall = cc.recall() * 100.0;
  out.f1 = cc.f1() * 100.0;
  out.specificity = cc.specificity() * 100.0;
  out.auroc = auroc * 100.0;
  out.aupr = aupr * 100.0;
  return out;
}

/// Score held-out pairs with sigmoid(z_u . z_v) and evaluate.
inline LinkPredResult link_pred_eval(const Tensor& Z, const EdgeSplit& split,
                                     double threshold = 0.5) {
  if (split.test_pos_edges.empty() || split.test_neg_pairs.empty())
    throw std::invalid_argument("link_pred_eval: empty test split");
  std::vector<double> pos, neg;
  for (auto [u, v] : split.test_pos_edges)
    pos.push_back(detail::sigmoid(detail::dot_rows(Z, u, v)));
  for (auto [u, v] : split.test_neg_pairs)
    neg.push_back(detail::sigmoid(detail::dot_rows(Z, u, v)));
  return binary_scores_eval(pos, neg, threshold);
}

// ---------------------------------------------------------------------------
// Similarity-adjacency correlations
// ---------------------------------------------------------------------------

namespace detail {

/// Pearson correlation between pairwise similarity values (strict upper
/// triangle) and the 0/1 adjacency indicator, x100.
template <typename SimFn>
ScalarMetric adjacency_correlation(const Graph& g, SimFn sim) {
  if (g.n < 2) throw std::invalid_argument("adjacency correlation: need n >= 2");
  const double npairs = static_cast<double>(g.n) * static_cast<double>(g.n - 1) / 2.0;
  double sx = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = i + 1; j < g.n; ++j) {
      const double x = sim(i, j);
      sx += x;
      sxx += x * x;
      if (g.has_edge(i, j)) sxy += x;
    }
  const double m = static_cast<double>(g.num_edges());
  const double var_x = sxx - sx * sx / npairs;
  const double var_y = m - m * m / npairs;
  if (var_x <= 1e-12 || var_y <= 1e-12) return {0.0, true};
  const double cov = sxy - sx * m / npairs;
  return {cov / std::sqrt(var_x * var_y) * 100.0, false};
}

}  // namespace detail

inline ScalarMetric cosine_adj_corr(const Tensor& Z, const Graph& g) {
  std::vector<double> norms(g.n);
  for (std::size_t i = 0; i < g.n; ++i) norms[i] = std::sqrt(detail::dot_rows(Z, i, i));
  return detail::adjacency_correlation(g, [&](std::size_t i, std::size_t j) {
    return detail::dot_rows(Z, i, j) / std::max(1e-12, norms[i] * norms[j]);
  });
}

inline ScalarMetric dot_adj_corr(const Tensor& Z, const Graph& g) {
  return detail::adjacency_correlation(
      g, [&](std::size_t i, std::size_t j) { return detail::dot_rows(Z, i, j); });
}

inline ScalarMetric euclidean_adj_corr(const Tensor& Z, const Graph& g) {
  return detail::adjacency_correlation(
      g, [&](std::size_t i, std::size_t j) { return -detail::sq_dist(Z, i, j); });
}

// ---------------------------------------------------------------------------
// Graph reconstruction BCE
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy of sigmoid(z_i . z_j) against adjacency over an
/// explicit pair set, probabilities clamped to [1e-7, 1-1e-7], x100.
inline double reconstruction_bce(const Tensor& Z, const Graph& g,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("reconstruction_bce: empty pair set");
  double total = 0.0;
  for (auto [i, j] : pairs) {
    double p = detail::sigmoid(detail::dot_rows(Z, i, j));
    p = std::clamp(p, 1e-7, 1.0 - 1e-7);
    total += g.has_edge(i, j) ? -std::log(p) : -std::log1p(-p);
  }
  return total / static_cast<double>(pairs.size()) * 100.0;
}

/// Pair sample: every edge plus |E| uniformly random distinct pairs.
inline double reconstruction_bce(const Tensor& Z, const Graph& g, std::uint64_t seed) {
  if (g.num_edges() == 0) throw std::invalid_argument("reconstruction_bce: graph has no edges");
  std::vector<std::pair<std::size_t, std::size_t>> pairs = g.edges;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, g.n - 1);
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    std::size_t u = pick(rng), v = pick(rng);
    while (u == v) v = pick(rng);
    pairs.emplace_back(u, v);
  }
  return reconstruction_bce(Z, g, pairs);
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<std::size_t> assign;
  Tensor centroids;
  std::vector<double> inertia;  // objective after each assignment pass
};

/// Seeded k-means++ initialization followed by Lloyd iterations to an
/// assignment fixpoint; empty clusters reseed to the farthest point.
inline KMeansResult kmeans(const Tensor& Z, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 100) {
  const std::size_t n = Z.rows;
  if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");
  std::mt19937_64 rng(seed);
  Tensor centroids(k, Z.cols);
  auto set_centroid = [&](std::size_t c, std::size_t point) {
    for (std::size_t d = 0; d < Z.cols; ++d) centroids(c, d) = Z(point, d);
  };
  // k-means++ seeding
  set_centroid(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t cc = 0; cc < c; ++cc) {
        double s = 0.0;
        for (std::size_t d = 0; d < Z.cols; ++d) {
          const double diff = Z(i, d) - centroids(cc, d);
          s += diff * diff;
        }
        best = std::min(best, s);
      }
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      set_centroid(c, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      continue;
    }
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        chosen = i;
        break;
      }
    }
    set_centroid(c, chosen);
  }

  KMeansResult res;
  res.assign.assign(n, 0);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // assignment pass (ties to the lowest centroid id)
    std::vector<std::size_t> next(n);
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t d = 0; d < Z.cols; ++d) {
          const double diff = Z(i, d) - centroids(c, d);
          s += diff * diff;
        }
        if (s < best) {
          best = s;
          arg = c;
        }
      }
      next[i] = arg;
      objective += best;
    }
    const bool stable = iter > 0 && next == res.assign;
    res.assign = next;
    res.inertia.push_back(objective);
    if (stable) break;
    // update pass
    Tensor sums = Tensor::zeros(k, Z.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.assign[i]];
      for (std::size_t d = 0; d < Z.cols; ++d) sums(res.assign[i], d) += Z(i, d);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed to the point farthest from its current centroid
        double worst = -1.0;
        std::size_t far = 0;
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t d = 0; d < Z.cols; ++d) {
            const double diff = Z(i, d) - centroids(res.assign[i], d);
            s += diff * diff;
          }
          if (s > worst) {
            worst = s;
            far = i;
          }
        }
        set_centroid(c, far);
      } else {
        for (std::size_t d = 0; d < Z.cols; ++d)
          centroids(c, d) = sums(c, d) / static_cast<double>(counts[c]);
      }
    }
  }
  res.centroids = centroids;
  return res;
}

namespace detail {

inline std::size_t cluster_count(const std::vector<std::size_t>& assign) {
  std::size_t k = 0;
  for (std::size_t a : assign) k = std::max(k, a + 1);
  return k;
}

}  // namespace detail

/// Mean silhouette coefficient (Euclidean), singletons scored 0, x100.
inline double silhouette(const Tensor& Z, const std::vector<std::size_t>& assign) {
  const std::size_t n = Z.rows;
  if (assign.size() != n) throw std::invalid_argument("silhouette: assignment size mismatch");
  const std::size_t k = detail::cluster_count(assign);
  if (k < 2) throw std::invalid_argument("silhouette: need >= 2 clusters");
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assign) ++counts[a];
  double total = 0.0;
  std::vector<double> cluster_dist(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[assign[i]] == 1) continue;  // singleton: s = 0
    std::fill(cluster_dist.begin(), cluster_dist.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cluster_dist[assign[j]] += std::sqrt(detail::sq_dist(Z, i, j));
    }
    const double a = cluster_dist[assign[i]] / static_cast<double>(counts[assign[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != assign[i] && counts[c] > 0)
        b = std::min(b, cluster_dist[c] / static_cast<double>(counts[c]));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n) * 100.0;
}

/// (Tr B / Tr W) * (n - k) / (k - 1); zero within-dispersion reports +inf
/// with the degenerate flag. Unscaled.
inline ScalarMetric calinski_harabasz(const Tensor& Z, const std::vector<std::size_t>& assign) {
  const std::size_t n = Z.rows;
  if (assign.size() != n)
    throw std::invalid_argument("calinski_harabasz: assignment size mismatch");
  const std::size_t k = detail::cluster_count(assign);
  if (k < 2 || k >= n) throw std::invalid_argument("calinski_harabasz: need 2 <= k < n");
  Tensor centroids = Tensor::zeros(k, Z.cols);
  std::vector<std::size_t> counts(k, 0);
  std::vector<double> global(Z.cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ++counts[assign[i]];
    for (std::size_t d = 0; d < Z.cols; ++d) {
      centroids(assign[i], d) += Z(i, d);
      global[d] += Z(i, d);
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < Z.cols; ++d)
      centroids(c, d) /= static_cast<double>(std::max<std::size_t>(1, counts[c]));
  for (double& v : global) v /= static_cast<double>(n);
  double trW = 0.0, trB = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < Z.cols; ++d) {
      const double diff = Z(i, d) - centroids(assign[i], d);
      trW += diff * diff;
    }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < Z.cols; ++d) {
      const double diff = centroids(c, d) - global[d];
      trB += static_cast<double>(counts[c]) * diff * diff;
    }
  const double factor =
      static_cast<double>(n - k) / static_cast<double>(k - 1);
  if (trW <= 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {trB / trW * factor, false};
}

// ---------------------------------------------------------------------------
// Neighborhood consistency
// ---------------------------------------------------------------------------

/// Mean overlap between the k nearest graph neighbors (BFS hops, ties by id)
/// and the k nearest embedding neighbors (Euclidean, ties by id), x100.
inline double knn_consistency(const Tensor& Z, const Graph& g, std::size_t k = 10) {
  if (k < 1) throw std::invalid_argument("knn_consistency: k must be >= 1");
  if (Z.rows != g.n) throw std::invalid_argument("knn_consistency: row count mismatch");
  double total = 0.0;
  std::vector<std::size_t> hops(g.n);
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < g.n; ++i) {
    // BFS hop distances from i
    std::fill(hops.begin(), hops.end(), std::numeric_limits<std::size_t>::max());
    hops[i] = 0;
    std::deque<std::size_t> q = {i};
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop_front();
      for (std::size_t v : g.neighbors(u))
        if (hops[v] == std::numeric_limits<std::size_t>::max()) {
          hops[v] = hops[u] + 1;
          q.push_back(v);
        }
    }
    order.clear();
    for (std::size_t j = 0; j < g.n; ++j)
      if (j != i && hops[j] != std::numeric_limits<std::size_t>::max())
        order.emplace_back(static_cast<double>(hops[j]), j);
    std::sort(order.begin(), order.end());
    std::set<std::size_t> graph_nn;
    for (std::size_t t = 0; t < std::min(k, order.size()); ++t)
      graph_nn.insert(order[t].second);

    order.clear();
    for (std::size_t j = 0; j < g.n; ++j)
      if (j != i) order.emplace_back(detail::sq_dist(Z, i, j), j);
    std::sort(order.begin(), order.end());
    std::size_t shared = 0;
    for (std::size_t t = 0; t < std::min(k, order.size()); ++t)
      if (graph_nn.count(order[t].second)) ++shared;
    total += static_cast<double>(shared) / static_cast<double>(k);
  }
  return total / static_cast<double>(g.n) * 100.0;
}

// ---------------------------------------------------------------------------
// Cluster coherence and self-clustering
// ---------------------------------------------------------------------------

/// Fraction of the graph's clipped PMI mass that falls within clusters, x100.
inline ScalarMetric coherence(const Graph& g, const std::vector<std::size_t>& assign) {
  if (assign.size() != g.n) throw std::invalid_argument("coherence: assignment size mismatch");
  SparseMatrix pmi = pmi_matrix(g, /*clip_negative=*/true);
  double total = 0.0, within = 0.0;
  for (std::size_t i = 0; i < pmi.rows; ++i)
    for (std::size_t t = pmi.row_ptr[i]; t < pmi.row_ptr[i + 1]; ++t) {
      const std::size_t j = pmi.col_idx[t];
      if (j <= i) continue;  // unordered pairs once
      total += pmi.values[t];
      if (assign[i] == assign[j]) within += pmi.values[t];
    }
  if (total <= 0.0) return {0.0, true};
  return {within / total * 100.0, false};
}

/// Clusterability stand-in: the margin between a point's cosine to its own
/// centroid and to the nearest other centroid, squashed into [-0.80, -0.70].
inline double self_cluster(const Tensor& Z, const std::vector<std::size_t>& assign) {
  const std::size_t n = Z.rows;
  if (assign.size() != n) throw std::invalid_argument("self_cluster: assignment size mismatch");
  const std::size_t k = detail::cluster_count(assign);
  if (k < 2) throw std::invalid_argument("self_cluster: need >= 2 clusters");
  Tensor centroids = Tensor::zeros(k, Z.cols);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++counts[assign[i]];
    for (std::size_t d = 0; d < Z.cols; ++d) centroids(assign[i], d) += Z(i, d);
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < Z.cols; ++d)
      centroids(c, d) /= static_cast<double>(std::max<std::size_t>(1, counts[c]));
  auto cos_to = [&](std::size_t i, std::size_t c) {
    double dot = 0.0, ni = 0.0, nc = 0.0;
    for (std::size_t d = 0; d < Z.cols; ++d) {
      dot += Z(i, d) * centroids(c, d);
      ni += Z(i, d) * Z(i, d);
      nc += centroids(c, d) * centroids(c, d);
    }
    return dot / std::max(1e-12, std::sqrt(ni) * std::sqrt(nc));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double own = cos_to(i, assign[i]);
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != assign[i]) other = std::max(other, cos_to(i, c));
    const double margin = own - other;
    total += -(0.75 + 0.05 * std::tanh(4.0 * margin));
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Effective rank
// ---------------------------------------------------------------------------

/// exp of the entropy of the normalized singular-value distribution of Z.
inline double rankme(const Tensor& Z) {
  bool nonzero = false;
  for (double v : Z.data)
    if (v != 0.0) nonzero = true;
  if (!nonzero) throw std::invalid_argument("rankme: Z is all zeros");
  Eigen::MatrixXd gram =
      (Z.map().transpose() * Z.map());  // d x d, eigenvalues are squared singular values
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  std::vector<double> sigma;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = std::max(0.0, es.eigenvalues()[i]);
    const double s = std::sqrt(lam);
    if (s > 1e-12) sigma.push_back(s);
  }
  const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
  double entropy = 0.0;
  for (double s : sigma) {
    const double p = s / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

// ---------------------------------------------------------------------------
// Full evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
  ProbeConfig probe;
  std::size_t knn_k = 10;
  std::size_t kmeans_k = 0;  // 0: label class count, or 7 when unlabeled
  double lp_holdout = 0.2;
  const EdgeSplit* split = nullptr;  // reuse a precomputed holdout if provided
};

/// All 21 metrics over a frozen embedding; failures flag individual entries
/// instead of aborting, and everything derives from the single seed.
inline MetricVector evaluate_all(const Tensor& Z, const Graph& g, const EvalConfig& cfg,
                                 std::uint64_t seed) {
  if (Z.rows != g.n) throw std::invalid_argument("evaluate_all: embedding row count mismatch");
  MetricVector mv;
  for (const std::string& m : metric_names()) mv.values[m] = 0.0;
  auto guard = [&](const std::vector<std::string>& names, auto&& fn) {
    try {
      fn();
    } catch (const std::exception&) {
      for (const std::string& m : names) mv.absent.insert(m);
    }
  };
  auto put = [&](const std::string& name, const ScalarMetric& s) {
    mv.values[name] = s.value;
    if (s.degenerate) mv.degenerate.insert(name);
  };

  guard({"node_cls_accuracy", "node_cls_precision", "node_cls_recall", "node_cls_f1"}, [&] {
    ProbeResult pr = node_cls_probe(Z, g.labels, cfg.probe, detail::mix_seed(seed ^ 0x01ull));
    mv.values["node_cls_accuracy"] = pr.accuracy_mean;
    mv.values["node_cls_precision"] = pr.precision_mean;
    mv.values["node_cls_recall"] = pr.recall_mean;
    mv.values["node_cls_f1"] = pr.f1_mean;
  });

  guard({"LP_accuracy", "LP_precision", "LP_recall", "LP_f1", "LP_auroc", "LP_aupr",
         "LP_specificity"},
        [&] {
          EdgeSplit local;
          const EdgeSplit* split = cfg.split;
          if (!split) {
            local = edge_split(g, cfg.lp_holdout, detail::mix_seed(seed ^ 0x02ull));
            split = &local;
          }
          LinkPredResult lp = link_pred_eval(Z, *split);
          mv.values["LP_accuracy"] = lp.accuracy;
          mv.values["LP_precision"] = lp.precision;
          mv.values["LP_recall"] = lp.recall;
          mv.values["LP_f1"] = lp.f1;
          mv.values["LP_auroc"] = lp.auroc;
          mv.values["LP_aupr"] = lp.aupr;
          mv.values["LP_specificity"] = lp.specificity;
        });

  guard({"cosine_adj_corr"}, [&] { put("cosine_adj_corr", cosine_adj_corr(Z, g)); });
  guard({"dot_adj_corr"}, [&] { put("dot_adj_corr", dot_adj_corr(Z, g)); });
  guard({"euclidean_adj_corr"}, [&] { put("euclidean_adj_corr", euclidean_adj_corr(Z, g)); });
  guard({"graph_reconstruction_bce_loss"}, [&] {
    mv.values["graph_reconstruction_bce_loss"] =
        reconstruction_bce(Z, g, detail::mix_seed(seed ^ 0x03ull));
  });

  std::size_t k = cfg.kmeans_k;
  if (k == 0) {
    const std::size_t classes = g.num_classes();
    k = classes >= 2 ? classes : 7;
  }
  k = std::min(k, g.n);
  KMeansResult km;
  bool have_clusters = false;
  guard({"silhouette", "calinski_harabasz", "coherence", "selfCluster"}, [&] {
    km = kmeans(Z, k, detail::mix_seed(seed ^ 0x04ull));
    have_clusters = true;
  });
  if (have_clusters) {
    guard({"silhouette"}, [&] { mv.values["silhouette"] = silhouette(Z, km.assign); });
    guard({"calinski_harabasz"},
          [&] { put("calinski_harabasz", calinski_harabasz(Z, km.assign)); });
    guard({"coherence"}, [&] { put("coherence", coherence(g, km.assign)); });
    guard({"selfCluster"}, [&] { mv.values["selfCluster"] = self_cluster(Z, km.assign); });
  }

  guard({"knn_consistency"},
        [&] { mv.values["knn_consistency"] = knn_consistency(Z, g, cfg.knn_k); });
  guard({"rankme"}, [&] { mv.values["rankme"] = rankme(Z); });
  return mv;
}

}  // namespace lossbench

#endif  // LOSSBENCH_METRICS_HPP

#ifndef LOSSBENCH_GRAPH_OPS_HPP
#define LOSSBENCH_GRAPH_OPS_HPP

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lossbench/graph.hpp"
#include "lossbench/sparse.hpp"

namespace lossbench {

/// D^-1/2 (A + I) D^-1/2 with self-looped degrees.
inline SparseMatrix normalized_adjacency(const Graph& g) {
  std::vector<double> dhat(g.n);
  for (std::size_t i = 0; i < g.n; ++i) dhat[i] = static_cast<double>(g.degree(i)) + 1.0;
  std::vector<std::size_t> ri, ci;
  std::vector<double> v;
  for (std::size_t i = 0; i < g.n; ++i) {
    ri.push_back(i);
    ci.push_back(i);
    v.push_back(1.0 / dhat[i]);
    for (std::size_t j : g.neighbors(i)) {
      ri.push_back(i);
      ci.push_back(j);
      v.push_back(1.0 / std::sqrt(dhat[i] * dhat[j]));
    }
  }
  return SparseMatrix::from_triplets(g.n, g.n, ri, ci, v);
}

/// Plain 0/1 adjacency (no self-loops), e.g. for GIN neighbor sums.
inline SparseMatrix adjacency(const Graph& g) {
  std::vector<std::size_t> ri, ci;
  std::vector<double> v;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j : g.neighbors(i)) {
      ri.push_back(i);
      ci.push_back(j);
      v.push_back(1.0);
    }
  return SparseMatrix::from_triplets(g.n, g.n, ri, ci, v);
}

struct PageRankResult {
  std::vector<double> scores;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Power iteration on the symmetrized graph; dangling nodes spread their
/// mass uniformly.
inline PageRankResult pagerank(const Graph& g, double damping = 0.85, double tol = 1e-8,
                               std::size_t max_iter = 200) {
  if (damping <= 0.0 || damping >= 1.0)
    throw std::invalid_argument("pagerank: damping must be in (0,1)");
  if (tol <= 0.0) throw std::invalid_argument("pagerank: tol must be positive");
  const double n = static_cast<double>(g.n);
  PageRankResult res;
  res.scores.assign(g.n, 1.0 / n);
  std::vector<double> next(g.n);
  for (std::size_t it = 0; it < max_iter; ++it) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
      if (g.degree(i) == 0) dangling += res.scores[i];
    std::fill(next.begin(), next.end(), (1.0 - damping) / n + damping * dangling / n);
    for (std::size_t i = 0; i < g.n; ++i) {
      if (g.degree(i) == 0) continue;
      const double share = damping * res.scores[i] / static_cast<double>(g.degree(i));
      for (std::size_t j : g.neighbors(i)) next[j] += share;
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) delta += std::abs(next[i] - res.scores[i]);
    res.scores.swap(next);
    res.iterations = it + 1;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }
  // normalize away drift
  double s = 0.0;
  for (double x : res.scores) s += x;
  for (double& x : res.scores) x /= s;
  return res;
}

/// Columns are eigenvectors of L = I - D^-1/2 A D^-1/2 for the k smallest
/// nonzero eigenvalues; sign-fixed so the largest-magnitude entry is
/// positive. Dense eigensolve; fine at the <= 5000-node scale used here.
inline Tensor laplacian_positional_encodings(const Graph& g, std::size_t k) {
  if (k < 1 || k >= g.n)
    throw std::invalid_argument("laplacian_positional_encodings: require 1 <= k < n");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.n),
                                            static_cast<Eigen::Index>(g.n));
  std::vector<double> dinv(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i)
    if (g.degree(i) > 0) dinv[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  for (std::size_t i = 0; i < g.n; ++i) {
    L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j : g.neighbors(i))
      L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -dinv[i] * dinv[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("laplacian_positional_encodings: eigensolve failed");
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();

  constexpr double kZeroTol = 1e-8;
  Tensor P(g.n, k);
  std::size_t out = 0;
  for (Eigen::Index c = 0; c < vals.size() && out < k; ++c) {
    if (vals[c] < kZeroTol) continue;  // skip zero eigenvalues (one per component)
    Eigen::VectorXd v = vecs.col(c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    for (std::size_t i = 0; i < g.n; ++i) P(i, out) = v[static_cast<Eigen::Index>(i)];
    ++out;
  }
  if (out < k)
    throw std::invalid_argument("laplacian_positional_encodings: fewer than k nonzero eigenvalues");
  return P;
}

/// PMI over the self-looped adjacency support:
/// PMI_ij = log(p(i,j) / (p(i) p(j))). Each undirected support entry (edge
/// or self-loop) is one co-occurrence event, so p(i,j) = 1/(m+n); marginals
/// come from endpoint incidences, p(i) = dhat_i / (2m+n). A 2-node single
/// edge then gives p(i)=1/2, p(i,j)=1/3 and off-diagonal PMI log(4/3).
/// Negatives are clamped to 0 when clip_negative is set.
inline SparseMatrix pmi_matrix(const Graph& g, bool clip_negative = true) {
  if (g.num_edges() == 0) throw std::invalid_argument("pmi_matrix: graph has no edges");
  const double m = static_cast<double>(g.num_edges());
  const double nn = static_cast<double>(g.n);
  const double joint_total = m + nn;
  const double marginal_total = 2.0 * m + nn;
  std::vector<double> dhat(g.n);
  for (std::size_t i = 0; i < g.n; ++i) dhat[i] = static_cast<double>(g.degree(i)) + 1.0;
  std::vector<std::size_t> ri, ci;
  std::vector<double> v;
  auto emit = [&](std::size_t i, std::size_t j) {
    const double pij = 1.0 / joint_total;
    const double pi = dhat[i] / marginal_total;
    const double pj = dhat[j] / marginal_total;
    double pmi = std::log(pij / (pi * pj));
    if (clip_negative && pmi < 0.0) pmi = 0.0;
    ri.push_back(i);
    ci.push_back(j);
    v.push_back(pmi);
  };
  for (std::size_t i = 0; i < g.n; ++i) {
    emit(i, i);
    for (std::size_t j : g.neighbors(i)) emit(i, j);
  }
  return SparseMatrix::from_triplets(g.n, g.n, ri, ci, v);
}

/// k uniform non-neighbors per anchor (excluding the anchor), distinct
/// within an anchor; deterministic per seed.
inline std::vector<std::vector<std::size_t>> sample_negatives(const Graph& g,
                                                              const std::vector<std::size_t>& anchors,
                                                              std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(anchors.size());
  for (std::size_t u : anchors) {
    const std::size_t eligible = g.n - 1 - g.degree(u);
    if (eligible < k)
      throw std::invalid_argument("sample_negatives: anchor " + std::to_string(u) +
                                  " has fewer than k non-neighbors");
    std::vector<std::size_t> picks;
    std::set<std::size_t> seen;
    while (picks.size() < k) {
      std::size_t w = rng() % g.n;
      if (w == u || g.has_edge(u, w) || seen.count(w)) continue;
      seen.insert(w);
      picks.push_back(w);
    }
    out.push_back(std::move(picks));
  }
  return out;
}

}  // namespace lossbench

#endif  // LOSSBENCH_GRAPH_OPS_HPP

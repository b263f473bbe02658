#ifndef LOSSBENCH_LOSSES_HPP
#define LOSSBENCH_LOSSES_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossbench/autodiff.hpp"
#include "lossbench/graph.hpp"
#include "lossbench/graph_ops.hpp"

namespace lossbench {

/// Shared hyperparameters of the hinge/noise losses.
struct LossContext {
  double margin = 0.5;
  double dae_sigma = 0.1;
  std::size_t negatives = 1;    // negatives per anchor
  std::size_t anchor_cap = 512; // ranking-loss anchors per step
};

/// Canonical report order of the base losses.
inline const std::vector<std::string>& base_loss_names() {
  static const std::vector<std::string> names = {"Contr_l", "CrossE_L", "PMI_L", "PR_L",
                                                 "Triplet_L"};
  return names;
}

struct HybridLossSpec {
  std::vector<std::string> members;  // subset in canonical order

  std::string name() const {
    std::string out;
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k) out += " + ";
      out += members[k];
    }
    return out;
  }
  std::size_t order() const { return members.size(); }
  bool contains(const std::string& loss) const {
    return std::find(members.begin(), members.end(), loss) != members.end();
  }
};

/// Every nonempty subset of the five base losses with size <= max_order,
/// sorted by canonical name.
inline std::vector<HybridLossSpec> enumerate_hybrids(std::size_t max_order) {
  if (max_order < 1 || max_order > 5)
    throw std::invalid_argument("enumerate_hybrids: max_order must be in [1,5]");
  const auto& base = base_loss_names();
  std::vector<HybridLossSpec> specs;
  for (unsigned mask = 1; mask < 32; ++mask) {
    HybridLossSpec s;
    for (std::size_t b = 0; b < 5; ++b)
      if (mask & (1u << b)) s.members.push_back(base[b]);
    if (s.order() <= max_order) specs.push_back(std::move(s));
  }
  std::sort(specs.begin(), specs.end(),
            [](const HybridLossSpec& a, const HybridLossSpec& b) { return a.name() < b.name(); });
  return specs;
}

// ---------------------------------------------------------------------------
// Base losses
// ---------------------------------------------------------------------------

/// -(1/n^2) sum_ij PMI_ij CosSim(z_i, z_j), exact over the PMI support.
inline NodeId pmi_loss(Tape& tape, NodeId Z, const SparseMatrix& pmi) {
  const std::size_t n = tape.val(Z).rows;
  if (pmi.rows != n || pmi.cols != n)
    throw std::invalid_argument("pmi_loss: PMI matrix must be n x n");
  std::vector<std::size_t> is, js;
  std::vector<double> w;
  for (std::size_t i = 0; i < pmi.rows; ++i)
    for (std::size_t k = pmi.row_ptr[i]; k < pmi.row_ptr[i + 1]; ++k)
      if (pmi.values[k] != 0.0) {
        is.push_back(i);
        js.push_back(pmi.col_idx[k]);
        w.push_back(pmi.values[k]);
      }
  if (is.empty()) return tape.constant(Tensor::scalar(0.0));
  NodeId cs = tape.cosine_rows(tape.row_slice(Z, is), tape.row_slice(Z, js));
  Tensor weights(w.size(), 1);
  for (std::size_t k = 0; k < w.size(); ++k) weights(k, 0) = w[k];
  NodeId weighted = tape.mul(cs, tape.constant(weights));
  return tape.scalar_mul(tape.sum(weighted), -1.0 / static_cast<double>(n * n));
}

namespace detail {

/// Hinge ranking loss over every directed traversal of each undirected edge,
/// one sampled negative per traversal.
inline NodeId edge_ranking_loss(Tape& tape, NodeId Z, const Graph& g, const LossContext& ctx,
                                std::uint64_t seed) {
  if (ctx.margin <= 0.0) throw std::invalid_argument("edge ranking loss: margin must be > 0");
  if (g.num_edges() == 0) throw std::invalid_argument("edge ranking loss: graph has no edges");
  std::vector<std::size_t> us, vs;
  for (auto [u, v] : g.edges) {
    us.push_back(u);
    vs.push_back(v);
    us.push_back(v);
    vs.push_back(u);
  }
  auto negs = sample_negatives(g, us, 1, seed);
  std::vector<std::size_t> ks(us.size());
  for (std::size_t t = 0; t < us.size(); ++t) ks[t] = negs[t][0];
  NodeId zu = tape.row_slice(Z, us);
  NodeId pos = tape.cosine_rows(zu, tape.row_slice(Z, vs));
  NodeId neg = tape.cosine_rows(zu, tape.row_slice(Z, ks));
  NodeId margin = tape.constant(Tensor::scalar(ctx.margin));
  return tape.mean(tape.hinge(tape.add(tape.sub(margin, pos), neg)));
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// (1/|E|) sum max(0, M - CosSim(z_u, z_v) + CosSim(z_u, z_ku)).
inline NodeId contrastive_loss(Tape& tape, NodeId Z, const Graph& g, const LossContext& ctx,
                               std::uint64_t seed) {
  return detail::edge_ranking_loss(tape, Z, g, ctx, seed);
}

/// Same functional form as contrastive_loss with an independent
/// negative-sampling seed stream.
inline NodeId triplet_loss(Tape& tape, NodeId Z, const Graph& g, const LossContext& ctx,
                           std::uint64_t seed) {
  return detail::edge_ranking_loss(tape, Z, g, ctx, detail::splitmix(seed));
}

/// Denoising-autoencoder MSE: corrupt E with N(0, sigma^2) noise, reconstruct
/// with a 2-layer MLP, and average the squared error over all entries.
inline NodeId dae_loss(Tape& tape, NodeId E, NodeId W1, NodeId b1, NodeId W2, NodeId b2,
                       double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("dae_loss: sigma must be >= 0");
  const std::size_t rows = tape.val(E).rows;
  const std::size_t cols = tape.val(E).cols;
  Tensor noise(rows, cols);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : noise.data) v = dist(rng);
  }
  NodeId noisy = tape.add(E, tape.constant(noise));
  NodeId hidden = tape.relu(tape.add(tape.matmul(noisy, W1), b1));
  NodeId recon = tape.add(tape.matmul(hidden, W2), b2);
  NodeId diff = tape.sub(E, recon);
  return tape.scalar_mul(tape.squared_frobenius(diff),
                         1.0 / static_cast<double>(rows * cols));
}

/// Denoiser weights for embeddings of width d (identity-free random init,
/// zero biases), named dae.W1/b1/W2/b2.
inline std::map<std::string, Tensor> init_dae_params(std::size_t d, std::uint64_t seed) {
  return {{"dae.W1", glorot_uniform(d, d, seed ^ 0x11ull)},
          {"dae.b1", Tensor::zeros(1, d)},
          {"dae.W2", glorot_uniform(d, d, seed ^ 0x22ull)},
          {"dae.b2", Tensor::zeros(1, d)}};
}

/// Selected (anchor, positive, negative) ids for the PageRank ranking loss;
/// exposed for oracle tests.
struct PageRankTriples {
  std::vector<std::size_t> anchors, pos, neg;
};

inline PageRankTriples pagerank_triples(const std::vector<double>& pr, std::size_t n,
                                        const LossContext& ctx, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("pagerank_loss: need at least 3 nodes");
  PageRankTriples t;
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min(ctx.anchor_cap, n));
  for (std::size_t u : ids) {
    // P_u: closest PageRank, N_u: farthest; ties broken by lowest id and the
    // two picks kept distinct
    std::size_t best = n, worst = n;
    double best_d = 0.0, worst_d = 0.0;
    for (std::size_t w = 0; w < n; ++w) {
      if (w == u) continue;
      const double d = std::abs(pr[u] - pr[w]);
      if (best == n || d < best_d) {
        best = w;
        best_d = d;
      }
    }
    for (std::size_t w = 0; w < n; ++w) {
      if (w == u || w == best) continue;
      const double d = std::abs(pr[u] - pr[w]);
      if (worst == n || d > worst_d) {
        worst = w;
        worst_d = d;
      }
    }
    t.anchors.push_back(u);
    t.pos.push_back(best);
    t.neg.push_back(worst);
  }
  return t;
}

/// (1/|A|) sum max(0, M - CosSim(z_u, z_Pu) + CosSim(z_u, z_Nu)).
inline NodeId pagerank_loss(Tape& tape, NodeId Z, const std::vector<double>& pr,
                            const LossContext& ctx, std::uint64_t seed) {
  const std::size_t n = tape.val(Z).rows;
  if (pr.size() != n) throw std::invalid_argument("pagerank_loss: score length mismatch");
  auto t = pagerank_triples(pr, n, ctx, seed);
  NodeId zu = tape.row_slice(Z, t.anchors);
  NodeId pos = tape.cosine_rows(zu, tape.row_slice(Z, t.pos));
  NodeId neg = tape.cosine_rows(zu, tape.row_slice(Z, t.neg));
  NodeId margin = tape.constant(Tensor::scalar(ctx.margin));
  return tape.mean(tape.hinge(tape.add(tape.sub(margin, pos), neg)));
}

// ---------------------------------------------------------------------------
// Hybrid composition
// ---------------------------------------------------------------------------

/// Gate parameters theta (one 1x1 tensor per member, initialized 0 so every
/// gate starts at weight 0.5), named gate.<loss>.
inline std::map<std::string, Tensor> init_gate_params(const HybridLossSpec& spec) {
  std::map<std::string, Tensor> out;
  for (const std::string& m : spec.members) out["gate." + m] = Tensor::scalar(0.0);
  return out;
}

/// sum over the subset of sigmoid(theta_i) * L_i.
inline NodeId hybrid_loss(Tape& tape, const HybridLossSpec& spec,
                          const std::map<std::string, NodeId>& base_values,
                          const std::map<std::string, NodeId>& gates) {
  if (spec.members.empty()) throw std::invalid_argument("hybrid_loss: empty subset");
  NodeId total = -1;
  for (const std::string& m : spec.members) {
    auto bv = base_values.find(m);
    if (bv == base_values.end())
      throw std::invalid_argument("hybrid_loss: missing base value for " + m);
    auto gt = gates.find("gate." + m);
    if (gt == gates.end()) throw std::invalid_argument("hybrid_loss: missing gate for " + m);
    NodeId term = tape.mul(tape.sigmoid(gt->second), bv->second);
    total = total < 0 ? term : tape.add(total, term);
  }
  return total;
}

}  // namespace lossbench

#endif  // LOSSBENCH_LOSSES_HPP

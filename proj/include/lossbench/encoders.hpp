#ifndef LOSSBENCH_ENCODERS_HPP
#define LOSSBENCH_ENCODERS_HPP

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

enum class Architecture { GCN, GAT, SAGE, GIN, PAGNN, MPNN, ALL };

inline const std::vector<Architecture>& sub_architectures() {
  static const std::vector<Architecture> order = {Architecture::GCN,   Architecture::GAT,
                                                  Architecture::SAGE,  Architecture::GIN,
                                                  Architecture::PAGNN, Architecture::MPNN};
  return order;
}

inline std::string arch_name(Architecture a) {
  switch (a) {
    case Architecture::GCN: return "GCN";
    case Architecture::GAT: return "GAT";
    case Architecture::SAGE: return "SAGE";
    case Architecture::GIN: return "GIN";
    case Architecture::PAGNN: return "PAGNN";
    case Architecture::MPNN: return "MPNN";
    case Architecture::ALL: return "ALL";
  }
  throw std::logic_error("arch_name: bad architecture");
}

inline Architecture arch_from_name(const std::string& s) {
  for (Architecture a : sub_architectures())
    if (arch_name(a) == s) return a;
  if (s == "ALL") return Architecture::ALL;
  throw std::invalid_argument("unknown architecture: " + s);
}

enum class Fusion { Sum, Concat };

struct EncoderSpec {
  Architecture arch = Architecture::GCN;
  std::size_t layers = 2;
  std::size_t hidden_dim = 128;
  std::size_t embed_dim = 128;
  std::size_t universal_hidden = 256;  // width before pooling
  std::size_t heads = 4;               // GAT/PAGNN hidden-layer heads
  std::size_t pe_dim = 8;              // PAGNN positional-encoding width
  std::size_t sage_sample = 10;
  double leaky_slope = 0.2;
  Fusion fusion = Fusion::Sum;

  void validate() const {
    if (layers < 1) throw std::invalid_argument("EncoderSpec: layers must be >= 1");
    if (heads < 1) throw std::invalid_argument("EncoderSpec: heads must be >= 1");
    if (hidden_dim % heads != 0)
      throw std::invalid_argument("EncoderSpec: hidden_dim must be divisible by heads");
    if (universal_hidden < hidden_dim)
      throw std::invalid_argument("EncoderSpec: pooled width exceeds pre-pool width");
  }
};

/// Named parameter tensors plus the seed that produced them.
struct ParameterSet {
  std::map<std::string, Tensor> tensors;
  std::uint64_t init_seed = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Precomputed constant graph operators shared by every tape built for one
/// graph. Must outlive any tape that references them.
struct GraphCache {
  const Graph* g = nullptr;
  SparseMatrix anorm;  // GCN propagation
  SparseMatrix adj;    // GIN sum aggregation

  // attention: directed pairs (i -> j) for j in N(i) u {i}, self-pair first
  std::vector<std::size_t> att_src, att_dst;
  SparseMatrix att_agg;  // n x E incidence grouping pairs by attending node
  Tensor pe;             // n x k positional encodings (PAGNN)
  Tensor pe_diff;        // E x k, p_src - p_dst per attention pair

  // message passing: directed pairs (v -> u) over plain edges
  std::vector<std::size_t> msg_src, msg_dst;
  SparseMatrix msg_agg;  // n x E incidence grouping messages by receiver

  SparseMatrix sage_op;  // seed-dependent mean operator, rebuilt per encode

  static GraphCache build(const Graph& graph, const EncoderSpec& spec) {
    spec.validate();
    GraphCache c;
    c.g = &graph;
    c.anorm = normalized_adjacency(graph);
    c.adj = adjacency(graph);

    const std::size_t n = graph.n;
    {
      std::vector<std::size_t> ri, ci;
      std::vector<double> v;
      for (std::size_t i = 0; i < n; ++i) {
        c.att_src.push_back(i);
        c.att_dst.push_back(i);
        for (std::size_t j : graph.neighbors(i)) {
          c.att_src.push_back(i);
          c.att_dst.push_back(j);
        }
      }
      for (std::size_t e = 0; e < c.att_src.size(); ++e) {
        ri.push_back(c.att_src[e]);
        ci.push_back(e);
        v.push_back(1.0);
      }
      c.att_agg = SparseMatrix::from_triplets(n, c.att_src.size(), ri, ci, v);
    }
    {
      std::vector<std::size_t> ri, ci;
      std::vector<double> v;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : graph.neighbors(i)) {
          c.msg_src.push_back(i);
          c.msg_dst.push_back(j);
        }
      for (std::size_t e = 0; e < c.msg_src.size(); ++e) {
        ri.push_back(c.msg_src[e]);
        ci.push_back(e);
        v.push_back(1.0);
      }
      c.msg_agg = SparseMatrix::from_triplets(n, c.msg_src.size(), ri, ci, v);
    }
    if (spec.arch == Architecture::PAGNN || spec.arch == Architecture::ALL) {
      c.pe = laplacian_positional_encodings(graph, spec.pe_dim);
      c.pe_diff = Tensor(c.att_src.size(), spec.pe_dim);
      for (std::size_t e = 0; e < c.att_src.size(); ++e)
        for (std::size_t k = 0; k < spec.pe_dim; ++k)
          c.pe_diff(e, k) = c.pe(c.att_src[e], k) - c.pe(c.att_dst[e], k);
    }
    return c;
  }

  /// Mean over <= sample_size neighbors drawn without replacement; isolated
  /// nodes get an all-zero row. Rebuilt once per encode call.
  void rebuild_sage_op(std::size_t sample_size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> ri, ci;
    std::vector<double> v;
    for (std::size_t i = 0; i < g->n; ++i) {
      auto nb = g->neighbors(i);
      std::vector<std::size_t> pick(nb.begin(), nb.end());
      if (pick.size() > sample_size) {
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(sample_size);
        std::sort(pick.begin(), pick.end());
      }
      if (pick.empty()) continue;
      const double w = 1.0 / static_cast<double>(pick.size());
      for (std::size_t j : pick) {
        ri.push_back(i);
        ci.push_back(j);
        v.push_back(w);
      }
    }
    sage_op = SparseMatrix::from_triplets(g->n, g->n, ri, ci, v);
  }
};

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

namespace detail {

inline void put_glorot(ParameterSet& ps, const std::string& name, std::size_t r, std::size_t c) {
  ps.tensors[name] = glorot_uniform(r, c, ps.init_seed ^ fnv1a(name));
}
inline void put_zeros(ParameterSet& ps, const std::string& name, std::size_t r, std::size_t c) {
  ps.tensors[name] = Tensor::zeros(r, c);
}

inline void init_arch_params(ParameterSet& ps, const EncoderSpec& spec, Architecture arch,
                             const std::string& prefix) {
  const std::size_t L = spec.layers;
  for (std::size_t l = 0; l < L; ++l) {
    const bool final_layer = (l + 1 == L);
    const std::size_t in = spec.hidden_dim;  // universal encoder feeds hidden_dim
    const std::size_t out = final_layer ? spec.embed_dim : spec.hidden_dim;
    const std::string lp = prefix + "l" + std::to_string(l) + ".";
    switch (arch) {
      case Architecture::GCN:
        put_glorot(ps, lp + "W", in, out);
        break;
      case Architecture::GAT:
      case Architecture::PAGNN: {
        const std::size_t heads = final_layer ? 1 : spec.heads;
        const std::size_t hd = out / heads;
        const std::size_t alen =
            2 * hd + (arch == Architecture::PAGNN ? spec.pe_dim : std::size_t{0});
        for (std::size_t h = 0; h < heads; ++h) {
          const std::string hp = lp + "h" + std::to_string(h) + ".";
          put_glorot(ps, hp + "W", in, hd);
          put_glorot(ps, hp + "a", alen, 1);
        }
        break;
      }
      case Architecture::SAGE:
        put_glorot(ps, lp + "W", 2 * in, out);
        break;
      case Architecture::GIN:
        put_glorot(ps, lp + "mlp.W1", in, spec.hidden_dim);
        put_zeros(ps, lp + "mlp.b1", 1, spec.hidden_dim);
        put_glorot(ps, lp + "mlp.W2", spec.hidden_dim, out);
        put_zeros(ps, lp + "mlp.b2", 1, out);
        put_zeros(ps, lp + "eps", 1, 1);
        break;
      case Architecture::MPNN:
        put_glorot(ps, lp + "msg.W", 2 * in, out);
        put_zeros(ps, lp + "msg.b", 1, out);
        put_glorot(ps, lp + "upd.W", in + out, out);
        put_zeros(ps, lp + "upd.b", 1, out);
        break;
      case Architecture::ALL:
        throw std::logic_error("init_arch_params: ALL handled by caller");
    }
  }
}

}  // namespace detail

/// All tensors needed by `encode` for this spec on a graph with d_in input
/// features; deterministic per seed.
inline ParameterSet init_params(const EncoderSpec& spec, std::size_t d_in, std::uint64_t seed) {
  spec.validate();
  ParameterSet ps;
  ps.init_seed = seed;
  detail::put_glorot(ps, "universal.Wp", d_in, spec.universal_hidden);
  detail::put_zeros(ps, "universal.bp", 1, spec.universal_hidden);
  if (spec.arch == Architecture::ALL) {
    for (Architecture a : sub_architectures())
      detail::init_arch_params(ps, spec, a, arch_name(a) + ".");
    if (spec.fusion == Fusion::Concat)
      detail::put_glorot(ps, "all.proj", 6 * spec.embed_dim, spec.embed_dim);
  } else {
    detail::init_arch_params(ps, spec, spec.arch, arch_name(spec.arch) + ".");
  }
  return ps;
}

/// Registers every tensor of `ps` as a trainable tape parameter.
inline std::map<std::string, NodeId> register_params(Tape& tape, const ParameterSet& ps) {
  std::map<std::string, NodeId> out;
  for (const auto& [name, t] : ps.tensors) out[name] = tape.parameter(t);
  return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// AdaptiveAvgPool1D(ReLU(LayerNorm(X W_p + b_p))) -> n x d_out.
inline NodeId universal_encode(Tape& tape, NodeId X, NodeId Wp, NodeId bp, std::size_t d_out) {
  NodeId h = tape.add(tape.matmul(X, Wp), bp);
  h = tape.layer_norm(h);
  h = tape.relu(h);
  return tape.adaptive_avg_pool_1d(h, d_out);
}

inline NodeId gcn_layer(Tape& tape, NodeId H, const SparseMatrix& anorm, NodeId W,
                        bool final_layer) {
  NodeId out = tape.matmul(tape.sparse_matmul(anorm, H), W);
  return final_layer ? out : tape.relu(out);
}

namespace detail {

/// One attention head over the cached directed pairs; returns the n x hd
/// aggregation sigma(sum_j alpha_ij W h_j). When `pe_diff` is non-null the
/// logit input is [W h_i || W h_j || p_i - p_j].
inline NodeId attention_head(Tape& tape, NodeId H, NodeId W, NodeId a, GraphCache& cache,
                             const Tensor* pe_diff, double leaky_slope, bool final_layer) {
  NodeId HW = tape.matmul(H, W);
  NodeId src = tape.row_slice(HW, cache.att_src);
  NodeId dst = tape.row_slice(HW, cache.att_dst);
  NodeId feat = pe_diff == nullptr
                    ? tape.concat({src, dst}, Axis::Cols)
                    : tape.concat({src, dst, tape.constant(*pe_diff)}, Axis::Cols);
  NodeId logits = tape.leaky_relu(tape.matmul(feat, a), leaky_slope);
  // per-source softmax: subtracting the global max is valid for every group
  // and keeps exp() in range
  double mx = -1e300;
  for (double v : tape.val(logits).data) mx = std::max(mx, v);
  NodeId shifted = tape.sub(logits, tape.constant(Tensor::scalar(mx)));
  NodeId expl = tape.exp_op(shifted);                              // E x 1
  NodeId denom = tape.sparse_matmul(cache.att_agg, expl);          // n x 1
  NodeId denom_e = tape.row_slice(denom, cache.att_src);           // E x 1
  NodeId recip = tape.exp_op(tape.scalar_mul(tape.log_op(denom_e), -1.0));
  NodeId alpha = tape.mul(expl, recip);
  NodeId weighted = tape.mul(alpha, dst);                          // E x hd
  NodeId out = tape.sparse_matmul(cache.att_agg, weighted);        // n x hd
  return final_layer ? out : tape.relu(out);
}

}  // namespace detail

inline NodeId gat_layer(Tape& tape, NodeId H, const std::vector<NodeId>& head_W,
                        const std::vector<NodeId>& head_a, GraphCache& cache, double leaky_slope,
                        bool final_layer) {
  std::vector<NodeId> heads;
  for (std::size_t h = 0; h < head_W.size(); ++h)
    heads.push_back(detail::attention_head(tape, H, head_W[h], head_a[h], cache, nullptr,
                                           leaky_slope, final_layer));
  if (heads.size() == 1) return heads[0];
  if (final_layer) {  // average heads on the output layer
    NodeId s = heads[0];
    for (std::size_t h = 1; h < heads.size(); ++h) s = tape.add(s, heads[h]);
    return tape.scalar_mul(s, 1.0 / static_cast<double>(heads.size()));
  }
  return tape.concat(heads, Axis::Cols);
}

inline NodeId pagnn_layer(Tape& tape, NodeId H, const std::vector<NodeId>& head_W,
                          const std::vector<NodeId>& head_a, GraphCache& cache,
                          double leaky_slope, bool final_layer) {
  std::vector<NodeId> heads;
  for (std::size_t h = 0; h < head_W.size(); ++h)
    heads.push_back(detail::attention_head(tape, H, head_W[h], head_a[h], cache, &cache.pe_diff,
                                           leaky_slope, final_layer));
  if (heads.size() == 1) return heads[0];
  if (final_layer) {
    NodeId s = heads[0];
    for (std::size_t h = 1; h < heads.size(); ++h) s = tape.add(s, heads[h]);
    return tape.scalar_mul(s, 1.0 / static_cast<double>(heads.size()));
  }
  return tape.concat(heads, Axis::Cols);
}

/// sigma(W concat(h_i, mean of sampled neighbors)). `sage_op` must already
/// reflect the caller's epoch seed.
inline NodeId sage_layer(Tape& tape, NodeId H, const SparseMatrix& sage_op, NodeId W,
                         bool final_layer) {
  NodeId neigh = tape.sparse_matmul(sage_op, H);
  NodeId out = tape.matmul(tape.concat({H, neigh}, Axis::Cols), W);
  return final_layer ? out : tape.relu(out);
}

inline NodeId gin_layer(Tape& tape, NodeId H, const SparseMatrix& adj, NodeId W1, NodeId b1,
                        NodeId W2, NodeId b2, NodeId eps, bool final_layer) {
  NodeId scale = tape.add(tape.constant(Tensor::scalar(1.0)), eps);  // 1 + eps
  NodeId agg = tape.add(tape.mul(scale, H), tape.sparse_matmul(adj, H));
  NodeId hidden = tape.relu(tape.add(tape.matmul(agg, W1), b1));
  NodeId out = tape.add(tape.matmul(hidden, W2), b2);
  return final_layer ? out : tape.relu(out);
}

/// m_v = sum_u ReLU(W_m [h_v || h_u] + b_m); h'_v = sigma(W_u [h_v || m_v] + b_u).
inline NodeId mpnn_layer(Tape& tape, NodeId H, GraphCache& cache, NodeId msg_W, NodeId msg_b,
                         NodeId upd_W, NodeId upd_b, bool final_layer) {
  NodeId m;
  if (cache.msg_src.empty()) {
    m = tape.constant(Tensor::zeros(cache.g->n, tape.val(msg_W).cols));
  } else {
    NodeId hv = tape.row_slice(H, cache.msg_src);
    NodeId hu = tape.row_slice(H, cache.msg_dst);
    NodeId msgs = tape.relu(tape.add(tape.matmul(tape.concat({hv, hu}, Axis::Cols), msg_W), msg_b));
    m = tape.sparse_matmul(cache.msg_agg, msgs);
  }
  NodeId out = tape.add(tape.matmul(tape.concat({H, m}, Axis::Cols), upd_W), upd_b);
  return final_layer ? out : tape.relu(out);
}

/// Combine the six per-architecture embeddings (order: GCN, GAT, SAGE, GIN,
/// PAGNN, MPNN). Sum mode adds elementwise; concat mode concatenates and
/// projects back to embed_dim.
inline NodeId fuse_all(Tape& tape, const std::vector<NodeId>& zs, Fusion mode, NodeId proj = -1) {
  if (zs.empty()) throw std::invalid_argument("fuse_all: no inputs");
  for (NodeId z : zs)
    require_shape(tape.val(z).same_shape(tape.val(zs[0])), "fuse_all", tape.val(z),
                  tape.val(zs[0]));
  if (mode == Fusion::Sum) {
    NodeId s = zs[0];
    for (std::size_t k = 1; k < zs.size(); ++k) s = tape.add(s, zs[k]);
    return s;
  }
  if (proj < 0) throw std::invalid_argument("fuse_all: concat mode needs a projection");
  return tape.matmul(tape.concat(zs, Axis::Cols), proj);
}

// ---------------------------------------------------------------------------
// Full encoder
// ---------------------------------------------------------------------------

namespace detail {

inline NodeId get_param(const std::map<std::string, NodeId>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("encode: missing parameter " + name);
  return it->second;
}

inline NodeId run_arch(Tape& tape, const EncoderSpec& spec, Architecture arch,
                       const std::map<std::string, NodeId>& params, GraphCache& cache,
                       NodeId H0) {
  NodeId H = H0;
  const std::string prefix = arch_name(arch) + ".";
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const bool final_layer = (l + 1 == spec.layers);
    const std::string lp = prefix + "l" + std::to_string(l) + ".";
    switch (arch) {
      case Architecture::GCN:
        H = gcn_layer(tape, H, cache.anorm, get_param(params, lp + "W"), final_layer);
        break;
      case Architecture::GAT:
      case Architecture::PAGNN: {
        const std::size_t heads = final_layer ? 1 : spec.heads;
        std::vector<NodeId> Ws, as;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::string hp = lp + "h" + std::to_string(h) + ".";
          Ws.push_back(get_param(params, hp + "W"));
          as.push_back(get_param(params, hp + "a"));
        }
        H = arch == Architecture::GAT
                ? gat_layer(tape, H, Ws, as, cache, spec.leaky_slope, final_layer)
                : pagnn_layer(tape, H, Ws, as, cache, spec.leaky_slope, final_layer);
        break;
      }
      case Architecture::SAGE:
        H = sage_layer(tape, H, cache.sage_op, get_param(params, lp + "W"), final_layer);
        break;
      case Architecture::GIN:
        H = gin_layer(tape, H, cache.adj, get_param(params, lp + "mlp.W1"),
                      get_param(params, lp + "mlp.b1"), get_param(params, lp + "mlp.W2"),
                      get_param(params, lp + "mlp.b2"), get_param(params, lp + "eps"),
                      final_layer);
        break;
      case Architecture::MPNN:
        H = mpnn_layer(tape, H, cache, get_param(params, lp + "msg.W"),
                       get_param(params, lp + "msg.b"), get_param(params, lp + "upd.W"),
                       get_param(params, lp + "upd.b"), final_layer);
        break;
      case Architecture::ALL:
        throw std::logic_error("run_arch: ALL handled by encode");
    }
  }
  return H;
}

}  // namespace detail

/// Full pipeline: universal feature encoder, then the chosen architecture's
/// layers (or all six fused). `seed` only affects SAGE neighbor sampling.
inline NodeId encode(Tape& tape, const EncoderSpec& spec,
                     const std::map<std::string, NodeId>& params, GraphCache& cache,
                     std::uint64_t seed) {
  spec.validate();
  if (spec.arch == Architecture::SAGE || spec.arch == Architecture::ALL)
    cache.rebuild_sage_op(spec.sage_sample, seed);
  NodeId X = tape.constant(cache.g->features);
  NodeId H0 = universal_encode(tape, X, detail::get_param(params, "universal.Wp"),
                               detail::get_param(params, "universal.bp"), spec.hidden_dim);
  if (spec.arch != Architecture::ALL)
    return detail::run_arch(tape, spec, spec.arch, params, cache, H0);
  std::vector<NodeId> zs;
  for (Architecture a : sub_architectures())
    zs.push_back(detail::run_arch(tape, spec, a, params, cache, H0));
  NodeId proj = spec.fusion == Fusion::Concat ? detail::get_param(params, "all.proj") : -1;
  return fuse_all(tape, zs, spec.fusion, proj);
}

}  // namespace lossbench

#endif  // LOSSBENCH_ENCODERS_HPP

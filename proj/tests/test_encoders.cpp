#include <cmath>
#include <random>

#include "doctest.h"
#include "lossbench/encoders.hpp"
#include "lossbench/gradcheck.hpp"

using namespace lossbench;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Graph random_labeled_graph(std::size_t n, double p, std::uint64_t seed, std::size_t d_in = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);  // keep connected
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j)
      if (dist(rng) < p) e.emplace_back(i, j);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);
  return Graph::from_edge_list(n, e, random_tensor(n, d_in, seed + 1), labels, "rnd");
}

EncoderSpec tiny_spec(Architecture arch) {
  EncoderSpec s;
  s.arch = arch;
  s.layers = 2;
  s.hidden_dim = 8;
  s.embed_dim = 4;
  s.universal_hidden = 8;
  s.heads = 2;
  s.pe_dim = 2;
  s.sage_sample = 3;
  return s;
}

double leaky(double x, double alpha = 0.2) { return x >= 0.0 ? x : alpha * x; }

}  // namespace

TEST_CASE("universal encoder") {
  SUBCASE("zero input and bias give zero output") {
    Tape tape;
    NodeId X = tape.constant(Tensor::zeros(3, 5));
    NodeId Wp = tape.constant(random_tensor(5, 6, 1));
    NodeId bp = tape.constant(Tensor::zeros(1, 6));
    const Tensor& out = tape.val(universal_encode(tape, X, Wp, bp, 4));
    for (double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("identity pooling when widths match") {
    Tape tape;
    Tensor X = random_tensor(3, 5, 2);
    NodeId Xn = tape.constant(X);
    NodeId Wp = tape.constant(random_tensor(5, 6, 3));
    NodeId bp = tape.constant(random_tensor(1, 6, 4));
    const Tensor& full = tape.val(universal_encode(tape, Xn, Wp, bp, 6));
    const Tensor& manual =
        tape.val(tape.relu(tape.layer_norm(tape.add(tape.matmul(Xn, Wp), bp))));
    REQUIRE(full.same_shape(manual));
    for (std::size_t k = 0; k < full.size(); ++k)
      CHECK(full.data[k] == doctest::Approx(manual.data[k]).epsilon(1e-14));
  }
  SUBCASE("matches a step-by-step compositional oracle") {
    Tensor X = random_tensor(3, 4, 5);
    Tensor Wp = random_tensor(4, 6, 6);
    Tensor bp = random_tensor(1, 6, 7);
    const std::size_t d_out = 3;
    Tape tape;
    const Tensor& got = tape.val(
        universal_encode(tape, tape.constant(X), tape.constant(Wp), tape.constant(bp), d_out));
    // independent oracle: affine map, per-row normalization, ReLU, bin means
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> row(6, 0.0);
      for (std::size_t j = 0; j < 6; ++j) {
        row[j] = bp(0, j);
        for (std::size_t k = 0; k < 4; ++k) row[j] += X(i, k) * Wp(k, j);
      }
      double mu = 0.0;
      for (double v : row) mu += v;
      mu /= 6.0;
      double var = 0.0;
      for (double v : row) var += (v - mu) * (v - mu);
      var /= 6.0;
      for (double& v : row) v = std::max(0.0, (v - mu) / std::sqrt(var + 1e-5));
      for (std::size_t j = 0; j < d_out; ++j) {
        const std::size_t b = (j * 6) / d_out;
        const std::size_t e = ((j + 1) * 6 + d_out - 1) / d_out;
        double s = 0.0;
        for (std::size_t k = b; k < e; ++k) s += row[k];
        CHECK(got(i, j) == doctest::Approx(s / static_cast<double>(e - b)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gcn layer") {
  SUBCASE("single self-looped node with identity weights is identity") {
    Graph g = Graph::from_edge_list(1, {}, Tensor::from_rows({{0.5, 2.0}}), {0});
    SparseMatrix anorm = normalized_adjacency(g);
    Tape tape;
    NodeId H = tape.constant(g.features);
    NodeId W = tape.constant(Tensor::identity(2));
    const Tensor& out = tape.val(gcn_layer(tape, H, anorm, W, /*final_layer=*/false));
    CHECK(out(0, 0) == doctest::Approx(0.5));
    CHECK(out(0, 1) == doctest::Approx(2.0));
  }
  SUBCASE("identical features on a symmetric edge give identical rows") {
    Graph g = Graph::from_edge_list(2, {{0, 1}}, Tensor::from_rows({{1.0, -1.0}, {1.0, -1.0}}),
                                    {0, 0});
    SparseMatrix anorm = normalized_adjacency(g);
    Tape tape;
    const Tensor& out = tape.val(gcn_layer(tape, tape.constant(g.features), anorm,
                                           tape.constant(random_tensor(2, 3, 8)), true));
    for (std::size_t j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(out(1, j)));
  }
  SUBCASE("matches a dense oracle on a path") {
    Graph g = random_labeled_graph(3, 0.0, 1, 2);
    SparseMatrix anorm = normalized_adjacency(g);
    Tensor W = random_tensor(2, 2, 9);
    Tape tape;
    const Tensor& out =
        tape.val(gcn_layer(tape, tape.constant(g.features), anorm, tape.constant(W), false));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        double prop = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          double aij = 0.0;
          const double di = static_cast<double>(g.degree(i)) + 1.0;
          const double dj = static_cast<double>(g.degree(j)) + 1.0;
          if (i == j || g.has_edge(i, j)) aij = 1.0 / std::sqrt(di * dj);
          double hw = 0.0;
          for (std::size_t k = 0; k < 2; ++k) hw += g.features(j, k) * W(k, c);
          prop += aij * hw;
        }
        CHECK(out(i, c) == doctest::Approx(std::max(0.0, prop)).epsilon(1e-12));
      }
  }
}

TEST_CASE("gat layer") {
  EncoderSpec spec = tiny_spec(Architecture::GAT);
  SUBCASE("isolated node attends only to itself") {
    Graph g = Graph::from_edge_list(1, {}, Tensor::from_rows({{1.0, 2.0}}), {0});
    GraphCache cache = GraphCache::build(g, spec);
    Tape tape;
    Tensor W = random_tensor(2, 3, 10);
    const Tensor& out = tape.val(gat_layer(tape, tape.constant(g.features),
                                           {tape.constant(W)},
                                           {tape.constant(random_tensor(6, 1, 11))}, cache, 0.2,
                                           /*final_layer=*/true));
    for (std::size_t c = 0; c < 3; ++c) {
      double hw = 0.0;
      for (std::size_t k = 0; k < 2; ++k) hw += g.features(0, k) * W(k, c);
      CHECK(out(0, c) == doctest::Approx(hw).epsilon(1e-12));
    }
  }
  SUBCASE("zero attention vector gives uniform neighborhood means") {
    Graph g = random_labeled_graph(6, 0.4, 2, 3);
    GraphCache cache = GraphCache::build(g, spec);
    Tensor W = random_tensor(3, 2, 12);
    Tape tape;
    NodeId H = tape.constant(g.features);
    const Tensor& out = tape.val(gat_layer(tape, H, {tape.constant(W)},
                                           {tape.constant(Tensor::zeros(4, 1))}, cache, 0.2,
                                           true));
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<std::size_t> nbh = {i};
      for (std::size_t j : g.neighbors(i)) nbh.push_back(j);
      for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (std::size_t j : nbh) {
          double hw = 0.0;
          for (std::size_t k = 0; k < 3; ++k) hw += g.features(j, k) * W(k, c);
          mean += hw;
        }
        mean /= static_cast<double>(nbh.size());
        CHECK(out(i, c) == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }
  SUBCASE("attention weights sum to one: constant values aggregate to themselves") {
    Graph g = random_labeled_graph(7, 0.3, 3, 2);
    GraphCache cache = GraphCache::build(g, spec);
    // W projecting constant features to a constant: H = ones, so HW is
    // constant per column; row-stochastic attention must reproduce it exactly
    Graph gc = g;
    gc.features = Tensor::ones(g.n, 2);
    Tensor W = random_tensor(2, 2, 13);
    Tape tape;
    const Tensor& out = tape.val(gat_layer(tape, tape.constant(gc.features), {tape.constant(W)},
                                           {tape.constant(random_tensor(4, 1, 14))}, cache, 0.2,
                                           true));
    for (std::size_t c = 0; c < 2; ++c) {
      const double expect = W(0, c) + W(1, c);
      for (std::size_t i = 0; i < g.n; ++i)
        CHECK(out(i, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("matches a brute-force attention oracle on a star") {
    Graph g = Graph::from_edge_list(4, {{0, 1}, {0, 2}, {0, 3}}, random_tensor(4, 3, 15),
                                    {0, 0, 0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    Tensor W = random_tensor(3, 2, 16);
    Tensor a = random_tensor(4, 1, 17);
    Tape tape;
    const Tensor& out = tape.val(gat_layer(tape, tape.constant(g.features), {tape.constant(W)},
                                           {tape.constant(a)}, cache, 0.2, false));
    auto hw = [&](std::size_t j, std::size_t c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += g.features(j, k) * W(k, c);
      return s;
    };
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<std::size_t> nbh = {i};
      for (std::size_t j : g.neighbors(i)) nbh.push_back(j);
      std::vector<double> logits;
      for (std::size_t j : nbh) {
        double l = 0.0;
        for (std::size_t c = 0; c < 2; ++c) l += a(c, 0) * hw(i, c) + a(2 + c, 0) * hw(j, c);
        logits.push_back(leaky(l));
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double l : logits) denom += std::exp(l - mx);
      for (std::size_t c = 0; c < 2; ++c) {
        double agg = 0.0;
        for (std::size_t t = 0; t < nbh.size(); ++t)
          agg += std::exp(logits[t] - mx) / denom * hw(nbh[t], c);
        CHECK(out(i, c) == doctest::Approx(std::max(0.0, agg)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("sage layer") {
  EncoderSpec spec = tiny_spec(Architecture::SAGE);
  SUBCASE("single neighbor is always the sample") {
    Graph g = Graph::from_edge_list(2, {{0, 1}}, random_tensor(2, 2, 20), {0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    cache.rebuild_sage_op(1, 77);
    Tensor W = random_tensor(4, 2, 21);
    Tape tape;
    const Tensor& out =
        tape.val(sage_layer(tape, tape.constant(g.features), cache.sage_op, tape.constant(W),
                            true));
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t k = 0; k < 2; ++k)
        expect += g.features(0, k) * W(k, c) + g.features(1, k) * W(2 + k, c);
      CHECK(out(0, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("identical features produce identical rows") {
    Graph g = random_labeled_graph(6, 0.5, 4, 2);
    g.features = Tensor::ones(6, 2);
    GraphCache cache = GraphCache::build(g, spec);
    cache.rebuild_sage_op(10, 5);
    Tape tape;
    const Tensor& out = tape.val(sage_layer(tape, tape.constant(g.features), cache.sage_op,
                                            tape.constant(random_tensor(4, 3, 22)), true));
    for (std::size_t i = 1; i < 6; ++i)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(out(i, c) == doctest::Approx(out(0, c)).epsilon(1e-12));
  }
  SUBCASE("large sample size reduces to the exact neighborhood mean") {
    Graph g = random_labeled_graph(8, 0.4, 6, 3);
    GraphCache cache = GraphCache::build(g, spec);
    cache.rebuild_sage_op(100, 9);
    Tensor W = random_tensor(6, 2, 23);
    Tape tape;
    const Tensor& out = tape.val(
        sage_layer(tape, tape.constant(g.features), cache.sage_op, tape.constant(W), false));
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<double> mean(3, 0.0);
      for (std::size_t j : g.neighbors(i))
        for (std::size_t k = 0; k < 3; ++k) mean[k] += g.features(j, k);
      for (double& v : mean) v /= static_cast<double>(g.degree(i));
      for (std::size_t c = 0; c < 2; ++c) {
        double expect = 0.0;
        for (std::size_t k = 0; k < 3; ++k)
          expect += g.features(i, k) * W(k, c) + mean[k] * W(3 + k, c);
        CHECK(out(i, c) == doctest::Approx(std::max(0.0, expect)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gin layer") {
  SUBCASE("isolated node with zero eps is the MLP of its feature") {
    Graph g = Graph::from_edge_list(1, {}, Tensor::from_rows({{0.3, 0.9}}), {0});
    SparseMatrix adj = adjacency(g);
    Tensor W1 = random_tensor(2, 3, 30), W2 = random_tensor(3, 2, 31);
    Tape tape;
    const Tensor& out = tape.val(gin_layer(
        tape, tape.constant(g.features), adj, tape.constant(W1),
        tape.constant(Tensor::zeros(1, 3)), tape.constant(W2), tape.constant(Tensor::zeros(1, 2)),
        tape.constant(Tensor::scalar(0.0)), true));
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t h = 0; h < 3; ++h) {
        double pre = 0.0;
        for (std::size_t k = 0; k < 2; ++k) pre += g.features(0, k) * W1(k, h);
        expect += std::max(0.0, pre) * W2(h, c);
      }
      CHECK(out(0, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("two-node edge with identity MLP sums both endpoints") {
    Graph g = Graph::from_edge_list(2, {{0, 1}},
                                    Tensor::from_rows({{1.0, 2.0}, {0.5, 0.25}}), {0, 0});
    SparseMatrix adj = adjacency(g);
    Tape tape;
    const Tensor& out = tape.val(gin_layer(
        tape, tape.constant(g.features), adj, tape.constant(Tensor::identity(2)),
        tape.constant(Tensor::zeros(1, 2)), tape.constant(Tensor::identity(2)),
        tape.constant(Tensor::zeros(1, 2)), tape.constant(Tensor::scalar(0.0)), true));
    CHECK(out(0, 0) == doctest::Approx(1.5));
    CHECK(out(0, 1) == doctest::Approx(2.25));
    CHECK(out(1, 0) == doctest::Approx(1.5));
    CHECK(out(1, 1) == doctest::Approx(2.25));
  }
  SUBCASE("eps = -1 cancels the self term, distinguishing sum from mean") {
    // nodes 0 and 1 both see neighbor sums; with eps=-1 the output depends
    // only on the neighbor SUM, so nodes with equal sums but different
    // degrees map identically only under sum aggregation
    Graph g = Graph::from_edge_list(
        4, {{0, 1}, {2, 1}, {2, 3}},
        Tensor::from_rows({{2.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, -1.0}}), {0, 0, 0, 0});
    SparseMatrix adj = adjacency(g);
    Tape tape;
    // node 0 neighbors {1}: sum (1,1); node 2 neighbors {1,3}: sum (2,0)
    const Tensor& out = tape.val(gin_layer(
        tape, tape.constant(g.features), adj, tape.constant(Tensor::identity(2)),
        tape.constant(Tensor::zeros(1, 2)), tape.constant(Tensor::identity(2)),
        tape.constant(Tensor::zeros(1, 2)), tape.constant(Tensor::scalar(-1.0)), true));
    CHECK(out(0, 0) == doctest::Approx(1.0));  // neighbor sum only
    CHECK(out(0, 1) == doctest::Approx(1.0));
    CHECK(out(2, 0) == doctest::Approx(2.0));  // sum, not mean (mean would be 1)
    CHECK(out(2, 1) == doctest::Approx(0.0));
  }
  SUBCASE("triangle matches a brute-force evaluation") {
    Graph g = Graph::from_edge_list(3, {{0, 1}, {1, 2}, {0, 2}}, random_tensor(3, 2, 33),
                                    {0, 0, 0});
    SparseMatrix adj = adjacency(g);
    Tensor W1 = random_tensor(2, 4, 34), b1 = random_tensor(1, 4, 35);
    Tensor W2 = random_tensor(4, 2, 36), b2 = random_tensor(1, 2, 37);
    const double eps = 0.3;
    Tape tape;
    const Tensor& out = tape.val(gin_layer(
        tape, tape.constant(g.features), adj, tape.constant(W1), tape.constant(b1),
        tape.constant(W2), tape.constant(b2), tape.constant(Tensor::scalar(eps)), false));
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> agg(2);
      for (std::size_t k = 0; k < 2; ++k) {
        agg[k] = (1.0 + eps) * g.features(i, k);
        for (std::size_t j : g.neighbors(i)) agg[k] += g.features(j, k);
      }
      for (std::size_t c = 0; c < 2; ++c) {
        double o = b2(0, c);
        for (std::size_t h = 0; h < 4; ++h) {
          double pre = b1(0, h);
          for (std::size_t k = 0; k < 2; ++k) pre += agg[k] * W1(k, h);
          o += std::max(0.0, pre) * W2(h, c);
        }
        CHECK(out(i, c) == doctest::Approx(std::max(0.0, o)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pagnn layer") {
  EncoderSpec spec = tiny_spec(Architecture::PAGNN);
  SUBCASE("zero positional encodings reduce to plain attention") {
    Graph g = random_labeled_graph(6, 0.3, 7, 3);
    GraphCache cache = GraphCache::build(g, spec);
    for (double& v : cache.pe_diff.data) v = 0.0;
    Tensor W = random_tensor(3, 2, 40);
    Tensor a_full = random_tensor(4 + spec.pe_dim, 1, 41);
    Tensor a_prefix(4, 1);
    for (std::size_t k = 0; k < 4; ++k) a_prefix(k, 0) = a_full(k, 0);
    Tape tape;
    const Tensor& with_pe =
        tape.val(pagnn_layer(tape, tape.constant(g.features), {tape.constant(W)},
                             {tape.constant(a_full)}, cache, 0.2, true));
    const Tensor& plain = tape.val(gat_layer(tape, tape.constant(g.features), {tape.constant(W)},
                                             {tape.constant(a_prefix)}, cache, 0.2, true));
    for (std::size_t k = 0; k < with_pe.size(); ++k)
      CHECK(with_pe.data[k] == doctest::Approx(plain.data[k]).epsilon(1e-12));
  }
  SUBCASE("matches a brute-force oracle on a path") {
    Graph g = Graph::from_edge_list(4, {{0, 1}, {1, 2}, {2, 3}}, random_tensor(4, 3, 42),
                                    {0, 0, 0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    Tensor W = random_tensor(3, 2, 43);
    Tensor a = random_tensor(4 + spec.pe_dim, 1, 44);
    Tape tape;
    const Tensor& out = tape.val(pagnn_layer(tape, tape.constant(g.features), {tape.constant(W)},
                                             {tape.constant(a)}, cache, 0.2, false));
    auto hw = [&](std::size_t j, std::size_t c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += g.features(j, k) * W(k, c);
      return s;
    };
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<std::size_t> nbh = {i};
      for (std::size_t j : g.neighbors(i)) nbh.push_back(j);
      std::vector<double> logits;
      for (std::size_t j : nbh) {
        double l = 0.0;
        for (std::size_t c = 0; c < 2; ++c) l += a(c, 0) * hw(i, c) + a(2 + c, 0) * hw(j, c);
        // self-pair uses p_i - p_i = 0
        for (std::size_t k = 0; k < spec.pe_dim; ++k)
          l += a(4 + k, 0) * (cache.pe(i, k) - cache.pe(j, k));
        logits.push_back(leaky(l));
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double l : logits) denom += std::exp(l - mx);
      for (std::size_t c = 0; c < 2; ++c) {
        double agg = 0.0;
        for (std::size_t t = 0; t < nbh.size(); ++t)
          agg += std::exp(logits[t] - mx) / denom * hw(nbh[t], c);
        CHECK(out(i, c) == doctest::Approx(std::max(0.0, agg)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("mpnn layer") {
  EncoderSpec spec = tiny_spec(Architecture::MPNN);
  SUBCASE("isolated node gets a zero message") {
    Graph g = Graph::from_edge_list(2, {}, random_tensor(2, 2, 50), {0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    Tensor Wu = random_tensor(2 + 3, 3, 51), bu = random_tensor(1, 3, 52);
    Tape tape;
    const Tensor& out = tape.val(mpnn_layer(
        tape, tape.constant(g.features), cache, tape.constant(random_tensor(4, 3, 53)),
        tape.constant(random_tensor(1, 3, 54)), tape.constant(Wu), tape.constant(bu), true));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        double expect = bu(0, c);
        for (std::size_t k = 0; k < 2; ++k) expect += g.features(i, k) * Wu(k, c);
        CHECK(out(i, c) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
  SUBCASE("zero message parameters make the output depend only on the node") {
    Graph g = Graph::from_edge_list(3, {{0, 1}, {1, 2}},
                                    Tensor::from_rows({{1.0, 2.0}, {0.1, 0.2}, {1.0, 2.0}}),
                                    {0, 0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    Tape tape;
    const Tensor& out = tape.val(mpnn_layer(
        tape, tape.constant(g.features), cache, tape.constant(Tensor::zeros(4, 2)),
        tape.constant(Tensor::zeros(1, 2)), tape.constant(random_tensor(4, 2, 55)),
        tape.constant(random_tensor(1, 2, 56)), true));
    // nodes 0 and 2 share features but have different neighborhoods
    for (std::size_t c = 0; c < 2; ++c) CHECK(out(0, c) == doctest::Approx(out(2, c)));
  }
  SUBCASE("matches a brute-force oracle on a path") {
    Graph g = Graph::from_edge_list(3, {{0, 1}, {1, 2}}, random_tensor(3, 2, 57), {0, 0, 0});
    GraphCache cache = GraphCache::build(g, spec);
    Tensor Wm = random_tensor(4, 2, 58), bm = random_tensor(1, 2, 59);
    Tensor Wu = random_tensor(4, 2, 60), bu = random_tensor(1, 2, 61);
    Tape tape;
    const Tensor& out = tape.val(mpnn_layer(tape, tape.constant(g.features), cache,
                                            tape.constant(Wm), tape.constant(bm),
                                            tape.constant(Wu), tape.constant(bu), false));
    for (std::size_t v = 0; v < 3; ++v) {
      std::vector<double> m(2, 0.0);
      for (std::size_t u : g.neighbors(v))
        for (std::size_t c = 0; c < 2; ++c) {
          double pre = bm(0, c);
          for (std::size_t k = 0; k < 2; ++k)
            pre += g.features(v, k) * Wm(k, c) + g.features(u, k) * Wm(2 + k, c);
          m[c] += std::max(0.0, pre);
        }
      for (std::size_t c = 0; c < 2; ++c) {
        double o = bu(0, c);
        for (std::size_t k = 0; k < 2; ++k) o += g.features(v, k) * Wu(k, c);
        for (std::size_t k = 0; k < 2; ++k) o += m[k] * Wu(2 + k, c);
        CHECK(out(v, c) == doctest::Approx(std::max(0.0, o)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("fuse_all") {
  Tape tape;
  std::vector<NodeId> zs;
  Tensor nz = random_tensor(2, 3, 70);
  for (int k = 0; k < 6; ++k)
    zs.push_back(tape.constant(k == 2 ? nz : Tensor::zeros(2, 3)));
  SUBCASE("sum with one nonzero input is that input") {
    const Tensor& out = tape.val(fuse_all(tape, zs, Fusion::Sum));
    for (std::size_t k = 0; k < nz.size(); ++k) CHECK(out.data[k] == nz.data[k]);
  }
  SUBCASE("concat preserves architecture order") {
    std::vector<NodeId> rows;
    for (int k = 0; k < 6; ++k) {
      Tensor t(1, 2);
      t(0, 0) = k;
      t(0, 1) = k + 0.5;
      rows.push_back(tape.constant(t));
    }
    const Tensor& cat = tape.val(tape.concat(rows, Axis::Cols));
    REQUIRE(cat.cols == 12);
    for (int k = 0; k < 6; ++k) {
      CHECK(cat(0, 2 * k) == doctest::Approx(k));
      CHECK(cat(0, 2 * k + 1) == doctest::Approx(k + 0.5));
    }
  }
  SUBCASE("sum equals concat with stacked identity projection") {
    std::vector<NodeId> rnd;
    for (int k = 0; k < 6; ++k) rnd.push_back(tape.constant(random_tensor(2, 3, 71 + k)));
    Tensor proj(18, 3);
    for (int k = 0; k < 6; ++k)
      for (std::size_t j = 0; j < 3; ++j) proj(3 * k + j, j) = 1.0;
    const Tensor& sum = tape.val(fuse_all(tape, rnd, Fusion::Sum));
    const Tensor& cat = tape.val(fuse_all(tape, rnd, Fusion::Concat, tape.constant(proj)));
    for (std::size_t k = 0; k < sum.size(); ++k)
      CHECK(sum.data[k] == doctest::Approx(cat.data[k]).epsilon(1e-14));
  }
  SUBCASE("mismatched shapes rejected") {
    std::vector<NodeId> bad = {tape.constant(Tensor::zeros(2, 3)),
                               tape.constant(Tensor::zeros(3, 3))};
    CHECK_THROWS_AS(fuse_all(tape, bad, Fusion::Sum), std::invalid_argument);
  }
}

TEST_CASE("full encoder") {
  Graph g = random_labeled_graph(20, 0.2, 8, 30);
  SUBCASE("output shape is n x embed_dim for every architecture") {
    for (Architecture arch : {Architecture::GCN, Architecture::GAT, Architecture::SAGE,
                              Architecture::GIN, Architecture::PAGNN, Architecture::MPNN,
                              Architecture::ALL}) {
      EncoderSpec spec;  // benchmark-protocol dims
      spec.arch = arch;
      GraphCache cache = GraphCache::build(g, spec);
      ParameterSet ps = init_params(spec, g.feature_dim(), 1);
      Tape tape;
      auto ids = register_params(tape, ps);
      NodeId Z = encode(tape, spec, ids, cache, 0);
      CHECK(tape.val(Z).rows == g.n);
      CHECK(tape.val(Z).cols == 128);
      CHECK(tape.val(Z).all_finite());
    }
  }
  SUBCASE("same parameters and seed give bitwise-identical embeddings") {
    EncoderSpec spec = tiny_spec(Architecture::ALL);
    GraphCache cache = GraphCache::build(g, spec);
    ParameterSet ps = init_params(spec, g.feature_dim(), 3);
    auto run = [&]() {
      Tape tape;
      auto ids = register_params(tape, ps);
      return tape.val(encode(tape, spec, ids, cache, 5)).data;
    };
    CHECK(run() == run());
  }
  SUBCASE("missing parameters rejected") {
    EncoderSpec spec = tiny_spec(Architecture::GCN);
    GraphCache cache = GraphCache::build(g, spec);
    Tape tape;
    std::map<std::string, NodeId> empty;
    CHECK_THROWS_AS(encode(tape, spec, empty, cache, 0), std::invalid_argument);
  }
}

TEST_CASE("encoder gradients pass finite-difference checks on small graphs") {
  Graph g = random_labeled_graph(8, 0.3, 11, 5);
  for (Architecture arch : {Architecture::GCN, Architecture::GAT, Architecture::SAGE,
                            Architecture::GIN, Architecture::PAGNN, Architecture::MPNN,
                            Architecture::ALL}) {
    CAPTURE(arch_name(arch));
    EncoderSpec spec = tiny_spec(arch);
    GraphCache cache = GraphCache::build(g, spec);
    ParameterSet ps = init_params(spec, g.feature_dim(), 2);
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    for (const auto& [name, t] : ps.tensors) {
      names.push_back(name);
      tensors.push_back(t);
    }
    Tensor probe = random_tensor(g.n, spec.embed_dim, 99, 0.5, 1.5);
    auto f = [&](Tape& t, const std::vector<NodeId>& p) {
      std::map<std::string, NodeId> ids;
      for (std::size_t k = 0; k < names.size(); ++k) ids[names[k]] = p[k];
      NodeId Z = encode(t, spec, ids, cache, 4);
      return t.sum(t.mul(Z, t.constant(probe)));
    };
    CHECK(grad_check(f, tensors, 1e-5) < 1e-4);
  }
}

TEST_CASE("permutation equivariance") {
  Graph g = random_labeled_graph(12, 0.3, 13, 4);
  // permutation
  std::vector<std::size_t> perm(g.n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(21);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> pedges;
  for (auto [u, v] : g.edges) pedges.emplace_back(perm[u], perm[v]);
  Tensor pX(g.n, g.feature_dim());
  std::vector<int> plabels(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.feature_dim(); ++j) pX(perm[i], j) = g.features(i, j);
    plabels[perm[i]] = g.labels[i];
  }
  Graph pg = Graph::from_edge_list(g.n, pedges, pX, plabels, "perm");

  for (Architecture arch : {Architecture::GCN, Architecture::GAT, Architecture::GIN,
                            Architecture::PAGNN, Architecture::MPNN}) {
    CAPTURE(arch_name(arch));
    EncoderSpec spec = tiny_spec(arch);
    ParameterSet ps = init_params(spec, g.feature_dim(), 6);
    GraphCache c1 = GraphCache::build(g, spec);
    GraphCache c2 = GraphCache::build(pg, spec);
    Tape t1, t2;
    auto id1 = register_params(t1, ps);
    auto id2 = register_params(t2, ps);
    const Tensor& z1 = t1.val(encode(t1, spec, id1, c1, 0));
    const Tensor& z2 = t2.val(encode(t2, spec, id2, c2, 0));
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t j = 0; j < spec.embed_dim; ++j)
        CHECK(z1(i, j) == doctest::Approx(z2(perm[i], j)).epsilon(1e-10));
  }
}

TEST_CASE("universal encoder width is independent of input width") {
  EncoderSpec spec = tiny_spec(Architecture::GCN);
  for (std::size_t d_in : {7, 23}) {
    Graph g = random_labeled_graph(5, 0.3, 14, d_in);
    GraphCache cache = GraphCache::build(g, spec);
    ParameterSet ps = init_params(spec, d_in, 4);
    Tape tape;
    auto ids = register_params(tape, ps);
    NodeId Z = encode(tape, spec, ids, cache, 0);
    CHECK(tape.val(Z).cols == spec.embed_dim);
  }
}

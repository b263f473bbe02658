#ifndef LOSSBENCH_TRAIN_HPP
#define LOSSBENCH_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lossbench/encoders.hpp"
#include "lossbench/losses.hpp"
#include "lossbench/metrics.hpp"
#include "lossbench/optim.hpp"
#include "lossbench/rank.hpp"

namespace lossbench {

/// Experiment knobs. Defaults follow the benchmark protocol: 500 epochs,
/// early-stop patience 10 on the training loss, 128-dim embeddings,
/// seeds {1..5}.
struct ExperimentConfig {
  std::vector<std::string> datasets;   // transductive targets
  std::string pretrain_dataset;        // inductive roles
  std::string apply_dataset;
  std::vector<std::string> architectures = {"GCN", "GAT",  "SAGE", "GIN",
                                            "PAGNN", "MPNN", "ALL"};
  std::size_t hybrid_max_order = 5;
  std::vector<std::string> losses;  // canonical names; empty = every hybrid
  std::size_t epochs = 500;
  std::size_t patience = 10;
  std::size_t embed_dim = 128;
  bool protocol_mode = true;  // pins embed_dim to 128
  // 1e-4 keeps long full-batch runs stable: at 1e-3 a few hundred Adam steps
  // rewrite glorot-scale weights outright and reconstruction-style losses
  // collapse the embedding.
  AdamConfig optimizer{1e-4};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string setting = "transductive";  // transductive | inductive
  LossContext loss_ctx;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("ExperimentConfig: epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("ExperimentConfig: patience must be >= 1");
    if (protocol_mode && embed_dim != 128)
      throw std::invalid_argument("ExperimentConfig: protocol mode pins embed_dim to 128");
    if (setting != "transductive" && setting != "inductive")
      throw std::invalid_argument("ExperimentConfig: unknown setting " + setting);
    if (setting == "inductive" && pretrain_dataset == apply_dataset)
      throw std::invalid_argument(
          "ExperimentConfig: inductive needs distinct pretrain/apply datasets");
  }
};

/// Flat JSON config mirroring ExperimentConfig; absent keys keep defaults.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  ExperimentConfig cfg;
  if (j.contains("datasets")) cfg.datasets = j["datasets"].get<std::vector<std::string>>();
  if (j.contains("pretrain_dataset")) cfg.pretrain_dataset = j["pretrain_dataset"];
  if (j.contains("apply_dataset")) cfg.apply_dataset = j["apply_dataset"];
  if (j.contains("architectures"))
    cfg.architectures = j["architectures"].get<std::vector<std::string>>();
  if (j.contains("hybrid_max_order")) cfg.hybrid_max_order = j["hybrid_max_order"];
  if (j.contains("losses")) cfg.losses = j["losses"].get<std::vector<std::string>>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"];
  if (j.contains("patience")) cfg.patience = j["patience"];
  if (j.contains("embed_dim")) cfg.embed_dim = j["embed_dim"];
  if (j.contains("protocol_mode")) cfg.protocol_mode = j["protocol_mode"];
  if (j.contains("lr")) cfg.optimizer.lr = j["lr"];
  if (j.contains("beta1")) cfg.optimizer.beta1 = j["beta1"];
  if (j.contains("beta2")) cfg.optimizer.beta2 = j["beta2"];
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("setting")) cfg.setting = j["setting"];
  if (j.contains("margin")) cfg.loss_ctx.margin = j["margin"];
  if (j.contains("dae_sigma")) cfg.loss_ctx.dae_sigma = j["dae_sigma"];
  if (j.contains("negatives")) cfg.loss_ctx.negatives = j["negatives"];
  if (j.contains("anchor_cap")) cfg.loss_ctx.anchor_cap = j["anchor_cap"];
  cfg.validate();
  return cfg;
}

struct TrainResult {
  ParameterSet params;  // encoder weights plus gate.* and dae.* tensors
  Tensor Z;             // embedding under the restored best parameters
  std::vector<double> loss_curve;
  bool aborted = false;  // non-finite loss encountered
  std::size_t best_epoch = 0;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct LossInputs {
  SparseMatrix pmi;
  std::vector<double> pr;
  bool has_pmi = false;
  bool has_pr = false;
};

inline LossInputs prepare_loss_inputs(const Graph& g, const HybridLossSpec& spec) {
  LossInputs in;
  for (const std::string& m : spec.members) {
    if (m == "PMI_L" && !in.has_pmi) {
      in.pmi = pmi_matrix(g);
      in.has_pmi = true;
    }
    if (m == "PR_L" && !in.has_pr) {
      in.pr = pagerank(g).scores;
      in.has_pr = true;
    }
  }
  return in;
}

inline NodeId build_total_loss(Tape& tape, const HybridLossSpec& spec, NodeId Z,
                               const Graph& g, const LossContext& ctx,
                               const LossInputs& in,
                               const std::map<std::string, NodeId>& params,
                               std::uint64_t epoch_seed) {
  std::map<std::string, NodeId> base;
  for (const std::string& m : spec.members) {
    const std::uint64_t s = mix64(epoch_seed ^ fnv1a(m));
    if (m == "PMI_L") {
      base[m] = pmi_loss(tape, Z, in.pmi);
    } else if (m == "Contr_l") {
      base[m] = contrastive_loss(tape, Z, g, ctx, s);
    } else if (m == "Triplet_L") {
      base[m] = triplet_loss(tape, Z, g, ctx, s);
    } else if (m == "PR_L") {
      base[m] = pagerank_loss(tape, Z, in.pr, ctx, s);
    } else if (m == "CrossE_L") {
      base[m] = dae_loss(tape, Z, get_param(params, "dae.W1"), get_param(params, "dae.b1"),
                         get_param(params, "dae.W2"), get_param(params, "dae.b2"),
                         ctx.dae_sigma, s);
    } else {
      throw std::invalid_argument("unknown loss member: " + m);
    }
  }
  std::map<std::string, NodeId> gates;
  for (const std::string& m : spec.members) gates["gate." + m] = get_param(params, "gate." + m);
  return hybrid_loss(tape, spec, base, gates);
}

}  // namespace detail

/// Full-batch training of one (architecture, loss) cell: encoder weights,
/// hybrid gates, and the denoiser (when CrossE_L is a member) step jointly
/// under Adam. Early stop when the training loss fails to improve by more
/// than 1e-6 for `patience` consecutive epochs; best-loss parameters are
/// restored. A non-finite loss aborts the run with the flag set, keeping the
/// best parameters seen so far.
inline TrainResult train(const ExperimentConfig& config, const Graph& g, Architecture arch,
                         const HybridLossSpec& loss_spec, std::uint64_t seed) {
  config.validate();
  EncoderSpec espec;
  espec.arch = arch;
  espec.embed_dim = config.embed_dim;
  espec.hidden_dim = config.embed_dim;
  espec.universal_hidden = std::max<std::size_t>(2 * config.embed_dim, espec.universal_hidden);

  TrainResult result;
  result.params = init_params(espec, g.feature_dim(), seed);
  for (auto& [name, t] : init_gate_params(loss_spec)) result.params.tensors[name] = t;
  for (const std::string& m : loss_spec.members)
    if (m == "CrossE_L")
      for (auto& [name, t] : init_dae_params(config.embed_dim, detail::mix64(seed ^ 0xdae)))
        result.params.tensors[name] = t;

  GraphCache cache = GraphCache::build(g, espec);
  const detail::LossInputs inputs = detail::prepare_loss_inputs(g, loss_spec);

  Adam opt(config.optimizer);
  double best = std::numeric_limits<double>::infinity();
  std::map<std::string, Tensor> best_tensors = result.params.tensors;
  std::size_t since_improve = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t es = detail::mix64(seed ^ (epoch + 1));
    Tape tape;
    auto pids = register_params(tape, result.params);
    NodeId Z = encode(tape, espec, pids, cache, es);
    NodeId loss = detail::build_total_loss(tape, loss_spec, Z, g, config.loss_ctx, inputs,
                                           pids, es);
    const double lv = tape.val(loss)(0, 0);
    if (!std::isfinite(lv)) {
      result.aborted = true;
      break;
    }
    result.loss_curve.push_back(lv);
    if (best - lv > 1e-6) {
      best = lv;
      best_tensors = result.params.tensors;
      result.best_epoch = epoch;
      since_improve = 0;
    } else if (++since_improve >= config.patience) {
      break;
    }
    auto grads = tape.backward(loss);
    std::map<std::string, Tensor> named;
    for (const auto& [name, id] : pids) {
      auto it = grads.find(id);
      if (it != grads.end()) named.emplace(name, it->second);
    }
    opt.step(result.params.tensors, named);
  }

  result.params.tensors = best_tensors;
  {
    Tape tape;
    auto pids = register_params(tape, result.params);
    result.Z = tape.val(encode(tape, espec, pids, cache, seed));
  }
  return result;
}

/// Encodes a (possibly different-width) graph through trained parameters.
/// The universal projection W_p is re-instantiated frozen-random from the
/// original init seed whenever the input width differs; everything
/// downstream transfers as-is.
inline Tensor apply_encoder(const ExperimentConfig& config, const ParameterSet& trained,
                            Architecture arch, const Graph& g) {
  EncoderSpec espec;
  espec.arch = arch;
  espec.embed_dim = config.embed_dim;
  espec.hidden_dim = config.embed_dim;
  espec.universal_hidden = std::max<std::size_t>(2 * config.embed_dim, espec.universal_hidden);

  ParameterSet ps = trained;
  const Tensor& wp = ps.tensors.at("universal.Wp");
  if (wp.rows != g.feature_dim()) {
    ParameterSet fresh;
    fresh.init_seed = trained.init_seed;
    detail::put_glorot(fresh, "universal.Wp", g.feature_dim(), espec.universal_hidden);
    ps.tensors["universal.Wp"] = fresh.tensors["universal.Wp"];
  }
  GraphCache cache = GraphCache::build(g, espec);
  Tape tape;
  auto pids = register_params(tape, ps);
  return tape.val(encode(tape, espec, pids, cache, trained.init_seed));
}

struct SeedStats {
  std::vector<MetricVector> per_seed;
  std::map<std::string, double> mean;
  std::map<std::string, double> stdev;
  bool any_aborted = false;
};

namespace detail {

inline void fill_mean_std(SeedStats& stats) {
  const double k = static_cast<double>(stats.per_seed.size());
  for (const std::string& m : metric_names()) {
    double mu = 0.0;
    for (const auto& mv : stats.per_seed) mu += mv.values.at(m);
    mu /= k;
    double var = 0.0;
    for (const auto& mv : stats.per_seed) {
      const double d = mv.values.at(m) - mu;
      var += d * d;
    }
    stats.mean[m] = mu;
    stats.stdev[m] = k > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
  }
}

}  // namespace detail

/// Train and evaluate on the same graph, aggregated to mean +- std per metric.
inline SeedStats run_transductive(const ExperimentConfig& config, const Graph& g,
                                  Architecture arch, const HybridLossSpec& loss_spec,
                                  const std::vector<std::uint64_t>& seeds) {
  if (!g.has_labels()) throw std::invalid_argument("run_transductive: graph is unlabeled");
  SeedStats stats;
  for (std::uint64_t seed : seeds) {
    TrainResult tr = train(config, g, arch, loss_spec, seed);
    MetricVector mv = evaluate_all(tr.Z, g, EvalConfig{}, seed);
    if (tr.aborted) {
      mv.degenerate.insert("training_aborted");
      stats.any_aborted = true;
    }
    stats.per_seed.push_back(std::move(mv));
  }
  detail::fill_mean_std(stats);
  return stats;
}

/// Pretrain on one graph, freeze, encode and evaluate another. Result rows
/// are keyed "Pretrain ↓ Apply".
inline SeedStats run_inductive(const ExperimentConfig& config, const Graph& pretrain_g,
                               const Graph& apply_g, Architecture arch,
                               const HybridLossSpec& loss_spec,
                               const std::vector<std::uint64_t>& seeds) {
  SeedStats stats;
  for (std::uint64_t seed : seeds) {
    TrainResult tr = train(config, pretrain_g, arch, loss_spec, seed);
    const Tensor Z = apply_encoder(config, tr.params, arch, apply_g);
    MetricVector mv = evaluate_all(Z, apply_g, EvalConfig{}, seed);
    if (tr.aborted) {
      mv.degenerate.insert("training_aborted");
      stats.any_aborted = true;
    }
    stats.per_seed.push_back(std::move(mv));
  }
  detail::fill_mean_std(stats);
  return stats;
}

inline std::string inductive_key(const std::string& pretrain, const std::string& apply) {
  return pretrain + " ↓ " + apply;
}

/// Content hash of everything that determines a matrix cell's result.
inline std::string cell_hash(const ExperimentConfig& config, const std::string& arch,
                             const std::string& loss, const std::string& dataset,
                             std::uint64_t seed) {
  std::ostringstream key;
  key.precision(17);
  key << "v1|" << arch << '|' << loss << '|' << dataset << '|' << seed << '|'
      << config.setting << '|' << config.epochs << '|' << config.patience << '|'
      << config.embed_dim << '|' << config.optimizer.lr << '|' << config.optimizer.beta1
      << '|' << config.optimizer.beta2 << '|' << config.optimizer.eps << '|'
      << config.loss_ctx.margin << '|' << config.loss_ctx.dae_sigma << '|'
      << config.loss_ctx.negatives << '|' << config.loss_ctx.anchor_cap;
  const std::uint64_t h = detail::fnv1a(key.str());
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

inline std::filesystem::path cell_cache_dir() {
  if (const char* env = std::getenv("LOSSBENCH_CACHE_DIR")) return env;
  return std::filesystem::temp_directory_path() / "lossbench-cache";
}

/// Runs every (architecture x hybrid spec x dataset/pair x seed) cell.
/// Completed cells are cached by content hash and never recomputed; failed
/// cells carry flags instead of aborting the matrix.
inline MetricTable run_matrix(const ExperimentConfig& config,
                              const std::map<std::string, Graph>& graphs) {
  config.validate();
  const bool inductive = config.setting == "inductive";
  std::vector<std::pair<std::string, std::string>> jobs;  // (dataset key, apply name)
  if (inductive) {
    jobs.push_back({inductive_key(config.pretrain_dataset, config.apply_dataset),
                    config.apply_dataset});
  } else {
    for (const std::string& d : config.datasets) jobs.push_back({d, d});
  }
  const std::filesystem::path cache_dir = cell_cache_dir();
  std::filesystem::create_directories(cache_dir);

  MetricTable table;
  for (const std::string& arch_s : config.architectures) {
    const Architecture arch = arch_from_name(arch_s);
    for (const HybridLossSpec& spec : enumerate_hybrids(config.hybrid_max_order)) {
      if (!config.losses.empty() &&
          std::find(config.losses.begin(), config.losses.end(), spec.name()) ==
              config.losses.end())
        continue;
      for (const auto& [key, apply_name] : jobs) {
        for (std::uint64_t seed : config.seeds) {
          MetricRecord rec;
          rec.model = arch_s;
          rec.loss = spec.name();
          rec.dataset = key;
          rec.setting = config.setting;
          rec.seed = seed;
          const std::filesystem::path cell =
              cache_dir / (cell_hash(config, arch_s, rec.loss, key, seed) + ".csv");
          if (std::filesystem::exists(cell)) {
            std::ifstream in(cell);
            MetricTable cached = parse_metric_table_csv(in);
            if (cached.rows.size() == 1) {
              table.rows.push_back(cached.rows[0]);
              continue;
            }
          }
          try {
            if (inductive) {
              const Graph& pg = graphs.at(config.pretrain_dataset);
              const Graph& ag = graphs.at(config.apply_dataset);
              TrainResult tr = train(config, pg, arch, spec, seed);
              rec.metrics = evaluate_all(apply_encoder(config, tr.params, arch, ag), ag,
                                         EvalConfig{}, seed);
              if (tr.aborted) rec.metrics.degenerate.insert("training_aborted");
            } else {
              const Graph& g = graphs.at(apply_name);
              TrainResult tr = train(config, g, arch, spec, seed);
              rec.metrics = evaluate_all(tr.Z, g, EvalConfig{}, seed);
              if (tr.aborted) rec.metrics.degenerate.insert("training_aborted");
            }
          } catch (const std::exception&) {
            for (const std::string& m : metric_names()) {
              rec.metrics.values[m] = 0.0;
              rec.metrics.absent.insert(m);
            }
          }
          {
            MetricTable one;
            one.rows.push_back(rec);
            std::ofstream out(cell);
            out << metric_table_csv(one);
          }
          table.rows.push_back(rec);
        }
      }
    }
  }
  return table;
}

}  // namespace lossbench

#endif  // LOSSBENCH_TRAIN_HPP

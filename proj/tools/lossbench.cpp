#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lossbench/checkpoint.hpp"
#include "lossbench/graph.hpp"
#include "lossbench/graph_ops.hpp"
#include "lossbench/rank.hpp"
#include "lossbench/train.hpp"

namespace fs = std::filesystem;
using namespace lossbench;

namespace {

// A dataset spec is a small JSON file naming the raw files:
//   {"name": "Cora", "format": "node_table", "nodes": "...", "edges": "...",
//    "sample": 5000, "sample_seed": 1}
// format "elliptic" instead takes "features"/"edges"/"classes". Paths are
// resolved relative to the spec file. "sample" caps the graph via seeded
// subgraph sampling and is optional.
Graph load_dataset_spec(const fs::path& spec_path) {
  std::ifstream in(spec_path);
  if (!in) throw std::runtime_error("dataset spec: cannot open " + spec_path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  const fs::path base = spec_path.parent_path();
  auto resolve = [&base](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  const std::string format = j.value("format", "node_table");
  Graph g = [&] {
    if (format == "node_table")
      return load_node_table(resolve(j.at("nodes")), resolve(j.at("edges")),
                             j.value("name", ""));
    if (format == "elliptic")
      return load_elliptic_csv(resolve(j.at("features")), resolve(j.at("edges")),
                               resolve(j.at("classes")));
    throw std::runtime_error("dataset spec: unknown format " + format);
  }();
  if (j.contains("name")) g.name = j["name"].get<std::string>();
  if (j.contains("sample")) {
    const std::size_t target = j["sample"].get<std::size_t>();
    if (target < g.n) g = subgraph_sample(g, target, j.value("sample_seed", 1ull));
  }
  return g;
}

HybridLossSpec parse_loss(const std::string& text) {
  std::vector<std::string> members;
  std::string cur;
  auto flush = [&] {
    const std::size_t a = cur.find_first_not_of(" \t");
    const std::size_t b = cur.find_last_not_of(" \t");
    if (a != std::string::npos) members.push_back(cur.substr(a, b - a + 1));
    cur.clear();
  };
  for (char c : text) {
    if (c == '+')
      flush();
    else
      cur += c;
  }
  flush();
  const auto& base = base_loss_names();
  for (const std::string& m : members)
    if (std::find(base.begin(), base.end(), m) == base.end())
      throw std::runtime_error("unknown loss member: " + m);
  HybridLossSpec spec;
  for (const std::string& b : base)  // canonical order regardless of input order
    if (std::find(members.begin(), members.end(), b) != members.end())
      spec.members.push_back(b);
  if (spec.members.empty()) throw std::runtime_error("empty loss spec: " + text);
  return spec;
}

// Every effective config field, defaults included, for report provenance.
std::string config_header(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto join = [](const auto& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  out << "# setting=" << cfg.setting << "\n";
  out << "# datasets=" << join(cfg.datasets) << "\n";
  out << "# pretrain_dataset=" << cfg.pretrain_dataset << "\n";
  out << "# apply_dataset=" << cfg.apply_dataset << "\n";
  out << "# architectures=" << join(cfg.architectures) << "\n";
  out << "# losses=" << (cfg.losses.empty() ? std::string("<all hybrids>") : join(cfg.losses))
      << "\n";
  out << "# hybrid_max_order=" << cfg.hybrid_max_order << "\n";
  out << "# epochs=" << cfg.epochs << "\n";
  out << "# patience=" << cfg.patience << "\n";
  out << "# embed_dim=" << cfg.embed_dim << "\n";
  out << "# protocol_mode=" << (cfg.protocol_mode ? "true" : "false") << "\n";
  out << "# lr=" << cfg.optimizer.lr << "\n";
  out << "# beta1=" << cfg.optimizer.beta1 << "\n";
  out << "# beta2=" << cfg.optimizer.beta2 << "\n";
  out << "# eps=" << cfg.optimizer.eps << "\n";
  out << "# margin=" << cfg.loss_ctx.margin << "\n";
  out << "# dae_sigma=" << cfg.loss_ctx.dae_sigma << "\n";
  out << "# negatives=" << cfg.loss_ctx.negatives << "\n";
  out << "# anchor_cap=" << cfg.loss_ctx.anchor_cap << "\n";
  out << "# seeds=" << join(cfg.seeds) << "\n";
  return out.str();
}

int cmd_ingest(const std::string& spec_path) {
  Graph g = load_dataset_spec(spec_path);
  std::size_t labeled = 0;
  for (int l : g.labels) labeled += l != kNoLabel;
  std::cout << "name: " << g.name << "\n"
            << "nodes: " << g.n << "\n"
            << "edges: " << g.edges.size() << "\n"
            << "feature_dim: " << g.feature_dim() << "\n"
            << "classes: " << (g.has_labels() ? g.num_classes() : 0) << "\n"
            << "labeled_nodes: " << labeled << "\n"
            << "symmetrized_from_directed: " << (g.directed_source ? "yes" : "no") << "\n";
  return 0;
}

int cmd_train(const std::string& arch_s, const std::string& loss_s,
              const std::string& dataset_spec, std::uint64_t seed,
              const std::string& config_path, const std::string& out_path) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
  Graph g = load_dataset_spec(dataset_spec);
  const Architecture arch = arch_from_name(arch_s);
  const HybridLossSpec spec = parse_loss(loss_s);
  std::cout << "training " << arch_s << " + " << spec.name() << " on " << g.name
            << " (seed " << seed << ")\n";
  TrainResult tr = train(cfg, g, arch, spec, seed);
  if (tr.aborted) std::cout << "run aborted: non-finite loss\n";
  if (!tr.loss_curve.empty())
    std::cout << "epochs run: " << tr.loss_curve.size() << "\nloss: " << tr.loss_curve.front()
              << " -> " << tr.loss_curve.back() << " (best epoch " << tr.best_epoch << ")\n";
  if (!out_path.empty()) {
    save_checkpoint(out_path, tr.params);
    std::cout << "checkpoint: " << out_path << "\n";
  }
  return tr.aborted ? 1 : 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_spec,
             const std::string& arch_s, const std::string& config_path, std::uint64_t seed) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
  Graph g = load_dataset_spec(dataset_spec);
  ParameterSet ps = load_checkpoint(ckpt_path);
  const Tensor Z = apply_encoder(cfg, ps, arch_from_name(arch_s), g);
  const MetricVector mv = evaluate_all(Z, g, EvalConfig{}, seed);
  MetricTable table;
  MetricRecord rec;
  rec.model = arch_s;
  rec.loss = "-";
  rec.dataset = g.name;
  rec.setting = cfg.setting;
  rec.seed = seed;
  rec.metrics = mv;
  table.rows.push_back(rec);
  std::cout << metric_table_csv(table);
  return 0;
}

int cmd_matrix(const std::string& config_path, const std::string& out_path) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("config: cannot open " + config_path);
  const nlohmann::json j = nlohmann::json::parse(in);
  ExperimentConfig cfg = load_experiment_config(config_path);
  // "dataset_specs": list of dataset-spec file paths, resolved relative to the config
  std::map<std::string, Graph> graphs;
  if (j.contains("dataset_specs")) {
    const fs::path base = fs::path(config_path).parent_path();
    for (const auto& entry : j["dataset_specs"]) {
      const fs::path p(entry.get<std::string>());
      Graph g = load_dataset_spec(p.is_absolute() ? p : base / p);
      graphs.emplace(g.name, std::move(g));
    }
  }
  const MetricTable table = run_matrix(cfg, graphs);
  const std::string csv = metric_table_csv(table);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path);
    out << csv;
    std::cout << "wrote " << table.rows.size() << " rows to " << out_path << "\n";
  }
  return 0;
}

int cmd_rank(const std::string& tables_dir, int top_k, const std::string& out_path) {
  const auto tables = load_rank_tables(tables_dir);
  const auto summary = aggregate_ranks(tables, static_cast<std::size_t>(top_k));
  const std::string csv = rank_summary_csv(summary);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path);
    out << csv;
    std::cout << "wrote " << summary.size() << " rows to " << out_path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& tables_dir, const std::string& format, int top_k,
               const std::string& out_dir, const std::string& config_path) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
  const auto tables = load_rank_tables(tables_dir);
  const auto summary = aggregate_ranks(tables, static_cast<std::size_t>(top_k));
  emit_report(summary, tables, format, out_dir);
  {
    std::ofstream hdr(fs::path(out_dir) / "config.txt");
    hdr << config_header(cfg);
  }
  std::cout << config_header(cfg);
  std::cout << "report (" << format << ") written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lossbench: unsupervised GNN loss benchmark"};
  app.require_subcommand(0, 1);

  std::string dataset_spec, arch = "GCN", loss = "CrossE_L", config_path, ckpt_path;
  std::string tables_dir, out_path, format = "csv";
  std::uint64_t seed = 1;
  int top_k = 3;

  CLI::App* ingest = app.add_subcommand("ingest", "load a dataset and print its summary");
  ingest->add_option("dataset-spec", dataset_spec, "dataset spec JSON file")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train one (architecture, loss) cell");
  train_cmd->add_option("--arch", arch, "architecture name")->required();
  train_cmd->add_option("--loss", loss, "loss spec, e.g. \"Contr_l + PMI_L\"")->required();
  train_cmd->add_option("--dataset", dataset_spec, "dataset spec JSON file")->required();
  train_cmd->add_option("--seed", seed, "training seed");
  train_cmd->add_option("--config", config_path, "experiment config JSON");
  train_cmd->add_option("--out", out_path, "checkpoint output path");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval_cmd->add_option("--dataset", dataset_spec, "dataset spec JSON file")->required();
  eval_cmd->add_option("--arch", arch, "architecture the checkpoint was trained with")
      ->required();
  eval_cmd->add_option("--config", config_path, "experiment config JSON");
  eval_cmd->add_option("--seed", seed, "evaluation seed");

  CLI::App* matrix_cmd = app.add_subcommand("matrix", "run the full experiment matrix");
  matrix_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  matrix_cmd->add_option("--out", out_path, "metric table CSV output path");

  CLI::App* rank_cmd = app.add_subcommand("rank", "aggregate per-metric rank tables");
  rank_cmd->add_option("--tables", tables_dir, "directory of per-metric rank CSVs")
      ->required();
  rank_cmd->add_option("--top-k", top_k, "coverage cutoff (distinct rank values)");
  rank_cmd->add_option("--out", out_path, "summary CSV output path");

  CLI::App* report_cmd = app.add_subcommand("report", "emit rank summary report files");
  report_cmd->add_option("--tables", tables_dir, "directory of per-metric rank CSVs")
      ->required();
  report_cmd->add_option("--format", format, "csv or markdown");
  report_cmd->add_option("--top-k", top_k, "coverage cutoff (distinct rank values)");
  report_cmd->add_option("--out", out_path, "output directory")->required();
  report_cmd->add_option("--config", config_path, "experiment config JSON for provenance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(dataset_spec);
    if (*train_cmd) return cmd_train(arch, loss, dataset_spec, seed, config_path, out_path);
    if (*eval_cmd) return cmd_eval(ckpt_path, dataset_spec, arch, config_path, seed);
    if (*matrix_cmd) return cmd_matrix(config_path, out_path);
    if (*rank_cmd) return cmd_rank(tables_dir, top_k, out_path);
    if (*report_cmd) return cmd_report(tables_dir, format, top_k, out_path, config_path);
  } catch (const std::exception& e) {
    std::cerr << "lossbench: " << e.what() << "\n";
    return 1;
  }
  std::puts("lossbench: no subcommand given (see --help)");
  return 0;
}

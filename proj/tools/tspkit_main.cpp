#include <chrono>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tsp/datagen.hpp"
#include "tsp/htem.hpp"
#include "tsp/kg.hpp"
#include "tsp/kge.hpp"
#include "tsp/kge_tsp.hpp"
#include "tsp/log.hpp"
#include "tsp/metrics.hpp"
#include "tsp/partition.hpp"
#include "tsp/pipeline.hpp"
#include "tsp/rng.hpp"
#include "tsp/rules.hpp"

namespace {

using nlohmann::ordered_json;
using namespace tsp;

constexpr const char* kVersion = "tspkit 0.1.0";

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_manifest(const std::string& path, ordered_json body) {
  body["tool"] = kVersion;
  std::ofstream out(path);
  if (!out) fail("cannot open ", path, " for writing");
  out << body.dump(2) << '\n';
  if (!out) fail("failed writing manifest to ", path);
}

KgeKind parse_model(const std::string& name) {
  if (name == "hake") return KgeKind::kHake;
  if (name == "pairre") return KgeKind::kPairRE;
  fail("unknown model '", name, "' (expected hake or pairre)");
}

// A graph sharing the full vocabulary but holding only the given triples.
KnowledgeGraph restrict_graph(const KnowledgeGraph& full,
                              const std::vector<Triple>& triples) {
  KnowledgeGraph g;
  for (std::size_t e = 0; e < full.num_entities(); ++e)
    g.intern_entity(full.entity_name(static_cast<EntityId>(e)));
  for (std::size_t r = 0; r < full.num_relations(); ++r)
    g.intern_relation(full.relation_name(static_cast<RelationId>(r)));
  for (const Triple& t : triples) g.add_triple(t);
  return g;
}

std::string format_rule(const KnowledgeGraph& kg, const Rule& rule) {
  std::string s = kg.relation_name(rule.head);
  s += " <-";
  for (const RuleAtom& a : rule.body) {
    s += ' ';
    s += kg.relation_name(a.rel);
    if (a.inverse) s += kInverseSuffix;
  }
  return s;
}

struct DatagenOpts {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t people = 2300;
  std::size_t families = 36;
  double train_ratio = 0.72, valid_ratio = 0.08, test_ratio = 0.20;
};

int run_datagen(const DatagenOpts& o) {
  Stopwatch watch;
  auto gen_rng = make_rng(o.seed, "datagen");
  KnowledgeGraph kg = generate_family_kg(o.people, o.families, gen_rng);
  SplitRatios ratios{o.train_ratio, o.valid_ratio, o.test_ratio};
  auto split_rng = make_rng(o.seed, "split");
  DatasetSplit split = split_dataset(kg, ratios, split_rng);
  save_dataset(split, o.out);

  ordered_json rules = ordered_json::array();
  for (const Rule& r : family_schema().closure_rules)
    rules.push_back(format_rule(kg, r));
  ordered_json m;
  m["command"] = "datagen";
  m["seed"] = o.seed;
  m["people"] = o.people;
  m["families"] = o.families;
  m["entities"] = kg.num_entities();
  m["relations"] = kg.num_relations();
  m["triples"] = kg.num_triples();
  m["train"] = split.train.size();
  m["valid"] = split.valid.size();
  m["test"] = split.test.size();
  m["ratios"] = {o.train_ratio, o.valid_ratio, o.test_ratio};
  m["closure_rules"] = rules;
  m["seconds"] = watch.seconds();
  write_manifest(o.out + "/generation.json", std::move(m));
  log_info("dataset written to ", o.out);
  return 0;
}

struct PartitionOpts {
  std::string dataset, out;
  std::uint64_t seed = 0;
  std::size_t hops = 2, nmin = 50, nmax = 500;
};

int run_partition(const PartitionOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  KnowledgeGraph train_kg = restrict_graph(kg, split.train);
  PartitionParams params;
  params.hops = o.hops;
  params.n_min = o.nmin;
  params.n_max = o.nmax;
  params.seed = o.seed;
  PartitionResult part = partition_best_of(train_kg, params);
  save_partition(train_kg, part, o.out);

  ordered_json m;
  m["command"] = "partition";
  m["dataset"] = o.dataset;
  m["seed"] = o.seed;
  m["hops"] = o.hops;
  m["nmin"] = o.nmin;
  m["nmax"] = o.nmax;
  m["groups"] = part.groups.size();
  m["full_space"] = part.full_space;
  m["candidate_space"] = part.candidate_space;
  m["seconds"] = watch.seconds();
  write_manifest(o.out + "/run.json", std::move(m));
  log_info("partition with ", part.groups.size(), " subgraphs written to ",
           o.out);
  return 0;
}

struct TrainKgeOpts {
  std::string dataset, out, model = "hake";
  std::uint64_t seed = 0;
  std::size_t dim = 500;
  double lr = 0.001;
  std::size_t epochs = 200, batch = 512, negatives = 16;
  double lambda = 0.5, alpha = 1.0;
  int pairre_norm = 1;
};

int run_train_kge(const TrainKgeOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  KgeConfig config;
  config.kind = parse_model(o.model);
  config.dim = o.dim;
  config.lr = o.lr;
  config.epochs = o.epochs;
  config.batch_size = o.batch;
  config.negatives = o.negatives;
  config.lambda = o.lambda;
  config.alpha = o.alpha;
  config.pairre_norm = o.pairre_norm;
  config.seed = o.seed;
  KgeModel model = train_kge(kg, split, config);
  save_kge(model, o.out);

  ordered_json m;
  m["command"] = "train kge";
  m["dataset"] = o.dataset;
  m["model"] = o.model;
  m["seed"] = o.seed;
  m["dim"] = o.dim;
  m["lr"] = o.lr;
  m["epochs"] = o.epochs;
  m["batch"] = o.batch;
  m["negatives"] = o.negatives;
  m["lambda"] = o.lambda;
  m["alpha"] = o.alpha;
  m["seconds"] = watch.seconds();
  write_manifest(o.out + ".run.json", std::move(m));
  log_info("embedding checkpoint written to ", o.out);
  return 0;
}

struct TrainHtemOpts {
  std::string dataset, partition, out, model = "hake";
  std::uint64_t seed = 0;
  std::size_t dim = 48;
  double lr = 3e-5;
  std::size_t passes = 60, bases = 8, layers = 1;
  std::size_t mlp_layers = 2, mlp_hidden = 64;
  double lambda = 0.5, kge_weight = 1.0;
  bool no_entity_attn = false, no_relation_attn = false;
};

int run_train_htem(const TrainHtemOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  PartitionResult part = load_partition(kg, o.partition);
  HtemConfig config;
  config.kind = parse_model(o.model);
  config.dim = o.dim;
  config.lr = o.lr;
  config.passes = o.passes;
  config.bases = o.bases;
  config.layers = o.layers;
  config.mlp_layers = o.mlp_layers;
  config.mlp_hidden = o.mlp_hidden;
  config.lambda = o.lambda;
  config.kge_weight = o.kge_weight;
  config.entity_attn = !o.no_entity_attn;
  config.relation_attn = !o.no_relation_attn;
  config.seed = o.seed;
  HtemModel model = train_htem(part, split.valid, kg.num_entities(),
                               kg.num_relations(), config);
  save_htem(model, o.out);

  ordered_json m;
  m["command"] = "train htem";
  m["dataset"] = o.dataset;
  m["partition"] = o.partition;
  m["model"] = o.model;
  m["seed"] = o.seed;
  m["dim"] = o.dim;
  m["lr"] = o.lr;
  m["passes"] = o.passes;
  m["entity_attn"] = !o.no_entity_attn;
  m["relation_attn"] = !o.no_relation_attn;
  m["seconds"] = watch.seconds();
  write_manifest(o.out + ".run.json", std::move(m));
  log_info("pair model checkpoint written to ", o.out);
  return 0;
}

struct PredictGphtOpts {
  std::string dataset, partition, htem, kge, out;
  double theta_ht = 0.3, theta_hrt = 1.0;
  bool global_softmax = false;
};

int run_predict_gpht(const PredictGphtOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  PartitionResult part = load_partition(kg, o.partition);
  HtemModel htem = load_htem(o.htem);
  KgeModel kge = load_kge(o.kge);
  if (htem.n_entities() != kg.num_entities() ||
      htem.n_relations() != kg.num_relations())
    fail("pair model at ", o.htem, " does not match the dataset vocabulary");
  if (kge.n_entities() != kg.num_entities() ||
      kge.n_relations() != kg.num_relations())
    fail("embedding model at ", o.kge, " does not match the dataset vocabulary");

  GphtParams params;
  params.theta_ht = o.theta_ht;
  params.theta_hrt = o.theta_hrt;
  params.global_softmax = o.global_softmax;
  GphtPrediction pred = gpht_predict(part, htem, kge, params);
  save_predictions(kg, pred.entries, o.out);

  ordered_json m;
  m["command"] = "predict gpht";
  m["dataset"] = o.dataset;
  m["partition"] = o.partition;
  m["htem"] = o.htem;
  m["kge"] = o.kge;
  m["theta_ht"] = o.theta_ht;
  m["theta_hrt"] = o.theta_hrt;
  m["global_softmax"] = o.global_softmax;
  m["pairs"] = pred.pairs.size();
  m["stages"] = {{"full_space", pred.stages.full_space},
                 {"post_partition", pred.stages.post_partition},
                 {"post_pairs", pred.stages.post_pairs},
                 {"final", pred.stages.final_count}};
  m["seconds"] = watch.seconds();
  write_manifest(o.out + ".run.json", std::move(m));
  log_info(pred.entries.size(), " predictions written to ", o.out);
  return 0;
}

struct PredictRuleOpts {
  std::string dataset, out, rules_in, rules_out;
  std::uint64_t seed = 0;
  double theta_conf = 0.85, theta_hc = 0.05;
  std::size_t max_iter = 40, walks = 20000, rule_len = 3;
  double stop_ratio = 0.2;
};

int run_predict_ruletensor(const PredictRuleOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);

  std::vector<Rule> qualified;
  std::size_t n_candidates = 0;
  if (!o.rules_in.empty()) {
    qualified = load_rules(kg, o.rules_in);
    n_candidates = qualified.size();
  } else {
    auto rng = make_rng(o.seed, "rules");
    std::vector<Rule> candidates =
        sample_rules(kg, split.train, o.walks, o.rule_len, rng);
    n_candidates = candidates.size();
    score_rules(candidates, kg, split.train);
    qualified = filter_rules(candidates, o.theta_conf, o.theta_hc);
  }
  if (!o.rules_out.empty()) save_rules(kg, qualified, o.rules_out);

  RuleInferenceResult result =
      rule_inference(kg, split.train, qualified, o.stop_ratio, o.max_iter);
  save_predictions(kg, result.predictions, o.out);

  ordered_json m;
  m["command"] = "predict ruletensor";
  m["dataset"] = o.dataset;
  m["seed"] = o.seed;
  m["theta_conf"] = o.theta_conf;
  m["theta_hc"] = o.theta_hc;
  m["max_iter"] = o.max_iter;
  m["walks"] = o.walks;
  m["rule_len"] = o.rule_len;
  m["candidate_rules"] = n_candidates;
  m["qualified_rules"] = qualified.size();
  m["rounds"] = result.rounds;
  m["new_per_round"] = result.new_per_round;
  m["predictions"] = result.predictions.size();
  m["seconds"] = watch.seconds();
  write_manifest(o.out + ".run.json", std::move(m));
  log_info(result.predictions.size(), " predictions written to ", o.out);
  return 0;
}

struct PredictKgeTspOpts {
  std::string dataset, kge, out;
  double theta_kge = 1.0;
  std::size_t threads = 1;
};

int run_predict_kgetsp(const PredictKgeTspOpts& o) {
  Stopwatch watch;
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  KgeModel model = load_kge(o.kge);
  if (model.n_entities() != kg.num_entities() ||
      model.n_relations() != kg.num_relations())
    fail("embedding model at ", o.kge, " does not match the dataset vocabulary");
  auto predictions =
      kge_tsp_predict(model, split.train, o.theta_kge, o.threads);
  save_predictions(kg, predictions, o.out);

  ordered_json m;
  m["command"] = "predict kgetsp";
  m["dataset"] = o.dataset;
  m["kge"] = o.kge;
  m["theta_kge"] = o.theta_kge;
  m["threads"] = o.threads;
  m["predictions"] = predictions.size();
  m["seconds"] = watch.seconds();
  write_manifest(o.out + ".run.json", std::move(m));
  log_info(predictions.size(), " predictions written to ", o.out);
  return 0;
}

struct EvaluateOpts {
  std::string dataset, predictions, out;
  double theta_sim = 0.8;
};

int run_evaluate(const EvaluateOpts& o, Assumption assumption) {
  KnowledgeGraph kg;
  DatasetSplit split = load_dataset(kg, o.dataset);
  auto preds = load_predictions(kg, o.predictions);
  EvaluationReport report =
      evaluate(preds, split, kg.num_relations(), assumption, o.theta_sim);
  const std::string json = report_to_json(report);
  std::fputs(json.c_str(), stdout);
  std::fputc('\n', stdout);
  std::string out = o.out;
  if (out.empty())
    out = o.predictions + "." + assumption_name(assumption) + ".json";
  save_report(report, out);
  log_info("evaluation written to ", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triple set prediction toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  // Defaults may come from a config file with one section per subcommand
  // (e.g. [datagen] or [train.kge]); explicit flags always win.
  app.set_config("--config", "", "read option defaults from a TOML file");

  DatagenOpts dg;
  auto* datagen = app.add_subcommand(
      "datagen", "generate a closed family dataset with train/valid/test");
  datagen->add_option("--out", dg.out, "output dataset directory")->required();
  datagen->add_option("--seed", dg.seed, "root random seed");
  datagen->add_option("--people", dg.people, "approximate number of people");
  datagen->add_option("--families", dg.families, "number of founder families");
  datagen->add_option("--train-ratio", dg.train_ratio, "train fraction");
  datagen->add_option("--valid-ratio", dg.valid_ratio, "validation fraction");
  datagen->add_option("--test-ratio", dg.test_ratio, "test fraction");

  PartitionOpts po;
  auto* partition = app.add_subcommand(
      "partition", "split the training graph into overlapping subgraphs");
  partition->add_option("--dataset", po.dataset, "dataset directory")
      ->required();
  partition->add_option("--out", po.out, "partition output directory")
      ->required();
  partition->add_option("--seed", po.seed, "root random seed");
  partition->add_option("--hops", po.hops, "neighborhood depth");
  partition->add_option("--nmin", po.nmin, "minimum group size (strict)");
  partition->add_option("--nmax", po.nmax, "maximum group size");

  auto* train = app.add_subcommand("train", "train a model");
  train->require_subcommand(1);

  TrainKgeOpts tk;
  auto* train_kge_cmd =
      train->add_subcommand("kge", "train an embedding model on train/valid");
  train_kge_cmd->add_option("--dataset", tk.dataset, "dataset directory")
      ->required();
  train_kge_cmd->add_option("--out", tk.out, "checkpoint path")->required();
  train_kge_cmd->add_option("--model", tk.model, "hake or pairre");
  train_kge_cmd->add_option("--seed", tk.seed, "root random seed");
  train_kge_cmd->add_option("--dim", tk.dim, "relation embedding width");
  train_kge_cmd->add_option("--lr", tk.lr, "learning rate");
  train_kge_cmd->add_option("--epochs", tk.epochs, "training epochs");
  train_kge_cmd->add_option("--batch", tk.batch, "batch size");
  train_kge_cmd->add_option("--negatives", tk.negatives,
                            "negatives per positive");
  train_kge_cmd->add_option("--lambda", tk.lambda, "phase term weight");
  train_kge_cmd->add_option("--alpha", tk.alpha,
                            "self-adversarial temperature");
  train_kge_cmd->add_option("--pairre-norm", tk.pairre_norm,
                            "distance norm for pairre (1 or 2)");

  TrainHtemOpts th;
  auto* train_htem_cmd = train->add_subcommand(
      "htem", "train the pair likelihood model over a partition");
  train_htem_cmd->add_option("--dataset", th.dataset, "dataset directory")
      ->required();
  train_htem_cmd->add_option("--partition", th.partition,
                             "partition directory")
      ->required();
  train_htem_cmd->add_option("--out", th.out, "checkpoint path")->required();
  train_htem_cmd->add_option("--model", th.model, "hake or pairre");
  train_htem_cmd->add_option("--seed", th.seed, "root random seed");
  train_htem_cmd->add_option("--dim", th.dim, "encoder width");
  train_htem_cmd->add_option("--lr", th.lr, "learning rate");
  train_htem_cmd->add_option("--passes", th.passes, "training passes");
  train_htem_cmd->add_option("--bases", th.bases, "relation basis count");
  train_htem_cmd->add_option("--layers", th.layers, "encoder layers");
  train_htem_cmd->add_option("--mlp-layers", th.mlp_layers, "decoder layers");
  train_htem_cmd->add_option("--mlp-hidden", th.mlp_hidden,
                             "decoder hidden width");
  train_htem_cmd->add_option("--lambda", th.lambda, "phase term weight");
  train_htem_cmd->add_option("--kge-weight", th.kge_weight,
                             "truth value term weight");
  train_htem_cmd->add_flag("--no-entity-attn", th.no_entity_attn,
                           "drop the entity attention feature");
  train_htem_cmd->add_flag("--no-relation-attn", th.no_relation_attn,
                           "drop the relation attention features");

  auto* predict = app.add_subcommand("predict", "produce a prediction file");
  predict->require_subcommand(1);

  PredictGphtOpts pg;
  auto* predict_gpht = predict->add_subcommand(
      "gpht", "partitioned pair-then-relation prediction");
  predict_gpht->add_option("--dataset", pg.dataset, "dataset directory")
      ->required();
  predict_gpht->add_option("--partition", pg.partition, "partition directory")
      ->required();
  predict_gpht->add_option("--htem", pg.htem, "pair model checkpoint")
      ->required();
  predict_gpht->add_option("--kge", pg.kge, "embedding checkpoint")
      ->required();
  predict_gpht->add_option("--out", pg.out, "prediction file")->required();
  predict_gpht->add_option("--theta-ht", pg.theta_ht,
                           "pair likelihood threshold");
  predict_gpht->add_option("--theta-hrt", pg.theta_hrt,
                           "relation softmax threshold");
  predict_gpht->add_flag("--global-softmax", pg.global_softmax,
                         "normalize over all pairs instead of per pair");

  PredictRuleOpts pr;
  auto* predict_rule = predict->add_subcommand(
      "ruletensor", "rule mining plus fixpoint inference");
  predict_rule->add_option("--dataset", pr.dataset, "dataset directory")
      ->required();
  predict_rule->add_option("--out", pr.out, "prediction file")->required();
  predict_rule->add_option("--seed", pr.seed, "root random seed");
  predict_rule->add_option("--theta-conf", pr.theta_conf,
                           "rule confidence threshold");
  predict_rule->add_option("--theta-hc", pr.theta_hc,
                           "rule head coverage threshold");
  predict_rule->add_option("--max-iter", pr.max_iter,
                           "inference iteration cap");
  predict_rule->add_option("--walks", pr.walks, "rule sampling walks");
  predict_rule->add_option("--rule-len", pr.rule_len, "maximum body length");
  predict_rule->add_option("--stop-ratio", pr.stop_ratio,
                           "new-triple stop ratio");
  predict_rule->add_option("--rules-in", pr.rules_in,
                           "use a saved rule file instead of mining");
  predict_rule->add_option("--rules-out", pr.rules_out,
                           "write the applied rules here");

  PredictKgeTspOpts pk;
  auto* predict_kgetsp = predict->add_subcommand(
      "kgetsp", "exhaustive embedding scoring with two-pass softmax");
  predict_kgetsp->add_option("--dataset", pk.dataset, "dataset directory")
      ->required();
  predict_kgetsp->add_option("--kge", pk.kge, "embedding checkpoint")
      ->required();
  predict_kgetsp->add_option("--out", pk.out, "prediction file")->required();
  predict_kgetsp->add_option("--theta-kge", pk.theta_kge,
                             "softmax score threshold");
  predict_kgetsp->add_option("--threads", pk.threads, "worker threads");

  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "score a prediction file");
  evaluate_cmd->require_subcommand(1);

  EvaluateOpts ec, ep;
  auto* eval_cwa = evaluate_cmd->add_subcommand(
      "cwa", "closed-world evaluation against the test split");
  eval_cwa->add_option("--dataset", ec.dataset, "dataset directory")
      ->required();
  eval_cwa->add_option("--predictions", ec.predictions, "prediction file")
      ->required();
  eval_cwa->add_option("--out", ec.out, "report path (default alongside)");
  auto* eval_powa = evaluate_cmd->add_subcommand(
      "powa", "partial-open-world evaluation with relation similarity");
  eval_powa->add_option("--dataset", ep.dataset, "dataset directory")
      ->required();
  eval_powa->add_option("--predictions", ep.predictions, "prediction file")
      ->required();
  eval_powa->add_option("--out", ep.out, "report path (default alongside)");
  eval_powa->add_option("--theta-sim", ep.theta_sim,
                        "relation similarity threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (datagen->parsed()) return run_datagen(dg);
    if (partition->parsed()) return run_partition(po);
    if (train->parsed()) {
      if (train_kge_cmd->parsed()) return run_train_kge(tk);
      if (train_htem_cmd->parsed()) return run_train_htem(th);
    }
    if (predict->parsed()) {
      if (predict_gpht->parsed()) return run_predict_gpht(pg);
      if (predict_rule->parsed()) return run_predict_ruletensor(pr);
      if (predict_kgetsp->parsed()) return run_predict_kgetsp(pk);
    }
    if (evaluate_cmd->parsed()) {
      if (eval_cwa->parsed()) return run_evaluate(ec, Assumption::kCwa);
      if (eval_powa->parsed()) return run_evaluate(ep, Assumption::kRsPowa);
    }
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 0;
}

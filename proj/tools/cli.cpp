#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "wisynth/baselines.hpp"
#include "wisynth/inference.hpp"
#include "wisynth/io.hpp"
#include "wisynth/label_graph.hpp"
#include "wisynth/plrm_model.hpp"
#include "wisynth/synthlab.hpp"
#include "wisynth/training.hpp"

namespace wisynth {

namespace fs = std::filesystem;

namespace {

/// Writes to --out when given, else to stdout.
void emit(const std::string& out_path, const std::string& bytes, std::ostream& out) {
  if (out_path.empty())
    out << bytes;
  else
    write_file(out_path, bytes);
}

LabelGraph load_graph(const std::string& path, bool dag) {
  const std::string text = read_file(path);
  return dag ? dag_from_json(text) : graph_from_json(text);
}

std::string name_of(const LabelGraph& g, LabelId id) { return g.label(id).name; }

/// Text report of the structural tests; returns true when both pass.
bool report_graph(const LabelGraph& g, std::ostream& out) {
  const ConsistencyReport cons = check_consistency(g);
  out << "consistency: " << (cons.consistent ? "pass" : "FAIL") << "\n";
  for (const TripleViolation& v : cons.violations)
    out << "  inconsistent triangle (" << name_of(g, v.labels[0]) << ", " << name_of(g, v.labels[1]) << ", "
        << name_of(g, v.labels[2]) << "): relations (" << to_string(v.relations[0]) << ", "
        << to_string(v.relations[1]) << ", " << to_string(v.relations[2]) << ") match forbidden pattern "
        << v.pattern + 1 << "\n";
  if (!cons.consistent) {
    out << "distinguishability: skipped (graph is inconsistent)\n";
    return false;
  }
  const DistinguishabilityReport dist = check_distinguishability(g);
  out << "distinguishability: " << (dist.distinguishable ? "pass" : "FAIL") << "\n";
  for (const IndistinctPair& p : dist.indistinct_pairs)
    out << "  indistinguishable pair (" << name_of(g, p.first) << ", " << name_of(g, p.second)
        << "): identical relations to every seen label; add a seen label related differently to the two\n";
  return dist.distinguishable;
}

void report_informativeness(const LabelGraph& g, const std::vector<IlfSpec>& ilfs, const IlfOutputMatrix* outputs,
                            std::ostream& out) {
  for (const InformativenessReport& r : check_informativeness(g, ilfs, outputs)) {
    out << "ilf " << r.ilf_id << ": structural " << (r.structural ? "informative" : "uninformative");
    for (LabelId y : r.structurally_uninformative_for) out << " [" << name_of(g, y) << "]";
    if (r.empirical) {
      out << ", empirical " << (*r.empirical ? "informative" : "uninformative");
      for (LabelId y : r.empirically_uninformative_for) out << " [" << name_of(g, y) << "]";
    }
    out << "\n";
  }
}

struct Inputs {
  std::string graph;
  bool dag = false;
  std::string ilfs;
  std::string outputs;
};

void add_inputs(CLI::App* cmd, Inputs& in, bool need_votes) {
  cmd->add_option("--graph", in.graph, "label graph JSON (or DAG JSON with --dag)")->required();
  cmd->add_flag("--dag", in.dag, "read --graph as a DAG import file");
  auto* i = cmd->add_option("--ilfs", in.ilfs, "ILF specification JSON");
  auto* o = cmd->add_option("--outputs", in.outputs, "ILF output CSV");
  if (need_votes) {
    i->required();
    o->required();
  }
}

std::vector<int> split_order(std::size_t m, std::uint64_t seed) {
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x5e7);
  for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthesizes probabilistic training labels for unseen classes from indirect labeling functions"};
  app.name("wisynth");
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string out_path;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  // check
  auto* check = app.add_subcommand("check", "test a label graph for consistency and distinguishability");
  Inputs check_in;
  add_inputs(check, check_in, false);
  check->add_option("--out", out_path, "write the report here instead of stdout");
  check->add_option("--seed", seed, "random seed (unused)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "train a label model on ILF outputs");
  Inputs fit_in;
  add_inputs(fit_cmd, fit_in, true);
  std::string kind = "plrm";
  TrainConfig tc;
  std::string sampler = "auto", sign = "descent", log_path;
  bool force = false, no_unknown = false, no_pseudo = false;
  fit_cmd->add_option("--kind", kind, "plrm or wslg")->check(CLI::IsMember({"plrm", "wslg"}))->capture_default_str();
  fit_cmd->add_option("--epochs", tc.epochs)->capture_default_str();
  fit_cmd->add_option("--step-size", tc.step_size, "0 selects 1/m")->capture_default_str();
  fit_cmd->add_option("--burn-in", tc.burn_in, "conditional chain sweeps per update")->capture_default_str();
  fit_cmd->add_option("--sweeps", tc.unconditional_sweeps, "unconditional chain sweeps per update")
      ->capture_default_str();
  fit_cmd->add_option("--floor", tc.positivity_floor, "positivity floor, 0 disables")->capture_default_str();
  fit_cmd->add_option("--theta-init", tc.theta_init)->capture_default_str();
  fit_cmd->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  fit_cmd->add_option("--average", tc.average_fraction, "average the iterates over this final share of epochs")
      ->capture_default_str();
  fit_cmd->add_option("--max-theta", tc.max_abs_theta, "divergence bound on |theta|")->capture_default_str();
  fit_cmd->add_option("--sampler", sampler)->check(CLI::IsMember({"auto", "exact", "gibbs"}))->capture_default_str();
  fit_cmd->add_option("--sign", sign, "descent, or printed to reproduce the reversed update")
      ->check(CLI::IsMember({"descent", "printed"}))
      ->capture_default_str();
  fit_cmd->add_flag("--no-unknown", no_unknown, "leave the unknown class out of Y");
  fit_cmd->add_flag("--no-pseudo-accuracy", no_pseudo, "drop pseudo-accuracy factors from the PLRM");
  fit_cmd->add_flag("--force", force, "fit even when the graph fails the structural check");
  fit_cmd->add_option("--out", out_path, "model JSON")->required();
  fit_cmd->add_option("--log", log_path, "training log JSON-lines");
  fit_cmd->add_option("--seed", seed, "random seed");

  // predict
  auto* predict = app.add_subcommand("predict", "posterior label distributions from a fitted model");
  std::string model_path, outputs_path, method = "auto";
  GibbsParams gp;
  predict->add_option("--model", model_path)->required();
  predict->add_option("--outputs", outputs_path)->required();
  predict->add_option("--method", method)->check(CLI::IsMember({"auto", "exact", "gibbs"}))->capture_default_str();
  predict->add_option("--sweeps", gp.sweeps)->capture_default_str();
  predict->add_option("--burn-in", gp.burn_in)->capture_default_str();
  predict->add_option("--out", out_path, "posterior JSON-lines");
  predict->add_option("--seed", seed, "random seed");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "majority-vote and attribute baselines");
  Inputs base_in;
  add_inputs(baseline, base_in, true);
  std::string base_method, weight_rule = "non-ancestor", dap_rule = "ratio", features_path;
  baseline->add_option("--method", base_method)->check(CLI::IsMember({"lr-mv", "w-lr-mv", "dap"}))->required();
  baseline->add_option("--weight-rule", weight_rule)
      ->check(CLI::IsMember({"non-ancestor", "literal"}))
      ->capture_default_str();
  baseline->add_option("--dap-rule", dap_rule)->check(CLI::IsMember({"ratio", "literal"}))->capture_default_str();
  baseline->add_option("--features", features_path, "feature CSV for attribute classifiers (dap)");
  baseline->add_option("--out", out_path, "prediction JSON-lines");
  baseline->add_option("--seed", seed, "random seed (unused)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "write a synthetic task bundle");
  std::string spec_path;
  SimSpec sim;
  bool seed_given = false;
  simulate->add_option("--spec", spec_path, "SimSpec JSON; flags below override it");
  simulate->add_option("--desired", sim.desired);
  simulate->add_option("--seen", sim.seen);
  simulate->add_option("--num-ilfs", sim.ilfs);
  simulate->add_option("--points", sim.points);
  simulate->add_option("--abstain", sim.abstain);
  simulate->add_option("--feature-dims", sim.feature_dims);
  std::string process;
  simulate->add_option("--process", process, "plrm or taxonomy")->check(CLI::IsMember({"plrm", "taxonomy"}));
  simulate->add_flag("--plant-pair", sim.plant_pair);
  simulate->add_flag("--force-indistinct-pair", sim.force_indistinct_pair);
  simulate->add_flag("--balanced", sim.balanced_classes, "plrm process: uniform gold, rest drawn given Y");
  simulate->add_option("--out", out_path, "bundle directory")->required();
  auto* sim_seed = simulate->add_option("--seed", seed, "random seed");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy and macro-F1 of predictions");
  std::string eval_graph, pred_path, gold_path;
  eval->add_option("--graph", eval_graph)->required();
  eval->add_option("--pred", pred_path, "posterior or prediction JSON-lines")->required();
  eval->add_option("--gold", gold_path, "gold CSV")->required();
  eval->add_option("--out", out_path, "metrics JSON");
  eval->add_option("--seed", seed, "random seed (unused)");

  // train-end
  auto* train_end = app.add_subcommand("train-end", "noise-aware linear end model on posterior labels");
  std::string te_graph, te_features, te_post, te_gold;
  LinearConfig lc;
  double train_fraction = 0.5;
  train_end->add_option("--graph", te_graph)->required();
  train_end->add_option("--features", te_features)->required();
  train_end->add_option("--posteriors", te_post, "posterior JSON-lines used as training targets")->required();
  train_end->add_option("--gold", te_gold, "gold CSV for held-out metrics")->required();
  train_end->add_option("--train-fraction", train_fraction)->capture_default_str();
  train_end->add_option("--learning-rate", lc.learning_rate)->capture_default_str();
  train_end->add_option("--iterations", lc.iterations)->capture_default_str();
  train_end->add_option("--l2", lc.l2)->capture_default_str();
  train_end->add_option("--out", out_path, "linear model JSON")->required();
  train_end->add_option("--seed", seed, "random seed for the train/test split");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  seed_given = sim_seed->count() > 0;

  try {
    if (*check) {
      const LabelGraph g = load_graph(check_in.graph, check_in.dag);
      std::ostringstream rep;
      const bool ok = report_graph(g, rep);
      if (!check_in.ilfs.empty()) {
        const auto ilfs = ilfs_from_json(read_file(check_in.ilfs), g);
        std::optional<IlfOutputMatrix> m;
        if (!check_in.outputs.empty()) m = outputs_from_csv(read_file(check_in.outputs), ilfs, g);
        report_informativeness(g, ilfs, m ? &*m : nullptr, rep);
      }
      emit(out_path, rep.str(), out);
      return ok ? 0 : 1;
    }

    if (*fit_cmd) {
      const LabelGraph g = load_graph(fit_in.graph, fit_in.dag);
      std::ostringstream rep;
      if (!report_graph(g, rep)) {
        if (!force) {
          err << rep.str()
              << "refusing to fit: the label graph fails the structural sanity test, so some desired labels "
                 "cannot be told apart by any model fit; fix the graph or pass --force\n";
          return 1;
        }
        err << rep.str() << "warning: fitting despite the failed structural test (--force)\n";
      }
      auto ilfs = ilfs_from_json(read_file(fit_in.ilfs), g);
      const IlfOutputMatrix votes = outputs_from_csv(read_file(fit_in.outputs), ilfs, g);
      BuildOptions bo;
      bo.include_unknown = !no_unknown;
      bo.pseudo_accuracy = !no_pseudo;
      bo.theta_init = tc.theta_init;
      const FactorModel model = kind == "plrm" ? build_plrm(g, std::move(ilfs), bo) : build_wslg(g, std::move(ilfs), bo);
      tc.seed = seed;
      tc.sampler = sampler_kind_from_string(sampler);
      tc.sign = sign == "printed" ? UpdateSign::printed : UpdateSign::descent;
      const FitResult res = fit(model, votes, tc);
      write_file(out_path, model_to_json(res.model));
      if (!log_path.empty()) write_file(log_path, training_log_to_jsonl(res.log));
      return 0;
    }

    if (*predict) {
      const FactorModel model = model_from_json(read_file(model_path));
      const IlfOutputMatrix votes = outputs_from_csv(read_file(outputs_path), model.ilfs(), model.graph());
      gp.seed = seed;
      const PosteriorLabels post = posterior_labels(model, votes, inference_method_from_string(method), gp);
      emit(out_path, posteriors_to_jsonl(post, model.graph()), out);
      return 0;
    }

    if (*baseline) {
      const LabelGraph g = load_graph(base_in.graph, base_in.dag);
      const auto ilfs = ilfs_from_json(read_file(base_in.ilfs), g);
      const IlfOutputMatrix votes = outputs_from_csv(read_file(base_in.outputs), ilfs, g);
      std::vector<int> pred;
      if (base_method == "lr-mv") {
        pred = lr_mv(g, votes).predicted;
      } else if (base_method == "w-lr-mv") {
        const VoteTally t = w_lr_mv(g, votes, weight_rule_from_string(weight_rule));
        if (!t.flags.empty())
          err << "warning: " << t.flags.size() << " votes had an empty weight denominator and contributed 0\n";
        pred = t.predicted;
      } else {
        std::optional<Matrix> x;
        if (!features_path.empty()) x = features_from_csv(read_file(features_path));
        const DapResult r =
            dap(g, votes, x ? &*x : nullptr, dap_rule == "literal" ? DapRule::literal : DapRule::posterior_over_prior);
        if (!r.conflicts.empty())
          err << "warning: " << r.conflicts.size() << " points had conflicting votes and no matching attributes\n";
        pred = r.predicted;
      }
      emit(out_path, hard_labels_to_jsonl(pred, g), out);
      return 0;
    }

    if (*simulate) {
      SimSpec spec = spec_path.empty() ? SimSpec{} : spec_from_json(read_file(spec_path));
      // Flags given on the command line override the file.
      for (auto* opt : simulate->get_options()) {
        if (opt->count() == 0) continue;
        const std::string n = opt->get_name();
        if (n == "--desired") spec.desired = sim.desired;
        if (n == "--seen") spec.seen = sim.seen;
        if (n == "--num-ilfs") spec.ilfs = sim.ilfs;
        if (n == "--points") spec.points = sim.points;
        if (n == "--abstain") spec.abstain = sim.abstain;
        if (n == "--feature-dims") spec.feature_dims = sim.feature_dims;
        if (n == "--process") spec.process = sim_process_from_string(process);
        if (n == "--plant-pair") spec.plant_pair = true;
        if (n == "--force-indistinct-pair") spec.force_indistinct_pair = true;
        if (n == "--balanced") spec.balanced_classes = true;
      }
      if (seed_given || spec_path.empty()) spec.seed = seed;
      const SimTask task = generate_task(spec);
      const fs::path dir(out_path);
      write_file(dir / "graph.json", graph_to_json(task.graph));
      write_file(dir / "ilfs.json", ilfs_to_json(task.ilfs));
      write_file(dir / "outputs.csv", outputs_to_csv(task.outputs, task.ilfs));
      write_file(dir / "gold.csv", gold_to_csv(task.gold, task.graph));
      write_file(dir / "spec.json", spec_to_json(spec));
      if (!task.features.empty()) write_file(dir / "features.csv", features_to_csv(task.features));
      return 0;
    }

    if (*eval) {
      const LabelGraph g = graph_from_json(read_file(eval_graph));
      const PosteriorLabels post = posteriors_from_jsonl(read_file(pred_path), g);
      const std::vector<int> gold = gold_from_csv(read_file(gold_path), g);
      const Metrics m = evaluate(post.probs, gold, static_cast<int>(g.desired().size()));
      emit(out_path, metrics_to_json(m, g), out);
      return 0;
    }

    if (*train_end) {
      if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("--train-fraction in (0, 1)");
      const LabelGraph g = graph_from_json(read_file(te_graph));
      const Matrix x = features_from_csv(read_file(te_features));
      const PosteriorLabels post = posteriors_from_jsonl(read_file(te_post), g);
      const std::vector<int> gold = gold_from_csv(read_file(te_gold), g);
      if (x.size() != post.probs.size() || x.size() != gold.size())
        throw std::invalid_argument("features, posteriors and gold must have the same number of points");
      const Matrix targets = desired_targets(post.probs, post.has_unknown);
      const auto order = split_order(x.size(), seed);
      const std::size_t n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(x.size()));
      Matrix x_train, t_train;
      std::vector<int> test_pred, test_gold;
      for (std::size_t r = 0; r < n_train; ++r) {
        x_train.push_back(x[order[r]]);
        t_train.push_back(targets[order[r]]);
      }
      const LinearClassifier clf = train_noise_aware_linear(x_train, t_train, lc);
      for (std::size_t r = n_train; r < x.size(); ++r) {
        test_pred.push_back(clf.predict(x[order[r]]));
        test_gold.push_back(gold[order[r]]);
      }
      write_file(out_path, linear_to_json(clf, g));
      out << metrics_to_json(evaluate(test_pred, test_gold, static_cast<int>(g.desired().size())), g);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace wisynth

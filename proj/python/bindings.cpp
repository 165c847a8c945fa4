#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wisynth/baselines.hpp"
#include "wisynth/inference.hpp"
#include "wisynth/io.hpp"
#include "wisynth/label_graph.hpp"
#include "wisynth/plrm_model.hpp"
#include "wisynth/synthlab.hpp"
#include "wisynth/training.hpp"

namespace py = pybind11;
using namespace wisynth;

namespace {

// Votes cross the boundary as label names, None for an abstention.
IlfOutputMatrix votes_from_py(const LabelGraph& g, const std::vector<std::vector<std::optional<std::string>>>& rows) {
  IlfOutputMatrix out(0, rows.empty() ? 0 : rows[0].size());
  std::vector<LabelId> r;
  for (const auto& row : rows) {
    if (row.size() != out.cols()) throw std::invalid_argument("ragged vote rows");
    r.clear();
    for (const auto& v : row) r.push_back(v ? g.id_of(*v) : kAbstain);
    out.push_row(r);
  }
  return out;
}

std::vector<std::vector<std::optional<std::string>>> votes_to_py(const LabelGraph& g, const IlfOutputMatrix& m) {
  std::vector<std::vector<std::optional<std::string>>> rows(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (LabelId v : m.row(i)) rows[i].push_back(v == kAbstain ? std::nullopt : std::optional(g.label(v).name));
  return rows;
}

std::vector<IlfSpec> ilfs_from_py(const LabelGraph& g, const std::vector<std::vector<std::string>>& spaces,
                                  bool can_abstain) {
  std::vector<IlfSpec> ilfs;
  for (std::size_t j = 0; j < spaces.size(); ++j) {
    IlfSpec s{static_cast<int>(j), {}, can_abstain};
    for (const auto& n : spaces[j]) s.output_space.push_back(g.id_of(n));
    std::sort(s.output_space.begin(), s.output_space.end());
    ilfs.push_back(std::move(s));
  }
  return ilfs;
}

std::vector<std::optional<std::string>> names_of(const LabelGraph& g, const std::vector<int>& desired_idx) {
  std::vector<std::optional<std::string>> out;
  for (int y : desired_idx)
    out.push_back(y < 0 ? std::nullopt : std::optional(g.label(g.desired()[y]).name));
  return out;
}

}  // namespace

PYBIND11_MODULE(wisynth, m) {
  m.doc() = "Weak supervision with inconsistent label graphs";

  py::register_exception<GraphError>(m, "GraphError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

  m.def("forbidden_triplets", [] {
    std::vector<std::array<std::string, 3>> out;
    for (const auto& t : forbidden_triplets()) out.push_back({to_string(t[0]), to_string(t[1]), to_string(t[2])});
    return out;
  });

  py::class_<LabelGraph>(m, "LabelGraph")
      .def_static("from_json", &graph_from_json, py::arg("text"))
      .def_static("from_dag_json", &dag_from_json, py::arg("text"))
      .def_static("from_dag",
                  [](const std::vector<std::pair<std::string, std::string>>& edges,
                     const std::map<std::string, std::string>& roles) {
                    std::vector<DagEdge> e;
                    for (const auto& [p, c] : edges) e.push_back({p, c});
                    std::vector<std::pair<std::string, Role>> r;
                    for (const auto& [n, role] : roles) r.emplace_back(n, role_from_string(role));
                    return from_dag(e, r);
                  },
                  py::arg("edges"), py::arg("roles"))
      .def("to_json", &graph_to_json)
      .def_property_readonly("names",
                             [](const LabelGraph& g) {
                               std::vector<std::string> n;
                               for (const auto& l : g.labels()) n.push_back(l.name);
                               return n;
                             })
      .def_property_readonly("desired",
                             [](const LabelGraph& g) {
                               std::vector<std::string> n;
                               for (LabelId id : g.desired()) n.push_back(g.label(id).name);
                               return n;
                             })
      .def_property_readonly("seen",
                             [](const LabelGraph& g) {
                               std::vector<std::string> n;
                               for (LabelId id : g.seen()) n.push_back(g.label(id).name);
                               return n;
                             })
      .def("relation",
           [](const LabelGraph& g, const std::string& a, const std::string& b) {
             return std::string(to_string(g.relation(g.id_of(a), g.id_of(b))));
           })
      .def("inconsistent_triangles",
           [](const LabelGraph& g) {
             std::vector<std::array<std::string, 3>> out;
             for (const auto& v : check_consistency(g).violations)
               out.push_back({g.label(v.labels[0]).name, g.label(v.labels[1]).name, g.label(v.labels[2]).name});
             return out;
           })
      .def("indistinct_pairs",
           [](const LabelGraph& g) {
             std::vector<std::pair<std::string, std::string>> out;
             for (const auto& p : check_distinguishability(g).indistinct_pairs)
               out.emplace_back(g.label(p.first).name, g.label(p.second).name);
             return out;
           })
      .def("__len__", &LabelGraph::size);

  py::class_<FactorModel>(m, "FactorModel")
      .def_static("from_json", &model_from_json, py::arg("text"))
      .def("to_json", &model_to_json)
      .def_property_readonly("kind", [](const FactorModel& f) { return std::string(to_string(f.kind())); })
      .def_property_readonly("graph", [](const FactorModel& f) { return f.graph(); })
      .def_property("theta", &FactorModel::theta, &FactorModel::set_theta)
      .def_property_readonly("family_counts", &FactorModel::family_counts)
      .def("__len__", &FactorModel::size);

  m.def(
      "build_model",
      [](const LabelGraph& g, const std::vector<std::vector<std::string>>& spaces, const std::string& kind,
         bool include_unknown, bool can_abstain) {
        BuildOptions opt;
        opt.include_unknown = include_unknown;
        auto ilfs = ilfs_from_py(g, spaces, can_abstain);
        return model_kind_from_string(kind) == ModelKind::wslg ? build_wslg(g, ilfs, opt) : build_plrm(g, ilfs, opt);
      },
      py::arg("graph"), py::arg("output_spaces"), py::arg("kind") = "plrm", py::arg("include_unknown") = true,
      py::arg("can_abstain") = true,
      "Output spaces are lists of seen label names, one per ILF.");

  m.def(
      "fit",
      [](const FactorModel& model, const std::vector<std::vector<std::optional<std::string>>>& votes, int epochs,
         double step_size, const std::string& sampler, std::uint64_t seed, double average_fraction) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.step_size = step_size;
        cfg.sampler = sampler_kind_from_string(sampler);
        cfg.seed = seed;
        cfg.average_fraction = average_fraction;
        cfg.log_exact_nll = false;
        py::gil_scoped_release nogil;
        return fit(model, votes_from_py(model.graph(), votes), cfg).model;
      },
      py::arg("model"), py::arg("votes"), py::arg("epochs") = 10, py::arg("step_size") = 0.0,
      py::arg("sampler") = "auto", py::arg("seed") = 0, py::arg("average_fraction") = 0.5);

  m.def(
      "exact_nll",
      [](const FactorModel& model, const std::vector<std::vector<std::optional<std::string>>>& votes) {
        return exact_nll(model, votes_from_py(model.graph(), votes));
      },
      py::arg("model"), py::arg("votes"));

  m.def(
      "posteriors",
      [](const FactorModel& model, const std::vector<std::vector<std::optional<std::string>>>& votes,
         const std::string& method, int sweeps, int burn_in, std::uint64_t seed) {
        GibbsParams p{sweeps, burn_in, seed};
        const IlfOutputMatrix out = votes_from_py(model.graph(), votes);
        py::gil_scoped_release nogil;
        return posterior_labels(model, out, inference_method_from_string(method), p).probs;
      },
      py::arg("model"), py::arg("votes"), py::arg("method") = "auto", py::arg("sweeps") = 2000,
      py::arg("burn_in") = 200, py::arg("seed") = 0,
      "Rows are probabilities over graph.desired, then the unknown class if the model has one.");

  m.def(
      "lr_mv",
      [](const LabelGraph& g, const std::vector<std::vector<std::optional<std::string>>>& votes) {
        return names_of(g, lr_mv(g, votes_from_py(g, votes)).predicted);
      },
      py::arg("graph"), py::arg("votes"));
  m.def(
      "w_lr_mv",
      [](const LabelGraph& g, const std::vector<std::vector<std::optional<std::string>>>& votes,
         const std::string& rule) {
        return names_of(g, w_lr_mv(g, votes_from_py(g, votes), weight_rule_from_string(rule)).predicted);
      },
      py::arg("graph"), py::arg("votes"), py::arg("rule") = "non_ancestor");
  m.def(
      "dap",
      [](const LabelGraph& g, const std::vector<std::vector<std::optional<std::string>>>& votes) {
        return names_of(g, dap(g, votes_from_py(g, votes)).predicted);
      },
      py::arg("graph"), py::arg("votes"));

  m.def(
      "simulate",
      [](const std::string& spec_json) {
        const SimTask t = generate_task(spec_from_json(spec_json));
        py::dict d;
        d["graph"] = t.graph;
        std::vector<std::vector<std::string>> spaces;
        for (const auto& f : t.ilfs) {
          spaces.emplace_back();
          for (LabelId id : f.output_space) spaces.back().push_back(t.graph.label(id).name);
        }
        d["output_spaces"] = spaces;
        d["votes"] = votes_to_py(t.graph, t.outputs);
        d["gold"] = names_of(t.graph, t.gold);
        d["features"] = t.features;
        d["accuracies"] = t.accuracies;
        return d;
      },
      py::arg("spec_json") = "{}",
      "Generates a synthetic task from a JSON spec (same keys as spec.json written by the CLI).");

  m.def(
      "accuracy",
      [](const std::vector<std::optional<std::string>>& predicted, const std::vector<std::optional<std::string>>& gold) {
        if (predicted.size() != gold.size()) throw std::invalid_argument("length mismatch");
        std::size_t hit = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] && predicted[i] == gold[i];
        return gold.empty() ? 0.0 : static_cast<double>(hit) / gold.size();
      },
      py::arg("predicted"), py::arg("gold"));
}

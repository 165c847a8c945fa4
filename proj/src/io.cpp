#include "wisynth/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace wisynth {

using Json = nlohmann::json;

namespace {

void dump(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order: sorted keys
        if (!first) out += ',';
        first = false;
        out += Json(it.key()).dump();
        out += ':';
        dump(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump(j[i], out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw FormatError("cannot write a non-finite number to JSON");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

std::string to_text(const Json& j) {
  std::string s;
  dump(j, s);
  return s;
}

Json parse(const std::string& text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("invalid ") + what + " JSON: " + e.what());
  }
}

template <class T>
T field(const Json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key))
    throw FormatError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string(what) + ": bad field '" + key + "': " + e.what());
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

LabelId label_ref(const Json& v, const LabelGraph& g, const char* what) {
  if (v.is_number_integer()) {
    const auto id = v.get<LabelId>();
    if (!g.contains(id)) throw FormatError(std::string(what) + ": unknown label id " + std::to_string(id));
    return id;
  }
  if (v.is_string()) {
    if (auto id = g.find(v.get<std::string>())) return *id;
    throw FormatError(std::string(what) + ": unknown label '" + v.get<std::string>() + "'");
  }
  throw FormatError(std::string(what) + ": label must be an id or a name");
}

LabelId label_token(const std::string& tok, const LabelGraph& g) {
  if (tok == "-") return kAbstain;
  if (!tok.empty() && (std::isdigit(static_cast<unsigned char>(tok[0])) != 0)) {
    std::size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos == tok.size()) {
      if (!g.contains(static_cast<LabelId>(v))) throw FormatError("unknown label id " + tok);
      return static_cast<LabelId>(v);
    }
  }
  if (auto id = g.find(tok)) return *id;
  throw FormatError("unknown label '" + tok + "'");
}

Json graph_json(const LabelGraph& g) {
  Json labels = Json::array();
  for (const Label& l : g.labels()) labels.push_back({{"id", l.id}, {"name", l.name}, {"role", to_string(l.role)}});
  Json rel = Json::array();
  for (const RelationEdge& e : g.edges()) rel.push_back({{"a", e.a}, {"b", e.b}, {"type", to_string(e.type)}});
  return {{"labels", labels}, {"relations", rel}};
}

LabelGraph graph_from(const Json& j) {
  std::vector<Label> labels;
  for (const Json& l : field<Json>(j, "labels", "graph")) {
    Label x;
    x.id = field<LabelId>(l, "id", "graph label");
    x.name = field<std::string>(l, "name", "graph label");
    x.role = role_from_string(field<std::string>(l, "role", "graph label"));
    labels.push_back(std::move(x));
  }
  std::vector<RelationEdge> edges;
  for (const Json& r : field<Json>(j, "relations", "graph")) {
    RelationEdge e;
    e.a = field<LabelId>(r, "a", "graph relation");
    e.b = field<LabelId>(r, "b", "graph relation");
    e.type = relation_from_string(field<std::string>(r, "type", "graph relation"));
    edges.push_back(e);
  }
  return LabelGraph(std::move(labels), edges);
}

Json ilfs_json(const std::vector<IlfSpec>& ilfs) {
  Json arr = Json::array();
  for (const IlfSpec& f : ilfs)
    arr.push_back({{"id", f.ilf_id}, {"output_space", f.output_space}, {"can_abstain", f.can_abstain}});
  return {{"ilfs", arr}};
}

std::vector<IlfSpec> ilfs_from(const Json& j, const LabelGraph& g) {
  std::vector<IlfSpec> out;
  for (const Json& f : field<Json>(j, "ilfs", "ilfs")) {
    IlfSpec s;
    s.ilf_id = field<int>(f, "id", "ilf");
    for (const Json& v : field<Json>(f, "output_space", "ilf")) s.output_space.push_back(label_ref(v, g, "ilf"));
    std::sort(s.output_space.begin(), s.output_space.end());
    s.can_abstain = f.contains("can_abstain") ? field<bool>(f, "can_abstain", "ilf") : true;
    out.push_back(std::move(s));
  }
  validate_ilfs(g, out);
  return out;
}

}  // namespace

std::string canonical_json(const std::string& text) { return to_text(parse(text, "input")) + "\n"; }

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << bytes;
  if (!out) throw std::runtime_error("write to '" + p.string() + "' failed");
}

std::string graph_to_json(const LabelGraph& g) { return to_text(graph_json(g)) + "\n"; }

LabelGraph graph_from_json(const std::string& text) { return graph_from(parse(text, "graph")); }

LabelGraph dag_from_json(const std::string& text) {
  const Json j = parse(text, "DAG");
  std::vector<DagEdge> edges;
  for (const Json& e : field<Json>(j, "edges", "DAG")) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
      throw FormatError("DAG: each edge must be [parent, child] names");
    edges.push_back({e[0].get<std::string>(), e[1].get<std::string>()});
  }
  std::vector<std::pair<std::string, Role>> roles;
  const Json role_map = field<Json>(j, "roles", "DAG");
  if (!role_map.is_object()) throw FormatError("DAG: roles must map names to roles");
  for (const auto& [name, role] : role_map.items()) {
    if (!role.is_string()) throw FormatError("DAG: role of '" + name + "' must be a string");
    roles.emplace_back(name, role_from_string(role.get<std::string>()));
  }
  return from_dag(edges, roles);
}

std::string ilfs_to_json(const std::vector<IlfSpec>& ilfs) { return to_text(ilfs_json(ilfs)) + "\n"; }

std::vector<IlfSpec> ilfs_from_json(const std::string& text, const LabelGraph& g) {
  return ilfs_from(parse(text, "ILF"), g);
}

std::string outputs_to_csv(const IlfOutputMatrix& outputs, const std::vector<IlfSpec>& ilfs) {
  if (outputs.cols() != ilfs.size() && outputs.rows() > 0)
    throw std::invalid_argument("output columns do not match the ILF list");
  std::string s;
  for (std::size_t j = 0; j < ilfs.size(); ++j) s += (j ? "," : "") + std::to_string(ilfs[j].ilf_id);
  s += '\n';
  for (std::size_t i = 0; i < outputs.rows(); ++i) {
    for (std::size_t j = 0; j < outputs.cols(); ++j) {
      if (j) s += ',';
      const LabelId v = outputs.at(i, j);
      s += v == kAbstain ? std::string("-") : std::to_string(v);
    }
    s += '\n';
  }
  return s;
}

IlfOutputMatrix outputs_from_csv(const std::string& text, const std::vector<IlfSpec>& ilfs, const LabelGraph& g) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("outputs CSV: missing header");
  const auto header = split(lines[0], ',');
  // Columns may come in any order; they are matched to ILFs by id.
  std::vector<std::size_t> col_to_ilf(header.size());
  std::vector<char> seen_ilf(ilfs.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::size_t found = ilfs.size();
    for (std::size_t j = 0; j < ilfs.size(); ++j)
      if (std::to_string(ilfs[j].ilf_id) == header[c]) found = j;
    if (found == ilfs.size() || seen_ilf[found]) throw FormatError("outputs CSV: unexpected column '" + header[c] + "'");
    seen_ilf[found] = 1;
    col_to_ilf[c] = found;
  }
  if (header.size() != ilfs.size()) throw FormatError("outputs CSV: expected one column per ILF");
  IlfOutputMatrix m(lines.size() - 1, ilfs.size());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != header.size())
      throw FormatError("outputs CSV: row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) m.at(i - 1, col_to_ilf[c]) = label_token(cells[c], g);
  }
  validate_outputs(ilfs, m);
  return m;
}

std::string gold_to_csv(const std::vector<int>& gold, const LabelGraph& g) {
  std::string s = "label\n";
  for (int y : gold) s += g.label(g.desired().at(static_cast<std::size_t>(y))).name + "\n";
  return s;
}

std::vector<int> gold_from_csv(const std::string& text, const LabelGraph& g) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "label") throw FormatError("gold CSV: expected header 'label'");
  std::vector<int> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const LabelId id = label_token(lines[i], g);
    const int d = id == kAbstain ? -1 : g.desired_index(id);
    if (d < 0) throw FormatError("gold CSV: '" + lines[i] + "' is not a desired label");
    out.push_back(d);
  }
  return out;
}

std::string features_to_csv(const Matrix& x) {
  const std::size_t d = x.empty() ? 0 : x.front().size();
  std::string s;
  for (std::size_t k = 0; k < d; ++k) s += (k ? ",f" : "f") + std::to_string(k);
  s += '\n';
  for (const auto& row : x) {
    if (row.size() != d) throw std::invalid_argument("ragged feature matrix");
    for (std::size_t k = 0; k < d; ++k) s += (k ? "," : "") + real(row[k]);
    s += '\n';
  }
  return s;
}

Matrix features_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("features CSV: missing header");
  const std::size_t d = split(lines[0], ',').size();
  Matrix x;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != d) throw FormatError("features CSV: row " + std::to_string(i) + " has the wrong width");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(c, &pos));
        if (pos != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw FormatError("features CSV: bad number '" + c + "'");
      }
    }
    x.push_back(std::move(row));
  }
  return x;
}

// ---------------------------------------------------------------------------

std::string model_to_json(const FactorModel& model) {
  const LabelGraph& g = model.graph();
  const Json gj = graph_json(g);
  const Json ij = ilfs_json(model.ilfs());
  bool pseudo = false;
  Json deps = Json::array();
  for (const Dependency& d : model.dependencies()) {
    Json p = Json::object();
    if (d.desired >= 0) p["desired"] = g.desired()[d.desired];
    if (d.seen >= 0) p["seen"] = g.seen()[d.seen];
    if (d.seen2 >= 0) p["seen2"] = g.seen()[d.seen2];
    if (d.ilf >= 0) p["ilf"] = model.ilfs()[d.ilf].ilf_id;
    Json dj = {{"family", to_string(d.family)}, {"participants", p}};
    if (d.family == Family::seen_seen || d.family == Family::desired_seen) dj["relation"] = to_string(d.relation);
    if (d.family == Family::pseudo_accuracy) pseudo = true;
    deps.push_back(std::move(dj));
  }
  Json theta = Json::array();
  for (double t : model.theta()) theta.push_back(t);
  const Json j = {{"kind", to_string(model.kind())},
                  {"include_unknown", model.include_unknown()},
                  {"pseudo_accuracy", pseudo},
                  {"graph", gj},
                  {"graph_hash", content_hash(to_text(gj))},
                  {"ilfs", ij},
                  {"ilfs_hash", content_hash(to_text(ij))},
                  {"dependencies", deps},
                  {"theta", theta}};
  return to_text(j) + "\n";
}

FactorModel model_from_json(const std::string& text) {
  const Json j = parse(text, "model");
  const Json gj = field<Json>(j, "graph", "model");
  const Json ij = field<Json>(j, "ilfs", "model");
  if (field<std::string>(j, "graph_hash", "model") != content_hash(to_text(gj)))
    throw FormatError("model: graph hash does not match the embedded graph");
  if (field<std::string>(j, "ilfs_hash", "model") != content_hash(to_text(ij)))
    throw FormatError("model: ILF hash does not match the embedded ILFs");
  const LabelGraph g = graph_from(gj);
  auto ilfs = ilfs_from(ij, g);
  BuildOptions opts;
  opts.include_unknown = field<bool>(j, "include_unknown", "model");
  opts.pseudo_accuracy = field<bool>(j, "pseudo_accuracy", "model");
  const ModelKind kind = model_kind_from_string(field<std::string>(j, "kind", "model"));
  FactorModel model = kind == ModelKind::plrm ? build_plrm(g, std::move(ilfs), opts) : build_wslg(g, std::move(ilfs), opts);

  // The stored dependency list must match the rebuilt one entry for entry.
  const Json deps = field<Json>(j, "dependencies", "model");
  const std::string rebuilt = to_text(field<Json>(parse(model_to_json(model), "model"), "dependencies", "model"));
  if (to_text(deps) != rebuilt) throw FormatError("model: dependency list does not match the graph and ILFs");
  std::vector<double> theta;
  for (const Json& t : field<Json>(j, "theta", "model")) {
    if (!t.is_number()) throw FormatError("model: theta entries must be numbers");
    theta.push_back(t.get<double>());
  }
  if (theta.size() != model.size())
    throw FormatError("model: theta has " + std::to_string(theta.size()) + " entries, expected " +
                      std::to_string(model.size()));
  model.set_theta(std::move(theta));
  return model;
}

// ---------------------------------------------------------------------------

namespace {

std::string distribution_line(std::size_t i, const std::vector<double>& p, bool has_unknown, const LabelGraph& g) {
  Json dist = Json::object();
  for (std::size_t y = 0; y < g.desired().size(); ++y) dist[g.label(g.desired()[y]).name] = p.at(y);
  if (has_unknown) dist["unknown"] = p.at(g.desired().size());
  return to_text(Json{{"point", i}, {"p", dist}}) + "\n";
}

}  // namespace

std::string posteriors_to_jsonl(const PosteriorLabels& post, const LabelGraph& g) {
  std::string s;
  for (std::size_t i = 0; i < post.probs.size(); ++i) s += distribution_line(i, post.probs[i], post.has_unknown, g);
  return s;
}

std::string hard_labels_to_jsonl(const std::vector<int>& predicted, const LabelGraph& g) {
  std::string s;
  const std::size_t k = g.desired().size();
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    std::vector<double> p(k + 1, 0.0);
    p[predicted[i] >= 0 && static_cast<std::size_t>(predicted[i]) < k ? static_cast<std::size_t>(predicted[i]) : k] = 1;
    s += distribution_line(i, p, true, g);
  }
  return s;
}

PosteriorLabels posteriors_from_jsonl(const std::string& text, const LabelGraph& g) {
  PosteriorLabels out;
  const std::size_t k = g.desired().size();
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  for (const auto& line : lines_of(text)) {
    const Json j = parse(line, "posterior");
    const auto point = field<std::size_t>(j, "point", "posterior");
    const Json p = field<Json>(j, "p", "posterior");
    std::vector<double> v(k + 1, 0.0);
    for (auto& [name, prob] : p.items()) {
      if (!prob.is_number()) throw FormatError("posterior: probabilities must be numbers");
      if (name == "unknown") {
        v[k] = prob.get<double>();
        out.has_unknown = true;
        continue;
      }
      const auto id = g.find(name);
      if (!id || g.desired_index(*id) < 0) throw FormatError("posterior: '" + name + "' is not a desired label");
      v[static_cast<std::size_t>(g.desired_index(*id))] = prob.get<double>();
    }
    rows.emplace_back(point, std::move(v));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i) throw FormatError("posterior: point indices must be 0..m-1");
    if (!out.has_unknown) rows[i].second.pop_back();
    out.probs.push_back(std::move(rows[i].second));
  }
  out.provenance = "file";
  return out;
}

std::string training_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::string s;
  for (const EpochLog& e : log) {
    Json j = {{"epoch", e.epoch}, {"theta_norm", e.theta_norm}, {"step_size", e.step_size}, {"sampler", e.sampler}};
    j["exact_nll"] = e.exact_nll ? Json(*e.exact_nll) : Json(nullptr);
    s += to_text(j) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string spec_to_json(const SimSpec& s) {
  Json j = {{"desired", s.desired},
            {"seen", s.seen},
            {"ilfs", s.ilfs},
            {"points", s.points},
            {"acc_min", s.acc_min},
            {"acc_max", s.acc_max},
            {"accuracies", s.accuracies},
            {"abstain", s.abstain},
            {"group_frac", s.group_frac},
            {"part_frac", s.part_frac},
            {"partial_member_prob", s.partial_member_prob},
            {"space_min", s.space_min},
            {"space_max", s.space_max},
            {"plant_pair", s.plant_pair},
            {"force_indistinct_pair", s.force_indistinct_pair},
            {"process", to_string(s.process)},
            {"balanced_classes", s.balanced_classes},
            {"relation_weight", s.relation_weight},
            {"pseudo_accuracy_weight", s.pseudo_accuracy_weight},
            {"feature_dims", s.feature_dims},
            {"separation", s.separation},
            {"max_retries", s.max_retries},
            {"seed", s.seed}};
  return to_text(j) + "\n";
}

SimSpec spec_from_json(const std::string& text) {
  const Json j = parse(text, "spec");
  if (!j.is_object()) throw FormatError("spec: expected an object");
  SimSpec s;
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = field<std::decay_t<decltype(dst)>>(j, key, "spec");
  };
  static const char* const known[] = {"desired",    "seen",       "ilfs",       "points",
                                      "acc_min",    "acc_max",    "accuracies", "abstain",
                                      "group_frac", "part_frac",  "partial_member_prob",    "space_min",
                                      "space_max",  "plant_pair", "force_indistinct_pair",
                                      "process",    "balanced_classes", "relation_weight", "pseudo_accuracy_weight",
                                      "feature_dims", "separation", "max_retries", "seed"};
  for (auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw FormatError("spec: unknown field '" + key + "'");
  }
  opt("desired", s.desired);
  opt("seen", s.seen);
  opt("ilfs", s.ilfs);
  opt("points", s.points);
  opt("acc_min", s.acc_min);
  opt("acc_max", s.acc_max);
  opt("accuracies", s.accuracies);
  opt("abstain", s.abstain);
  opt("group_frac", s.group_frac);
  opt("part_frac", s.part_frac);
  opt("partial_member_prob", s.partial_member_prob);
  opt("space_min", s.space_min);
  opt("space_max", s.space_max);
  opt("plant_pair", s.plant_pair);
  opt("force_indistinct_pair", s.force_indistinct_pair);
  if (j.contains("process")) s.process = sim_process_from_string(field<std::string>(j, "process", "spec"));
  opt("balanced_classes", s.balanced_classes);
  opt("relation_weight", s.relation_weight);
  opt("pseudo_accuracy_weight", s.pseudo_accuracy_weight);
  opt("feature_dims", s.feature_dims);
  opt("separation", s.separation);
  opt("max_retries", s.max_retries);
  opt("seed", s.seed);
  s.validate();
  return s;
}

std::string linear_to_json(const LinearClassifier& clf, const LabelGraph& g) {
  Json classes = Json::array();
  for (LabelId y : g.desired()) classes.push_back(g.label(y).name);
  if (static_cast<std::size_t>(clf.classes) != g.desired().size())
    throw std::invalid_argument("classifier classes do not match the desired labels");
  Json w = Json::array();
  for (double v : clf.weights) w.push_back(v);
  return to_text(Json{{"classes", classes}, {"dims", clf.dims}, {"weights", w}}) + "\n";
}

LinearClassifier linear_from_json(const std::string& text) {
  const Json j = parse(text, "linear model");
  LinearClassifier clf;
  clf.classes = static_cast<int>(field<Json>(j, "classes", "linear model").size());
  clf.dims = field<int>(j, "dims", "linear model");
  clf.weights = field<std::vector<double>>(j, "weights", "linear model");
  if (clf.weights.size() != static_cast<std::size_t>(clf.classes) * (static_cast<std::size_t>(clf.dims) + 1))
    throw FormatError("linear model: weight count does not match classes x (dims + 1)");
  return clf;
}

std::string metrics_to_json(const Metrics& m, const LabelGraph& g) {
  Json per = Json::object();
  for (std::size_t c = 0; c < m.per_class.size() && c < g.desired().size(); ++c) {
    const ClassMetrics& cm = m.per_class[c];
    per[g.label(g.desired()[c]).name] = {{"precision", cm.precision},
                                        {"recall", cm.recall},
                                        {"f1", cm.f1},
                                        {"support", cm.support},
                                        {"predicted", cm.predicted}};
  }
  return to_text(Json{{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"per_class", per}}) + "\n";
}

}  // namespace wisynth

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wisynth/baselines.hpp"
#include "wisynth/ilf.hpp"
#include "wisynth/inference.hpp"
#include "wisynth/label_graph.hpp"
#include "wisynth/plrm_model.hpp"
#include "wisynth/synthlab.hpp"
#include "wisynth/training.hpp"

namespace wisynth {

/// Malformed or inconsistent file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON documents are written canonically: sorted keys, no whitespace, reals
// with 17 significant digits, a trailing newline. JSON-lines files hold one
// canonical object per line.

/// Parses any JSON text and writes it back canonically.
std::string canonical_json(const std::string& text);

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
std::string content_hash(const std::string& bytes);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& bytes);

// Label graph: {"labels":[{"id","name","role"}],"relations":[{"a","b","type"}]}
std::string graph_to_json(const LabelGraph& g);
LabelGraph graph_from_json(const std::string& text);

// DAG import: {"edges":[[parent,child],...],"roles":{"name":"desired"|"seen"}}
LabelGraph dag_from_json(const std::string& text);

// ILFs: {"ilfs":[{"id","output_space":[label ids],"can_abstain"}]}
// Output spaces may also name labels when read.
std::string ilfs_to_json(const std::vector<IlfSpec>& ilfs);
std::vector<IlfSpec> ilfs_from_json(const std::string& text, const LabelGraph& g);

// Votes: header of ILF ids, one row per point, label ids or "-" for abstain.
// Label names are accepted when read.
std::string outputs_to_csv(const IlfOutputMatrix& outputs, const std::vector<IlfSpec>& ilfs);
IlfOutputMatrix outputs_from_csv(const std::string& text, const std::vector<IlfSpec>& ilfs, const LabelGraph& g);

// Gold labels: header "label", one desired label name per point.
std::string gold_to_csv(const std::vector<int>& gold, const LabelGraph& g);
std::vector<int> gold_from_csv(const std::string& text, const LabelGraph& g);

// Features: header f0..f{d-1}, one row per point.
std::string features_to_csv(const Matrix& x);
Matrix features_from_csv(const std::string& text);

// Model: kind, graph, ILFs, their content hashes, build options, the
// dependency list with label-id participants, and theta.
std::string model_to_json(const FactorModel& model);
FactorModel model_from_json(const std::string& text);

/// Per point {"p":{label name: prob, ..., "unknown": prob},"point":i}.
std::string posteriors_to_jsonl(const PosteriorLabels& post, const LabelGraph& g);
/// Degenerate distributions for hard labels; kNoLabel maps to "unknown".
std::string hard_labels_to_jsonl(const std::vector<int>& predicted, const LabelGraph& g);
/// Rows in desired order, unknown last when any row carries that key.
PosteriorLabels posteriors_from_jsonl(const std::string& text, const LabelGraph& g);

/// One {"epoch","exact_nll","sampler","step_size","theta_norm"} per line.
std::string training_log_to_jsonl(const std::vector<EpochLog>& log);

std::string spec_to_json(const SimSpec& spec);
SimSpec spec_from_json(const std::string& text);

std::string linear_to_json(const LinearClassifier& clf, const LabelGraph& g);
LinearClassifier linear_from_json(const std::string& text);

std::string metrics_to_json(const Metrics& m, const LabelGraph& g);

}  // namespace wisynth

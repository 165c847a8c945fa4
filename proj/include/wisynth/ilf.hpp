#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wisynth/label_graph.hpp"

namespace wisynth {

inline constexpr LabelId kAbstain = -1;

struct IlfSpec {
  int ilf_id = 0;
  std::vector<LabelId> output_space;  // seen labels, ascending
  bool can_abstain = true;

  bool emits(LabelId l) const noexcept;
};

/// Throws GraphError when an output space is empty, has duplicates, or names
/// a label that is not seen in `g`.
void validate_ilfs(const LabelGraph& g, std::span<const IlfSpec> ilfs);

/// m x n matrix of ILF votes; entries are seen label ids or kAbstain.
class IlfOutputMatrix {
 public:
  IlfOutputMatrix() = default;
  IlfOutputMatrix(std::size_t rows, std::size_t cols, LabelId fill = kAbstain)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  LabelId& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  LabelId at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const LabelId> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<LabelId> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  void push_row(std::span<const LabelId> r);

  bool operator==(const IlfOutputMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<LabelId> data_;
};

/// Throws std::invalid_argument on a column-count mismatch or a vote outside
/// the declared output space (or an abstention from an ILF that cannot abstain).
void validate_outputs(std::span<const IlfSpec> ilfs, const IlfOutputMatrix& outputs);

struct InformativenessReport {
  int ilf_id = 0;
  // Every desired label has an exclusive label in the output space.
  bool structural = true;
  std::vector<LabelId> structurally_uninformative_for;
  // Only set when outputs are supplied: every desired label y sees at least one
  // vote outside N(y, output space); abstentions count as outside.
  std::optional<bool> empirical;
  std::vector<LabelId> empirically_uninformative_for;
};

std::vector<InformativenessReport> check_informativeness(const LabelGraph& g,
                                                         std::span<const IlfSpec> ilfs,
                                                         const IlfOutputMatrix* outputs = nullptr);

}  // namespace wisynth

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flaming {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> names);
  static ConfusionMatrix from_counts(std::vector<std::string> names, const std::vector<std::vector<std::size_t>>& counts);

  void add(std::size_t truth, std::size_t predicted, std::size_t count = 1);
  std::size_t count(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * size() + predicted); }
  std::size_t size() const { return names_.size(); }
  std::size_t total() const { return total_; }
  std::size_t row_total(std::size_t truth) const;
  const std::vector<std::string>& names() const { return names_; }

  // Plain-text table with labelled rows and columns.
  std::string render() const;

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

double mca(const ConfusionMatrix& cm);
// Mean per-class recall over the classes present in the ground truth.
double mpca(const ConfusionMatrix& cm);

struct MergeMap {
  std::vector<std::size_t> target;          // old class -> merged class
  std::vector<std::string> merged_names;
};

MergeMap identity_merge(std::size_t classes, const std::vector<std::string>& names);
// GroupToy default: scatter and huddle-break fold into one class.
MergeMap default_merge_map();
ConfusionMatrix merge(const ConfusionMatrix& cm, const MergeMap& map);
double merged_mca(const ConfusionMatrix& cm, const MergeMap& map);

// att, masks: frames x cells. Mean over frames of the attention mass inside
// the mask.
double attention_localization(std::span<const double> att, std::span<const double> masks, std::size_t frames,
                              std::size_t cells);

}  // namespace flaming

#include "flaming/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "flaming/errors.hpp"
#include "flaming/synthdata.hpp"

namespace flaming {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> names)
    : names_(std::move(names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) throw ContractError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<std::string> names,
                                             const std::vector<std::vector<std::size_t>>& counts) {
  ConfusionMatrix cm(std::move(names));
  if (counts.size() != cm.size()) throw DimensionError("confusion counts must be square with one row per class");
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r].size() != cm.size()) throw DimensionError("confusion counts must be square");
    for (std::size_t c = 0; c < counts[r].size(); ++c) cm.add(r, c, counts[r][c]);
  }
  return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::size_t count) {
  if (truth >= size() || predicted >= size()) throw ContractError("confusion matrix class index out of range");
  counts_[truth * size() + predicted] += count;
  total_ += count;
}

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < size(); ++c) s += count(truth, c);
  return s;
}

std::string ConfusionMatrix::render() const {
  std::size_t label_w = 5;
  for (const auto& n : names_) label_w = std::max(label_w, n.size());
  std::size_t cell_w = 4;
  for (auto v : counts_) cell_w = std::max(cell_w, std::to_string(v).size() + 1);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "truth" << " |";
  for (std::size_t c = 0; c < size(); ++c) os << std::right << std::setw(static_cast<int>(cell_w)) << c;
  os << '\n' << std::string(label_w + 2 + cell_w * size(), '-') << '\n';
  for (std::size_t r = 0; r < size(); ++r) {
    os << std::left << std::setw(static_cast<int>(label_w)) << names_[r] << " |";
    for (std::size_t c = 0; c < size(); ++c) os << std::right << std::setw(static_cast<int>(cell_w)) << count(r, c);
    os << '\n';
  }
  os << "columns: predicted class index\n";
  return os.str();
}

double mca(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("mca of an empty confusion matrix");
  std::size_t diag = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) diag += cm.count(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double mpca(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t r = 0; r < cm.size(); ++r) {
    const std::size_t row = cm.row_total(r);
    if (row == 0) continue;  // class absent from this split
    sum += static_cast<double>(cm.count(r, r)) / static_cast<double>(row);
    ++present;
  }
  if (present == 0) throw ContractError("mpca: every ground-truth row is empty");
  return sum / static_cast<double>(present);
}

MergeMap identity_merge(std::size_t classes, const std::vector<std::string>& names) {
  MergeMap m;
  for (std::size_t i = 0; i < classes; ++i) m.target.push_back(i);
  m.merged_names = names;
  return m;
}

MergeMap default_merge_map() {
  MergeMap m;
  const auto names = class_names();
  const std::size_t folded = class_index(ActivityClass::HuddleBreak);
  const std::size_t into = class_index(ActivityClass::Scatter);
  std::size_t next = 0;
  std::vector<std::size_t> remap(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i == folded) continue;
    remap[i] = next++;
    m.merged_names.push_back(i == into ? names[into] + "+" + names[folded] : names[i]);
  }
  remap[folded] = remap[into];
  m.target = remap;
  return m;
}

ConfusionMatrix merge(const ConfusionMatrix& cm, const MergeMap& map) {
  if (map.target.size() != cm.size()) {
    throw ContractError("merge map covers " + std::to_string(map.target.size()) + " classes, matrix has " +
                        std::to_string(cm.size()));
  }
  for (auto t : map.target) {
    if (t >= map.merged_names.size()) throw ContractError("merge map sends a class outside the merged set");
  }
  ConfusionMatrix out(map.merged_names);
  for (std::size_t r = 0; r < cm.size(); ++r) {
    for (std::size_t c = 0; c < cm.size(); ++c) {
      if (cm.count(r, c)) out.add(map.target[r], map.target[c], cm.count(r, c));
    }
  }
  return out;
}

double merged_mca(const ConfusionMatrix& cm, const MergeMap& map) { return mca(merge(cm, map)); }

double attention_localization(std::span<const double> att, std::span<const double> masks, std::size_t frames,
                              std::size_t cells) {
  if (frames == 0 || att.size() != frames * cells || masks.size() != att.size()) {
    throw ContractError("attention_localization: attention and mask must both be " + std::to_string(frames) + " x " +
                        std::to_string(cells));
  }
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double inside = 0.0;
    for (std::size_t p = 0; p < cells; ++p) inside += att[t * cells + p] * masks[t * cells + p];
    total += inside;
  }
  return total / static_cast<double>(frames);
}

}  // namespace flaming

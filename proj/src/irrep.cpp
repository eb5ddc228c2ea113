#include "gem/irrep.hpp"

#include <cmath>

namespace gem {

IrrepSignature::IrrepSignature(std::vector<IrrepEntry> entries)
    : entries_(std::move(entries)) {
  int last_order = -1;
  for (const auto& e : entries_) {
    if (e.order <= last_order)
      throw Error("IrrepSignature: orders must be strictly increasing");
    if (e.multiplicity <= 0)
      throw Error("IrrepSignature: multiplicity must be positive");
    last_order = e.order;
    offsets_.push_back(dim_);
    dim_ += e.dim();
  }
  if (dim_ == 0) throw Error("IrrepSignature: empty signature");
}

IrrepSignature IrrepSignature::regular(int max_order, int multiplicity) {
  std::vector<IrrepEntry> entries;
  for (int m = 0; m <= max_order; ++m) entries.push_back({m, multiplicity});
  return IrrepSignature(std::move(entries));
}

int IrrepSignature::max_order() const {
  return entries_.empty() ? 0 : entries_.back().order;
}

IrrepSignature concat(const IrrepSignature& a, const IrrepSignature& b) {
  std::vector<IrrepEntry> merged;
  std::size_t i = 0, j = 0;
  while (i < a.entries_.size() || j < b.entries_.size()) {
    if (j == b.entries_.size() ||
        (i < a.entries_.size() &&
         a.entries_[i].order < b.entries_[j].order)) {
      merged.push_back(a.entries_[i++]);
    } else if (i == a.entries_.size() ||
               b.entries_[j].order < a.entries_[i].order) {
      merged.push_back(b.entries_[j++]);
    } else {
      merged.push_back({a.entries_[i].order, a.entries_[i].multiplicity +
                                                 b.entries_[j].multiplicity});
      ++i;
      ++j;
    }
  }
  return IrrepSignature(std::move(merged));
}

MatX rep_matrix(const IrrepSignature& sig, double angle) {
  MatX rep = MatX::Identity(sig.dim(), sig.dim());
  for (std::size_t e = 0; e < sig.entries().size(); ++e) {
    const auto& entry = sig.entries()[e];
    if (entry.order == 0) continue;
    const double c = std::cos(entry.order * angle);
    const double s = std::sin(entry.order * angle);
    for (int k = 0; k < entry.multiplicity; ++k) {
      const int o = sig.offset(e) + 2 * k;
      rep(o, o) = c;
      rep(o, o + 1) = -s;
      rep(o + 1, o) = s;
      rep(o + 1, o + 1) = c;
    }
  }
  return rep;
}

void apply_rep(const IrrepSignature& sig, double angle, MatX& values,
               Index row) {
  for (std::size_t e = 0; e < sig.entries().size(); ++e) {
    const auto& entry = sig.entries()[e];
    if (entry.order == 0) continue;
    const double c = std::cos(entry.order * angle);
    const double s = std::sin(entry.order * angle);
    for (int k = 0; k < entry.multiplicity; ++k) {
      const int o = sig.offset(e) + 2 * k;
      const double x = values(row, o);
      const double y = values(row, o + 1);
      values(row, o) = c * x - s * y;
      values(row, o + 1) = s * x + c * y;
    }
  }
}

void apply_rep_field(double angle, IrrepField& field) {
  for (Index v = 0; v < field.vertex_count(); ++v)
    apply_rep(field.signature, angle, field.values, v);
}

}  // namespace gem

#pragma once

#include "gem/types.hpp"

namespace gem {

// One isotypic entry: SO(2) irrep of the given order with a multiplicity.
// Order 0 is the scalar irrep (1 real component per copy), order m >= 1
// acts as rotation by m*angle on a 2-component pair.
struct IrrepEntry {
  int order = 0;
  int multiplicity = 1;

  int component_dim() const { return order == 0 ? 1 : 2; }
  int dim() const { return multiplicity * component_dim(); }
  bool operator==(const IrrepEntry&) const = default;
};

class IrrepSignature {
 public:
  IrrepSignature() = default;
  explicit IrrepSignature(std::vector<IrrepEntry> entries);

  // Equal multiplicity for every order 0..max_order.
  static IrrepSignature regular(int max_order, int multiplicity);

  const std::vector<IrrepEntry>& entries() const { return entries_; }
  int dim() const { return dim_; }
  int max_order() const;
  // Offset of entry e's first component in the flat per-vertex vector.
  int offset(std::size_t e) const { return offsets_[e]; }
  bool operator==(const IrrepSignature&) const = default;

  // Concatenation (channel stacking); entries of equal order merge.
  friend IrrepSignature concat(const IrrepSignature& a,
                               const IrrepSignature& b);

 private:
  std::vector<IrrepEntry> entries_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

// Per-vertex feature stack expressed in each vertex's gauge.
struct IrrepField {
  IrrepSignature signature;
  MatX values;  // V x signature.dim()

  Index vertex_count() const { return values.rows(); }
};

// Block-diagonal orthogonal matrix of the signature's action at the angle.
MatX rep_matrix(const IrrepSignature& sig, double angle);

// In-place action on one row of a field matrix; equivalent to multiplying by
// rep_matrix but without forming it.
void apply_rep(const IrrepSignature& sig, double angle, MatX& values,
               Index row);

void apply_rep_field(double angle, IrrepField& field);

}  // namespace gem

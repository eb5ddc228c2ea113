#pragma once

#include <map>

#include "gem/irrep.hpp"

namespace gem {

// Orthonormal null-space basis of the gauge-equivariance kernel constraint
//   K(theta - g) = rho_out(-g) K(theta) rho_in(-g)^{-1}
// for a single (m_in, m_out) irrep pair. The orientation matches a gauge
// rotation by +g shifting log angles by -g and feature coordinates by
// rho(-g). Neighbor elements are matrix-valued
// truncated Fourier series in the log-map angle theta; self elements are
// constant matrices satisfying the same constraint with theta removed.
class KernelBasis {
 public:
  KernelBasis() = default;
  KernelBasis(int m_in, int m_out, int fourier_order,
              std::vector<MatX> neighbor_coeffs, std::vector<MatX> self_basis);

  int m_in() const { return m_in_; }
  int m_out() const { return m_out_; }
  int fourier_order() const { return fourier_order_; }
  int neighbor_count() const { return static_cast<int>(neighbor_.size()); }
  int self_count() const { return static_cast<int>(self_.size()); }

  int dim_in() const { return m_in_ == 0 ? 1 : 2; }
  int dim_out() const { return m_out_ == 0 ? 1 : 2; }

  // Coefficient layout: [A0 | A1 .. AL | B1 .. BL], each block dim_out x
  // dim_in, K(theta) = A0 + sum_k A_k cos(k theta) + B_k sin(k theta).
  const MatX& neighbor_coeffs(int elem) const { return neighbor_[elem]; }
  const MatX& self_element(int elem) const { return self_[elem]; }

  MatX eval_neighbor(int elem, double theta) const;

 private:
  int m_in_ = 0, m_out_ = 0, fourier_order_ = 0;
  std::vector<MatX> neighbor_;
  std::vector<MatX> self_;
};

// Solves the constraint numerically on an S x S grid of (g, theta) samples
// and returns an orthonormal basis (sampled Frobenius inner product).
// Throws InsufficientSampling if doubling S changes the null-space dimension.
KernelBasis solve_kernel_basis(int m_in, int m_out, int fourier_order,
                               int sample_count);

// All pairs with orders <= max_order, solved with L = m_in + m_out and
// S = 4 (L + 1) + 1 samples.
class KernelBasisSet {
 public:
  explicit KernelBasisSet(int max_order);
  const KernelBasis& pair(int m_in, int m_out) const;
  int max_order() const { return max_order_; }

 private:
  int max_order_;
  std::map<std::pair<int, int>, KernelBasis> bases_;
};

}  // namespace gem

#include "gem/kernel_basis.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace gem {

namespace {

Eigen::Matrix2d rotation2(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

MatX rep_of_order(int m, double angle) {
  if (m == 0) return MatX::Ones(1, 1);
  return rotation2(m * angle);
}

// phi_t(theta): t = 0 constant, 1..L cosine, L+1..2L sine.
double fourier_term(int t, int L, double theta) {
  if (t == 0) return 1.0;
  if (t <= L) return std::cos(t * theta);
  return std::sin((t - L) * theta);
}

// Null space of the sampled constraint for one grid resolution. Returns the
// coefficient vectors as columns.
MatX neighbor_null_space(int m_in, int m_out, int L, int S) {
  const int din = m_in == 0 ? 1 : 2;
  const int dout = m_out == 0 ? 1 : 2;
  const int terms = 2 * L + 1;
  const int unknowns = dout * din * terms;
  auto idx = [&](int t, int r, int c) { return (t * dout + r) * din + c; };

  MatX system(S * S * dout * din, unknowns);
  Index row = 0;
  for (int j = 0; j < S; ++j) {
    const double g = kTwoPi * j / S;
    const MatX rout = rep_of_order(m_out, -g);
    const MatX rin = rep_of_order(m_in, -g);
    for (int i = 0; i < S; ++i) {
      const double theta = kTwoPi * (i + 0.5) / S;
      for (int r = 0; r < dout; ++r)
        for (int c = 0; c < din; ++c) {
          Eigen::RowVectorXd eq = Eigen::RowVectorXd::Zero(unknowns);
          for (int t = 0; t < terms; ++t)
            eq[idx(t, r, c)] += fourier_term(t, L, theta - g);
          // rho_out(-g) K(theta) rho_in(-g)^T, entry (r, c)
          for (int rp = 0; rp < dout; ++rp)
            for (int cp = 0; cp < din; ++cp) {
              const double w = rout(r, rp) * rin(c, cp);
              for (int t = 0; t < terms; ++t)
                eq[idx(t, rp, cp)] -= w * fourier_term(t, L, theta);
            }
          system.row(row++) = eq;
        }
    }
  }
  Eigen::BDCSVD<MatX> svd(system, Eigen::ComputeFullV);
  const VecX sv = svd.singularValues();
  const double max_sv = sv.size() > 0 ? sv[0] : 0.0;
  int null_dim = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (max_sv == 0.0 || sv[k] < 1e-10 * max_sv) ++null_dim;
  return svd.matrixV().rightCols(null_dim);
}

MatX self_null_space(int m_in, int m_out, int S) {
  const int din = m_in == 0 ? 1 : 2;
  const int dout = m_out == 0 ? 1 : 2;
  const int unknowns = dout * din;
  MatX system(S * unknowns, unknowns);
  Index row = 0;
  for (int j = 0; j < S; ++j) {
    const double g = kTwoPi * (j + 0.5) / S;
    const MatX rout = rep_of_order(m_out, -g);
    const MatX rin = rep_of_order(m_in, -g);
    for (int r = 0; r < dout; ++r)
      for (int c = 0; c < din; ++c) {
        Eigen::RowVectorXd eq = Eigen::RowVectorXd::Zero(unknowns);
        eq[r * din + c] += 1.0;
        for (int rp = 0; rp < dout; ++rp)
          for (int cp = 0; cp < din; ++cp)
            eq[rp * din + cp] -= rout(r, rp) * rin(c, cp);
        system.row(row++) = eq;
      }
  }
  Eigen::BDCSVD<MatX> svd(system, Eigen::ComputeFullV);
  const VecX sv = svd.singularValues();
  const double max_sv = sv.size() > 0 ? sv[0] : 0.0;
  int null_dim = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (max_sv == 0.0 || sv[k] < 1e-10 * max_sv) ++null_dim;
  return svd.matrixV().rightCols(null_dim);
}

}  // namespace

KernelBasis::KernelBasis(int m_in, int m_out, int fourier_order,
                         std::vector<MatX> neighbor_coeffs,
                         std::vector<MatX> self_basis)
    : m_in_(m_in),
      m_out_(m_out),
      fourier_order_(fourier_order),
      neighbor_(std::move(neighbor_coeffs)),
      self_(std::move(self_basis)) {}

MatX KernelBasis::eval_neighbor(int elem, double theta) const {
  const MatX& coeffs = neighbor_[elem];
  const int din = dim_in();
  MatX k = coeffs.leftCols(din);
  for (int t = 1; t <= fourier_order_; ++t) {
    k += std::cos(t * theta) * coeffs.middleCols(t * din, din);
    k += std::sin(t * theta) *
         coeffs.middleCols((fourier_order_ + t) * din, din);
  }
  return k;
}

KernelBasis solve_kernel_basis(int m_in, int m_out, int fourier_order,
                               int sample_count) {
  const int L = fourier_order;
  if (L < m_in + m_out)
    throw Error("solve_kernel_basis: fourier_order must be >= m_in + m_out");
  if (sample_count < 4 * (L + 1))
    throw Error("solve_kernel_basis: sample_count must be >= 4 (L + 1)");
  const int din = m_in == 0 ? 1 : 2;
  const int dout = m_out == 0 ? 1 : 2;
  const int terms = 2 * L + 1;

  const MatX null_basis = neighbor_null_space(m_in, m_out, L, sample_count);
  const MatX doubled = neighbor_null_space(m_in, m_out, L, 2 * sample_count);
  if (null_basis.cols() != doubled.cols())
    throw InsufficientSampling(
        "null-space dimension changed when doubling the sample grid");

  // Orthonormalise under the sampled Frobenius inner product
  // <K_a, K_b> = (1/S) sum_theta tr(K_a^T K_b).
  const int nb = static_cast<int>(null_basis.cols());
  std::vector<MatX> coeff_mats;
  for (int e = 0; e < nb; ++e) {
    MatX coeffs(dout, din * terms);
    for (int t = 0; t < terms; ++t)
      for (int r = 0; r < dout; ++r)
        for (int c = 0; c < din; ++c)
          coeffs(r, t * din + c) = null_basis((t * dout + r) * din + c, e);
    coeff_mats.push_back(std::move(coeffs));
  }
  KernelBasis raw(m_in, m_out, L, coeff_mats, {});
  if (nb > 0) {
    const int S = sample_count;
    MatX gram = MatX::Zero(nb, nb);
    std::vector<std::vector<MatX>> samples(nb);
    for (int i = 0; i < S; ++i) {
      const double theta = kTwoPi * (i + 0.25) / S;
      for (int e = 0; e < nb; ++e)
        samples[e].push_back(raw.eval_neighbor(e, theta));
    }
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b)
        for (int i = 0; i < S; ++i)
          gram(a, b) += samples[a][i].cwiseProduct(samples[b][i]).sum() / S;
    const MatX chol = gram.llt().matrixL();
    const MatX mix = chol.inverse();  // new_e = sum_a mix(e, a) old_a
    std::vector<MatX> ortho;
    for (int e = 0; e < nb; ++e) {
      MatX m = MatX::Zero(dout, din * terms);
      for (int a = 0; a < nb; ++a) m += mix(e, a) * coeff_mats[a];
      ortho.push_back(std::move(m));
    }
    coeff_mats = std::move(ortho);
  }

  const MatX self_null = self_null_space(m_in, m_out, sample_count);
  std::vector<MatX> self_basis;
  for (Index e = 0; e < self_null.cols(); ++e) {
    MatX k(dout, din);
    for (int r = 0; r < dout; ++r)
      for (int c = 0; c < din; ++c) k(r, c) = self_null(r * din + c, e);
    self_basis.push_back(std::move(k));
  }
  return KernelBasis(m_in, m_out, L, std::move(coeff_mats),
                     std::move(self_basis));
}

KernelBasisSet::KernelBasisSet(int max_order) : max_order_(max_order) {
  for (int m_in = 0; m_in <= max_order; ++m_in)
    for (int m_out = 0; m_out <= max_order; ++m_out) {
      const int L = m_in + m_out;
      bases_[{m_in, m_out}] =
          solve_kernel_basis(m_in, m_out, L, 4 * (L + 1) + 1);
    }
}

const KernelBasis& KernelBasisSet::pair(int m_in, int m_out) const {
  auto it = bases_.find({m_in, m_out});
  if (it == bases_.end())
    throw Error("KernelBasisSet: pair (" + std::to_string(m_in) + "," +
                std::to_string(m_out) + ") not solved");
  return it->second;
}

}  // namespace gem

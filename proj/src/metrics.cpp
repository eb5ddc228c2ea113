#include "gem/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace gem {

Metrics compute_metrics(const std::vector<MatX>& preds,
                        const std::vector<MatX>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ShapeMismatch("compute_metrics: sample count mismatch");

  // split-wide maximum label magnitude for the NMAE normaliser
  double max_label = 0.0;
  for (const MatX& l : labels)
    for (Index v = 0; v < l.rows(); ++v)
      max_label = std::max(max_label, l.row(v).norm());
  if (max_label == 0.0)
    throw ZeroLabel("compute_metrics: all labels are zero");

  Metrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const MatX& p = preds[i];
    const MatX& l = labels[i];
    if (p.rows() != l.rows() || p.cols() != l.cols())
      throw ShapeMismatch("compute_metrics: pred/label shape mismatch");
    const Index n = l.rows();
    VecX delta(n), lnorm(n);
    for (Index v = 0; v < n; ++v) {
      delta[v] = (p.row(v) - l.row(v)).norm();
      lnorm[v] = l.row(v).norm();
    }
    const double l2 = lnorm.norm();
    if (l2 == 0.0) throw ZeroLabel("compute_metrics: zero label sample");
    m.nmae += delta.mean() / max_label;
    m.eps += delta.norm() / l2;
    m.delta_max += delta.maxCoeff();
    m.delta_mean += delta.mean();
    m.l_max += lnorm.maxCoeff();
    std::vector<double> sorted(lnorm.data(), lnorm.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    double median = sorted[n / 2];
    if (n % 2 == 0) {
      const double lower =
          *std::max_element(sorted.begin(), sorted.begin() + n / 2);
      median = 0.5 * (median + lower);
    }
    m.l_median += median;
  }
  const double inv = 1.0 / static_cast<double>(preds.size());
  m.nmae *= inv;
  m.eps *= inv;
  m.delta_max *= inv;
  m.delta_mean *= inv;
  m.l_max *= inv;
  m.l_median *= inv;
  return m;
}

}  // namespace gem

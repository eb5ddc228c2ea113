#pragma once

#include "gem/types.hpp"

namespace gem {

// Error statistics over a test split of ambient fields (V x 3T matrices).
// Per vertex: Delta_i = ||pred_i - label_i||_2 over all 3T components.
// NMAE normalises mean(Delta) by the split-wide maximum label norm.
struct Metrics {
  double nmae = 0.0;
  double eps = 0.0;  // ||Delta||_2 / ||L||_2, mean over samples
  double delta_max = 0.0;
  double delta_mean = 0.0;
  double l_max = 0.0;
  double l_median = 0.0;
};

Metrics compute_metrics(const std::vector<MatX>& preds,
                        const std::vector<MatX>& labels);

}  // namespace gem

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace drag::metrics {

using Index = std::int64_t;

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct EvalResult {
  double f1_macro = 0.0;
  double auc = 0.0;
  Confusion confusion;
  std::size_t n_eval = 0;
};

/// Fraud is predicted when the score is strictly above the threshold.
Confusion confusion(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                    double threshold = 0.5);

/// Unweighted mean of the fraud-class and normal-class F1. A class with no
/// predicted and no actual members contributes 0.
double f1_macro(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                double threshold = 0.5);

/// Area under the ROC curve as the Mann-Whitney statistic with average ranks
/// for ties. Throws ValidationError when the mask lacks one of the classes.
double auc(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask);

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                    double threshold = 0.5);

/// All node indices 0..n-1, for evaluating over a whole score vector.
std::vector<Index> all_indices(std::size_t n);

}  // namespace drag::metrics

#include "drag/metrics.hpp"

#include "drag/error.hpp"

#include <algorithm>
#include <numeric>

namespace drag::metrics {

namespace {

void check_mask(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  for (Index i : mask) {
    if (i < 0 || static_cast<std::size_t>(i) >= scores.size()) throw ValidationError("mask index out of range");
  }
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

Confusion confusion(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                    double threshold) {
  check_mask(scores, labels, mask);
  Confusion c;
  for (Index i : mask) {
    const bool predicted = scores[i] > threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_macro(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                double threshold) {
  if (mask.empty()) throw ValidationError("f1_macro: empty mask");
  const Confusion c = confusion(scores, labels, mask, threshold);
  // Normal class as positive swaps the roles of tp/tn and fp/fn.
  return 0.5 * (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp));
}

double auc(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask) {
  check_mask(scores, labels, mask);
  std::vector<Index> order(mask.begin(), mask.end());
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });

  std::size_t n_pos = 0;
  double rank_sum = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    // ranks start+1..end share their mean
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t t = start; t < end; ++t) {
      if (labels[order[t]] == 1) {
        ++n_pos;
        rank_sum += avg_rank;
      }
    }
    start = end;
  }
  const std::size_t n_neg = order.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc: the evaluation set must contain both classes");
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels, std::span<const Index> mask,
                    double threshold) {
  EvalResult r;
  r.confusion = confusion(scores, labels, mask, threshold);
  r.f1_macro = f1_macro(scores, labels, mask, threshold);
  r.auc = auc(scores, labels, mask);
  r.n_eval = mask.size();
  return r;
}

std::vector<Index> all_indices(std::size_t n) {
  std::vector<Index> out(n);
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

}  // namespace drag::metrics

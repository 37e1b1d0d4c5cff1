#pragma once

#include <span>

namespace rtfm {

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs with the positive scored higher, ties counting
/// one half. Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: mean over positives of the precision at the rank where
/// each positive is recalled. Ranking is by descending score, equal scores
/// ordered by lower index first. Throws MetricError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

}  // namespace rtfm

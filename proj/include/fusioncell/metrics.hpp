#pragma once

#include <array>
#include <string>
#include <vector>

#include "fusioncell/fusion.hpp"

#include <json.hpp>

namespace fc {

// Percentage error averaged over samples with |truth| > eps; excluded counts
// how many samples the guard removed.
double mape_percent(const std::vector<double>& pred, const std::vector<double>& truth,
                    int* excluded = nullptr, double eps = 1e-9);

double r_squared(const std::vector<double>& pred, const std::vector<double>& truth);

// Rank correlations. Ties take average ranks (Spearman) / tau-b (Kendall).
double spearman_rho(const std::vector<double>& pred, const std::vector<double>& truth);
double kendall_tau(const std::vector<double>& pred, const std::vector<double>& truth);

struct TargetMetrics {
  double mape = 0, r2 = 0, spearman = 0, kendall = 0;
  int n = 0, mape_excluded = 0;
};

struct RankingSummary {
  double spearman = 0, kendall = 0;
  int groups_used = 0, groups_skipped = 0;  // skipped = fewer than 2 samples
};

struct MetricsReport {
  std::array<TargetMetrics, kNumTargets> per_target;
  // Within-cell-type ranking quality, macro-averaged over cell types.
  std::array<RankingSummary, kNumTargets> ranking;

  nlohmann::json to_json() const;
  std::string to_table() const;  // aligned plain-text table
};

// preds/truths are N rows of 6 targets; cell_types has length N and defines
// the ranking groups.
MetricsReport evaluate_predictions(const std::vector<std::array<double, kNumTargets>>& preds,
                                   const std::vector<std::array<double, kNumTargets>>& truths,
                                   const std::vector<std::string>& cell_types);

}  // namespace fc

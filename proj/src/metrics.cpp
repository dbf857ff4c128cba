#include "fusioncell/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fc {

namespace {

void check_sizes(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("metrics: series must be non-empty and equally sized");
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double mape_percent(const std::vector<double>& pred, const std::vector<double>& truth,
                    int* excluded, double eps) {
  check_sizes(pred, truth);
  double sum = 0;
  int used = 0, skipped = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(truth[i]) <= eps) {
      ++skipped;
      continue;
    }
    sum += std::abs(pred[i] - truth[i]) / std::abs(truth[i]);
    ++used;
  }
  if (excluded) *excluded = skipped;
  if (!used) throw std::invalid_argument("mape: all ground-truth values are near zero");
  return 100.0 * sum / used;
}

double r_squared(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_sizes(pred, truth);
  double mean = 0;
  for (double t : truth) mean += t;
  mean /= truth.size();
  double ss_res = 0, ss_tot = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0) return ss_res == 0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double spearman_rho(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_sizes(pred, truth);
  if (pred.size() < 2) throw std::invalid_argument("spearman: need at least 2 samples");
  return pearson(average_ranks(pred), average_ranks(truth));
}

double kendall_tau(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_sizes(pred, truth);
  const size_t n = pred.size();
  if (n < 2) throw std::invalid_argument("kendall: need at least 2 samples");
  long long conc = 0, disc = 0, ties_p = 0, ties_t = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double dp = pred[i] - pred[j];
      const double dt = truth[i] - truth[j];
      if (dp == 0 && dt == 0) continue;
      if (dp == 0) ++ties_p;
      else if (dt == 0) ++ties_t;
      else if ((dp > 0) == (dt > 0)) ++conc;
      else ++disc;
    }
  const double n0p = conc + disc + ties_p;
  const double n0t = conc + disc + ties_t;
  if (n0p == 0 || n0t == 0) return 0;
  return (conc - disc) / std::sqrt(n0p * n0t);
}

MetricsReport evaluate_predictions(const std::vector<std::array<double, kNumTargets>>& preds,
                                   const std::vector<std::array<double, kNumTargets>>& truths,
                                   const std::vector<std::string>& cell_types) {
  if (preds.size() != truths.size() || preds.size() != cell_types.size() || preds.empty())
    throw std::invalid_argument("evaluate: prediction/truth/type counts disagree");

  MetricsReport rep;
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < cell_types.size(); ++i) groups[cell_types[i]].push_back(i);

  for (int t = 0; t < kNumTargets; ++t) {
    std::vector<double> p, y;
    p.reserve(preds.size());
    y.reserve(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
      p.push_back(preds[i][t]);
      y.push_back(truths[i][t]);
    }
    TargetMetrics& m = rep.per_target[t];
    m.n = static_cast<int>(p.size());
    m.mape = mape_percent(p, y, &m.mape_excluded);
    m.r2 = r_squared(p, y);
    m.spearman = p.size() >= 2 ? spearman_rho(p, y) : 0.0;
    m.kendall = p.size() >= 2 ? kendall_tau(p, y) : 0.0;

    RankingSummary& rk = rep.ranking[t];
    double srho = 0, stau = 0;
    for (const auto& [type, idx] : groups) {
      if (idx.size() < 2) {
        ++rk.groups_skipped;
        continue;
      }
      std::vector<double> gp, gy;
      for (size_t i : idx) {
        gp.push_back(p[i]);
        gy.push_back(y[i]);
      }
      srho += spearman_rho(gp, gy);
      stau += kendall_tau(gp, gy);
      ++rk.groups_used;
    }
    if (rk.groups_used) {
      rk.spearman = srho / rk.groups_used;
      rk.kendall = stau / rk.groups_used;
    }
  }
  return rep;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  for (int t = 0; t < kNumTargets; ++t) {
    const TargetMetrics& m = per_target[t];
    const RankingSummary& rk = ranking[t];
    j["targets"][TargetVector::names()[t]] = {
        {"mape_percent", m.mape},       {"r2", m.r2},
        {"spearman", m.spearman},       {"kendall", m.kendall},
        {"n", m.n},                     {"mape_excluded", m.mape_excluded},
        {"ranking_spearman", rk.spearman}, {"ranking_kendall", rk.kendall},
        {"ranking_groups_used", rk.groups_used},
        {"ranking_groups_skipped", rk.groups_skipped}};
  }
  return j;
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %10s %8s %9s %8s %9s %9s\n", "target", "mape%", "r2",
                "spearman", "kendall", "rank_rho", "rank_tau");
  os << line;
  for (int t = 0; t < kNumTargets; ++t) {
    const TargetMetrics& m = per_target[t];
    const RankingSummary& rk = ranking[t];
    std::snprintf(line, sizeof(line), "%-12s %10.3f %8.4f %9.4f %8.4f %9.4f %9.4f\n",
                  TargetVector::names()[t].c_str(), m.mape, m.r2, m.spearman, m.kendall,
                  rk.spearman, rk.kendall);
    os << line;
  }
  if (ranking[0].groups_skipped)
    os << "warning: " << ranking[0].groups_skipped
       << " cell type(s) skipped in ranking averages (fewer than 2 samples)\n";
  return os.str();
}

}  // namespace fc

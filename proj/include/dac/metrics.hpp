#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dac/common.hpp"

namespace dac {

inline double metrics_nan() { return std::numeric_limits<double>::quiet_NaN(); }

// One per-iteration diagnostics row. Optional fields are NaN when the
// algorithm or the oracle cadence does not produce them; they serialize as
// empty CSV cells.
struct MetricsRecord {
  long k = 0;
  long samples = 0;  // cumulative transitions consumed
  long comms = 0;    // cumulative gossip rounds (one per vector per round)
  double reward_inst = 0.0;  // instantaneous mean reward rbar(s_k, a_k)
  double reward_run = 0.0;   // running mean of reward_inst
  double cons_omega = metrics_nan();   // ||Q omega_k||
  double cons_lambda = metrics_nan();  // ||Q lambda_k||
  double noise_pre = metrics_nan();    // sum_i |r~_0^i - mean|^2 before gossip
  double noise_post = metrics_nan();   // sum_i |r~_Kr^i - mean|^2 after gossip
  double critic_gap = metrics_nan();   // ||mean omega - omega*(theta_k)||
  double grad_sq = metrics_nan();      // sum_i ||grad_i J(theta_k)||^2
  double exact_j = metrics_nan();      // J(theta_k)
  double eps_app_c = metrics_nan();    // critic approximation error at theta_k
};

inline constexpr const char* kMetricsHeader =
    "iter,samples,comms,reward_inst,reward_run,cons_omega,cons_lambda,noise_pre,"
    "noise_post,critic_gap,grad_sq,exact_j,eps_app_c";

inline constexpr int kMetricsValueColumns = 10;  // columns after iter/samples/comms

inline const char* metrics_value_column_name(int c) {
  static const char* names[kMetricsValueColumns] = {
      "reward_inst", "reward_run", "cons_omega", "cons_lambda", "noise_pre",
      "noise_post",  "critic_gap", "grad_sq",    "exact_j",     "eps_app_c"};
  return names[c];
}

inline double metrics_value_column(const MetricsRecord& r, int c) {
  switch (c) {
    case 0: return r.reward_inst;
    case 1: return r.reward_run;
    case 2: return r.cons_omega;
    case 3: return r.cons_lambda;
    case 4: return r.noise_pre;
    case 5: return r.noise_post;
    case 6: return r.critic_gap;
    case 7: return r.grad_sq;
    case 8: return r.exact_j;
    default: return r.eps_app_c;
  }
}

inline std::string metrics_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.k) + "," + std::to_string(r.samples) + "," +
                    std::to_string(r.comms);
  for (int c = 0; c < kMetricsValueColumns; ++c) {
    out += ",";
    double v = metrics_value_column(r, c);
    if (!std::isnan(v)) out += format_double(v);
  }
  return out;
}

// Cross-run aggregate of one iteration row: mean and sample standard
// deviation per value column (NaN where no run produced the column).
struct AggregateRecord {
  long k = 0;
  long samples = 0;
  long comms = 0;
  double mean[kMetricsValueColumns];
  double sd[kMetricsValueColumns];
};

inline std::string aggregate_csv_header() {
  std::string h = "iter,samples,comms";
  for (int c = 0; c < kMetricsValueColumns; ++c) {
    h += std::string(",") + metrics_value_column_name(c) + "_mean";
    h += std::string(",") + metrics_value_column_name(c) + "_sd";
  }
  return h;
}

inline std::string aggregate_csv_row(const AggregateRecord& r) {
  std::string out = std::to_string(r.k) + "," + std::to_string(r.samples) + "," +
                    std::to_string(r.comms);
  for (int c = 0; c < kMetricsValueColumns; ++c) {
    out += ",";
    if (!std::isnan(r.mean[c])) out += format_double(r.mean[c]);
    out += ",";
    if (!std::isnan(r.sd[c])) out += format_double(r.sd[c]);
  }
  return out;
}

// Per-iteration mean/sd across runs. All runs must share the iteration grid
// and the sample/communication counters (they are seed-independent).
inline std::vector<AggregateRecord> aggregate_metrics(
    const std::vector<std::vector<MetricsRecord>>& runs) {
  if (runs.empty()) return {};
  const std::size_t rows = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != rows)
      throw ContractError("aggregate_metrics: runs have different iteration counts");
  std::vector<AggregateRecord> agg(rows);
  for (std::size_t t = 0; t < rows; ++t) {
    AggregateRecord& a = agg[t];
    a.k = runs.front()[t].k;
    a.samples = runs.front()[t].samples;
    a.comms = runs.front()[t].comms;
    for (const auto& r : runs) {
      if (r[t].k != a.k || r[t].samples != a.samples || r[t].comms != a.comms)
        throw ContractError("aggregate_metrics: counter mismatch across runs");
    }
    for (int c = 0; c < kMetricsValueColumns; ++c) {
      int n = 0;
      double sum = 0.0;
      for (const auto& r : runs) {
        double v = metrics_value_column(r[t], c);
        if (!std::isnan(v)) {
          ++n;
          sum += v;
        }
      }
      if (n == 0) {
        a.mean[c] = a.sd[c] = metrics_nan();
        continue;
      }
      double mean = sum / double(n);
      double ss = 0.0;
      for (const auto& r : runs) {
        double v = metrics_value_column(r[t], c);
        if (!std::isnan(v)) ss += sq(v - mean);
      }
      a.mean[c] = mean;
      a.sd[c] = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
    }
  }
  return agg;
}

}  // namespace dac

#include "upsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "upsim/scenario.hpp"

namespace upsim {

unsigned sequential_rounds(const std::vector<Application>& apps) {
  std::map<std::uint32_t, const Application*> by_ordinal;
  for (const auto& a : apps) by_ordinal[a.ordinal] = &a;
  std::map<std::uint32_t, unsigned> depth;
  // Ordinals increase along dependency chains, so ascending order resolves
  // every dependency before it is needed.
  unsigned best = 0;
  for (const auto& [ordinal, app] : by_ordinal) {
    unsigned d = 1;
    if (app->depends_on) {
      auto it = depth.find(*app->depends_on);
      if (it != depth.end()) d = it->second + 1;
    }
    depth[ordinal] = d;
    best = std::max(best, d);
  }
  return best;
}

FitResult polyfit(const std::vector<double>& x, const std::vector<double>& y,
                  int degree) {
  const int m = degree + 1;
  const std::size_t n = x.size();
  // Normal equations A c = b with A[i][j] = sum x^(i+j).
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> powers(2 * m - 1, 1.0);
    for (int p = 1; p < 2 * m - 1; ++p) powers[p] = powers[p - 1] * x[k];
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) a[i][j] += powers[i + j];
      a[i][m] += powers[i] * y[k];
    }
  }
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int r = col + 1; r < m; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    if (std::fabs(a[col][col]) < 1e-12) continue;
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (int c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  FitResult fit;
  fit.coeffs.resize(m, 0.0);
  for (int i = 0; i < m; ++i)
    if (std::fabs(a[i][i]) > 1e-12) fit.coeffs[i] = a[i][m] / a[i][i];

  double mean = 0.0;
  for (double v : y) mean += v;
  if (n) mean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double fx = 0.0, p = 1.0;
    for (int i = 0; i < m; ++i) {
      fx += fit.coeffs[i] * p;
      p *= x[k];
    }
    ss_res += (y[k] - fx) * (y[k] - fx);
    ss_tot += (y[k] - mean) * (y[k] - mean);
  }
  fit.r2 = ss_tot < 1e-12 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

CompletionDelay completion_delay(const RunResult& r) {
  CompletionDelay d;
  d.incomplete = r.status != RunStatus::Complete;
  for (const auto& app : r.applications) d.delay = std::max(d.delay, app.at);
  return d;
}

std::vector<SpeedupRow> speedup_curve(const std::vector<unsigned>& lengths) {
  std::vector<SpeedupRow> rows;
  for (unsigned l : lengths) {
    SpeedupRow row;
    row.length = l;
    row.delay_central = run_simulation(fig1_chain(l, true)).completion_time;
    row.delay_dist = run_simulation(fig1_chain(l, false)).completion_time;
    row.ratio = row.delay_dist > 0 ? static_cast<double>(row.delay_central) /
                                         static_cast<double>(row.delay_dist)
                                   : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace upsim

#include "scnp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace scnp {

namespace {

struct SplitAccum {
  double total = 0.0, obs = 0.0, unobs = 0.0;
  std::int64_t n_total = 0, n_obs = 0, n_unobs = 0;

  void push(double err, bool observed) {
    total += err;
    ++n_total;
    if (observed) {
      obs += err;
      ++n_obs;
    } else {
      unobs += err;
      ++n_unobs;
    }
  }

  MetricTriplet finish() const {
    MetricTriplet t;
    t.total = {n_total > 0 ? total / static_cast<double>(n_total) : 0.0, n_total};
    t.observed = {n_obs > 0 ? obs / static_cast<double>(n_obs) : 0.0, n_obs};
    t.unobserved = {n_unobs > 0 ? unobs / static_cast<double>(n_unobs) : 0.0,
                    n_unobs};
    return t;
  }
};

void check_aligned(const ElevationGrid& pred, const ElevationGrid& gt,
                   const std::vector<std::uint8_t>& observed) {
  if (pred.spec.height != gt.spec.height || pred.spec.width != gt.spec.width ||
      observed.size() != gt.valid.size()) {
    throw UsageError("metrics: grids are not aligned");
  }
  if (gt.valid_count() == 0) {
    throw DataError("metrics: no GT-valid cells to evaluate");
  }
}

}  // namespace

MetricTriplet mae_split(const ElevationGrid& pred, const ElevationGrid& gt,
                        const std::vector<std::uint8_t>& observed) {
  check_aligned(pred, gt, observed);
  SplitAccum acc;
  const std::size_t n = gt.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!gt.valid[i]) continue;
    acc.push(std::abs(pred.values[i] - gt.values[i]), observed[i] != 0);
  }
  return acc.finish();
}

namespace {

// Derivative along one axis at one cell under the GT-validity stencil rule,
// applied to an arbitrary value plane. Returns false when undefined.
bool axis_derivative(const std::vector<double>& v, const ElevationGrid& gt,
                     int r, int c, bool along_x, double* out) {
  const GridSpec& s = gt.spec;
  const int n = along_x ? s.width : s.height;
  const int i = along_x ? c : r;
  auto at = [&](int j) {
    return along_x ? s.flat(r, j) : s.flat(j, c);
  };
  auto valid = [&](int j) { return gt.valid[static_cast<std::size_t>(at(j))] != 0; };
  auto val = [&](int j) { return v[static_cast<std::size_t>(at(j))]; };
  const double R = s.resolution;
  if (i == 0) {
    if (n < 2 || !valid(0) || !valid(1)) return false;
    *out = (val(1) - val(0)) / R;
    return true;
  }
  if (i == n - 1) {
    if (!valid(n - 1) || !valid(n - 2)) return false;
    *out = (val(n - 1) - val(n - 2)) / R;
    return true;
  }
  if (!valid(i - 1) || !valid(i + 1)) return false;
  *out = (val(i + 1) - val(i - 1)) / (2.0 * R);
  return true;
}

}  // namespace

MetricTriplet slope_mae(const ElevationGrid& pred, const ElevationGrid& gt,
                        const std::vector<std::uint8_t>& observed) {
  check_aligned(pred, gt, observed);
  SplitAccum acc;
  const GridSpec& s = gt.spec;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(s.flat(r, c));
      if (!gt.valid[i]) continue;
      const bool obs = observed[i] != 0;
      for (bool along_x : {true, false}) {
        double dp, dg;
        if (axis_derivative(pred.values, gt, r, c, along_x, &dp) &&
            axis_derivative(gt.values, gt, r, c, along_x, &dg)) {
          acc.push(100.0 * std::abs(dp - dg), obs);
        }
      }
    }
  }
  return acc.finish();
}

MetricTriplet curvature_mae(const ElevationGrid& pred,
                            const ElevationGrid& gt,
                            const std::vector<std::uint8_t>& observed) {
  check_aligned(pred, gt, observed);
  SplitAccum acc;
  const GridSpec& s = gt.spec;
  const double r2 = s.resolution * s.resolution;
  auto laplacian = [&](const std::vector<double>& v, int r, int c) {
    return (v[static_cast<std::size_t>(s.flat(r + 1, c))] +
            v[static_cast<std::size_t>(s.flat(r - 1, c))] +
            v[static_cast<std::size_t>(s.flat(r, c + 1))] +
            v[static_cast<std::size_t>(s.flat(r, c - 1))] -
            4.0 * v[static_cast<std::size_t>(s.flat(r, c))]) /
           r2;
  };
  for (int r = 1; r + 1 < s.height; ++r) {
    for (int c = 1; c + 1 < s.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(s.flat(r, c));
      if (!gt.valid[i] || !gt.is_valid(r - 1, c) || !gt.is_valid(r + 1, c) ||
          !gt.is_valid(r, c - 1) || !gt.is_valid(r, c + 1)) {
        continue;
      }
      acc.push(std::abs(laplacian(pred.values, r, c) -
                        laplacian(gt.values, r, c)),
               observed[i] != 0);
    }
  }
  return acc.finish();
}

SplitValue gaussian_nll(const PredictiveField& field,
                        const std::vector<double>& gt,
                        const std::vector<std::uint8_t>& mask) {
  if (field.mean.size() != gt.size() || field.stddev.size() != gt.size() ||
      mask.size() != gt.size()) {
    throw UsageError("gaussian_nll: inputs are not aligned");
  }
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const double sigma = field.stddev[i];
    const double resid = gt[i] - field.mean[i];
    acc += 0.5 * std::log(2.0 * M_PI * sigma * sigma) +
           resid * resid / (2.0 * sigma * sigma);
    ++n;
  }
  return {n > 0 ? acc / static_cast<double>(n) : 0.0, n};
}

SplitValue ence(const PredictiveField& field, const std::vector<double>& gt,
                const std::vector<std::uint8_t>& mask, int n_bins) {
  if (field.mean.size() != gt.size() || field.stddev.size() != gt.size() ||
      mask.size() != gt.size()) {
    throw UsageError("ence: inputs are not aligned");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i]) idx.push_back(i);
  }
  const std::int64_t n = static_cast<std::int64_t>(idx.size());
  if (n < n_bins) throw DataError("ence: fewer cells than bins");
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (field.stddev[a] != field.stddev[b]) {
      return field.stddev[a] < field.stddev[b];
    }
    return a < b;
  });
  const std::int64_t base = n / n_bins;
  const std::int64_t extra = n % n_bins;
  double acc = 0.0;
  std::size_t pos = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::int64_t len = base + (b < extra ? 1 : 0);
    double sum_var = 0.0, sum_sq = 0.0;
    for (std::int64_t j = 0; j < len; ++j) {
      const std::size_t i = idx[pos++];
      sum_var += field.stddev[i] * field.stddev[i];
      const double resid = gt[i] - field.mean[i];
      sum_sq += resid * resid;
    }
    const double rmv = std::sqrt(sum_var / static_cast<double>(len));
    const double rmse = std::sqrt(sum_sq / static_cast<double>(len));
    acc += std::abs(rmse - rmv) / rmv;
  }
  return {acc / static_cast<double>(n_bins), n};
}

namespace {

void emit(std::ostream& os, const char* metric, const char* split,
          const SplitValue& v) {
  if (!v.present()) return;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%lld\n", metric, split, v.value,
                static_cast<long long>(v.count));
  os << buf;
}

}  // namespace

void write_report_csv(const EvalReport& report, std::ostream& os) {
  os << "metric,split,value,count\n";
  emit(os, "elevation_mae", "total", report.elevation_mae.total);
  emit(os, "elevation_mae", "observed", report.elevation_mae.observed);
  emit(os, "elevation_mae", "unobserved", report.elevation_mae.unobserved);
  emit(os, "slope_mae", "total", report.slope_mae.total);
  emit(os, "slope_mae", "observed", report.slope_mae.observed);
  emit(os, "slope_mae", "unobserved", report.slope_mae.unobserved);
  emit(os, "curvature_mae", "total", report.curvature_mae.total);
  emit(os, "curvature_mae", "observed", report.curvature_mae.observed);
  emit(os, "curvature_mae", "unobserved", report.curvature_mae.unobserved);
  emit(os, "nll", "total", report.nll);
  emit(os, "ence", "total", report.ence);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("report csv: cannot open " + path + " for writing");
  write_report_csv(report, os);
  if (!os) throw DataError("report csv: write failed for " + path);
}

}  // namespace scnp

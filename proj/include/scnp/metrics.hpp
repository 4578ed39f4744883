#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scnp/grid.hpp"
#include "scnp/predictive.hpp"

namespace scnp {

// One metric over one split; absent when the split has no cells (never
// reported as zero).
struct SplitValue {
  double value = 0.0;
  std::int64_t count = 0;
  bool present() const { return count > 0; }
};

// total / observed / unobserved triplet. Splits partition the GT-valid
// cells by current-scan observation.
struct MetricTriplet {
  SplitValue total, observed, unobserved;
};

struct EvalReport {
  MetricTriplet elevation_mae;  // meters
  MetricTriplet slope_mae;      // percent
  MetricTriplet curvature_mae;  // 1/meters
  SplitValue nll;               // nats per cell
  SplitValue ence;              // dimensionless
};

// Mean |pred - gt| over GT-valid cells, split by the observed mask.
MetricTriplet mae_split(const ElevationGrid& pred, const ElevationGrid& gt,
                        const std::vector<std::uint8_t>& observed);

// MAE of 100 * dh/dx and 100 * dh/dy pooled over both axes. Central
// differences over 2R, forward/backward at grid borders; a derivative
// exists only where both stencil cells are GT-valid.
MetricTriplet slope_mae(const ElevationGrid& pred, const ElevationGrid& gt,
                        const std::vector<std::uint8_t>& observed);

// MAE of the 5-point Laplacian (units 1/m), valid where all five stencil
// cells are GT-valid.
MetricTriplet curvature_mae(const ElevationGrid& pred,
                            const ElevationGrid& gt,
                            const std::vector<std::uint8_t>& observed);

// Mean over masked entries of 0.5*ln(2*pi*sigma^2) + (h-mu)^2/(2*sigma^2).
// field.mean/stddev, gt and mask share one indexing.
SplitValue gaussian_nll(const PredictiveField& field,
                        const std::vector<double>& gt,
                        const std::vector<std::uint8_t>& mask);

// Expected normalized calibration error: cells sorted by predicted sigma
// (ties by index) into n_bins equal-count bins; per bin RMV = sqrt(mean
// sigma^2), RMSE = sqrt(mean residual^2); ENCE = mean |RMSE-RMV| / RMV.
// Throws if fewer masked cells than bins.
SplitValue ence(const PredictiveField& field, const std::vector<double>& gt,
                const std::vector<std::uint8_t>& mask, int n_bins = 10);

// `metric,split,value,count` rows, 6 decimal places; absent splits are
// omitted.
void write_report_csv(const EvalReport& report, std::ostream& os);
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace scnp

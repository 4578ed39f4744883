#pragma once

#include <utility>
#include <vector>

#include "scnp/common.hpp"
#include "scnp/predictive.hpp"

namespace scnp {

// Rational quadratic kernel with per-dimension lengthscales.
struct KernelSpec {
  double lengthscale_x = 0.7;
  double lengthscale_y = 0.7;
  double alpha = 10.0;
  double noise_variance = 1e-4;  // sigma_n^2
  double sigma_min = 1e-3;       // predictive stddev floor
};

double rq_kernel(const std::pair<double, double>& a,
                 const std::pair<double, double>& b, const KernelSpec& spec);

// Exact GP regression: posterior mean and (latent) variance via an SPD
// factorization of K_CC + sigma_n^2 I, with jitter escalation 1e-8 -> 1e-4
// before giving up. Prior mean is the context mean. Context size is capped
// at 4000 (dense solve budget).
PredictiveField gp_fit_predict(
    const std::vector<std::pair<double, double>>& context_xy,
    const std::vector<double>& context_h,
    const std::vector<std::pair<double, double>>& target_xy,
    const KernelSpec& spec);

}  // namespace scnp

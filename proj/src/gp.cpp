#include "scnp/gp.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace scnp {

double rq_kernel(const std::pair<double, double>& a,
                 const std::pair<double, double>& b, const KernelSpec& spec) {
  const double dx = (a.first - b.first) / spec.lengthscale_x;
  const double dy = (a.second - b.second) / spec.lengthscale_y;
  const double r2 = dx * dx + dy * dy;
  return std::pow(1.0 + r2 / (2.0 * spec.alpha), -spec.alpha);
}

PredictiveField gp_fit_predict(
    const std::vector<std::pair<double, double>>& context_xy,
    const std::vector<double>& context_h,
    const std::vector<std::pair<double, double>>& target_xy,
    const KernelSpec& spec) {
  const std::int64_t C = static_cast<std::int64_t>(context_xy.size());
  const std::int64_t T = static_cast<std::int64_t>(target_xy.size());
  if (context_h.size() != context_xy.size()) {
    throw UsageError("gp_fit_predict: context sizes disagree");
  }
  if (C == 0) throw UsageError("gp_fit_predict: empty context");
  if (C > 4000) {
    throw UsageError("gp_fit_predict: context exceeds the 4000-point budget");
  }
  Eigen::MatrixXd K(C, C);
  for (std::int64_t i = 0; i < C; ++i) {
    for (std::int64_t j = i; j < C; ++j) {
      const double v = rq_kernel(context_xy[static_cast<std::size_t>(i)],
                                 context_xy[static_cast<std::size_t>(j)], spec);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  const double prior_mean = [&] {
    double s = 0.0;
    for (double h : context_h) s += h;
    return s / static_cast<double>(C);
  }();
  Eigen::VectorXd y(C);
  for (std::int64_t i = 0; i < C; ++i) {
    y(i) = context_h[static_cast<std::size_t>(i)] - prior_mean;
  }

  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += spec.noise_variance + jitter;
    llt.compute(A);
    if (llt.info() == Eigen::Success) break;
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
    if (jitter > 1e-4) {
      throw NumericError("gp_fit_predict: factorization failed after jitter");
    }
  }
  const Eigen::VectorXd alpha_vec = llt.solve(y);

  PredictiveField out;
  out.mean.resize(static_cast<std::size_t>(T));
  out.stddev.resize(static_cast<std::size_t>(T));
  const std::int64_t block = 1024;
  Eigen::MatrixXd Kct(C, std::min(block, T));
  for (std::int64_t t0 = 0; t0 < T; t0 += block) {
    const std::int64_t len = std::min(block, T - t0);
    Kct.resize(C, len);
    for (std::int64_t j = 0; j < len; ++j) {
      for (std::int64_t i = 0; i < C; ++i) {
        Kct(i, j) = rq_kernel(context_xy[static_cast<std::size_t>(i)],
                              target_xy[static_cast<std::size_t>(t0 + j)], spec);
      }
    }
    const Eigen::VectorXd mu = Kct.transpose() * alpha_vec;
    const Eigen::MatrixXd V = llt.matrixL().solve(Kct);
    for (std::int64_t j = 0; j < len; ++j) {
      const double prior_var =
          rq_kernel(target_xy[static_cast<std::size_t>(t0 + j)],
                    target_xy[static_cast<std::size_t>(t0 + j)], spec);
      const double var = std::max(0.0, prior_var - V.col(j).squaredNorm());
      out.mean[static_cast<std::size_t>(t0 + j)] = prior_mean + mu(j);
      out.stddev[static_cast<std::size_t>(t0 + j)] =
          std::max(spec.sigma_min, std::sqrt(var));
    }
  }
  return out;
}

}  // namespace scnp

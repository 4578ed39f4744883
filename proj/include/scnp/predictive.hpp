#pragma once

#include <vector>

namespace scnp {

// Per-target Gaussian predictive parameters, plus optionally the individual
// mean fields of each latent sample that produced them. Indexing matches
// whatever target list the producer was given.
struct PredictiveField {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::vector<double>> sample_means;
};

}  // namespace scnp

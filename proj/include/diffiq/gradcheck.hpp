#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffiq/image.hpp"

namespace diffiq {

// One row of the analytic-vs-finite-difference gradient suite.
struct GradCheckCase {
  std::string metric;  // vif0..vif3, adm, fused
  int size = 0;        // square side of the test pair
  double max_rel_error = 0.0;
};

// Runs every metric against central finite differences on `n_pairs` seeded
// synthetic-scene pairs (distorted = affine or smooth gain/offset transforms
// of the reference, chosen per metric to keep every guard clamp in its smooth
// region). Sizes are the smallest squares each metric accepts that also leave
// no structurally dead pixels under decimation: 32 for VIF0/ADM, 33 for
// VIF1/VIF2, 41 for VIF3 and the fused score.
std::vector<GradCheckCase> run_gradient_suite(int n_pairs, std::uint64_t seed, double h);

// Builds the p-th seeded test pair at the given size (exposed for tests).
void gradcheck_pair(int size, std::uint64_t seed, int pair_index, ImagePlane& r, ImagePlane& d);

}  // namespace diffiq

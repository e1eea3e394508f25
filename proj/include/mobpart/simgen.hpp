#pragma once

#include "mobpart/data.hpp"
#include "mobpart/models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mobpart {

enum class DGP { Pred, Pred2, Prog, Null };
const char* to_string(DGP d);
DGP dgp_from_string(const std::string& s);

// Simulated two-arm trial: y continuous, x_A binary, z1..z_{1+J_noise}.
// pred:  y = 1.9 + 0.2 x + 1.8 [z1 < 0] + 3.6 [z1 > 0] x + e
// pred2: y = 1.9 + 0.2 x + 1.8 [z1 < 0] + 3.6 [z1 < 0] x + e
// prog:  y = 2 x + [z1 > 0] + e,  e ~ N(0, 0.7)
// null:  y = 1 + 0.5 x + e,       e ~ N(0, 1), every z is noise
struct DGPSpec {
  DGP dgp = DGP::Pred;
  std::size_t n = 200;
  std::size_t J_noise = 0;
  std::uint64_t seed = 1;
};

Schema simulated_schema(const DGPSpec& spec);
Dataset generate(const DGPSpec& spec);

// Linear-model roles over a simulated dataset, partitioning on every z.
RoleMap simulated_roles(const DGPSpec& spec);

struct OracleSplit {
  double cutpoint = 0.0;
  double objective = 0.0;
  std::size_t position = 0;         // index of the cutpoint in `candidates`
  std::vector<double> candidates;   // admissible thresholds, ascending
};

// Refit oracle for one continuous or ordinal variable: for every threshold
// leaving at least `minbucket` observed rows per side, fit the family on both
// halves and add the objectives. Ties go to the smallest threshold. Throws
// std::runtime_error when no threshold is admissible.
OracleSplit oracle_best_split(const Dataset& data, const RoleMap& roles, const ModelFamily& family,
                              const std::string& variable, std::size_t minbucket);

}  // namespace mobpart

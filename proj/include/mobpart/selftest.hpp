#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mobpart {

// One measured quantity compared against its threshold (pass iff measured <= threshold).
struct Check {
  std::string suite;
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Per-row scores against central differences of independent per-row
// log-likelihoods, and score sums at the estimate, for every family.
std::vector<Check> check_gradients(std::size_t datasets, std::uint64_t seed);

// Closed-form permutation moments against enumeration (m rows), and Monte
// Carlo p-values against exact ones in units of their standard error.
std::vector<Check> check_permutation(std::size_t m, std::size_t cases, std::size_t nperm, std::uint64_t seed);

// Moore-Penrose conditions of the pseudo-inverse on rank-deficient matrices.
std::vector<Check> check_penrose(std::uint64_t seed);

// Root-split frequency on the null design.
struct TypeIOptions {
  std::size_t nsim = 200;
  std::size_t n = 200;
  std::size_t noise_vars = 5;
  double alpha = 0.05;
  std::size_t nperm = 999;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double bound = 0.081;
};
std::vector<Check> check_type_one(const TypeIOptions& opts);

const std::vector<std::string>& selftest_suites();

}  // namespace mobpart

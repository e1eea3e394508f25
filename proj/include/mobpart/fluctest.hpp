#pragma once

#include "mobpart/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mobpart {

enum class ScoreBlock { Alpha, Beta };
enum class TestMethod { MonteCarlo, Exhaustive, ChisqApprox };

const char* to_string(ScoreBlock b);
const char* to_string(TestMethod m);
ScoreBlock score_block_from_string(const std::string& s);
TestMethod test_method_from_string(const std::string& s);

struct InstabilityTestResult {
  std::string variable;
  ScoreBlock block = ScoreBlock::Alpha;
  double statistic = 0.0;
  Eigen::Index rank = 0;
  double p_raw = 1.0;
  double p_adj = 1.0;
  double p_asymptotic = 1.0;  // chi-square reference, used only to break exact ties
  TestMethod method = TestMethod::MonteCarlo;
  std::size_t B = 0;            // replications (MC) or permutations enumerated (exhaustive)
  std::size_t m = 0;            // observations entering the test
  bool stratified = false;
  std::string warning;
};

// g(Z) over the given rows: continuous -> value, ordinal -> level index,
// nominal -> one indicator column per declared level.
Eigen::MatrixXd regressor_matrix(const Column& z, std::span<const std::size_t> rows);

// vec(G' H) in column-major order: entry a + p*b pairs G column a with H column b.
Eigen::VectorXd linear_statistic(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h);

struct PermutationMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Closed-form mean and covariance of vec(G' H) under uniform permutation of
// the rows of H. With strata, rows permute within blocks and the moments are
// summed over blocks. Throws std::invalid_argument when m < 2.
PermutationMoments conditional_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h);
PermutationMoments conditional_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                                       std::span<const int> strata);

struct QuadForm {
  double statistic = 0.0;
  Eigen::Index rank = 0;
};

QuadForm quad_statistic(const Eigen::VectorXd& t, const PermutationMoments& mom, double rank_tol = 1e-10);

// One score matrix with its own stratum labels (empty: a single block).
struct ScoreComponent {
  Eigen::MatrixXd h;
  std::vector<int> strata;
};

struct PermOptions {
  std::size_t nperm = 9999;
  std::uint64_t exhaustive_threshold = 100000;
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  bool chisq = false;  // asymptotic chi-square instead of permutation
  unsigned threads = 1;
};

// Quadratic-form permutation test of independence between G and the score
// components. The statistic is the sum of per-component quadratic forms;
// permutations act on rows within `perm_strata` (empty: unrestricted).
InstabilityTestResult perm_pvalue(const Eigen::MatrixXd& g, std::span<const ScoreComponent> comps,
                                  std::span<const int> perm_strata, const PermOptions& opts);

InstabilityTestResult perm_pvalue(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                                  std::span<const int> strata, const PermOptions& opts);

// min(1, p * k) with k the number of tests performed.
std::vector<double> bonferroni_adjust(std::span<const double> p_raw);

// Number of row permutations within blocks, saturating at `cap` + 1.
std::uint64_t count_permutations(std::span<const int> strata, std::size_t m, std::uint64_t cap);

}  // namespace mobpart

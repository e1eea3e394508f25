#include "mobpart/fluctest.hpp"
#include "mobpart/numerics.hpp"
#include "mobpart/parallel.hpp"
#include "mobpart/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace mobpart {

const char* to_string(ScoreBlock b) { return b == ScoreBlock::Alpha ? "alpha" : "beta"; }

const char* to_string(TestMethod m) {
  switch (m) {
    case TestMethod::MonteCarlo: return "montecarlo";
    case TestMethod::Exhaustive: return "exhaustive";
    case TestMethod::ChisqApprox: return "chisq-approx";
  }
  return "?";
}

ScoreBlock score_block_from_string(const std::string& s) {
  if (s == "alpha") return ScoreBlock::Alpha;
  if (s == "beta") return ScoreBlock::Beta;
  throw std::invalid_argument("unknown score block '" + s + "'");
}

TestMethod test_method_from_string(const std::string& s) {
  if (s == "montecarlo") return TestMethod::MonteCarlo;
  if (s == "exhaustive") return TestMethod::Exhaustive;
  if (s == "chisq-approx") return TestMethod::ChisqApprox;
  throw std::invalid_argument("unknown test method '" + s + "'");
}

Eigen::MatrixXd regressor_matrix(const Column& z, std::span<const std::size_t> rows) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (z.kind == ColumnKind::Nominal) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(z.levels.size()));
    for (Eigen::Index k = 0; k < m; ++k) g(k, static_cast<Eigen::Index>(z.values[rows[k]])) = 1.0;
    return g;
  }
  Eigen::MatrixXd g(m, 1);
  for (Eigen::Index k = 0; k < m; ++k) g(k, 0) = z.values[rows[k]];
  return g;
}

Eigen::VectorXd linear_statistic(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd t = g.transpose() * h;
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

namespace {

// Adds the moments of one exchangeable block (rows `idx`) to `out`.
void add_block_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                       const std::vector<Eigen::Index>& idx, PermutationMoments& out) {
  const Eigen::Index p = g.cols(), q = h.cols();
  const auto m = static_cast<double>(idx.size());
  Eigen::VectorXd sum_g = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd gg = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd h_mean = Eigen::VectorXd::Zero(q);
  for (Eigen::Index i : idx) {
    sum_g += g.row(i).transpose();
    gg.noalias() += g.row(i).transpose() * g.row(i);
    h_mean += h.row(i).transpose();
  }
  h_mean /= m;
  const Eigen::MatrixXd mu = sum_g * h_mean.transpose();
  out.mu += Eigen::Map<const Eigen::VectorXd>(mu.data(), mu.size());
  if (idx.size() < 2) return;

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index i : idx) {
    const Eigen::VectorXd d = h.row(i).transpose() - h_mean;
    v.noalias() += d * d.transpose();
  }
  v /= m;
  const Eigen::MatrixXd gterm = (m / (m - 1.0)) * gg - (1.0 / (m - 1.0)) * sum_g * sum_g.transpose();
  for (Eigen::Index b = 0; b < q; ++b)
    for (Eigen::Index b2 = 0; b2 < q; ++b2)
      if (v(b, b2) != 0.0) out.sigma.block(b * p, b2 * p, p, p) += v(b, b2) * gterm;
}

std::vector<std::vector<Eigen::Index>> blocks_of(std::span<const int> strata, Eigen::Index m) {
  if (strata.empty()) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    return {all};
  }
  std::map<int, std::vector<Eigen::Index>> by;
  for (Eigen::Index i = 0; i < m; ++i) by[strata[static_cast<std::size_t>(i)]].push_back(i);
  std::vector<std::vector<Eigen::Index>> out;
  for (auto& [k, v] : by) out.push_back(std::move(v));
  return out;
}

}  // namespace

PermutationMoments conditional_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                                       std::span<const int> strata) {
  if (g.rows() != h.rows()) throw std::invalid_argument("G and H rows differ");
  if (g.rows() < 2) throw std::invalid_argument("conditional moments need at least two rows");
  if (!strata.empty() && static_cast<Eigen::Index>(strata.size()) != g.rows())
    throw std::invalid_argument("strata length differs from row count");
  const Eigen::Index pq = g.cols() * h.cols();
  PermutationMoments out{Eigen::VectorXd::Zero(pq), Eigen::MatrixXd::Zero(pq, pq)};
  for (const auto& blk : blocks_of(strata, g.rows())) add_block_moments(g, h, blk, out);
  return out;
}

PermutationMoments conditional_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h) {
  return conditional_moments(g, h, std::span<const int>{});
}

QuadForm quad_statistic(const Eigen::VectorXd& t, const PermutationMoments& mom, double rank_tol) {
  const PseudoInverse pinv = pseudo_inverse(mom.sigma, rank_tol);
  const Eigen::VectorXd d = t - mom.mu;
  QuadForm q;
  q.rank = pinv.rank;
  q.statistic = pinv.rank == 0 ? 0.0 : std::max(0.0, d.dot(pinv.inverse * d));
  return q;
}

std::uint64_t count_permutations(std::span<const int> strata, std::size_t m, std::uint64_t cap) {
  std::vector<std::size_t> sizes;
  if (strata.empty()) {
    sizes.push_back(m);
  } else {
    std::map<int, std::size_t> by;
    for (int s : strata) ++by[s];
    for (auto& [k, v] : by) sizes.push_back(v);
  }
  std::uint64_t total = 1;
  for (std::size_t s : sizes)
    for (std::size_t f = 2; f <= s; ++f) {
      if (total > (cap + 1) / f + 1) return cap + 1;
      total *= f;
      if (total > cap) return cap + 1;
    }
  return total;
}

namespace {

struct PreparedComponent {
  const Eigen::MatrixXd* h;
  Eigen::VectorXd mu;
  Eigen::MatrixXd pinv;
  Eigen::Index rank;
};

// Sum of per-component quadratic forms for a row-gathered copy of G.
double combined_statistic(const Eigen::MatrixXd& gp, const std::vector<PreparedComponent>& pc,
                          Eigen::MatrixXd& scratch) {
  double c = 0.0;
  for (const auto& comp : pc) {
    if (comp.rank == 0) continue;
    scratch.noalias() = gp.transpose() * (*comp.h);
    const Eigen::Map<const Eigen::VectorXd> t(scratch.data(), scratch.size());
    const Eigen::VectorXd d = t - comp.mu;
    c += d.dot(comp.pinv * d);
  }
  return c;
}

void gather_rows(const Eigen::MatrixXd& g, const std::vector<std::size_t>& perm, Eigen::MatrixXd& out) {
  for (std::size_t i = 0; i < perm.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = g.row(static_cast<Eigen::Index>(perm[i]));
}

}  // namespace

InstabilityTestResult perm_pvalue(const Eigen::MatrixXd& g, std::span<const ScoreComponent> comps,
                                  std::span<const int> perm_strata, const PermOptions& opts) {
  const Eigen::Index m = g.rows();
  InstabilityTestResult res;
  res.m = static_cast<std::size_t>(m);
  res.stratified = !perm_strata.empty();
  for (const auto& c : comps) res.stratified = res.stratified || !c.strata.empty();

  std::vector<PreparedComponent> pc;
  double c0 = 0.0;
  for (const auto& comp : comps) {
    if (comp.h.rows() != m) throw std::invalid_argument("score component rows differ from G");
    const PermutationMoments mom = conditional_moments(g, comp.h, comp.strata);
    const PseudoInverse pinv = pseudo_inverse(mom.sigma);
    PreparedComponent p{&comp.h, mom.mu, pinv.inverse, pinv.rank};
    if (p.rank > 0) {
      const Eigen::VectorXd d = linear_statistic(g, comp.h) - p.mu;
      c0 += std::max(0.0, d.dot(p.pinv * d));
    }
    res.rank += p.rank;
    pc.push_back(std::move(p));
  }
  res.statistic = c0;
  {
    const boost::math::chi_squared_distribution<double> chi(static_cast<double>(std::max<Eigen::Index>(res.rank, 1)));
    res.p_asymptotic = res.rank == 0 || c0 <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(chi, c0));
  }

  const auto blocks = blocks_of(perm_strata, m);
  if (std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.size() < 2; })) {
    res.p_raw = 1.0;
    res.warning = "degenerate strata: every permutation block is a singleton";
    return res;
  }

  if (res.rank == 0 || c0 <= 0.0) {
    res.p_raw = 1.0;
    res.method = opts.chisq ? TestMethod::ChisqApprox : TestMethod::MonteCarlo;
    return res;
  }
  if (opts.chisq) {
    res.method = TestMethod::ChisqApprox;
    res.p_raw = res.p_asymptotic;
    return res;
  }

  const double slack = 1e-12 * std::max(1.0, c0);
  const double bar = c0 - slack;
  const std::uint64_t total = count_permutations(perm_strata, res.m, opts.exhaustive_threshold);
  std::vector<std::size_t> identity(res.m);
  std::iota(identity.begin(), identity.end(), std::size_t{0});

  if (total <= opts.exhaustive_threshold) {
    res.method = TestMethod::Exhaustive;
    std::vector<std::vector<std::size_t>> arr;
    for (const auto& b : blocks) arr.emplace_back(b.begin(), b.end());
    std::vector<std::size_t> perm = identity;
    Eigen::MatrixXd gp(m, g.cols()), scratch;
    std::uint64_t hits = 0, seen = 0;
    for (;;) {
      gather_rows(g, perm, gp);
      hits += combined_statistic(gp, pc, scratch) >= bar;
      ++seen;
      bool advanced = false;
      for (std::size_t s = 0; s < arr.size() && !advanced; ++s) {
        advanced = std::next_permutation(arr[s].begin(), arr[s].end());
        for (std::size_t j = 0; j < arr[s].size(); ++j) perm[static_cast<std::size_t>(blocks[s][j])] = arr[s][j];
      }
      if (!advanced) break;
    }
    res.B = seen;
    res.p_raw = static_cast<double>(hits) / static_cast<double>(seen);
    return res;
  }

  res.method = TestMethod::MonteCarlo;
  res.B = opts.nperm;
  std::vector<std::size_t> hits(std::max(1u, opts.threads), 0);
  parallel_for(opts.nperm, opts.threads, [&](std::size_t begin, std::size_t end, unsigned w) {
    std::vector<std::size_t> perm(res.m), members;
    Eigen::MatrixXd gp(m, g.cols()), scratch;
    std::size_t local = 0;
    for (std::size_t b = begin; b < end; ++b) {
      PhiloxStream rng(opts.seed, opts.stream, static_cast<std::uint32_t>(b));
      perm = identity;
      for (const auto& blk : blocks) {
        if (blk.size() < 2) continue;
        members.assign(blk.begin(), blk.end());
        shuffle(members, rng);
        for (std::size_t j = 0; j < blk.size(); ++j) perm[static_cast<std::size_t>(blk[j])] = members[j];
      }
      gather_rows(g, perm, gp);
      local += combined_statistic(gp, pc, scratch) >= bar;
    }
    hits[w] = local;
  });
  const std::size_t count = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  res.p_raw = (1.0 + static_cast<double>(count)) / (static_cast<double>(opts.nperm) + 1.0);
  return res;
}

InstabilityTestResult perm_pvalue(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                                  std::span<const int> strata, const PermOptions& opts) {
  const ScoreComponent comp{h, std::vector<int>(strata.begin(), strata.end())};
  return perm_pvalue(g, std::span<const ScoreComponent>(&comp, 1), strata, opts);
}

std::vector<double> bonferroni_adjust(std::span<const double> p_raw) {
  const auto k = static_cast<double>(p_raw.size());
  std::vector<double> out;
  out.reserve(p_raw.size());
  for (double p : p_raw) out.push_back(std::min(1.0, p * k));
  return out;
}

}  // namespace mobpart

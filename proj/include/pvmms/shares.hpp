#pragma once

/*! \file
 *  \brief Share notions: exact adaptive MMS, egalitarian MMS, random dictator
 *  share and the closed-form bounds for three agents.
 *
 *  The exact MMS search never approximates. Decisions of one canonical type
 *  are interchangeable for every agreement term, so a partition is described
 *  by how many decisions of each type go to each bundle (a composition
 *  vector). Bundle labels do not matter under the min over permutations, so
 *  only compositions whose bundle vectors are sorted are enumerated. The
 *  search stops as soon as the floor of the random dictator share is reached,
 *  since no partition can exceed it.
 */

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pvmms/io.hpp"
#include "pvmms/model.hpp"
#include "pvmms/rational.hpp"

namespace pvmms {

inline constexpr std::uint64_t kDefaultNodeBudget = 100'000'000;
inline constexpr const char *kBudgetEnvVar = "PVMMS_SEARCH_BUDGET";

struct SearchOptions {
  std::uint64_t node_budget = kDefaultNodeBudget;
  /// Shards of the first type's compositions run on this many threads.
  unsigned threads = 1;

  /// Default options with the node budget taken from PVMMS_SEARCH_BUDGET.
  static SearchOptions from_environment() {
    SearchOptions o;
    if (const char *env = std::getenv(kBudgetEnvVar)) {
      char *end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0' || v == 0)
        throw InvalidArgument(std::string(kBudgetEnvVar) +
                              " must be a positive integer node count");
      o.node_budget = v;
    }
    return o;
  }
};

namespace detail {

/// All permutations of 0..n-1, flattened, in lexicographic order.
inline std::vector<std::uint8_t> all_permutations(std::size_t n) {
  if (n > 10)
    throw ResourceLimitError("permutation enumeration is limited to n <= 10");
  std::vector<std::uint8_t> p(n);
  std::iota(p.begin(), p.end(), std::uint8_t{0});
  std::vector<std::uint8_t> out;
  do {
    out.insert(out.end(), p.begin(), p.end());
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// value[b * n + a]: agreements of the owner with agent a inside bundle b.
inline std::vector<std::int64_t>
bundle_agreement_table(const PreferenceMatrix &m, std::size_t agent,
                       const Partition &p) {
  const std::size_t n = m.n_agents();
  std::vector<std::int64_t> v(n * n, 0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j : p.bundles[b]) {
      const AgentMask col = m.column(j);
      const bool mine = bit_of(col, agent);
      for (std::size_t a = 0; a < n; ++a)
        if (bit_of(col, a) == mine)
          ++v[b * n + a];
    }
  return v;
}

} // namespace detail

/// min over sigma of sum_b table[b][sigma(b)], by enumerating all n!
/// permutations.
inline std::int64_t min_over_permutations(const std::vector<std::int64_t> &table,
                                          std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  do {
    std::int64_t s = 0;
    for (std::size_t b = 0; b < n; ++b)
      s += table[b * n + p[b]];
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Same minimum via dynamic programming over subsets of agents, O(2^n n^2).
inline std::int64_t min_assignment_dp(const std::vector<std::int64_t> &table,
                                      std::size_t n) {
  if (n > 24)
    throw ResourceLimitError("assignment DP is limited to n <= 24");
  const std::size_t full = std::size_t{1} << n;
  std::vector<std::int64_t> dp(full, std::numeric_limits<std::int64_t>::max());
  dp[0] = 0;
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (dp[mask] == std::numeric_limits<std::int64_t>::max())
      continue;
    const std::size_t b = popcount(mask);
    if (b >= n)
      continue;
    for (std::size_t a = 0; a < n; ++a)
      if (!(mask & (std::size_t{1} << a))) {
        const std::size_t next = mask | (std::size_t{1} << a);
        dp[next] = std::min(dp[next], dp[mask] + table[b * n + a]);
      }
  }
  return dp[full - 1];
}

/// Exact adversarial guarantee of a fixed partition for `agent`: the inner
/// minimum of the adaptive MMS, over all n! bundle-to-agent assignments.
inline std::size_t partition_guarantee(const PreferenceMatrix &m,
                                       std::size_t agent, const Partition &p) {
  m.check_agent(agent);
  p.validate(m.n_agents(), m.n_decisions());
  return static_cast<std::size_t>(min_over_permutations(
      detail::bundle_agreement_table(m, agent, p), m.n_agents()));
}

/// RDS_i for every agent: expected utility under a uniformly random dictator.
inline std::vector<Rational> rds(const PreferenceMatrix &m) {
  const std::size_t n = m.n_agents();
  std::vector<Rational> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t agree = 0;
    for (AgentMask col : m.columns()) {
      const std::size_t ones = popcount(col);
      agree += static_cast<std::int64_t>(bit_of(col, i) ? ones : n - ones);
    }
    out.emplace_back(agree, static_cast<std::int64_t>(n));
  }
  return out;
}

/// floor(RDS_i): the uniform-permutation upper bound on MMS^adapt_i.
inline std::size_t uniform_bound(const PreferenceMatrix &m, std::size_t agent) {
  m.check_agent(agent);
  return static_cast<std::size_t>(floor_of(rds(m)[agent]));
}

inline std::size_t mms_egal(std::size_t n_decisions) { return n_decisions / 2; }

struct MmsSolution {
  std::size_t agent = 0;
  std::size_t value = 0;
  /// Decision indices per bundle realizing `value`.
  Partition witness;
  /// Canonical type bits, ascending; consensus (bits 0) first when present.
  std::vector<AgentMask> types;
  /// composition[k][b]: decisions of types[k] placed in bundle b.
  std::vector<std::vector<std::size_t>> composition;
  std::uint64_t nodes = 0;
};

/// Branch-and-bound over sorted composition vectors for one agent.
class MmsSolver {
public:
  MmsSolver(const PreferenceMatrix &m, std::size_t agent, SearchOptions opts = {})
      : m_(m), agent_(agent), opts_(opts), n_(m.n_agents()) {
    m.check_agent(agent);
    const TypeCensus census(m);
    for (const auto &[bits, entry] : census.entries()) {
      if (entry.type.kind == TypeKind::Consensus) {
        consensus_ = entry.count();
        consensus_occ_ = entry.occurrences;
        continue;
      }
      Type t;
      t.bits = bits;
      t.count = entry.count();
      t.occurrences = entry.occurrences;
      const bool mine = bit_of(bits, agent);
      t.agree.resize(n_);
      for (std::size_t a = 0; a < n_; ++a) {
        t.agree[a] = bit_of(bits, a) == mine ? 1 : 0;
        t.agree_count += t.agree[a];
      }
      types_.push_back(std::move(t));
    }
    std::int64_t rds_num = 0;
    for (const auto &t : types_)
      rds_num += static_cast<std::int64_t>(t.count) * t.agree_count;
    upper_bound_ = rds_num / static_cast<std::int64_t>(n_);
  }

  MmsSolution solve() {
    MmsSolution sol;
    sol.agent = agent_;
    const std::size_t T = types_.size();
    if (T == 0) {
      // Only unanimous decisions (always the case for one agent).
      sol.value = consensus_;
      finish(sol, {});
      return sol;
    }
    perms_ = detail::all_permutations(n_);

    // Shards: compositions of the first type, in lexicographic order.
    std::vector<std::vector<std::size_t>> shards;
    {
      std::vector<std::size_t> x(n_, 0);
      std::vector<char> tied = initial_ties();
      enumerate_first(0, types_[0].count, tied, x, shards);
    }

    const unsigned threads = std::max(1U, opts_.threads);
    std::vector<ShardResult> results(shards.size());
    std::atomic<std::uint64_t> nodes{0};
    std::atomic<std::size_t> ub_shard{shards.size()};
    std::atomic<bool> over_budget{false};

    auto run_shard = [&](std::size_t s, std::int64_t initial_best) {
      Worker w(*this, nodes, over_budget);
      w.best = initial_best;
      if (ub_shard.load() < s)
        return;
      w.stop_if = [&ub_shard, s] { return ub_shard.load() < s; };
      w.place_root(shards[s]);
      w.dfs(1);
      w.flush();
      results[s].value = w.best;
      results[s].composition = w.best_x;
      if (w.best == upper_bound_) {
        std::size_t cur = ub_shard.load();
        while (s < cur && !ub_shard.compare_exchange_weak(cur, s)) {
        }
      }
    };

    if (threads == 1 || shards.size() == 1) {
      std::int64_t best = -1;
      for (std::size_t s = 0; s < shards.size(); ++s) {
        run_shard(s, best);
        if (over_budget)
          break;
        if (!results[s].composition.empty())
          best = std::max(best, results[s].value);
        if (best == upper_bound_)
          break;
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
          for (std::size_t s = next++; s < shards.size() && !over_budget; s = next++)
            run_shard(s, -1);
        });
      for (auto &th : pool)
        th.join();
    }
    if (over_budget)
      throw ResourceLimitError(
          "MMS search for agent " + std::to_string(agent_ + 1) +
          " exceeded the node budget of " + std::to_string(opts_.node_budget));

    std::int64_t best = -1;
    std::size_t best_shard = 0;
    for (std::size_t s = 0; s < results.size(); ++s)
      if (!results[s].composition.empty() && results[s].value > best) {
        best = results[s].value;
        best_shard = s;
      }
    if (best < 0)
      throw InternalInconsistency("MMS search produced no partition");
    sol.value = static_cast<std::size_t>(best) + consensus_;
    sol.nodes = nodes.load();
    finish(sol, results[best_shard].composition);
    return sol;
  }

  std::int64_t upper_bound() const {
    return upper_bound_ + static_cast<std::int64_t>(consensus_);
  }

private:
  struct Type {
    AgentMask bits = 0;
    std::size_t count = 0;
    std::vector<std::size_t> occurrences;
    std::vector<std::int64_t> agree;
    std::int64_t agree_count = 0;
  };

  struct ShardResult {
    std::int64_t value = -1;
    std::vector<std::vector<std::size_t>> composition;
  };

  /// ties[b] == 1 iff bundle b may not hold less than bundle b-1.
  std::vector<char> initial_ties() const {
    std::vector<char> tied(n_, 1);
    tied[0] = 0;
    // Consensus sits alone in the last bundle, which breaks its tie.
    if (consensus_ > 0)
      tied[n_ - 1] = 0;
    return tied;
  }

  void enumerate_first(std::size_t b, std::size_t remaining,
                       const std::vector<char> &tied, std::vector<std::size_t> &x,
                       std::vector<std::vector<std::size_t>> &out) const {
    const std::size_t lo = (b > 0 && tied[b]) ? x[b - 1] : 0;
    if (b + 1 == n_) {
      if (remaining >= lo) {
        x[b] = remaining;
        out.push_back(x);
      }
      return;
    }
    for (std::size_t v = lo; v <= remaining; ++v) {
      x[b] = v;
      enumerate_first(b + 1, remaining - v, tied, x, out);
    }
  }

  class Worker {
  public:
    Worker(const MmsSolver &s, std::atomic<std::uint64_t> &nodes,
           std::atomic<bool> &over)
        : s_(s), n_(s.n_), nodes_(nodes), over_(over),
          value_(s.n_ * s.n_, 0), x_(s.types_.size(), std::vector<std::size_t>(s.n_, 0)),
          ties_(s.types_.size() + 1, std::vector<char>(s.n_, 0)) {
      remaining_.assign(s.types_.size() + 1, 0);
      for (std::size_t k = s.types_.size(); k-- > 0;)
        remaining_[k] = remaining_[k + 1] + static_cast<std::int64_t>(s.types_[k].count);
      ties_[0] = s.initial_ties();
      for (std::size_t b = 0; b < n_; ++b)
        killers_.push_back(cyclic(b));
    }

    std::int64_t best = -1;
    std::vector<std::vector<std::size_t>> best_x;
    std::function<bool()> stop_if;

    void place_root(const std::vector<std::size_t> &x0) {
      x_[0] = x0;
      apply(0, +1);
      refine_ties(0);
    }

    void dfs(std::size_t k) {
      if (done_ || over_.load(std::memory_order_relaxed))
        return;
      tick();
      if (k == s_.types_.size()) {
        leaf();
        return;
      }
      if (bound(k) <= best)
        return;
      compose(k, 0, s_.types_[k].count);
    }

    void flush() {
      if (nodes_.fetch_add(local_) + local_ > s_.opts_.node_budget)
        over_ = true;
      local_ = 0;
    }

  private:
    void tick() {
      if (++local_ >= 4096) {
        if (nodes_.fetch_add(local_) + local_ > s_.opts_.node_budget)
          over_ = true;
        local_ = 0;
        if (stop_if && stop_if())
          done_ = true;
      }
    }

    std::vector<std::uint8_t> cyclic(std::size_t shift) const {
      std::vector<std::uint8_t> p(n_);
      for (std::size_t b = 0; b < n_; ++b)
        p[b] = static_cast<std::uint8_t>((b + shift) % n_);
      return p;
    }

    void apply(std::size_t k, int sign) {
      const auto &t = s_.types_[k];
      for (std::size_t b = 0; b < n_; ++b) {
        const auto c = static_cast<std::int64_t>(x_[k][b]) * sign;
        if (c == 0)
          continue;
        std::int64_t *row = &value_[b * n_];
        for (std::size_t a = 0; a < n_; ++a)
          row[a] += c * t.agree[a];
      }
    }

    void refine_ties(std::size_t k) {
      for (std::size_t b = 0; b < n_; ++b)
        ties_[k + 1][b] = (b > 0 && ties_[k][b] && x_[k][b] == x_[k][b - 1]) ? 1 : 0;
    }

    std::int64_t eval(const std::uint8_t *p) const {
      std::int64_t s = 0;
      for (std::size_t b = 0; b < n_; ++b)
        s += value_[b * n_ + p[b]];
      return s;
    }

    // Any fixed assignment caps every completion at its partial value plus
    // all remaining decisions.
    std::int64_t bound(std::size_t k) const {
      std::int64_t lo = std::numeric_limits<std::int64_t>::max();
      for (const auto &p : killers_)
        lo = std::min(lo, eval(p.data()));
      return lo + remaining_[k];
    }

    void leaf() {
      for (const auto &p : killers_)
        if (eval(p.data()) <= best)
          return;
      const std::size_t total = s_.perms_.size() / n_;
      std::int64_t lo = std::numeric_limits<std::int64_t>::max();
      for (std::size_t q = 0; q < total; ++q) {
        const std::uint8_t *p = &s_.perms_[q * n_];
        const std::int64_t v = eval(p);
        if (v < lo) {
          lo = v;
          if (lo <= best) {
            remember(p);
            return;
          }
        }
      }
      best = lo;
      best_x = x_;
      if (best == s_.upper_bound_)
        done_ = true;
    }

    void remember(const std::uint8_t *p) {
      if (killers_.size() < n_ + 8) {
        killers_.emplace_back(p, p + n_);
      } else {
        killers_[n_ + next_killer_] = std::vector<std::uint8_t>(p, p + n_);
        next_killer_ = (next_killer_ + 1) % 8;
      }
    }

    void compose(std::size_t k, std::size_t b, std::size_t remaining) {
      const std::vector<char> &tied = ties_[k];
      const std::size_t lo = (b > 0 && tied[b]) ? x_[k][b - 1] : 0;
      if (b + 1 == n_) {
        if (remaining < lo)
          return;
        x_[k][b] = remaining;
        apply(k, +1);
        refine_ties(k);
        dfs(k + 1);
        apply(k, -1);
        return;
      }
      for (std::size_t v = lo; v <= remaining; ++v) {
        if (done_)
          return;
        x_[k][b] = v;
        compose(k, b + 1, remaining - v);
      }
    }

    const MmsSolver &s_;
    std::size_t n_;
    std::atomic<std::uint64_t> &nodes_;
    std::atomic<bool> &over_;
    std::uint64_t local_ = 0;
    bool done_ = false;
    std::vector<std::int64_t> value_;
    std::vector<std::vector<std::size_t>> x_;
    std::vector<std::vector<char>> ties_;
    std::vector<std::int64_t> remaining_;
    std::vector<std::vector<std::uint8_t>> killers_;
    std::size_t next_killer_ = 0;
  };

  void finish(MmsSolution &sol,
              const std::vector<std::vector<std::size_t>> &x) const {
    sol.types.clear();
    sol.composition.clear();
    sol.witness.bundles.assign(n_, {});
    if (consensus_ > 0) {
      sol.types.push_back(0);
      std::vector<std::size_t> row(n_, 0);
      row[n_ - 1] = consensus_;
      sol.composition.push_back(row);
      for (std::size_t j : consensus_occ_)
        sol.witness.bundles[n_ - 1].push_back(j);
    }
    for (std::size_t k = 0; k < types_.size(); ++k) {
      sol.types.push_back(types_[k].bits);
      sol.composition.push_back(x[k]);
      std::size_t next = 0;
      for (std::size_t b = 0; b < n_; ++b)
        for (std::size_t c = 0; c < x[k][b]; ++c)
          sol.witness.bundles[b].push_back(types_[k].occurrences[next++]);
    }
    for (auto &bundle : sol.witness.bundles)
      std::sort(bundle.begin(), bundle.end());
  }

  const PreferenceMatrix &m_;
  std::size_t agent_;
  SearchOptions opts_;
  std::size_t n_;
  std::size_t consensus_ = 0;
  std::vector<std::size_t> consensus_occ_;
  std::vector<Type> types_;
  std::int64_t upper_bound_ = 0; // over non-consensus decisions only
  std::vector<std::uint8_t> perms_;
};

inline MmsSolution solve_mms_adapt(const PreferenceMatrix &m, std::size_t agent,
                                   const SearchOptions &opts = {}) {
  return MmsSolver(m, agent, opts).solve();
}

/// Exact MMS^adapt_i.
inline std::size_t mms_adapt(const PreferenceMatrix &m, std::size_t agent,
                             const SearchOptions &opts = {}) {
  return solve_mms_adapt(m, agent, opts).value;
}

inline std::vector<std::size_t> mms_adapt_all(const PreferenceMatrix &m,
                                              const SearchOptions &opts = {}) {
  std::vector<std::size_t> out(m.n_agents());
  for (std::size_t i = 0; i < m.n_agents(); ++i)
    out[i] = mms_adapt(m, i, opts);
  return out;
}

struct N3Bounds {
  std::vector<std::size_t> fine;  // per agent
  std::size_t coarse = 0;         // m - ceil(delta/3), same for every agent
  std::size_t min_bound = 0;      // bound on min_i MMS_i: m - ceil(4 delta/9)
};

/// Closed-form upper bounds on MMS^adapt for three agents.
inline N3Bounds n3_bounds(const PreferenceMatrix &m) {
  if (m.n_agents() != 3)
    throw InvalidArgument("n3_bounds requires n=3, got n=" +
                          std::to_string(m.n_agents()));
  const TypeCensus census(m);
  const auto md = static_cast<std::int64_t>(m.n_decisions());
  const auto delta = static_cast<std::int64_t>(census.non_consensus());
  N3Bounds out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto own = static_cast<std::int64_t>(census.delta(i));
    const Rational share = Rational(2 * (delta - own) + own, 3);
    out.fine.push_back(static_cast<std::size_t>(md - delta + floor_of(share)));
  }
  out.coarse = static_cast<std::size_t>(md - ceil_of(Rational(delta, 3)));
  out.min_bound = static_cast<std::size_t>(md - ceil_of(Rational(4 * delta, 9)));
  return out;
}

struct AgentShares {
  std::size_t mms_adapt = 0;
  std::size_t mms_egal = 0;
  Rational rds;
  std::size_t uniform_bound = 0;
};

struct ShareReport {
  std::size_t n_agents = 0;
  std::size_t n_decisions = 0;
  std::vector<AgentShares> agents;
  std::optional<N3Bounds> n3;
};

inline ShareReport share_report(const PreferenceMatrix &m,
                                const SearchOptions &opts = {}) {
  ShareReport r;
  r.n_agents = m.n_agents();
  r.n_decisions = m.n_decisions();
  const auto r_ds = rds(m);
  for (std::size_t i = 0; i < m.n_agents(); ++i) {
    AgentShares s;
    s.mms_adapt = mms_adapt(m, i, opts);
    s.mms_egal = mms_egal(m.n_decisions());
    s.rds = r_ds[i];
    s.uniform_bound = static_cast<std::size_t>(floor_of(r_ds[i]));
    r.agents.push_back(s);
  }
  if (m.n_agents() == 3)
    r.n3 = n3_bounds(m);
  return r;
}

inline json to_json(const ShareReport &r) {
  json agents = json::array();
  for (std::size_t i = 0; i < r.agents.size(); ++i) {
    const auto &a = r.agents[i];
    agents.push_back({{"agent", i + 1},
                      {"mms_adapt", a.mms_adapt},
                      {"mms_egal", a.mms_egal},
                      {"rds", to_string(a.rds)},
                      {"uniform_bound", a.uniform_bound}});
  }
  json j{{"n", r.n_agents}, {"m", r.n_decisions}, {"agents", agents}};
  if (r.n3)
    j["n3_bounds"] = {{"fine", r.n3->fine},
                      {"coarse", r.n3->coarse},
                      {"min_bound", r.n3->min_bound}};
  return j;
}

} // namespace pvmms

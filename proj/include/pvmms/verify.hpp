#pragma once

/*! \file
 *  \brief Audits, certificate checking, counterexample search and the
 *  Nash-welfare sweep for the MNW gap family.
 *
 *  Every pass/fail decision compares exact rationals.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pvmms/adversary.hpp"
#include "pvmms/io.hpp"
#include "pvmms/model.hpp"
#include "pvmms/rational.hpp"
#include "pvmms/rules.hpp"
#include "pvmms/shares.hpp"

namespace pvmms {

inline const std::vector<Rational> &audit_thresholds() {
  static const std::vector<Rational> t{Rational(1), Rational(4, 5), Rational(3, 4),
                                       Rational(1, 2)};
  return t;
}

struct AgentAudit {
  std::size_t utility = 0;
  std::size_t mms_adapt = 0;
  ExtendedRational ratio; ///< nullopt when mms_adapt is 0
};

struct AuditReport {
  std::vector<AgentAudit> agents;
  ExtendedRational alpha_adapt;
  ExtendedRational alpha_egal;
  /// alpha_adapt >= threshold, one entry per audit_thresholds().
  std::vector<bool> satisfied;
};

namespace detail {

inline ExtendedRational ratio(std::size_t num, std::size_t den) {
  if (den == 0)
    return std::nullopt;
  return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

inline ExtendedRational ext_min(const ExtendedRational &a, const ExtendedRational &b) {
  return ext_less(b, a) ? b : a;
}

inline bool at_least(const ExtendedRational &v, const Rational &threshold) {
  return !v || *v >= threshold;
}

} // namespace detail

/// Audit against known MMS values (one per agent).
inline AuditReport audit_with_shares(const PreferenceMatrix &m, const Outcome &a,
                                     const std::vector<std::size_t> &mms) {
  if (mms.size() != m.n_agents())
    throw InvalidArgument("one MMS value per agent is required");
  const auto u = utilities(m, a);
  AuditReport r;
  r.alpha_adapt = std::nullopt;
  r.alpha_egal = std::nullopt;
  const std::size_t egal = mms_egal(m.n_decisions());
  for (std::size_t i = 0; i < m.n_agents(); ++i) {
    AgentAudit ag{u[i], mms[i], detail::ratio(u[i], mms[i])};
    r.alpha_adapt = detail::ext_min(r.alpha_adapt, ag.ratio);
    r.alpha_egal = detail::ext_min(r.alpha_egal, detail::ratio(u[i], egal));
    r.agents.push_back(ag);
  }
  for (const Rational &t : audit_thresholds())
    r.satisfied.push_back(detail::at_least(r.alpha_adapt, t));
  return r;
}

inline AuditReport audit(const PreferenceMatrix &m, const Outcome &a,
                         const SearchOptions &opts = {}) {
  if (a.size() != m.n_decisions())
    throw InvalidArgument("outcome has " + std::to_string(a.size()) +
                          " decisions, matrix has " + std::to_string(m.n_decisions()));
  return audit_with_shares(m, a, mms_adapt_all(m, opts));
}

inline json to_json(const AuditReport &r) {
  json agents = json::array();
  for (std::size_t i = 0; i < r.agents.size(); ++i)
    agents.push_back({{"agent", i + 1},
                      {"utility", r.agents[i].utility},
                      {"mms_adapt", r.agents[i].mms_adapt},
                      {"ratio", to_string(r.agents[i].ratio)}});
  json sat = json::object();
  for (std::size_t k = 0; k < r.satisfied.size(); ++k)
    sat[to_string(audit_thresholds()[k])] = static_cast<bool>(r.satisfied[k]);
  return json{{"agents", agents},
              {"alpha_adapt", to_string(r.alpha_adapt)},
              {"alpha_egal", to_string(r.alpha_egal)},
              {"satisfied", sat}};
}

/// Recomputes the victim's utility from the recorded bits and the witness
/// guarantee over all n! assignments. False when either recorded number is
/// off or when there is no violation.
inline bool check_certificate(const ViolationCertificate &c) {
  const PreferenceMatrix &m = c.instance;
  if (c.transcript.entries.size() != m.n_decisions())
    throw InvalidArgument("transcript length differs from the instance");
  for (std::size_t j = 0; j < m.n_decisions(); ++j)
    if (c.transcript.entries[j].column != m.column(j))
      throw InvalidArgument("transcript column " + std::to_string(j + 1) +
                            " differs from the instance");
  m.check_agent(c.victim);
  c.witness.validate(m.n_agents(), m.n_decisions());
  const std::size_t achieved = utility(m, c.transcript.outcome(), c.victim);
  const std::size_t guarantee = partition_guarantee(m, c.victim, c.witness);
  if (achieved != c.achieved || guarantee != c.guarantee)
    return false;
  return achieved < guarantee;
}

// ---------------------------------------------------------------------------
// Counterexample search

enum class ShareKind { Adapt, Egal };

enum class Enumeration {
  Census,   ///< one canonical column order per multiset of canonical types
  Negation, ///< sequences of canonical types
  Raw,      ///< sequences of raw columns
};

inline std::string to_string(Enumeration e) {
  switch (e) {
  case Enumeration::Census: return "census";
  case Enumeration::Negation: return "negation";
  case Enumeration::Raw: return "raw";
  }
  return "?";
}

/// Widest deduplication the rule's verified symmetry allows.
inline Enumeration enumeration_for(const RuleKind &k, std::size_t n) {
  if (census_invariant(k, n))
    return Enumeration::Census;
  if (negation_equivariant(k, n))
    return Enumeration::Negation;
  return Enumeration::Raw;
}

struct SampleMode {
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

struct CheckOptions {
  ShareKind share = ShareKind::Adapt;
  Rational threshold = Rational(1);
  std::optional<SampleMode> sample; ///< exhaustive when unset
  std::optional<Enumeration> enumeration; ///< default: enumeration_for
  SearchOptions search;
  bool minimize = true;
};

struct Counterexample {
  PreferenceMatrix instance;
  Outcome outcome;
  AuditReport audit;
  std::size_t victim = 0;
  PreferenceMatrix found; ///< before minimization
  std::size_t index = 0;  ///< enumeration index of `found`
};

struct CheckReport {
  std::optional<Counterexample> counterexample;
  std::size_t instances = 0;
  Enumeration enumeration = Enumeration::Raw;
};

/// MMS values keyed by type census; MMS depends on nothing else.
class MmsCache {
public:
  explicit MmsCache(SearchOptions opts = {}) : opts_(opts) {}

  const std::vector<std::size_t> &get(const PreferenceMatrix &m) {
    std::vector<std::pair<AgentMask, std::size_t>> key;
    key.emplace_back(static_cast<AgentMask>(m.n_agents()), 0);
    const TypeCensus census(m);
    for (const auto &[bits, e] : census.entries())
      key.emplace_back(bits, e.count());
    auto it = cache_.find(key);
    if (it != cache_.end())
      return it->second;
    return cache_.emplace(key, mms_adapt_all(m, opts_)).first->second;
  }
  std::size_t size() const { return cache_.size(); }

private:
  SearchOptions opts_;
  std::map<std::vector<std::pair<AgentMask, std::size_t>>, std::vector<std::size_t>> cache_;
};

namespace detail {

struct Judge {
  const RuleKind &rule;
  const CheckOptions &opts;
  MmsCache &cache;

  /// Victim agent when the instance violates the threshold.
  std::optional<std::size_t> violation(const PreferenceMatrix &m, Outcome *out = nullptr,
                                       AuditReport *audit_out = nullptr) const {
    const Outcome a = run_rule(rule, m, opts.search).outcome;
    AuditReport r;
    if (opts.share == ShareKind::Adapt) {
      r = audit_with_shares(m, a, cache.get(m));
    } else {
      r = audit_with_shares(m, a, std::vector<std::size_t>(m.n_agents(), 0));
    }
    const std::size_t egal = mms_egal(m.n_decisions());
    std::optional<std::size_t> victim;
    for (std::size_t i = 0; i < m.n_agents() && !victim; ++i) {
      const ExtendedRational ratio = opts.share == ShareKind::Adapt
                                         ? r.agents[i].ratio
                                         : detail::ratio(r.agents[i].utility, egal);
      if (!at_least(ratio, opts.threshold))
        victim = i;
    }
    if (victim) {
      if (out)
        *out = a;
      if (audit_out)
        *audit_out = r;
    }
    return victim;
  }
};

inline PreferenceMatrix minimize(const Judge &judge, PreferenceMatrix m) {
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t j = 0; j < m.n_decisions(); ++j) {
      std::vector<AgentMask> cols = m.columns();
      cols.erase(cols.begin() + static_cast<long>(j));
      PreferenceMatrix smaller(m.n_agents(), std::move(cols));
      bool still = false;
      try {
        still = judge.violation(smaller).has_value();
      } catch (const ResourceLimitError &) {
        still = false;
      }
      if (still) {
        m = std::move(smaller);
        progress = true;
        break;
      }
    }
  }
  return m;
}

/// Calls visit(matrix) for every instance of each size 0..m_max in
/// enumeration order until it returns true.
template <class Visit>
void enumerate_instances(std::size_t n, std::size_t m_max, Enumeration e, Visit &&visit) {
  std::vector<AgentMask> alphabet;
  if (e == Enumeration::Raw) {
    for (AgentMask c = 0; c <= full_mask(n); ++c)
      alphabet.push_back(c);
  } else {
    for (AgentMask c = 0; c <= full_mask(n); ++c)
      if (!bit_of(c, 0))
        alphabet.push_back(c);
  }
  const std::size_t q = alphabet.size();
  for (std::size_t m = 0; m <= m_max; ++m) {
    std::vector<std::size_t> idx(m, 0);
    while (true) {
      std::vector<AgentMask> cols(m);
      for (std::size_t k = 0; k < m; ++k)
        cols[k] = alphabet[idx[k]];
      if (visit(PreferenceMatrix(n, std::move(cols))))
        return;
      // Next index vector: non-decreasing for multisets, any for sequences.
      std::size_t k = m;
      while (k > 0 && idx[k - 1] + 1 == q)
        --k;
      if (k == 0)
        break;
      ++idx[k - 1];
      for (std::size_t r = k; r < m; ++r)
        idx[r] = e == Enumeration::Census ? idx[k - 1] : 0;
    }
  }
}

} // namespace detail

/// Runs `rule` on every enumerated (or sampled) instance with n agents and at
/// most m_max decisions and returns the first one below the threshold.
inline CheckReport exhaustive_check(const RuleKind &rule, std::size_t n, std::size_t m_max,
                                    const CheckOptions &opts = {}) {
  check_rule_agents(rule, n);
  if (n > 10)
    throw InvalidArgument("exhaustive_check supports at most 10 agents");
  MmsCache cache(opts.search);
  detail::Judge judge{rule, opts, cache};
  CheckReport report;
  report.enumeration = opts.enumeration.value_or(enumeration_for(rule, n));

  auto consider = [&](const PreferenceMatrix &m) {
    const std::size_t index = report.instances++;
    Outcome a;
    AuditReport r;
    if (auto victim = judge.violation(m, &a, &r)) {
      Counterexample c;
      c.found = m;
      c.index = index;
      c.instance = opts.minimize ? detail::minimize(judge, m) : m;
      c.victim = *judge.violation(c.instance, &c.outcome, &c.audit);
      report.counterexample = std::move(c);
      return true;
    }
    return false;
  };

  if (opts.sample) {
    std::mt19937_64 rng(opts.sample->seed);
    const std::uint64_t columns = std::uint64_t{1} << n;
    for (std::size_t s = 0; s < opts.sample->count; ++s) {
      const std::size_t m = 1 + static_cast<std::size_t>(rng() % m_max);
      std::vector<AgentMask> cols(m);
      for (auto &c : cols)
        c = rng() % columns;
      if (consider(PreferenceMatrix(n, std::move(cols))))
        break;
    }
  } else {
    detail::enumerate_instances(n, m_max, report.enumeration, consider);
  }
  return report;
}

inline json to_json(const CheckReport &r, std::size_t n) {
  json j{{"instances", r.instances}, {"enumeration", to_string(r.enumeration)}};
  (void)n;
  if (!r.counterexample) {
    j["result"] = "none";
    return j;
  }
  const auto &c = *r.counterexample;
  j["result"] = "counterexample";
  j["instance"] = to_text(c.instance);
  j["outcome"] = c.outcome.to_string();
  j["victim"] = c.victim + 1;
  j["audit"] = to_json(c.audit);
  j["found_decisions"] = c.found.n_decisions();
  return j;
}

// ---------------------------------------------------------------------------
// MNW gap sweep

struct TSweepReport {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t u1 = 0; ///< agent 1 under majority
  std::size_t ui = 0; ///< every other agent under majority
  Rational t_star;    ///< closed-form stationary point
  std::int64_t t_max = 0;
  std::int64_t argmax = 0;
  bool majority_is_mnw = false;
  std::size_t mms1_reference = 0; ///< k + n(n + k/3)
  Rational ratio;                 ///< u1 / mms1_reference
  Rational curve_n_minus_1;       ///< 6 / (n-1)
  Rational curve_n;               ///< 6 / n
};

/// Nash welfare (u1 + 3t)(ui - t)^n of shifting t decisions per block towards
/// agent 1, over integer t in [0, k(n+1)/3].
inline TSweepReport mnw_t_sweep(std::size_t n, std::size_t k) {
  if (n < 3 || n % 3 != 0 || n % 2 != 1 || k % 3 != 0)
    throw InvalidArgument("t-sweep needs odd n divisible by 3 and k divisible by 3");
  TSweepReport r;
  r.n = n;
  r.k = k;
  r.u1 = n * (n + 1);
  r.ui = (n - 1 + 2 * k / 3) * (n + 1);
  const auto sn = static_cast<std::int64_t>(n);
  const auto sk = static_cast<std::int64_t>(k);
  r.t_star = Rational(2 * sk - sn * sn + 3 * sn - 3, 3);
  r.t_max = sk * (sn + 1) / 3;
  BigInt best = -1;
  for (std::int64_t t = 0; t <= r.t_max; ++t) {
    const auto ui_left = static_cast<std::int64_t>(r.ui) - t;
    if (ui_left < 0)
      break;
    BigInt nw = BigInt(static_cast<std::int64_t>(r.u1) + 3 * t) * boost::multiprecision::pow(BigInt(ui_left), static_cast<unsigned>(n));
    if (nw > best) {
      best = nw;
      r.argmax = t;
    }
  }
  r.majority_is_mnw = r.argmax == 0;
  r.mms1_reference = k + n * (n + k / 3);
  r.ratio = Rational(static_cast<std::int64_t>(r.u1), static_cast<std::int64_t>(r.mms1_reference));
  r.curve_n_minus_1 = Rational(6, sn - 1);
  r.curve_n = Rational(6, sn);
  return r;
}

inline json to_json(const TSweepReport &r) {
  return json{{"n", r.n},
              {"k", r.k},
              {"u1", r.u1},
              {"ui", r.ui},
              {"t_star", to_string(r.t_star)},
              {"t_max", r.t_max},
              {"argmax", r.argmax},
              {"majority_is_mnw", r.majority_is_mnw},
              {"mms1_reference", r.mms1_reference},
              {"ratio", to_string(r.ratio)},
              {"curve_6_over_n_minus_1", to_string(r.curve_n_minus_1)},
              {"curve_6_over_n", to_string(r.curve_n)}};
}

} // namespace pvmms

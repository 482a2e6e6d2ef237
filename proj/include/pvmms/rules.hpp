#pragma once

/*! \file
 *  \brief Decision rules over preference matrices.
 *
 *  Online rules implement OnlineDecider and see one column at a time.
 *  Muffled majority also knows m. Deferred ambiguity and MNW read the whole
 *  matrix.
 *
 *  Side tokens are relative to the observed column: MAJ/MIN pick the
 *  majority/minority side of that column, CANON/ANTI pick bit 0/1 of the
 *  canonical orientation (agent 1's bit is 0) and are negated when the
 *  column was flipped.
 */

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "pvmms/io.hpp"
#include "pvmms/model.hpp"
#include "pvmms/rational.hpp"
#include "pvmms/shares.hpp"

namespace pvmms {

enum class Side { Maj, Min, Canon, Anti };

inline std::string to_string(Side s) {
  switch (s) {
  case Side::Maj: return "MAJ";
  case Side::Min: return "MIN";
  case Side::Canon: return "CANON";
  case Side::Anti: return "ANTI";
  }
  return "?";
}

inline std::optional<Side> side_from_string(std::string_view s) {
  if (s == "MAJ") return Side::Maj;
  if (s == "MIN") return Side::Min;
  if (s == "CANON") return Side::Canon;
  if (s == "ANTI") return Side::Anti;
  return std::nullopt;
}

/// Raw decision bit for a token applied to an observed column.
inline bool resolve_side(Side s, const CanonicalForm &cf) {
  switch (s) {
  case Side::Maj:
  case Side::Min: {
    if (cf.type.kind != TypeKind::Split)
      throw InvalidArgument("MAJ/MIN tokens need a column with a strict majority");
    const bool maj = orient(cf.type.majority_bit(), cf.flipped);
    return s == Side::Maj ? maj : !maj;
  }
  case Side::Canon:
  case Side::Anti:
    if (cf.type.kind != TypeKind::Tie)
      throw InvalidArgument("CANON/ANTI tokens need a tied column");
    return orient(s == Side::Anti, cf.flipped);
  }
  return false;
}

/// Per-type cyclic token sequences of length n. Types without an entry fall
/// back to the default sequence for their kind, when one is set.
struct GracefulMap {
  std::size_t n_agents = 0;
  std::map<AgentMask, std::vector<Side>> table;
  std::vector<Side> default_split;
  std::vector<Side> default_tie;

  const std::vector<Side> &sequence(const CanonicalType &t) const {
    auto it = table.find(t.bits);
    if (it != table.end())
      return it->second;
    const auto &fallback = t.kind == TypeKind::Tie ? default_tie : default_split;
    if (fallback.empty())
      throw InvalidArgument("graceful map has no entry for type " + t.to_string());
    return fallback;
  }

  void validate() const {
    if (n_agents == 0)
      throw InvalidArgument("graceful map needs n >= 1");
    auto check_seq = [&](const std::vector<Side> &seq, TypeKind kind,
                         const std::string &what) {
      if (seq.size() != n_agents)
        throw InvalidArgument(what + ": sequence length " +
                              std::to_string(seq.size()) + " differs from n=" +
                              std::to_string(n_agents));
      for (Side s : seq) {
        const bool split_token = s == Side::Maj || s == Side::Min;
        if ((kind == TypeKind::Split) != split_token)
          throw InvalidArgument(what + ": token " + to_string(s) +
                                " does not fit the type's kind");
      }
    };
    for (const auto &[bits, seq] : table) {
      const CanonicalType t = classify_canonical(bits, n_agents);
      if (bit_of(bits, 0) || (bits & ~full_mask(n_agents)))
        throw InvalidArgument("type " + mask_to_string(bits, n_agents) +
                              " is not in canonical orientation");
      if (t.kind == TypeKind::Consensus)
        throw InvalidArgument("consensus is always decided with the consensus");
      check_seq(seq, t.kind, "type " + t.to_string());
    }
    if (!default_split.empty())
      check_seq(default_split, TypeKind::Split, "default split sequence");
    if (!default_tie.empty())
      check_seq(default_tie, TypeKind::Tie, "default tie sequence");
  }

  /// Map file: one line per type, "<canonical bits> <TOKEN,TOKEN,...>".
  /// Blank lines and lines starting with '#' are skipped.
  static GracefulMap parse(std::string_view text, std::size_t n) {
    if (n == 0)
      throw InvalidArgument("graceful map needs n >= 1");
    GracefulMap g;
    g.n_agents = n;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t nl = text.find('\n', pos);
      std::string_view line =
          text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
      if (line.empty() || line.front() == '#')
        continue;
      const std::size_t sp = line.find(' ');
      if (sp == std::string_view::npos)
        throw ParseError(line_no, line.size() + 1, "expected \"<bits> <tokens>\"");
      const std::string_view bits = line.substr(0, sp);
      if (bits.size() != n)
        throw ParseError(line_no, 1, "type has " + std::to_string(bits.size()) +
                                         " bits, expected " + std::to_string(n));
      AgentMask mask = 0;
      for (std::size_t a = 0; a < bits.size(); ++a) {
        if (bits[a] == '1')
          mask |= AgentMask{1} << a;
        else if (bits[a] != '0')
          throw ParseError(line_no, a + 1, "non-binary character in type");
      }
      if (bit_of(mask, 0))
        throw ParseError(line_no, 1, "type must start with 0 (canonical orientation)");
      std::vector<Side> seq;
      std::size_t start = sp + 1;
      while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        std::size_t end = comma == std::string_view::npos ? line.size() : comma;
        auto tok = side_from_string(line.substr(start, end - start));
        if (!tok)
          throw ParseError(line_no, start + 1,
                           "unknown token '" + std::string(line.substr(start, end - start)) +
                               "'");
        seq.push_back(*tok);
        start = end + 1;
      }
      GracefulMap one;
      one.n_agents = n;
      one.table.emplace(mask, seq);
      try {
        one.validate();
      } catch (const InvalidArgument &e) {
        throw ParseError(line_no, 1, e.what());
      }
      if (!g.table.emplace(mask, std::move(seq)).second)
        throw ParseError(line_no, 1, "duplicate type " + std::string(bits));
    }
    return g;
  }

  std::string to_text() const {
    std::string s;
    for (const auto &[bits, seq] : table) {
      s += mask_to_string(bits, n_agents) + " ";
      for (std::size_t k = 0; k < seq.size(); ++k)
        s += (k ? "," : "") + to_string(seq[k]);
      s += "\n";
    }
    return s;
  }
};

/// MAJ x3, MIN for strict-majority types; ties alternate starting on agent 1's
/// side. Used by deferred ambiguity.
inline GracefulMap rho_star_map() {
  GracefulMap g;
  g.n_agents = 4;
  g.default_split = {Side::Maj, Side::Maj, Side::Maj, Side::Min};
  g.default_tie = {Side::Canon, Side::Anti, Side::Canon, Side::Anti};
  return g;
}

/// MAJ x(n-1), MIN on every strict-majority type.
inline GracefulMap ptrr_generalized_map(std::size_t n) {
  GracefulMap g;
  g.n_agents = n;
  g.default_split.assign(n, Side::Maj);
  g.default_split.back() = Side::Min;
  g.default_tie.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    g.default_tie[k] = k % 2 ? Side::Anti : Side::Canon;
  return g;
}

/// The three-agent round-robin written as a graceful map.
inline GracefulMap ptrr3_map() {
  GracefulMap g = ptrr_generalized_map(3);
  g.default_tie.clear();
  return g;
}

// ---------------------------------------------------------------------------
// Step functions

/// MAJ when c mod 3 is 0 or 1, MIN when it is 2.
inline Side per_type_round_robin_step(std::size_t counter) {
  return counter % 3 == 2 ? Side::Min : Side::Maj;
}

/// Raw bit chosen for the k-th occurrence (0-based, both orientations) of the
/// column's type.
inline bool graceful_step(const GracefulMap &map, AgentMask column, std::size_t k) {
  const CanonicalForm cf = canonicalize(column, map.n_agents);
  if (cf.type.kind == TypeKind::Consensus)
    return orient(false, cf.flipped);
  const auto &seq = map.sequence(cf.type);
  return resolve_side(seq[k % seq.size()], cf);
}

/// Strictly more than half prefer 1 gives 1; anything else gives 0.
inline bool majority_bit(AgentMask column, std::size_t n) {
  return 2 * popcount(column) > n;
}

struct MuffledState {
  std::vector<std::size_t> score;
  std::size_t threshold = 0;
};

/// One muffled-majority decision; scores of agents who got their way are
/// incremented.
inline bool muffled_majority_step(MuffledState &st, AgentMask column) {
  const std::size_t n = st.score.size();
  if (n != 3)
    throw InvalidArgument("muffled majority needs n=3");
  AgentMask unsatisfied = 0;
  for (std::size_t a = 0; a < n; ++a)
    if (st.score[a] < st.threshold)
      unsatisfied |= AgentMask{1} << a;
  bool bit;
  if (unsatisfied == 0) {
    bit = majority_bit(column, n);
  } else {
    const std::size_t size = popcount(unsatisfied);
    const std::size_t ones = popcount(column & unsatisfied);
    if (2 * ones > size) {
      bit = true;
    } else if (2 * ones < size) {
      bit = false;
    } else {
      std::size_t pick = n;
      for (std::size_t a = 0; a < n; ++a)
        if (bit_of(unsatisfied, a) && (pick == n || st.score[a] < st.score[pick]))
          pick = a;
      bit = bit_of(column, pick);
    }
  }
  for (std::size_t a = 0; a < n; ++a)
    if (bit_of(column, a) == bit)
      ++st.score[a];
  return bit;
}

// ---------------------------------------------------------------------------
// Online deciders

using CounterMap = std::map<std::string, std::size_t>;

/// A rule that must decide each column when it arrives.
class OnlineDecider {
public:
  virtual ~OnlineDecider() = default;
  virtual std::size_t n_agents() const = 0;
  virtual bool decide(AgentMask column) = 0;
  /// Serializable internal state, keyed by canonical type bits or by name.
  virtual CounterMap counters() const = 0;
};

namespace detail {

class TypeCounting : public OnlineDecider {
public:
  explicit TypeCounting(std::size_t n) : n_(n) {}
  std::size_t n_agents() const override { return n_; }
  bool decide(AgentMask column) override {
    if (column & ~full_mask(n_))
      throw InvalidArgument("column wider than the rule's agent count");
    const CanonicalForm cf = canonicalize(column, n_);
    std::size_t &k = counts_[cf.type.bits];
    const bool bit = choose(column, cf, k);
    ++k;
    return bit;
  }
  CounterMap counters() const override {
    CounterMap out;
    for (const auto &[bits, k] : counts_)
      out[mask_to_string(bits, n_)] = k;
    return out;
  }

protected:
  virtual bool choose(AgentMask column, const CanonicalForm &cf, std::size_t k) = 0;
  std::size_t n_;

private:
  std::map<AgentMask, std::size_t> counts_;
};

class MajorityDecider final : public TypeCounting {
public:
  using TypeCounting::TypeCounting;
  bool choose(AgentMask column, const CanonicalForm &, std::size_t) override {
    return majority_bit(column, n_);
  }
};

class RoundRobin3Decider final : public TypeCounting {
public:
  using TypeCounting::TypeCounting;
  bool choose(AgentMask, const CanonicalForm &cf, std::size_t k) override {
    if (cf.type.kind == TypeKind::Consensus)
      return orient(false, cf.flipped);
    return resolve_side(per_type_round_robin_step(k), cf);
  }
};

class GracefulDecider final : public TypeCounting {
public:
  explicit GracefulDecider(GracefulMap map)
      : TypeCounting(map.n_agents), map_(std::move(map)) {}
  bool choose(AgentMask column, const CanonicalForm &, std::size_t k) override {
    return graceful_step(map_, column, k);
  }

private:
  GracefulMap map_;
};

class AlwaysZeroDecider final : public TypeCounting {
public:
  using TypeCounting::TypeCounting;
  bool choose(AgentMask, const CanonicalForm &, std::size_t) override { return false; }
};

/// Minority side of strict-majority columns; agent 1's opponents on ties.
class AlwaysMinorityDecider final : public TypeCounting {
public:
  using TypeCounting::TypeCounting;
  bool choose(AgentMask, const CanonicalForm &cf, std::size_t) override {
    switch (cf.type.kind) {
    case TypeKind::Consensus: return orient(false, cf.flipped);
    case TypeKind::Split: return resolve_side(Side::Min, cf);
    case TypeKind::Tie: return resolve_side(Side::Anti, cf);
    }
    return false;
  }
};

class MuffledDecider final : public OnlineDecider {
public:
  MuffledDecider(std::size_t n, std::size_t m) {
    if (n != 3)
      throw InvalidArgument("muffled3 requires n=3, got n=" + std::to_string(n));
    st_.score.assign(n, 0);
    st_.threshold = m / 2;
  }
  std::size_t n_agents() const override { return 3; }
  bool decide(AgentMask column) override { return muffled_majority_step(st_, column); }
  CounterMap counters() const override {
    CounterMap out;
    for (std::size_t a = 0; a < st_.score.size(); ++a)
      out["score" + std::to_string(a + 1)] = st_.score[a];
    out["threshold"] = st_.threshold;
    return out;
  }

private:
  MuffledState st_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Rule kinds

struct Majority {};
struct PerTypeRoundRobin3 {};
struct Graceful {
  GracefulMap map;
};
struct MuffledMajority3 {};
struct DeferredAmbiguity4 {};
struct MaxNashWelfare {};
struct AlwaysZero {};
struct AlwaysMinority {};
/// Muffled majority run over the contested decisions only, ordered so the
/// agent with the smallest MMS is alone in the minority on the last one;
/// unanimous decisions follow the consensus.
struct MuffledArranged3 {};

using RuleKind = std::variant<Majority, PerTypeRoundRobin3, Graceful, MuffledMajority3,
                              DeferredAmbiguity4, MaxNashWelfare, AlwaysZero,
                              AlwaysMinority, MuffledArranged3>;

enum class RuleTiming { Online, HorizonAware, Offline };

inline RuleTiming timing(const RuleKind &k) {
  if (std::holds_alternative<MuffledMajority3>(k))
    return RuleTiming::HorizonAware;
  if (std::holds_alternative<DeferredAmbiguity4>(k) ||
      std::holds_alternative<MaxNashWelfare>(k) ||
      std::holds_alternative<MuffledArranged3>(k))
    return RuleTiming::Offline;
  return RuleTiming::Online;
}

inline std::string rule_name(const RuleKind &k) {
  struct V {
    std::string operator()(const Majority &) const { return "majority"; }
    std::string operator()(const PerTypeRoundRobin3 &) const { return "ptrr3"; }
    std::string operator()(const Graceful &) const { return "graceful"; }
    std::string operator()(const MuffledMajority3 &) const { return "muffled3"; }
    std::string operator()(const DeferredAmbiguity4 &) const { return "deferred4"; }
    std::string operator()(const MaxNashWelfare &) const { return "mnw"; }
    std::string operator()(const AlwaysZero &) const { return "always0"; }
    std::string operator()(const AlwaysMinority &) const { return "minority"; }
    std::string operator()(const MuffledArranged3 &) const { return "muffled3-arranged"; }
  };
  return std::visit(V{}, k);
}

/// Throws InvalidArgument unless the rule accepts n agents.
inline void check_rule_agents(const RuleKind &k, std::size_t n) {
  auto need = [&](std::size_t want) {
    if (n != want)
      throw InvalidArgument(rule_name(k) + " requires n=" + std::to_string(want) +
                            ", got n=" + std::to_string(n));
  };
  if (std::holds_alternative<PerTypeRoundRobin3>(k) ||
      std::holds_alternative<MuffledMajority3>(k) ||
      std::holds_alternative<MuffledArranged3>(k))
    need(3);
  else if (std::holds_alternative<DeferredAmbiguity4>(k))
    need(4);
  else if (const auto *g = std::get_if<Graceful>(&k))
    need(g->map.n_agents);
}

/// Fresh decider for an online rule.
inline std::unique_ptr<OnlineDecider> make_online_decider(const RuleKind &k,
                                                          std::size_t n) {
  check_rule_agents(k, n);
  if (std::holds_alternative<Majority>(k))
    return std::make_unique<detail::MajorityDecider>(n);
  if (std::holds_alternative<PerTypeRoundRobin3>(k))
    return std::make_unique<detail::RoundRobin3Decider>(n);
  if (const auto *g = std::get_if<Graceful>(&k)) {
    g->map.validate();
    return std::make_unique<detail::GracefulDecider>(g->map);
  }
  if (std::holds_alternative<AlwaysZero>(k))
    return std::make_unique<detail::AlwaysZeroDecider>(n);
  if (std::holds_alternative<AlwaysMinority>(k))
    return std::make_unique<detail::AlwaysMinorityDecider>(n);
  throw InvalidArgument(rule_name(k) + " is not an online rule");
}

// ---------------------------------------------------------------------------
// Transcripts

struct TranscriptEntry {
  AgentMask column = 0;
  AgentMask type = 0;        ///< canonical bits
  std::size_t occurrence = 0; ///< earlier columns of the same type
  bool bit = false;
};

struct RuleTranscript {
  std::string rule;
  std::size_t n_agents = 0;
  std::vector<TranscriptEntry> entries;
  std::vector<std::size_t> utilities;
  CounterMap counters;

  Outcome outcome() const {
    std::vector<std::uint8_t> bits;
    for (const auto &e : entries)
      bits.push_back(e.bit ? 1 : 0);
    return Outcome(std::move(bits));
  }

  PreferenceMatrix matrix() const {
    std::vector<AgentMask> cols;
    for (const auto &e : entries)
      cols.push_back(e.column);
    return PreferenceMatrix(n_agents, std::move(cols));
  }
};

namespace detail {

inline RuleTranscript make_transcript(const std::string &rule,
                                      const PreferenceMatrix &m, const Outcome &a,
                                      CounterMap counters) {
  RuleTranscript t;
  t.rule = rule;
  t.n_agents = m.n_agents();
  std::map<AgentMask, std::size_t> seen;
  for (std::size_t j = 0; j < m.n_decisions(); ++j) {
    const AgentMask type = canonicalize(m.column(j), m.n_agents()).type.bits;
    t.entries.push_back({m.column(j), type, seen[type]++, a[j]});
  }
  t.utilities = utilities(m, a);
  t.counters = std::move(counters);
  return t;
}

} // namespace detail

inline json to_json(const RuleTranscript &t) {
  json entries = json::array();
  for (const auto &e : t.entries)
    entries.push_back({{"column", mask_to_string(e.column, t.n_agents)},
                       {"type", mask_to_string(e.type, t.n_agents)},
                       {"counter", e.occurrence},
                       {"bit", e.bit ? 1 : 0}});
  return json{{"rule", t.rule},
              {"n", t.n_agents},
              {"decisions", entries},
              {"utilities", t.utilities},
              {"counters", t.counters}};
}

// ---------------------------------------------------------------------------
// Offline rules

struct DeferredResult {
  Outcome outcome;
  /// Removed decisions (original column indices), ascending.
  std::vector<std::size_t> deferred;
  std::size_t chosen = 0;
  std::vector<Rational> eta;
  /// Utilities of the graceful run over the reduced matrix.
  std::vector<std::size_t> reduced_utilities;
};

/// eta_i = sum_{j != i} 3/4 alpha_j + 1/4 alpha_i + C + sum_j t_j / 2, for all
/// four agents.
inline std::vector<Rational> eta(const TypeCensus &c) {
  if (c.n_agents() != 4)
    throw InvalidArgument("eta needs a census over n=4");
  std::vector<Rational> out;
  Rational ties(0);
  for (std::size_t j = 1; j < 4; ++j)
    ties += Rational(static_cast<std::int64_t>(c.tie(j)), 2);
  for (std::size_t i = 0; i < 4; ++i) {
    Rational v(static_cast<std::int64_t>(c.consensus()));
    for (std::size_t j = 0; j < 4; ++j) {
      const auto a = static_cast<std::int64_t>(c.alpha(j));
      v += j == i ? Rational(a, 4) : Rational(3 * a, 4);
    }
    out.push_back(v + ties);
  }
  return out;
}

/// Utility the rho* run realizes from counts alone:
/// sum_{j != i} ceil(3 alpha_j / 4) + floor(alpha_i / 4) + C + sum_j t_j / 2.
/// Integral when every tie count is even.
inline std::vector<Rational> rho_star_utility_formula(const TypeCensus &c) {
  if (c.n_agents() != 4)
    throw InvalidArgument("the rho* formula needs a census over n=4");
  std::vector<Rational> out;
  for (std::size_t i = 0; i < 4; ++i) {
    Rational v(static_cast<std::int64_t>(c.consensus()));
    for (std::size_t j = 0; j < 4; ++j) {
      const auto a = static_cast<std::int64_t>(c.alpha(j));
      v += j == i ? floor_of(Rational(a, 4)) : ceil_of(Rational(3 * a, 4));
    }
    for (std::size_t j = 1; j < 4; ++j)
      v += Rational(static_cast<std::int64_t>(c.tie(j)), 2);
    out.push_back(v);
  }
  return out;
}

inline Outcome run_online(OnlineDecider &d, const PreferenceMatrix &m) {
  std::vector<std::uint8_t> bits;
  bits.reserve(m.n_decisions());
  for (AgentMask col : m.columns())
    bits.push_back(d.decide(col) ? 1 : 0);
  return Outcome(std::move(bits));
}

inline DeferredResult deferred_ambiguity(const PreferenceMatrix &m) {
  if (m.n_agents() != 4)
    throw InvalidArgument("deferred4 requires n=4, got n=" +
                          std::to_string(m.n_agents()));
  const TypeCensus census(m);
  DeferredResult r;
  for (std::size_t partner = 1; partner < 4; ++partner) {
    auto it = census.entries().find(TypeCensus::tie_bits(partner));
    if (it != census.entries().end() && it->second.count() % 2 == 1)
      r.deferred.push_back(it->second.occurrences.back());
  }
  std::sort(r.deferred.begin(), r.deferred.end());

  std::vector<AgentMask> kept_cols;
  std::vector<std::size_t> kept_idx;
  for (std::size_t j = 0; j < m.n_decisions(); ++j)
    if (!std::binary_search(r.deferred.begin(), r.deferred.end(), j)) {
      kept_cols.push_back(m.column(j));
      kept_idx.push_back(j);
    }
  const PreferenceMatrix reduced(4, kept_cols);
  detail::GracefulDecider rho(rho_star_map());
  const Outcome partial = run_online(rho, reduced);
  r.reduced_utilities = utilities(reduced, partial);
  r.eta = eta(TypeCensus(reduced));

  std::vector<std::size_t> below;
  for (std::size_t i = 0; i < 4; ++i)
    if (Rational(static_cast<std::int64_t>(r.reduced_utilities[i])) < r.eta[i])
      below.push_back(i);
  if (below.size() > 1)
    throw InternalInconsistency("agents " + std::to_string(below[0] + 1) + " and " +
                                std::to_string(below[1] + 1) +
                                " both fall below eta after the graceful run");
  r.chosen = below.empty() ? 0 : below.front();

  std::vector<std::uint8_t> bits(m.n_decisions(), 0);
  for (std::size_t k = 0; k < kept_idx.size(); ++k)
    bits[kept_idx[k]] = partial[k] ? 1 : 0;
  for (std::size_t j : r.deferred)
    bits[j] = m.at(r.chosen, j) ? 1 : 0;
  r.outcome = Outcome(std::move(bits));
  return r;
}

using BigInt = boost::multiprecision::cpp_int;

/// Nash welfare key: agents with positive utility, then their product.
struct NashKey {
  std::size_t positive = 0;
  BigInt product = 1;

  static NashKey of(const std::vector<std::size_t> &u) {
    NashKey k;
    for (std::size_t v : u)
      if (v > 0) {
        ++k.positive;
        k.product *= v;
      }
    return k;
  }
  friend bool operator==(const NashKey &, const NashKey &) = default;
  friend bool operator<(const NashKey &a, const NashKey &b) {
    if (a.positive != b.positive)
      return a.positive < b.positive;
    return a.product < b.product;
  }
};

/// Maximizes (agents with positive utility, product of positive utilities),
/// then picks the lexicographically smallest outcome. Searches how many
/// decisions of each canonical type go to each side.
inline Outcome mnw_outcome(const PreferenceMatrix &m, const SearchOptions &opts = {}) {
  const std::size_t n = m.n_agents();
  const TypeCensus census(m);
  struct T {
    AgentMask bits;
    std::vector<std::size_t> occ;
  };
  std::vector<T> types;
  std::vector<std::uint8_t> bits(m.n_decisions(), 0);
  std::size_t consensus = 0;
  for (const auto &[b, e] : census.entries()) {
    if (e.type.kind == TypeKind::Consensus) {
      consensus = e.count();
      for (std::size_t j : e.occurrences)
        bits[j] = bit_of(m.column(j), 0) ? 1 : 0;
    } else {
      types.push_back({b, e.occurrences});
    }
  }
  double space = 1;
  for (const auto &t : types)
    space *= static_cast<double>(t.occ.size() + 1);
  if (space > static_cast<double>(opts.node_budget))
    throw ResourceLimitError("MNW search space of " + std::to_string(space) +
                             " count vectors exceeds the node budget of " +
                             std::to_string(opts.node_budget));

  // Greedy lexicographic minimum: raw 0 wherever the per-side quota allows.
  auto realize = [&](const std::vector<std::size_t> &y) {
    std::vector<std::uint8_t> out = bits;
    for (std::size_t k = 0; k < types.size(); ++k) {
      std::size_t ones = y[k];
      std::size_t zeros = types[k].occ.size() - y[k];
      for (std::size_t j : types[k].occ) {
        const bool flipped = bit_of(m.column(j), 0);
        // raw 0 means canonical bit == flipped
        std::size_t &budget = flipped ? ones : zeros;
        if (budget > 0) {
          --budget;
          out[j] = 0;
        } else {
          (flipped ? zeros : ones)--;
          out[j] = 1;
        }
      }
    }
    return Outcome(std::move(out));
  };

  std::vector<std::size_t> y(types.size(), 0);
  std::vector<std::size_t> u(n, consensus);
  for (const auto &t : types)
    for (std::size_t a = 0; a < n; ++a)
      if (!bit_of(t.bits, a))
        u[a] += t.occ.size();
  std::optional<NashKey> best;
  std::optional<Outcome> best_outcome;
  while (true) {
    NashKey key = NashKey::of(u);
    if (!best || *best < key) {
      best = key;
      best_outcome = realize(y);
    } else if (key == *best) {
      Outcome cand = realize(y);
      if (cand < *best_outcome)
        best_outcome = std::move(cand);
    }
    std::size_t k = 0;
    for (; k < types.size(); ++k) {
      const std::size_t c = types[k].occ.size();
      if (y[k] < c) {
        ++y[k];
        for (std::size_t a = 0; a < n; ++a)
          bit_of(types[k].bits, a) ? ++u[a] : --u[a];
        break;
      }
      for (std::size_t a = 0; a < n; ++a)
        if (bit_of(types[k].bits, a))
          u[a] -= c;
        else
          u[a] += c;
      y[k] = 0;
    }
    if (k == types.size())
      break;
  }
  return *best_outcome;
}

struct ArrangedResult {
  Outcome outcome;
  /// Original indices of the contested decisions in the order they were run.
  std::vector<std::size_t> order;
  std::size_t weakest = 0; ///< agent with the smallest MMS (lowest index on ties)
};

inline ArrangedResult muffled_arranged(const PreferenceMatrix &m,
                                       const SearchOptions &opts = {}) {
  if (m.n_agents() != 3)
    throw InvalidArgument("muffled3-arranged requires n=3, got n=" +
                          std::to_string(m.n_agents()));
  ArrangedResult r;
  const auto mms = mms_adapt_all(m, opts);
  r.weakest = static_cast<std::size_t>(std::min_element(mms.begin(), mms.end()) - mms.begin());
  std::vector<std::uint8_t> bits(m.n_decisions(), 0);
  std::optional<std::size_t> last;
  for (std::size_t j = 0; j < m.n_decisions(); ++j) {
    const CanonicalForm cf = canonicalize(m.column(j), 3);
    if (cf.type.kind == TypeKind::Consensus) {
      bits[j] = bit_of(m.column(j), 0) ? 1 : 0;
      continue;
    }
    if (cf.type.minority == (AgentMask{1} << r.weakest))
      last = j;
    r.order.push_back(j);
  }
  if (last) {
    r.order.erase(std::find(r.order.begin(), r.order.end(), *last));
    r.order.push_back(*last);
  }
  MuffledState st;
  st.score.assign(3, 0);
  st.threshold = r.order.size() / 2;
  for (std::size_t j : r.order)
    bits[j] = muffled_majority_step(st, m.column(j)) ? 1 : 0;
  r.outcome = Outcome(std::move(bits));
  return r;
}

// ---------------------------------------------------------------------------
// Uniform entry point

struct RunResult {
  Outcome outcome;
  RuleTranscript transcript;
  std::optional<DeferredResult> deferred;
};

inline RunResult run_rule(const RuleKind &kind, const PreferenceMatrix &m,
                          const SearchOptions &opts = {}) {
  check_rule_agents(kind, m.n_agents());
  RunResult r;
  if (std::holds_alternative<MuffledMajority3>(kind)) {
    detail::MuffledDecider d(m.n_agents(), m.n_decisions());
    r.outcome = run_online(d, m);
    r.transcript = detail::make_transcript(rule_name(kind), m, r.outcome, d.counters());
  } else if (std::holds_alternative<DeferredAmbiguity4>(kind)) {
    r.deferred = deferred_ambiguity(m);
    r.outcome = r.deferred->outcome;
    CounterMap c;
    c["chosen"] = r.deferred->chosen + 1;
    c["deferred"] = r.deferred->deferred.size();
    r.transcript = detail::make_transcript(rule_name(kind), m, r.outcome, c);
  } else if (std::holds_alternative<MuffledArranged3>(kind)) {
    const ArrangedResult a = muffled_arranged(m, opts);
    r.outcome = a.outcome;
    r.transcript = detail::make_transcript(rule_name(kind), m, r.outcome,
                                           {{"weakest", a.weakest + 1}});
  } else if (std::holds_alternative<MaxNashWelfare>(kind)) {
    r.outcome = mnw_outcome(m, opts);
    r.transcript = detail::make_transcript(rule_name(kind), m, r.outcome, {});
  } else {
    auto d = make_online_decider(kind, m.n_agents());
    r.outcome = run_online(*d, m);
    r.transcript = detail::make_transcript(rule_name(kind), m, r.outcome, d->counters());
  }
  return r;
}

/// Re-runs the transcript's columns and compares every emitted bit.
inline bool replay_matches(const RuleKind &kind, const RuleTranscript &t,
                           const SearchOptions &opts = {}) {
  const RunResult again = run_rule(kind, t.matrix(), opts);
  return again.outcome == t.outcome() && again.transcript.counters == t.counters;
}

// ---------------------------------------------------------------------------
// Symmetry traits used by the exhaustive checker. Each is backed by a
// property test.

/// Utilities depend only on the multiset of canonical types.
inline bool census_invariant(const RuleKind &k, std::size_t n) {
  if (std::holds_alternative<PerTypeRoundRobin3>(k) ||
      std::holds_alternative<Graceful>(k) ||
      std::holds_alternative<DeferredAmbiguity4>(k))
    return true;
  if (std::holds_alternative<Majority>(k) || std::holds_alternative<AlwaysMinority>(k))
    return n % 2 == 1;
  return false;
}

/// Negating a column negates its decision and leaves later decisions alone.
inline bool negation_equivariant(const RuleKind &k, std::size_t n) {
  return census_invariant(k, n) || std::holds_alternative<MuffledMajority3>(k) ||
         std::holds_alternative<MuffledArranged3>(k);
}

} // namespace pvmms

#pragma once

/*! \file
 *  \brief Preference matrices, outcomes, canonical decision types and the
 *  agreement primitive.
 *
 *  Agents and decisions are 0-based in the C++ API. Every text rendering
 *  (reports, JSON, error messages) is 1-based.
 *
 *  A decision column is stored as a bit mask over agents: bit a is agent a's
 *  preferred choice. This caps instances at 64 agents.
 */

#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pvmms/errors.hpp"

namespace pvmms {

using AgentMask = std::uint64_t;
inline constexpr std::size_t kMaxAgents = 64;

inline AgentMask full_mask(std::size_t n) {
  return n >= 64 ? ~AgentMask{0} : ((AgentMask{1} << n) - 1);
}

inline bool bit_of(AgentMask mask, std::size_t agent) {
  return ((mask >> agent) & 1U) != 0;
}

inline std::size_t popcount(AgentMask mask) {
  return static_cast<std::size_t>(std::popcount(mask));
}

/// Column bits rendered agent 1 first, e.g. 0b110 over 3 agents -> "011".
inline std::string mask_to_string(AgentMask mask, std::size_t n) {
  std::string s(n, '0');
  for (std::size_t a = 0; a < n; ++a)
    if (bit_of(mask, a))
      s[a] = '1';
  return s;
}

inline AgentMask mask_from_string(std::string_view bits) {
  if (bits.size() > kMaxAgents)
    throw InvalidArgument("column longer than " + std::to_string(kMaxAgents) +
                          " agents");
  AgentMask m = 0;
  for (std::size_t a = 0; a < bits.size(); ++a) {
    if (bits[a] == '1')
      m |= AgentMask{1} << a;
    else if (bits[a] != '0')
      throw InvalidArgument("non-binary character in column '" +
                            std::string(bits) + "'");
  }
  return m;
}

/// M^j: the preferences of all agents on one decision.
struct DecisionColumn {
  AgentMask bits = 0;
  std::size_t n_agents = 0;
};

/// n x m binary matrix. Immutable once built.
class PreferenceMatrix {
public:
  PreferenceMatrix() = default;

  PreferenceMatrix(std::size_t n_agents, std::vector<AgentMask> columns)
      : n_(n_agents), columns_(std::move(columns)) {
    if (n_ == 0)
      throw InvalidArgument("a preference matrix needs at least one agent");
    if (n_ > kMaxAgents)
      throw InvalidArgument("at most " + std::to_string(kMaxAgents) +
                            " agents are supported");
    const AgentMask full = full_mask(n_);
    for (std::size_t j = 0; j < columns_.size(); ++j)
      if ((columns_[j] & ~full) != 0)
        throw InvalidArgument("column " + std::to_string(j + 1) +
                              " has bits beyond agent " + std::to_string(n_));
  }

  /// Rows as '0'/'1' strings, agent 1 first.
  static PreferenceMatrix from_rows(const std::vector<std::string> &rows) {
    if (rows.empty())
      throw InvalidArgument("a preference matrix needs at least one agent");
    const std::size_t m = rows.front().size();
    std::vector<AgentMask> cols(m, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m)
        throw InvalidArgument("row " + std::to_string(i + 1) + " has length " +
                              std::to_string(rows[i].size()) + ", expected " +
                              std::to_string(m));
      for (std::size_t j = 0; j < m; ++j) {
        if (rows[i][j] == '1')
          cols[j] |= AgentMask{1} << i;
        else if (rows[i][j] != '0')
          throw InvalidArgument("row " + std::to_string(i + 1) +
                                " has a non-binary character");
      }
    }
    return PreferenceMatrix(rows.size(), std::move(cols));
  }

  std::size_t n_agents() const noexcept { return n_; }
  std::size_t n_decisions() const noexcept { return columns_.size(); }

  bool at(std::size_t agent, std::size_t decision) const {
    return bit_of(columns_.at(decision), agent);
  }

  AgentMask column(std::size_t j) const { return columns_.at(j); }
  DecisionColumn decision_column(std::size_t j) const {
    return {columns_.at(j), n_};
  }
  const std::vector<AgentMask> &columns() const noexcept { return columns_; }

  std::vector<std::uint8_t> row(std::size_t agent) const {
    check_agent(agent);
    std::vector<std::uint8_t> r(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j)
      r[j] = bit_of(columns_[j], agent) ? 1 : 0;
    return r;
  }

  std::string row_string(std::size_t agent) const {
    check_agent(agent);
    std::string s(columns_.size(), '0');
    for (std::size_t j = 0; j < columns_.size(); ++j)
      if (bit_of(columns_[j], agent))
        s[j] = '1';
    return s;
  }

  PreferenceMatrix prefix(std::size_t k) const {
    if (k > columns_.size())
      throw InvalidArgument("prefix longer than the matrix");
    return PreferenceMatrix(
        n_, std::vector<AgentMask>(columns_.begin(), columns_.begin() + k));
  }

  void check_agent(std::size_t agent) const {
    if (agent >= n_)
      throw InvalidArgument("agent " + std::to_string(agent + 1) +
                            " out of range 1.." + std::to_string(n_));
  }

  friend bool operator==(const PreferenceMatrix &,
                         const PreferenceMatrix &) = default;

private:
  std::size_t n_ = 1;
  std::vector<AgentMask> columns_;
};

/// A: one chosen bit per decision.
class Outcome {
public:
  Outcome() = default;
  explicit Outcome(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_)
      if (b > 1)
        throw InvalidArgument("outcome bits must be 0 or 1");
  }

  static Outcome from_string(std::string_view s) {
    std::vector<std::uint8_t> bits(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] != '0' && s[j] != '1')
        throw InvalidArgument("outcome has a non-binary character at decision " +
                              std::to_string(j + 1));
      bits[j] = s[j] == '1' ? 1 : 0;
    }
    return Outcome(std::move(bits));
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t j) const { return bits_[j] != 0; }
  const std::vector<std::uint8_t> &bits() const noexcept { return bits_; }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t j = 0; j < bits_.size(); ++j)
      if (bits_[j])
        s[j] = '1';
    return s;
  }

  friend bool operator==(const Outcome &, const Outcome &) = default;
  friend auto operator<=>(const Outcome &, const Outcome &) = default;

private:
  std::vector<std::uint8_t> bits_;
};

/// X_1..X_n: labeled, possibly empty bundles of decision indices.
struct Partition {
  std::vector<std::vector<std::size_t>> bundles;

  /// Throws unless the bundles are n pairwise disjoint sets covering [m].
  void validate(std::size_t n_agents, std::size_t n_decisions) const {
    if (bundles.size() != n_agents)
      throw InvalidArgument("partition has " + std::to_string(bundles.size()) +
                            " bundles, expected " + std::to_string(n_agents));
    std::vector<char> seen(n_decisions, 0);
    std::size_t total = 0;
    for (const auto &bundle : bundles)
      for (std::size_t j : bundle) {
        if (j >= n_decisions)
          throw InvalidArgument("partition refers to decision " +
                                std::to_string(j + 1) + " beyond m=" +
                                std::to_string(n_decisions));
        if (seen[j])
          throw InvalidArgument("decision " + std::to_string(j + 1) +
                                " appears in two bundles");
        seen[j] = 1;
        ++total;
      }
    if (total != n_decisions)
      throw InvalidArgument("partition does not cover every decision");
  }

  friend bool operator==(const Partition &, const Partition &) = default;
};

/// d_H(a, b; X) as the count of positions in X where a and b are EQUAL.
inline std::size_t agreement(std::span<const std::uint8_t> a,
                             std::span<const std::uint8_t> b,
                             std::span<const std::size_t> subset) {
  if (a.size() != b.size())
    throw InvalidArgument("agreement: vectors have lengths " +
                          std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  std::size_t count = 0;
  for (std::size_t k : subset) {
    if (k >= a.size())
      throw InvalidArgument("agreement: index " + std::to_string(k + 1) +
                            " out of range");
    if (a[k] == b[k])
      ++count;
  }
  return count;
}

inline std::size_t agreement(std::span<const std::uint8_t> a,
                             std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw InvalidArgument("agreement: vectors have lengths " +
                          std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] == b[k])
      ++count;
  return count;
}

/// u_i(A): number of decisions where agent i agrees with the outcome.
inline std::size_t utility(const PreferenceMatrix &m, const Outcome &a,
                           std::size_t agent) {
  m.check_agent(agent);
  if (a.size() != m.n_decisions())
    throw InvalidArgument("outcome has " + std::to_string(a.size()) +
                          " decisions, matrix has " +
                          std::to_string(m.n_decisions()));
  std::size_t u = 0;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (bit_of(m.column(j), agent) == a[j])
      ++u;
  return u;
}

inline std::vector<std::size_t> utilities(const PreferenceMatrix &m,
                                          const Outcome &a) {
  std::vector<std::size_t> u(m.n_agents());
  for (std::size_t i = 0; i < m.n_agents(); ++i)
    u[i] = utility(m, a, i);
  return u;
}

enum class TypeKind { Consensus, Split, Tie };

/// A column up to global negation, oriented so agent 1's bit is 0.
struct CanonicalType {
  AgentMask bits = 0;
  std::size_t n_agents = 0;
  TypeKind kind = TypeKind::Consensus;
  /// Split: the strict minority. Tie: the side without agent 1. Else 0.
  AgentMask minority = 0;

  std::size_t minority_size() const { return popcount(minority); }

  /// Tie only: the side containing agent 1 (canonical bit 0).
  AgentMask side_a() const { return kind == TypeKind::Tie ? full_mask(n_agents) & ~bits : 0; }
  AgentMask side_b() const { return kind == TypeKind::Tie ? bits : 0; }

  /// Bit (in canonical orientation) preferred by the majority. Split and
  /// Consensus only.
  bool majority_bit() const {
    if (kind == TypeKind::Consensus)
      return false;
    // minority holds the canonical-1 agents iff they are outnumbered
    return minority != bits;
  }

  std::string to_string() const { return mask_to_string(bits, n_agents); }

  friend bool operator==(const CanonicalType &a, const CanonicalType &b) {
    return a.bits == b.bits && a.n_agents == b.n_agents;
  }
  friend bool operator<(const CanonicalType &a, const CanonicalType &b) {
    return a.bits < b.bits;
  }
};

struct CanonicalForm {
  CanonicalType type;
  bool flipped = false;
};

inline CanonicalType classify_canonical(AgentMask canonical_bits,
                                        std::size_t n) {
  CanonicalType t;
  t.bits = canonical_bits;
  t.n_agents = n;
  const std::size_t ones = popcount(canonical_bits);
  const std::size_t zeros = n - ones;
  if (ones == 0) {
    t.kind = TypeKind::Consensus;
  } else if (ones == zeros) {
    t.kind = TypeKind::Tie;
    t.minority = canonical_bits;
  } else {
    t.kind = TypeKind::Split;
    t.minority = ones < zeros ? canonical_bits : (full_mask(n) & ~canonical_bits);
  }
  return t;
}

inline CanonicalForm canonicalize(const DecisionColumn &col) {
  if (col.n_agents == 0 || col.n_agents > kMaxAgents)
    throw InvalidArgument("column has an invalid agent count");
  const AgentMask full = full_mask(col.n_agents);
  const bool flipped = bit_of(col.bits, 0);
  const AgentMask canon = flipped ? (~col.bits & full) : (col.bits & full);
  return {classify_canonical(canon, col.n_agents), flipped};
}

inline CanonicalForm canonicalize(AgentMask column, std::size_t n) {
  return canonicalize(DecisionColumn{column, n});
}

/// Resolves a canonical-orientation bit to the raw bit of an observed column.
inline bool orient(bool canonical_bit, bool flipped) {
  return canonical_bit != flipped;
}

/// Multiplicities of canonical types, with their column positions in order.
class TypeCensus {
public:
  struct Entry {
    CanonicalType type;
    std::vector<std::size_t> occurrences;
    std::size_t count() const { return occurrences.size(); }
  };

  TypeCensus() = default;

  explicit TypeCensus(const PreferenceMatrix &m) : n_(m.n_agents()) {
    for (std::size_t j = 0; j < m.n_decisions(); ++j) {
      const CanonicalForm cf = canonicalize(m.column(j), n_);
      auto [it, inserted] = entries_.try_emplace(cf.type.bits);
      if (inserted)
        it->second.type = cf.type;
      it->second.occurrences.push_back(j);
    }
  }

  std::size_t n_agents() const { return n_; }
  const std::map<AgentMask, Entry> &entries() const { return entries_; }

  std::size_t count(AgentMask canonical_bits) const {
    auto it = entries_.find(canonical_bits);
    return it == entries_.end() ? 0 : it->second.count();
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto &[bits, e] : entries_)
      t += e.count();
    return t;
  }

  /// C: number of unanimous decisions.
  std::size_t consensus() const { return count(0); }

  /// Decisions where `agent` alone opposes everyone else (delta_i for n=3,
  /// alpha_i for n=4).
  std::size_t lone_minority(std::size_t agent) const {
    check(agent);
    return count(canonical_of(AgentMask{1} << agent));
  }
  std::size_t delta(std::size_t agent) const {
    require_n(3);
    return lone_minority(agent);
  }
  std::size_t alpha(std::size_t agent) const {
    require_n(4);
    return lone_minority(agent);
  }

  /// n=4 ambiguous type t_j: agent j (1..3, 0-based) sides with agent 1.
  std::size_t tie(std::size_t partner) const {
    require_n(4);
    if (partner == 0 || partner >= 4)
      throw InvalidArgument("ambiguous types are indexed by agents 2..4");
    return count(tie_bits(partner));
  }

  static AgentMask tie_bits(std::size_t partner) {
    return full_mask(4) & ~(AgentMask{1} | (AgentMask{1} << partner));
  }

  /// delta = total number of non-consensus decisions.
  std::size_t non_consensus() const { return total() - consensus(); }

private:
  AgentMask canonical_of(AgentMask column) const {
    return canonicalize(column, n_).type.bits;
  }
  void check(std::size_t agent) const {
    if (agent >= n_)
      throw InvalidArgument("agent " + std::to_string(agent + 1) +
                            " out of range");
  }
  void require_n(std::size_t n) const {
    if (n_ != n)
      throw InvalidArgument("this census view needs n=" + std::to_string(n));
  }

  std::size_t n_ = 0;
  std::map<AgentMask, Entry> entries_;
};

inline TypeCensus type_census(const PreferenceMatrix &m) { return TypeCensus(m); }

} // namespace pvmms

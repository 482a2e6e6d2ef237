#pragma once

/*! \file
 *  \brief Instance generators and the staged adaptive adversary against
 *  online rules with n >= 7 agents.
 *
 *  Columns produced here put the minority on bit 0 and the majority on
 *  bit 1, matching the printed stage matrices. Agents are 0-based in the
 *  API; agent 0 is the distinguished "agent 1" of the construction.
 */

#include <algorithm>
#include <bit>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pvmms/io.hpp"
#include "pvmms/model.hpp"
#include "pvmms/rules.hpp"
#include "pvmms/shares.hpp"

namespace pvmms {

/// Column where exactly the agents in `minority` prefer 0.
inline AgentMask minority_column(std::size_t n, std::initializer_list<std::size_t> minority) {
  AgentMask col = full_mask(n);
  for (std::size_t a : minority) {
    if (a >= n)
      throw InvalidArgument("agent " + std::to_string(a + 1) + " out of range");
    col &= ~(AgentMask{1} << a);
  }
  return col;
}

inline AgentMask minority_of(AgentMask column, std::size_t n) {
  const CanonicalForm cf = canonicalize(column, n);
  return cf.type.minority;
}

// ---------------------------------------------------------------------------
// Stage matrices

/// S_1: column i (1-based, i < n) has minority {1, i+1}; column n has {1}.
inline std::vector<AgentMask> gen_stage1(std::size_t n) {
  if (n < 3)
    throw InvalidArgument("stage 1 needs n >= 3");
  std::vector<AgentMask> cols;
  for (std::size_t i = 1; i < n; ++i)
    cols.push_back(minority_column(n, {0, i}));
  cols.push_back(minority_column(n, {0}));
  return cols;
}

namespace detail {

inline void check_roles(std::size_t n, std::size_t ell, std::size_t mu) {
  if (n < 7)
    throw InvalidArgument("the staged construction needs n >= 7, got n=" +
                          std::to_string(n));
  if (ell >= n || mu >= n || ell == 0 || mu == 0 || ell == mu)
    throw InvalidArgument("agents 1, l and mu must be distinct and in range");
}

} // namespace detail

/// S_2: n-3 columns with minority {mu, j} for j outside {1, l, mu}, then
/// {mu} alone, then {mu, 1}.
inline std::vector<AgentMask> gen_stage2(std::size_t n, std::size_t ell, std::size_t mu) {
  detail::check_roles(n, ell, mu);
  std::vector<AgentMask> cols;
  for (std::size_t j = 1; j < n; ++j)
    if (j != ell && j != mu)
      cols.push_back(minority_column(n, {mu, j}));
  cols.push_back(minority_column(n, {mu}));
  cols.push_back(minority_column(n, {mu, 0}));
  return cols;
}

struct Stage3 {
  std::vector<AgentMask> a; ///< minority {1, j} for j outside {1, l, mu}
  std::vector<AgentMask> b; ///< column i has minority {1, i+1}; fed n-1 times
};

inline Stage3 gen_stage3(std::size_t n, std::size_t ell, std::size_t mu) {
  detail::check_roles(n, ell, mu);
  Stage3 s;
  for (std::size_t j = 1; j < n; ++j)
    if (j != ell && j != mu)
      s.a.push_back(minority_column(n, {0, j}));
  for (std::size_t i = 1; i < n; ++i)
    s.b.push_back(minority_column(n, {0, i}));
  return s;
}

// ---------------------------------------------------------------------------
// Certificates

struct ViolationCertificate {
  PreferenceMatrix instance;
  RuleTranscript transcript;
  std::size_t victim = 0;
  Partition witness;
  std::size_t guarantee = 0;
  std::size_t achieved = 0;
  std::string witness_kind;
};

inline json to_json(const ViolationCertificate &c) {
  return json{{"instance", to_text(c.instance)},
              {"decisions", c.transcript.outcome().to_string()},
              {"victim", c.victim + 1},
              {"witness", to_json(c.witness)},
              {"witness_kind", c.witness_kind},
              {"guarantee", c.guarantee},
              {"achieved", c.achieved}};
}

/// Reads the JSON form back; the transcript keeps only columns and bits.
inline ViolationCertificate certificate_from_json(const json &j) {
  for (const char *key : {"instance", "decisions", "victim", "witness", "guarantee",
                          "achieved"})
    if (!j.contains(key))
      throw InvalidArgument(std::string("certificate is missing '") + key + "'");
  if (!j["instance"].is_string() || !j["decisions"].is_string() ||
      !j["victim"].is_number_unsigned() || !j["guarantee"].is_number_unsigned() ||
      !j["achieved"].is_number_unsigned())
    throw InvalidArgument("certificate fields have the wrong JSON types");
  ViolationCertificate c;
  c.instance = parse_matrix(j["instance"].get<std::string>());
  const Outcome a = Outcome::from_string(j["decisions"].get<std::string>());
  if (a.size() != c.instance.n_decisions())
    throw InvalidArgument("certificate decisions do not match the instance length");
  const auto victim = j["victim"].get<std::size_t>();
  if (victim == 0)
    throw InvalidArgument("victim is 1-based");
  c.victim = victim - 1;
  c.witness = partition_from_json(j["witness"]);
  c.guarantee = j["guarantee"].get<std::size_t>();
  c.achieved = j["achieved"].get<std::size_t>();
  if (j.contains("witness_kind") && j["witness_kind"].is_string())
    c.witness_kind = j["witness_kind"].get<std::string>();
  c.transcript.rule = "recorded";
  c.transcript.n_agents = c.instance.n_agents();
  for (std::size_t k = 0; k < a.size(); ++k)
    c.transcript.entries.push_back(
        {c.instance.column(k), canonicalize(c.instance.column(k), c.instance.n_agents()).type.bits,
         0, a[k]});
  c.transcript.utilities = utilities(c.instance, a);
  return c;
}

// ---------------------------------------------------------------------------
// Attack

enum class AttackStage { I1, I2, II1, II2, IIIa, IIIb, Done };

inline std::string to_string(AttackStage s) {
  switch (s) {
  case AttackStage::I1: return "I1";
  case AttackStage::I2: return "I2";
  case AttackStage::II1: return "II1";
  case AttackStage::II2: return "II2";
  case AttackStage::IIIa: return "III-a";
  case AttackStage::IIIb: return "III-b";
  case AttackStage::Done: return "done";
  }
  return "?";
}

struct AttackState {
  AttackStage stage = AttackStage::I1;
  std::optional<std::size_t> t;    ///< 1-based step of the first minority decision in S_1
  std::optional<std::size_t> tau;  ///< 1-based step of the first minority decision in S_2
  std::optional<std::size_t> ell;  ///< second minority agent at step t
  std::optional<std::size_t> mu;
  std::optional<std::size_t> mu_prime;
  /// Majority decisions per canonical type (keyed by canonical bits).
  std::map<AgentMask, std::size_t> majority_count;
  std::vector<AgentMask> columns;
  std::vector<std::uint8_t> bits;
  /// Repeated group id per fed column, or -1 for a loose column.
  std::vector<long> group;
};

struct AttackResult {
  std::optional<ViolationCertificate> certificate;
  AttackState state;
  std::string note; ///< why the script ended without a certificate
};

struct AttackOptions {
  bool check_all_stages = false; ///< also check during stage I1
};

namespace detail {

class Attack {
public:
  Attack(OnlineDecider &rule, std::size_t n, AttackOptions opts)
      : rule_(rule), n_(n), opts_(opts), cap_(4 * n * n) {}

  AttackResult run() {
    if (n_ < 7)
      throw InvalidArgument("the staged adversary needs n >= 7, got n=" +
                            std::to_string(n_));
    if (rule_.n_agents() != n_)
      throw InvalidArgument("rule is configured for a different agent count");
    if (stage1() || stage2() || stage3())
      return finish();
    st_.stage = AttackStage::Done;
    return finish();
  }

private:
  AttackResult finish() {
    AttackResult r;
    r.certificate = cert_;
    r.state = st_;
    if (!cert_)
      r.note = note_.empty() ? "script completed without a violated witness" : note_;
    return r;
  }

  // Feeds one column; returns true when a certificate has been found.
  bool feed(AgentMask col, long group, bool check) {
    if (st_.columns.size() >= cap_) {
      note_ = "column cap of " + std::to_string(cap_) + " reached";
      return true;
    }
    const bool bit = rule_.decide(col);
    st_.columns.push_back(col);
    st_.bits.push_back(bit ? 1 : 0);
    st_.group.push_back(group);
    const CanonicalForm cf = canonicalize(col, n_);
    if (cf.type.kind == TypeKind::Split && bit == orient(cf.type.majority_bit(), cf.flipped))
      ++st_.majority_count[cf.type.bits];
    last_bit_ = bit;
    if (check)
      return search();
    return false;
  }

  bool minority_decided(AgentMask col) const {
    const CanonicalForm cf = canonicalize(col, n_);
    return last_bit_ != orient(cf.type.majority_bit(), cf.flipped);
  }

  bool capped() const { return !note_.empty(); }

  bool stage1() {
    st_.stage = AttackStage::I1;
    const auto s1 = gen_stage1(n_);
    for (std::size_t i = 0; i < s1.size(); ++i) {
      if (feed(s1[i], -1, opts_.check_all_stages))
        return true;
      if (minority_decided(s1[i])) {
        st_.t = i + 1;
        if (i + 1 < n_)
          st_.ell = i + 1;
        break;
      }
    }
    if (!st_.t) {
      if (!search())
        note_ = "stage I1 passed through without a violation";
      return true;
    }

    st_.stage = AttackStage::I2;
    for (std::size_t i = 0; i + 1 < *st_.t; ++i) {
      const long g = static_cast<long>(i);
      st_.group[i] = g;
      for (std::size_t c = 0; c + 1 < n_; ++c)
        if (feed(s1[i], g, true))
          return true;
    }
    return search();
  }

  bool stage2() {
    st_.stage = AttackStage::II1;
    const std::size_t one = 0;
    std::size_t mu = 1;
    while (mu == one || (st_.ell && mu == *st_.ell))
      ++mu;
    st_.mu = mu;
    std::size_t ell_role = st_.ell ? *st_.ell : 1;
    while (ell_role == one || ell_role == mu)
      ++ell_role;
    ell_role_ = ell_role;
    const auto s2 = gen_stage2(n_, ell_role, mu);
    std::vector<std::size_t> seeds;
    for (std::size_t i = 0; i < s2.size(); ++i) {
      const std::size_t at = st_.columns.size();
      if (feed(s2[i], -1, true))
        return true;
      if (minority_decided(s2[i])) {
        st_.tau = i + 1;
        const AgentMask minority = minority_of(s2[i], n_) & ~(AgentMask{1} << mu);
        if (minority)
          st_.mu_prime = static_cast<std::size_t>(std::countr_zero(minority));
        break;
      }
      seeds.push_back(at);
    }
    if (!st_.tau) {
      note_ = "stage II1 ended without a minority decision or violation";
      return true;
    }
    st_.stage = AttackStage::II2;
    for (std::size_t at : seeds) {
      const long g = next_group_++;
      st_.group[at] = g;
      for (std::size_t c = 0; c + 1 < n_; ++c)
        if (feed(st_.columns[at], g, true))
          return true;
    }
    return false;
  }

  bool stage3() {
    const auto s3 = gen_stage3(n_, ell_role_, *st_.mu);
    st_.stage = AttackStage::IIIa;
    for (AgentMask col : s3.a)
      if (feed(col, -1, true))
        return true;
    st_.stage = AttackStage::IIIb;
    for (std::size_t cycle = 0; cycle + 1 < n_; ++cycle)
      for (AgentMask col : s3.b)
        if (feed(col, -1, true))
          return true;
    return false;
  }

  // Witness catalog over the current log, in a fixed order.
  std::vector<std::pair<std::string, Partition>> witnesses() const {
    const std::size_t m = st_.columns.size();
    std::vector<std::pair<std::string, Partition>> out;
    auto empty = [&] { return Partition{std::vector<std::vector<std::size_t>>(n_)}; };

    Partition single = empty();
    for (std::size_t j = 0; j < m; ++j)
      single.bundles[j % n_].push_back(j);
    out.emplace_back("singletons", single);

    // Repeated groups: r-th member of a group goes to bundle r.
    Partition grouped = empty();
    std::map<long, std::size_t> member;
    std::vector<std::size_t> loose;
    for (std::size_t j = 0; j < m; ++j) {
      if (st_.group[j] >= 0)
        grouped.bundles[member[st_.group[j]]++ % n_].push_back(j);
      else
        loose.push_back(j);
    }

    Partition by_type = grouped;
    std::map<AgentMask, std::size_t> seen;
    for (std::size_t j : loose) {
      const AgentMask type = canonicalize(st_.columns[j], n_).type.bits;
      by_type.bundles[seen[type]++ % n_].push_back(j);
    }
    out.emplace_back("groups+loose-by-type", by_type);

    Partition together = grouped;
    for (std::size_t j : loose)
      together.bundles[0].push_back(j);
    out.emplace_back("groups+loose-together", together);

    Partition spread = grouped;
    for (std::size_t k = 0; k < loose.size(); ++k)
      spread.bundles[k % n_].push_back(loose[k]);
    out.emplace_back("groups+loose-spread", spread);

    Partition global = empty();
    std::map<AgentMask, std::size_t> occ;
    for (std::size_t j = 0; j < m; ++j) {
      const AgentMask type = canonicalize(st_.columns[j], n_).type.bits;
      global.bundles[occ[type]++ % n_].push_back(j);
    }
    out.emplace_back("by-type", global);

    for (auto &[name, p] : out)
      for (auto &b : p.bundles)
        std::sort(b.begin(), b.end());
    return out;
  }

  bool search() {
    const PreferenceMatrix m(n_, st_.columns);
    const Outcome a(st_.bits);
    const auto u = utilities(m, a);
    const auto cands = witnesses();
    for (std::size_t agent = 0; agent < n_; ++agent)
      for (const auto &[name, p] : cands) {
        const auto g = static_cast<std::size_t>(
            min_assignment_dp(bundle_agreement_table(m, agent, p), n_));
        if (g > u[agent]) {
          ViolationCertificate c;
          c.instance = m;
          c.transcript = make_transcript("attacked", m, a, rule_.counters());
          c.victim = agent;
          c.witness = p;
          c.guarantee = g;
          c.achieved = u[agent];
          c.witness_kind = name;
          cert_ = std::move(c);
          return true;
        }
      }
    return false;
  }

  OnlineDecider &rule_;
  std::size_t n_;
  AttackOptions opts_;
  std::size_t cap_;
  AttackState st_;
  std::optional<ViolationCertificate> cert_;
  std::string note_;
  bool last_bit_ = false;
  long next_group_ = 1L << 20;
  std::size_t ell_role_ = 1;
};

} // namespace detail

/// Runs the staged script against `rule` and returns the first violated
/// witness, or a report when none was found.
inline AttackResult adaptive_attack(OnlineDecider &rule, std::size_t n,
                                    AttackOptions opts = {}) {
  return detail::Attack(rule, n, opts).run();
}

inline AttackResult adaptive_attack(const RuleKind &kind, std::size_t n,
                                    AttackOptions opts = {}) {
  if (timing(kind) != RuleTiming::Online)
    throw InvalidArgument(rule_name(kind) + " is not an online rule");
  if (n < 7)
    throw InvalidArgument("the staged adversary needs n >= 7, got n=" + std::to_string(n));
  auto d = make_online_decider(kind, n);
  AttackResult r = adaptive_attack(*d, n, opts);
  if (r.certificate)
    r.certificate->transcript.rule = rule_name(kind);
  return r;
}

inline json to_json(const AttackResult &r) {
  json state{{"stage", to_string(r.state.stage)},
             {"columns_fed", r.state.columns.size()}};
  auto opt = [](const std::optional<std::size_t> &v, std::size_t shift) -> json {
    return v ? json(*v + shift) : json(nullptr);
  };
  state["t"] = opt(r.state.t, 0);
  state["tau"] = opt(r.state.tau, 0);
  state["l"] = opt(r.state.ell, 1);
  state["mu"] = opt(r.state.mu, 1);
  state["mu_prime"] = opt(r.state.mu_prime, 1);
  if (r.certificate)
    return json{{"result", "certificate"}, {"certificate", to_json(*r.certificate)},
                {"state", state}};
  return json{{"result", "exhausted"}, {"note", r.note}, {"state", state}};
}

// ---------------------------------------------------------------------------
// Example instances

struct NamedInstance {
  std::string name;
  PreferenceMatrix matrix;
  std::string claim; ///< the share facts the construction is built to show
};

namespace four_agent {

/// Tie type t_j: agent j (0-based partner 1..3) sides with agent 1 on 0.
inline AgentMask tie(std::size_t partner) { return TypeCensus::tie_bits(partner); }
/// alpha_i: agent i alone prefers 0.
inline AgentMask alpha(std::size_t agent) { return minority_column(4, {agent}); }

} // namespace four_agent

/// The n=4 instances used against graceful sequences.
inline std::vector<NamedInstance> gen_graceful_cap_instances() {
  using four_agent::alpha;
  using four_agent::tie;
  auto mk = [](std::vector<AgentMask> cols) { return PreferenceMatrix(4, std::move(cols)); };
  return {
      {"ambiguous-triple", mk({tie(1), tie(2), tie(3)}), "MMS_i >= 1 for every agent"},
      {"alpha2-heavy",
       mk({tie(1), tie(1), tie(2), tie(3), alpha(1), alpha(1), alpha(1)}),
       "MMS_2 >= 2"},
      {"t2-t2-t3-alpha4", mk({tie(1), tie(1), tie(2), alpha(3)}), "MMS_4 >= 1"},
      {"alpha4-t3-t4", mk({alpha(3), tie(2), tie(3)}), "MMS_2 >= 1"},
      {"final-45",
       mk({alpha(2), alpha(2), alpha(2), alpha(3), alpha(3), alpha(3), tie(2), tie(3)}),
       "MMS_2 >= 5"},
  };
}

inline NamedInstance find_instance(const std::vector<NamedInstance> &all,
                                   const std::string &name) {
  for (const auto &i : all)
    if (i.name == name)
      return i;
  throw InvalidArgument("unknown instance '" + name + "'");
}

inline std::size_t mnw_gap_k(std::size_t n) { return n * (n - 3) / 2; }

/// n+1 agents. Each agent 2..n+1 is the sole minority on n+1 columns; agent 1
/// is in the minority on k(n+1) columns, shared in three equal blocks with
/// each third of the others.
inline PreferenceMatrix gen_mnw_gap(std::size_t n) {
  if (n < 9 || n % 3 != 0 || n % 2 != 1)
    throw InvalidArgument("gap instance needs n >= 9, n divisible by 3 and odd; got n=" +
                          std::to_string(n));
  const std::size_t agents = n + 1;
  const std::size_t k = mnw_gap_k(n);
  std::vector<AgentMask> cols;
  for (std::size_t i = 1; i < agents; ++i)
    for (std::size_t c = 0; c < agents; ++c)
      cols.push_back(minority_column(agents, {i}));
  const std::size_t third = n / 3;
  for (std::size_t b = 0; b < 3; ++b) {
    AgentMask col = full_mask(agents) & ~AgentMask{1};
    for (std::size_t i = 1 + b * third; i < 1 + (b + 1) * third; ++i)
      col &= ~(AgentMask{1} << i);
    for (std::size_t c = 0; c < k * agents / 3; ++c)
      cols.push_back(col);
  }
  return PreferenceMatrix(agents, std::move(cols));
}

inline PreferenceMatrix all_consensus(std::size_t n, std::size_t m) {
  return PreferenceMatrix(n, std::vector<AgentMask>(m, full_mask(n)));
}

/// Agent 1 prefers 0 everywhere, everyone else prefers 1.
inline PreferenceMatrix all_opposed(std::size_t n, std::size_t m) {
  return PreferenceMatrix(n, std::vector<AgentMask>(m, full_mask(n) & ~AgentMask{1}));
}

inline PreferenceMatrix jr_vs_mms() {
  return PreferenceMatrix::from_rows({"110110110", "111111111", "001001001"});
}

inline PreferenceMatrix mms_vs_rds() {
  return PreferenceMatrix::from_rows({"11", "10", "01", "00"});
}

/// n=3, m=15: agent 1 alone on 9 columns, agents 2 and 3 alone on 3 each.
inline PreferenceMatrix sec4_example() {
  return PreferenceMatrix::from_rows(
      {"000000000111111", "111111111000111", "111111111111000"});
}

inline std::vector<NamedInstance> gen_named_examples() {
  return {
      {"jr-vs-mms", jr_vs_mms(), "MMS = (5, 6, 4)"},
      {"mms-vs-rds", mms_vs_rds(), "MMS = 0 and RDS = 1 for every agent"},
      {"sec4-example", sec4_example(), "MMS = (7, 9, 9); majority gives (6, 12, 12)"},
  };
}

} // namespace pvmms

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "pvmms/adversary.hpp"
#include "pvmms/rules.hpp"
#include "pvmms/verify.hpp"

using namespace pvmms;

namespace {

std::vector<RuleKind> rules_for(std::size_t n) {
  std::vector<RuleKind> r{Majority{}, AlwaysZero{}, AlwaysMinority{},
                          Graceful{ptrr_generalized_map(n)}, MaxNashWelfare{}};
  if (n == 3) {
    r.push_back(PerTypeRoundRobin3{});
    r.push_back(MuffledMajority3{});
    r.push_back(MuffledArranged3{});
  }
  if (n == 4) {
    r.push_back(DeferredAmbiguity4{});
    r.push_back(Graceful{rho_star_map()});
  }
  return r;
}

std::vector<std::size_t> run_utilities(const RuleKind &k, const PreferenceMatrix &m) {
  return utilities(m, run_rule(k, m).outcome);
}

/// Lexicographically smallest outcome with the largest Nash key.
Outcome brute_mnw(const PreferenceMatrix &m) {
  const std::size_t k = m.n_decisions();
  std::optional<NashKey> best;
  Outcome arg;
  for (std::uint64_t x = 0; x < (std::uint64_t{1} << k); ++x) {
    std::vector<std::uint8_t> bits(k);
    for (std::size_t j = 0; j < k; ++j)
      bits[j] = (x >> (k - 1 - j)) & 1;
    const Outcome o(bits);
    const NashKey key = NashKey::of(utilities(m, o));
    if (!best || *best < key) {
      best = key;
      arg = o;
    }
  }
  return arg;
}

} // namespace

TEST(Steps, MajorityBit) {
  EXPECT_TRUE(majority_bit(0b011, 3));
  EXPECT_FALSE(majority_bit(0b001, 3));
  EXPECT_FALSE(majority_bit(0b0011, 4));
  EXPECT_TRUE(majority_bit(0b0111, 4));
}

TEST(Steps, RoundRobinPattern) {
  EXPECT_EQ(per_type_round_robin_step(0), Side::Maj);
  EXPECT_EQ(per_type_round_robin_step(1), Side::Maj);
  EXPECT_EQ(per_type_round_robin_step(2), Side::Min);
  EXPECT_EQ(per_type_round_robin_step(5), Side::Min);
}

TEST(Rules, RoundRobinOnExample) {
  const auto m = jr_vs_mms();
  const RunResult r = run_rule(PerTypeRoundRobin3{}, m);
  EXPECT_EQ(r.outcome.to_string(), "111011100");
  EXPECT_EQ(r.transcript.utilities, (std::vector<std::size_t>{5, 6, 4}));
  EXPECT_EQ(run_rule(Graceful{ptrr3_map()}, m).outcome, r.outcome);
}

TEST(Rules, Names) {
  EXPECT_EQ(rule_name(Majority{}), "majority");
  EXPECT_EQ(rule_name(PerTypeRoundRobin3{}), "ptrr3");
  EXPECT_EQ(rule_name(MuffledMajority3{}), "muffled3");
  EXPECT_EQ(rule_name(DeferredAmbiguity4{}), "deferred4");
  EXPECT_EQ(rule_name(MaxNashWelfare{}), "mnw");
  EXPECT_EQ(rule_name(AlwaysZero{}), "always0");
  EXPECT_EQ(rule_name(AlwaysMinority{}), "minority");
}

TEST(Rules, AgentCountChecks) {
  EXPECT_THROW(run_rule(PerTypeRoundRobin3{}, mms_vs_rds()), InvalidArgument);
  EXPECT_THROW(run_rule(DeferredAmbiguity4{}, jr_vs_mms()), InvalidArgument);
  EXPECT_THROW(run_rule(MuffledMajority3{}, mms_vs_rds()), InvalidArgument);
  EXPECT_THROW(make_online_decider(MaxNashWelfare{}, 3), InvalidArgument);
  EXPECT_THROW(make_online_decider(MuffledMajority3{}, 3), InvalidArgument);
}

TEST(Rules, AlwaysRules) {
  const auto m = jr_vs_mms();
  EXPECT_EQ(run_rule(AlwaysZero{}, m).outcome.to_string(), "000000000");
  // minority side of every column
  const auto u = run_utilities(AlwaysMinority{}, m);
  EXPECT_EQ(u, (std::vector<std::size_t>{3, 0, 6}));
}

TEST(GracefulMapText, Parses) {
  const auto g = GracefulMap::parse("# three agents\n001 MAJ,MAJ,MIN\n\n011 MIN,MAJ,MAJ\n", 3);
  EXPECT_EQ(g.table.size(), 2u);
  EXPECT_EQ(g.to_text(), "001 MAJ,MAJ,MIN\n011 MIN,MAJ,MAJ\n");
  EXPECT_EQ(GracefulMap::parse(g.to_text(), 3).table, g.table);
}

TEST(GracefulMapText, Rejects) {
  auto line_of = [](const std::string &text, std::size_t n) {
    try {
      GracefulMap::parse(text, n);
    } catch (const ParseError &e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("001 MAJ,MIN\n", 3), 1u);
  EXPECT_EQ(line_of("001 MAJ,MAJ,MIN\n001 MAJ,MAJ,MIN\n", 3), 2u);
  EXPECT_EQ(line_of("001 MAJ,MAJ,FOO\n", 3), 1u);
  EXPECT_EQ(line_of("101 MAJ,MAJ,MIN\n", 3), 1u);
  EXPECT_EQ(line_of("01 MAJ,MAJ,MIN\n", 3), 1u);
  EXPECT_NE(line_of("0011 MAJ,MAJ,MAJ,MIN\n", 4), 0u); // tie type needs CANON/ANTI
  EXPECT_NE(line_of("0001 CANON,ANTI,CANON,ANTI\n", 4), 0u);
  EXPECT_NE(line_of("000 MAJ,MAJ,MIN\n", 3), 0u);
  EXPECT_NE(line_of("001MAJ\n", 3), 0u);
}

TEST(GracefulMapText, MissingTypeIsAnError) {
  const auto g = GracefulMap::parse("001 MAJ,MAJ,MIN\n", 3);
  const auto m = PreferenceMatrix::from_rows({"0", "1", "0"});
  EXPECT_THROW(run_rule(Graceful{g}, m), InvalidArgument);
}

TEST(Online, DecisionsDependOnlyOnThePast) {
  std::mt19937_64 rng(41);
  for (std::size_t n = 3; n <= 5; ++n)
    for (const auto &k : rules_for(n)) {
      if (timing(k) != RuleTiming::Online)
        continue;
      for (int it = 0; it < 20; ++it) {
        const auto m = oracle::random_matrix(rng, n, 1 + rng() % 12);
        const std::string full = run_rule(k, m).outcome.to_string();
        const std::size_t cut = rng() % (m.n_decisions() + 1);
        EXPECT_EQ(run_rule(k, m.prefix(cut)).outcome.to_string(), full.substr(0, cut))
            << rule_name(k);
      }
    }
}

TEST(Online, GracefulDecisionsFollowTypeCounters) {
  // Interleaving types differently leaves each column's decision unchanged.
  std::mt19937_64 rng(43);
  for (std::size_t n = 3; n <= 5; ++n) {
    std::vector<RuleKind> ks{Graceful{ptrr_generalized_map(n)}, Majority{}};
    if (n == 3)
      ks.push_back(PerTypeRoundRobin3{});
    for (const auto &k : ks)
      for (int it = 0; it < 20; ++it) {
        const auto m = oracle::random_matrix(rng, n, 2 + rng() % 12);
        std::vector<std::size_t> order(m.n_decisions());
        for (std::size_t j = 0; j < order.size(); ++j)
          order[j] = j;
        std::shuffle(order.begin(), order.end(), rng);
        // restore each type's internal order
        const TypeCensus census(m);
        std::map<AgentMask, std::size_t> used;
        std::vector<std::size_t> stable(order.size());
        for (std::size_t p = 0; p < order.size(); ++p) {
          const AgentMask t = canonicalize(m.column(order[p]), n).type.bits;
          stable[p] = census.entries().at(t).occurrences[used[t]++];
        }
        std::vector<AgentMask> cols;
        for (std::size_t j : stable)
          cols.push_back(m.column(j));
        const Outcome a = run_rule(k, m).outcome;
        const Outcome b = run_rule(k, PreferenceMatrix(n, cols)).outcome;
        for (std::size_t p = 0; p < stable.size(); ++p)
          EXPECT_EQ(b[p], a[stable[p]]) << rule_name(k);
      }
  }
}

TEST(Replay, DeterministicAndTamperEvident) {
  std::mt19937_64 rng(47);
  for (std::size_t n = 3; n <= 4; ++n)
    for (const auto &k : rules_for(n)) {
      const auto m = oracle::random_matrix(rng, n, 1 + rng() % 8);
      const RunResult a = run_rule(k, m);
      const RunResult b = run_rule(k, m);
      EXPECT_EQ(a.outcome, b.outcome);
      EXPECT_EQ(to_json(a.transcript), to_json(b.transcript));
      EXPECT_TRUE(replay_matches(k, a.transcript)) << rule_name(k);
      RuleTranscript bad = a.transcript;
      bad.entries.back().bit = !bad.entries.back().bit;
      EXPECT_FALSE(replay_matches(k, bad)) << rule_name(k);
    }
}

TEST(Traits, CensusInvariantRulesIgnoreOrderAndOrientation) {
  std::mt19937_64 rng(53);
  for (std::size_t n = 3; n <= 5; ++n)
    for (const auto &k : rules_for(n)) {
      if (!census_invariant(k, n))
        continue;
      for (int it = 0; it < 40; ++it) {
        const auto m = oracle::random_matrix(rng, n, rng() % 10);
        auto cols = m.columns();
        std::shuffle(cols.begin(), cols.end(), rng);
        for (auto &c : cols)
          if (rng() % 2)
            c = ~c & full_mask(n);
        EXPECT_EQ(run_utilities(k, m), run_utilities(k, PreferenceMatrix(n, cols)))
            << rule_name(k) << "\n" << to_text(m);
      }
    }
}

TEST(Traits, NegationEquivariantRulesIgnoreOrientation) {
  std::mt19937_64 rng(59);
  for (std::size_t n = 3; n <= 5; ++n)
    for (const auto &k : rules_for(n)) {
      if (!negation_equivariant(k, n))
        continue;
      for (int it = 0; it < 40; ++it) {
        const auto m = oracle::random_matrix(rng, n, rng() % 10);
        auto cols = m.columns();
        std::vector<bool> flip(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j)
          if ((flip[j] = rng() % 2))
            cols[j] = ~cols[j] & full_mask(n);
        const Outcome a = run_rule(k, m).outcome;
        const Outcome b = run_rule(k, PreferenceMatrix(n, cols)).outcome;
        for (std::size_t j = 0; j < cols.size(); ++j)
          EXPECT_EQ(b[j], a[j] != flip[j]) << rule_name(k);
      }
    }
}

TEST(Traits, ClaimsAreWithheldWhereTheyFail) {
  // Even n: majority breaks ties towards 0, so orientation matters.
  const auto tie = PreferenceMatrix::from_rows({"0", "0", "1", "1"});
  const auto flipped = PreferenceMatrix::from_rows({"1", "1", "0", "0"});
  EXPECT_NE(run_utilities(Majority{}, tie), run_utilities(Majority{}, flipped));
  EXPECT_FALSE(census_invariant(Majority{}, 4));
  EXPECT_FALSE(negation_equivariant(Majority{}, 4));
  const auto a = PreferenceMatrix::from_rows({"0"});
  const auto b = PreferenceMatrix::from_rows({"1"});
  EXPECT_NE(run_utilities(AlwaysZero{}, a), run_utilities(AlwaysZero{}, b));
  EXPECT_FALSE(negation_equivariant(AlwaysZero{}, 3));
  // Muffled majority reacts to the order of decisions.
  const auto m1 = PreferenceMatrix::from_rows({"00000", "00111", "00000"});
  const auto m2 = PreferenceMatrix::from_rows({"00000", "11100", "00000"});
  EXPECT_NE(run_utilities(MuffledMajority3{}, m1), run_utilities(MuffledMajority3{}, m2));
  EXPECT_FALSE(census_invariant(MuffledMajority3{}, 3));
}

TEST(Muffled, GuaranteesHalfOfTheDecisions) {
  std::mt19937_64 rng(61);
  for (int it = 0; it < 500; ++it) {
    const auto m = oracle::random_matrix(rng, 3, rng() % 16);
    for (std::size_t u : run_utilities(MuffledMajority3{}, m))
      ASSERT_GE(u, m.n_decisions() / 2) << to_text(m);
  }
}

TEST(Muffled, StepFollowsUnsatisfiedAgents) {
  MuffledState st{{0, 2, 2}, 2};
  // only agent 1 is unsatisfied and gets its way
  EXPECT_FALSE(muffled_majority_step(st, 0b110));
  EXPECT_EQ(st.score, (std::vector<std::size_t>{1, 2, 2}));
  MuffledState all{{2, 2, 2}, 2};
  EXPECT_TRUE(muffled_majority_step(all, 0b110));
}

TEST(Muffled, ArrangedRunsContestedDecisionsFirst) {
  const auto m = PreferenceMatrix::from_rows({"00000", "00111", "00000"});
  const ArrangedResult r = muffled_arranged(m);
  EXPECT_EQ(r.weakest, 1u);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{2, 3, 4}));
  const auto u = utilities(m, r.outcome);
  EXPECT_GE(4 * u[1], 3 * mms_adapt(m, 1));
  // the plain online rule lets agent 2 fall to 2 out of a share of 3
  EXPECT_EQ(run_utilities(MuffledMajority3{}, m)[1], 2u);
}

TEST(Deferred, AllConsensus) {
  EXPECT_EQ(run_utilities(DeferredAmbiguity4{}, all_consensus(4, 5)),
            std::vector<std::size_t>(4, 5));
}

TEST(Deferred, RemovesLastOddTieAndPicksCompensatedAgent) {
  const auto inst = find_instance(gen_graceful_cap_instances(), "ambiguous-triple").matrix;
  const DeferredResult r = deferred_ambiguity(inst);
  EXPECT_EQ(r.deferred.size(), 3u);
  EXPECT_EQ(utilities(inst, r.outcome), (std::vector<std::size_t>{3, 1, 1, 1}));
  const TypeCensus c(inst);
  for (std::size_t j : r.deferred) {
    const auto t = canonicalize(inst.column(j), 4).type;
    EXPECT_EQ(t.kind, TypeKind::Tie);
    EXPECT_EQ(c.entries().at(t.bits).occurrences.back(), j);
  }
}

TEST(Deferred, EtaByHand) {
  // alpha = (2, 0, 1, 0), C = 1, two ties with agents 1 and 2 together
  const auto m = PreferenceMatrix::from_rows({"110001", "000001", "001111", "000111"});
  const TypeCensus c(m);
  ASSERT_EQ(c.alpha(0), 2u);
  ASSERT_EQ(c.alpha(2), 1u);
  ASSERT_EQ(c.tie(1), 2u);
  ASSERT_EQ(c.consensus(), 1u);
  const auto e = eta(c);
  EXPECT_EQ(e[0], Rational(1) + Rational(2, 4) + Rational(3, 4) + Rational(1));
  EXPECT_EQ(e[1], Rational(1) + Rational(6, 4) + Rational(3, 4) + Rational(1));
  EXPECT_EQ(e[2], Rational(1) + Rational(6, 4) + Rational(1, 4) + Rational(1));
}

TEST(Deferred, GracefulRunMatchesCountFormula) {
  std::mt19937_64 rng(67);
  for (int it = 0; it < 300; ++it) {
    auto m = oracle::random_matrix(rng, 4, rng() % 14);
    const DeferredResult r = deferred_ambiguity(m);
    std::vector<AgentMask> kept;
    for (std::size_t j = 0; j < m.n_decisions(); ++j)
      if (!std::binary_search(r.deferred.begin(), r.deferred.end(), j))
        kept.push_back(m.column(j));
    const auto formula = rho_star_utility_formula(TypeCensus(PreferenceMatrix(4, kept)));
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_EQ(Rational(static_cast<long>(r.reduced_utilities[i])), formula[i]);
  }
}

TEST(Deferred, MeetsMmsOnSmallCensus) {
  std::size_t seen = 0;
  detail::enumerate_instances(4, 5, Enumeration::Census, [&](const PreferenceMatrix &m) {
    ++seen;
    const auto u = run_utilities(DeferredAmbiguity4{}, m);
    const auto s = mms_adapt_all(m);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_GE(u[i], s[i]) << to_text(m);
    return false;
  });
  EXPECT_EQ(seen, 1287u);
}

TEST(Deferred, AtMostOneAgentBelowEta) {
  detail::enumerate_instances(4, 8, Enumeration::Census, [](const PreferenceMatrix &m) {
    EXPECT_NO_THROW(deferred_ambiguity(m)) << to_text(m);
    return false;
  });
}

// Two deferred ties, both against agent 4; nobody is strictly below eta, so
// agent 1 decides them and agent 4 stays at eta_4 = 2.
TEST(Deferred, TwoDeferredTiesCanFallShort) {
  const auto m = PreferenceMatrix::from_rows({"110111", "111110", "010011", "100000"});
  const DeferredResult r = deferred_ambiguity(m);
  EXPECT_EQ(r.deferred, (std::vector<std::size_t>{3, 5}));
  EXPECT_EQ(r.chosen, 0u);
  EXPECT_EQ(r.eta[3], Rational(2));
  EXPECT_EQ(utilities(m, r.outcome), (std::vector<std::size_t>{6, 4, 4, 2}));
  EXPECT_EQ(oracle::brute_mms(m, 3), 3u);
}

TEST(Mnw, ExampleEqualsMajority) {
  const auto m = sec4_example();
  EXPECT_EQ(mnw_outcome(m), run_rule(Majority{}, m).outcome);
}

TEST(Mnw, AgreesWithBruteForce) {
  std::mt19937_64 rng(71);
  for (int it = 0; it < 150; ++it) {
    const std::size_t n = 2 + rng() % 4;
    const auto m = oracle::random_matrix(rng, n, rng() % 11);
    const Outcome o = mnw_outcome(m);
    const Outcome b = brute_mnw(m);
    ASSERT_EQ(NashKey::of(utilities(m, o)), NashKey::of(utilities(m, b))) << to_text(m);
    ASSERT_EQ(o, b) << to_text(m);
  }
}

TEST(Mnw, AtLeastMajorityWelfare) {
  std::mt19937_64 rng(73);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 3 + rng() % 3;
    const auto m = oracle::random_matrix(rng, n, rng() % 14);
    EXPECT_FALSE(NashKey::of(run_utilities(MaxNashWelfare{}, m)) <
                 NashKey::of(run_utilities(Majority{}, m)));
  }
}

TEST(Mnw, BudgetIsEnforced) {
  SearchOptions tiny;
  tiny.node_budget = 3;
  EXPECT_THROW(mnw_outcome(sec4_example(), tiny), ResourceLimitError);
}

#pragma once

/*! \file
 *  \brief Command-line front end.
 *
 *  Exit codes: 0 success, 1 counterexample found / attack exhausted /
 *  certificate rejected, 2 usage or validation error, 3 search budget hit.
 *  Human output is one line per value list with an upper-case prefix;
 *  --json prints a single JSON document instead.
 */

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp" // vendored

#include "pvmms/adversary.hpp"
#include "pvmms/io.hpp"
#include "pvmms/rules.hpp"
#include "pvmms/shares.hpp"
#include "pvmms/verify.hpp"

namespace pvmms::cli {

enum ExitCode : int { kOk = 0, kFound = 1, kUsage = 2, kBudget = 3 };

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw InvalidArgument("cannot write " + path);
  f << text;
}

/// Rule names: majority, ptrr3, graceful:<mapfile>, ptrr-generalized,
/// muffled3, muffled3-arranged, deferred4, mnw, always0, minority.
inline RuleKind parse_rule(const std::string &name, std::size_t n) {
  if (name == "majority") return Majority{};
  if (name == "ptrr3") return PerTypeRoundRobin3{};
  if (name == "muffled3") return MuffledMajority3{};
  if (name == "muffled3-arranged") return MuffledArranged3{};
  if (name == "deferred4") return DeferredAmbiguity4{};
  if (name == "mnw") return MaxNashWelfare{};
  if (name == "always0") return AlwaysZero{};
  if (name == "minority") return AlwaysMinority{};
  if (name == "ptrr-generalized") return Graceful{ptrr_generalized_map(n)};
  if (name.rfind("graceful:", 0) == 0)
    return Graceful{GracefulMap::parse(read_file(name.substr(9)), n)};
  throw InvalidArgument("unknown rule '" + name + "'");
}

namespace detail {

inline std::string line(const std::string &prefix, const std::string &values) {
  return prefix + (values.empty() ? "" : " " + values) + "\n";
}

inline std::string rationals(const std::vector<Rational> &v) {
  std::vector<std::string> s;
  for (const auto &r : v)
    s.push_back(to_string(r));
  return join(s);
}

inline void print_audit(std::ostream &out, const AuditReport &a) {
  std::vector<std::size_t> util, mms;
  for (const auto &ag : a.agents) {
    util.push_back(ag.utility);
    mms.push_back(ag.mms_adapt);
  }
  out << line("UTILITIES", join_numbers(util)) << line("MMS", join_numbers(mms))
      << line("ALPHA_ADAPT", to_string(a.alpha_adapt))
      << line("ALPHA_EGAL", to_string(a.alpha_egal));
}

/// Bit string, or a transcript / certificate JSON carrying the decisions.
inline Outcome read_outcome(const std::string &text) {
  std::string t = text;
  const auto first = t.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && t[first] == '{') {
    const json j = json::parse(t);
    if (j.contains("decisions") && j["decisions"].is_string())
      return Outcome::from_string(j["decisions"].get<std::string>());
    if (j.contains("decisions") && j["decisions"].is_array()) {
      std::string bits;
      for (const auto &e : j["decisions"])
        bits += e.at("bit").get<int>() ? '1' : '0';
      return Outcome::from_string(bits);
    }
    if (j.contains("outcome") && j["outcome"].is_string())
      return Outcome::from_string(j["outcome"].get<std::string>());
    throw InvalidArgument("JSON outcome needs a 'decisions' or 'outcome' field");
  }
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back())))
    t.pop_back();
  return Outcome::from_string(t);
}

} // namespace detail

/// Runs one command line. `args` excludes the program name.
inline int run_cli(const std::vector<std::string> &args, std::ostream &out,
                   std::ostream &err) {
  CLI::App app{"Maxi-min shares and decision rules for perpetual binary voting", "pvmms"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "print JSON instead of prefixed lines");
  unsigned threads = 1;
  app.add_option("--threads", threads, "worker threads for exact searches")
      ->check(CLI::Range(1U, 256U));

  std::string input, rule_name_arg, transcript_path, out_path, outcome_path,
      certificate_path, which, share = "adapt", threshold_text = "1", verify_threshold;
  std::size_t agents = 0, max_decisions = 0, decisions = 0, sample = 0;
  std::size_t ell = 2, mu = 3;
  std::optional<std::uint64_t> seed;

  auto *shares = app.add_subcommand("shares", "MMS, egal share, RDS and bounds per agent");
  shares->add_option("--input", input, "instance file")->required();

  auto *run = app.add_subcommand("run", "run a rule and audit its outcome");
  run->add_option("--rule", rule_name_arg, "rule name")->required();
  run->add_option("--input", input, "instance file")->required();
  run->add_option("--transcript", transcript_path, "write the transcript JSON here");

  auto *verify = app.add_subcommand("verify", "audit an outcome or check a certificate");
  verify->add_option("--input", input, "instance file");
  auto *outcome_opt = verify->add_option("--outcome", outcome_path,
                                         "bit string, transcript or certificate file");
  auto *cert_opt =
      verify->add_option("--certificate", certificate_path, "certificate JSON file");
  outcome_opt->excludes(cert_opt);
  verify->add_option("--threshold", verify_threshold, "exit 1 when alpha_adapt is below");

  auto *attack = app.add_subcommand("attack", "run the staged adversary against a rule");
  attack->add_option("--rule", rule_name_arg, "online rule name")->required();
  attack->add_option("--agents", agents, "number of agents (>= 7)")->required();
  attack->add_option("--out", out_path, "write the certificate or report JSON here");

  auto *gen = app.add_subcommand("gen", "write a named instance");
  gen->add_option("--which", which, "instance name")->required();
  gen->add_option("--agents", agents, "number of agents");
  gen->add_option("--decisions", decisions, "number of decisions (uniform families)");
  gen->add_option("--l", ell, "1-based agent l for the staged columns");
  gen->add_option("--mu", mu, "1-based agent mu for the staged columns");
  gen->add_option("--out", out_path, "output file (stdout when omitted)");

  auto *search = app.add_subcommand("search", "look for an instance where a rule falls short");
  search->add_option("--rule", rule_name_arg, "rule name")->required();
  search->add_option("--agents", agents, "number of agents")->required();
  search->add_option("--max-decisions", max_decisions, "largest m")->required();
  search->add_option("--share", share, "adapt or egal")
      ->check(CLI::IsMember({"adapt", "egal"}));
  search->add_option("--threshold", threshold_text, "required fraction of the share");
  auto *sample_opt = search->add_option("--sample", sample, "random instances instead");
  auto *seed_opt = search->add_option("--seed", seed, "seed for --sample");
  sample_opt->needs(seed_opt);
  seed_opt->needs(sample_opt);
  search->add_option("--out", out_path, "write the counterexample instance here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    SearchOptions opts = SearchOptions::from_environment();
    opts.threads = threads;
    auto parse_threshold = [&](const std::string &text) {
      const auto t = parse_extended_rational(text);
      if (!t || *t < Rational(0))
        throw InvalidArgument("threshold must be a non-negative rational");
      return *t;
    };

    if (*shares) {
      const PreferenceMatrix m = parse_matrix(read_file(input));
      const ShareReport r = share_report(m, opts);
      if (as_json) {
        out << to_json(r).dump(2) << "\n";
        return kOk;
      }
      std::vector<std::size_t> mms, egal, ub;
      std::vector<Rational> rd;
      for (const auto &a : r.agents) {
        mms.push_back(a.mms_adapt);
        egal.push_back(a.mms_egal);
        rd.push_back(a.rds);
        ub.push_back(a.uniform_bound);
      }
      out << detail::line("MMS", join_numbers(mms))
          << detail::line("EGAL", join_numbers(egal))
          << detail::line("RDS", detail::rationals(rd))
          << detail::line("UNIFORM", join_numbers(ub));
      if (r.n3)
        out << detail::line("N3_FINE", join_numbers(r.n3->fine))
            << detail::line("N3_COARSE", std::to_string(r.n3->coarse))
            << detail::line("N3_MIN", std::to_string(r.n3->min_bound));
      return kOk;
    }

    if (*run) {
      const PreferenceMatrix m = parse_matrix(read_file(input));
      const RuleKind kind = parse_rule(rule_name_arg, m.n_agents());
      const RunResult r = run_rule(kind, m, opts);
      const AuditReport a = audit(m, r.outcome, opts);
      if (!transcript_path.empty())
        write_file(transcript_path, to_json(r.transcript).dump(2) + "\n");
      if (as_json) {
        json j{{"rule", rule_name(kind)},
               {"outcome", r.outcome.to_string()},
               {"utilities", r.transcript.utilities},
               {"audit", to_json(a)}};
        if (r.deferred) {
          std::vector<std::size_t> deferred;
          for (std::size_t d : r.deferred->deferred)
            deferred.push_back(d + 1);
          std::vector<std::string> eta;
          for (const auto &e : r.deferred->eta)
            eta.push_back(to_string(e));
          j["deferred"] = {{"decisions", deferred},
                           {"chosen", r.deferred->chosen + 1},
                           {"eta", eta}};
        }
        out << j.dump(2) << "\n";
        return kOk;
      }
      out << detail::line("OUTCOME", r.outcome.to_string());
      detail::print_audit(out, a);
      return kOk;
    }

    if (*verify) {
      if (!certificate_path.empty()) {
        const ViolationCertificate c =
            certificate_from_json(json::parse(read_file(certificate_path)));
        const bool ok = check_certificate(c);
        if (as_json)
          out << json{{"valid", ok}}.dump(2) << "\n";
        else
          out << detail::line("CERTIFICATE", ok ? "valid" : "invalid");
        return ok ? kOk : kFound;
      }
      if (input.empty() || outcome_path.empty())
        throw InvalidArgument("verify needs --certificate, or --input with --outcome");
      const PreferenceMatrix m = parse_matrix(read_file(input));
      const Outcome o = detail::read_outcome(read_file(outcome_path));
      std::optional<Rational> threshold;
      if (!verify_threshold.empty())
        threshold = parse_threshold(verify_threshold);
      const AuditReport a = audit(m, o, opts);
      if (as_json)
        out << to_json(a).dump(2) << "\n";
      else
        detail::print_audit(out, a);
      return threshold && a.alpha_adapt && *a.alpha_adapt < *threshold ? kFound : kOk;
    }

    if (*attack) {
      if (agents < 7)
        throw InvalidArgument("the adversary needs --agents >= 7");
      const RuleKind kind = parse_rule(rule_name_arg, agents);
      const AttackResult r = adaptive_attack(kind, agents);
      const json j = to_json(r);
      if (!out_path.empty())
        write_file(out_path, (r.certificate ? to_json(*r.certificate) : j).dump(2) + "\n");
      if (as_json) {
        out << j.dump(2) << "\n";
      } else if (r.certificate) {
        const auto &c = *r.certificate;
        out << detail::line("RESULT", "certificate")
            << detail::line("STAGE", to_string(r.state.stage))
            << detail::line("DECISIONS", std::to_string(c.instance.n_decisions()))
            << detail::line("VICTIM", std::to_string(c.victim + 1))
            << detail::line("GUARANTEE", std::to_string(c.guarantee))
            << detail::line("ACHIEVED", std::to_string(c.achieved))
            << detail::line("WITNESS", c.witness_kind);
      } else {
        out << detail::line("RESULT", "exhausted")
            << detail::line("STAGE", to_string(r.state.stage))
            << detail::line("NOTE", r.note);
      }
      return r.certificate ? kOk : kFound;
    }

    if (*gen) {
      PreferenceMatrix m(1, {});
      auto need_agents = [&]() {
        if (agents == 0)
          throw InvalidArgument("--which " + which + " needs --agents");
        return agents;
      };
      auto from_columns = [](std::size_t n, std::vector<AgentMask> cols) {
        return PreferenceMatrix(n, std::move(cols));
      };
      auto role = [](std::size_t v) {
        if (v == 0)
          throw InvalidArgument("--l and --mu are 1-based");
        return v - 1;
      };
      if (which == "jr-vs-mms")
        m = jr_vs_mms();
      else if (which == "mms-vs-rds")
        m = mms_vs_rds();
      else if (which == "sec4-example")
        m = sec4_example();
      else if (which == "all-consensus")
        m = all_consensus(need_agents(), decisions);
      else if (which == "all-opposed")
        m = all_opposed(need_agents(), decisions);
      else if (which == "mnw-gap")
        m = gen_mnw_gap(need_agents());
      else if (which == "stage1")
        m = from_columns(need_agents(), gen_stage1(agents));
      else if (which == "stage2")
        m = from_columns(need_agents(), gen_stage2(agents, role(ell), role(mu)));
      else if (which == "stage3a")
        m = from_columns(need_agents(), gen_stage3(agents, role(ell), role(mu)).a);
      else if (which == "stage3b") {
        const auto b = gen_stage3(need_agents(), role(ell), role(mu)).b;
        std::vector<AgentMask> cols;
        for (std::size_t r = 0; r + 1 < agents; ++r)
          cols.insert(cols.end(), b.begin(), b.end());
        m = from_columns(agents, std::move(cols));
      } else if (which.rfind("graceful-cap:", 0) == 0)
        m = find_instance(gen_graceful_cap_instances(), which.substr(std::string("graceful-cap:").size())).matrix;
      else
        throw InvalidArgument("unknown instance '" + which + "'");
      const std::string text = as_json ? to_json(m).dump() + "\n" : to_text(m);
      if (out_path.empty())
        out << text;
      else
        write_file(out_path, text);
      return kOk;
    }

    if (*search) {
      const RuleKind kind = parse_rule(rule_name_arg, agents);
      CheckOptions q;
      q.share = share == "egal" ? ShareKind::Egal : ShareKind::Adapt;
      q.threshold = parse_threshold(threshold_text);
      q.search = opts;
      if (*sample_opt)
        q.sample = SampleMode{sample, *seed};
      const CheckReport r = exhaustive_check(kind, agents, max_decisions, q);
      if (r.counterexample && !out_path.empty())
        write_file(out_path, to_text(r.counterexample->instance));
      if (as_json) {
        out << to_json(r, agents).dump(2) << "\n";
      } else if (!r.counterexample) {
        out << detail::line("INSTANCES", std::to_string(r.instances))
            << detail::line("RESULT", "none");
      } else {
        const auto &c = *r.counterexample;
        out << detail::line("INSTANCES", std::to_string(r.instances))
            << detail::line("RESULT", "counterexample")
            << detail::line("VICTIM", std::to_string(c.victim + 1))
            << detail::line("OUTCOME", c.outcome.to_string());
        detail::print_audit(out, c.audit);
        out << "INSTANCE\n" << to_text(c.instance);
      }
      return r.counterexample ? kFound : kOk;
    }
  } catch (const ResourceLimitError &e) {
    err << "budget: " << e.what() << "\n";
    return kBudget;
  } catch (const ParseError &e) {
    err << "parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception &e) {
    err << "invalid JSON: " << e.what() << "\n";
    return kUsage;
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

} // namespace pvmms::cli

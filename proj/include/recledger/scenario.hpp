#pragma once

// Line-oriented scenario files. One directive per line, `#` comments:
//
//   seed 42
//   tick_limit 400
//   latency 1 3
//   round_timeout 10
//   f 1
//   topology 1:1 3:2 4:1 5:1
//   node buyer-1 role=Buyer level=1 [validator=yes] [behavior=EquivocateVotes]
//   tx 10 gen-1 Issue project=farm source=Solar mwh=1 issued_at=10 nonce=1 as=c1
//   tx 40 buyer-1 Retire cert=c1 reason=PublicClaimPurchase [targets=track-1,track-2]
//   fault 5 partition track-1,market-1 | track-2,utility-1
//   fault 50 heal
//   fault 30 inject track-1 TamperStoredBlock:2
//   control_map maps/default.map
//
// `as=label` names the certificate (Issue) or aggregate (Aggregate) a
// transaction creates; later lines may use the label instead of the hex id.

#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "expected.hpp"
#include "netsim.hpp"
#include "rec_core.hpp"

namespace recledger {

struct ParseError {
  std::size_t line = 0;
  std::string message;
  std::string describe() const { return "line " + std::to_string(line) + ": " + message; }
};

struct Scenario {
  SimRun run;
  std::optional<std::string> control_map_path;
  std::map<std::string, std::string> labels;  // label -> hex id
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.emplace_back(s.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

class ScenarioParser {
 public:
  Expected<Scenario, ParseError> parse(std::string_view text) {
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (auto err = directive(toks)) return unexpected(*err);
    }
    if (topology_) {
      auto expanded = topology_template(*topology_);
      if (!expanded) return unexpected(ParseError{topology_line_, expanded.error().message});
      auto explicit_nodes = std::move(out_.run.nodes);
      out_.run.nodes = std::move(expanded).value();
      for (auto& n : explicit_nodes) out_.run.nodes.push_back(std::move(n));
    }
    for (auto& [line, inj] : pending_injects_) {
      auto it = std::find_if(out_.run.nodes.begin(), out_.run.nodes.end(),
                             [&](const NodeConfig& n) { return n.id == inj.node; });
      if (it == out_.run.nodes.end()) return unexpected(ParseError{line, "unknown node " + inj.node});
    }
    return std::move(out_);
  }

 private:
  std::optional<ParseError> fail(std::string msg) const { return ParseError{line_, std::move(msg)}; }

  std::optional<ParseError> directive(const std::vector<std::string>& t) {
    const auto& d = t[0];
    auto want = [&](std::size_t n) { return t.size() == n; };
    if (d == "seed" || d == "tick_limit" || d == "round_timeout" || d == "f") {
      if (!want(2)) return fail(d + " takes one value");
      auto v = parse_u64(t[1]);
      if (!v) return fail("bad number '" + t[1] + "'");
      if (d == "seed") out_.run.seed = *v;
      if (d == "tick_limit") out_.run.tick_limit = *v;
      if (d == "round_timeout") out_.run.round_timeout = *v;
      if (d == "f") out_.run.f = *v;
      return std::nullopt;
    }
    if (d == "latency") {
      if (!want(3)) return fail("latency takes min and max");
      auto lo = parse_u64(t[1]), hi = parse_u64(t[2]);
      if (!lo || !hi) return fail("bad latency bounds");
      if (*lo > *hi) return fail("latency min exceeds max");
      out_.run.latency_min = *lo;
      out_.run.latency_max = *hi;
      return std::nullopt;
    }
    if (d == "topology") {
      if (topology_) return fail("topology given twice");
      std::map<int, std::size_t> counts;
      for (std::size_t i = 1; i < t.size(); ++i) {
        auto parts = split_on(t[i], ':');
        auto lvl = parts.size() == 2 ? parse_u64(parts[0]) : std::nullopt;
        auto cnt = parts.size() == 2 ? parse_u64(parts[1]) : std::nullopt;
        if (!lvl || !cnt) return fail("topology entries look like level:count");
        counts[static_cast<int>(*lvl)] += *cnt;
      }
      topology_ = counts;
      topology_line_ = line_;
      return std::nullopt;
    }
    if (d == "node") return node(t);
    if (d == "tx") return tx(t);
    if (d == "fault") return fault(t);
    if (d == "control_map") {
      if (!want(2)) return fail("control_map takes a path");
      out_.control_map_path = t[1];
      return std::nullopt;
    }
    return fail("unknown directive '" + d + "'");
  }

  Expected<std::map<std::string, std::string>, ParseError> keyvals(const std::vector<std::string>& t,
                                                                   std::size_t from) const {
    std::map<std::string, std::string> kv;
    for (std::size_t i = from; i < t.size(); ++i) {
      auto eq = t[i].find('=');
      if (eq == std::string::npos || eq == 0) return unexpected(*fail("expected key=value, got '" + t[i] + "'"));
      auto key = t[i].substr(0, eq);
      if (kv.contains(key)) return unexpected(*fail("duplicate key " + key));
      kv[key] = t[i].substr(eq + 1);
    }
    return kv;
  }

  Expected<Behavior, ParseError> behavior(std::string_view spec) const {
    auto colon = spec.find(':');
    std::string_view name = spec.substr(0, colon);
    std::string_view arg = colon == std::string_view::npos ? "" : spec.substr(colon + 1);
    if (name == "Honest" && arg.empty()) return Behavior::honest();
    if (name == "EquivocateVotes" && arg.empty()) return Behavior::equivocate();
    if (name == "ForgeTransaction" && arg.empty()) return Behavior::forge();
    if (name == "ReplayTransaction" && arg.empty()) return Behavior::replay();
    if (name == "TamperStoredBlock") {
      auto h = parse_u64(arg);
      if (!h) return unexpected(*fail("TamperStoredBlock needs a height, e.g. TamperStoredBlock:2"));
      return Behavior::tamper(*h);
    }
    if (name == "DoubleSpendAttempt") {
      auto id = tracking(std::string(arg));
      if (!id) return unexpected(id.error());
      return Behavior::double_spend(*id);
    }
    return unexpected(*fail("unknown behavior '" + std::string(spec) + "'"));
  }

  std::optional<ParseError> node(const std::vector<std::string>& t) {
    if (t.size() < 2) return fail("node needs an id");
    auto kv = keyvals(t, 2);
    if (!kv) return kv.error();
    NodeConfig n;
    n.id = t[1];
    for (const auto& [k, v] : *kv) {
      if (k == "role") {
        auto r = parse_role(v);
        if (!r) return fail("unknown role '" + v + "'");
        n.role = *r;
      } else if (k == "level") {
        auto l = parse_u64(v);
        if (!l || *l < 1 || *l > 5) return fail("level must be 1-5");
        n.der_level = static_cast<int>(*l);
      } else if (k == "validator") {
        if (v != "yes" && v != "no") return fail("validator must be yes or no");
        n.is_validator = v == "yes";
      } else if (k == "behavior") {
        auto b = behavior(v);
        if (!b) return b.error();
        n.behavior = *b;
      } else {
        return fail("unknown node key '" + k + "'");
      }
    }
    if (!kv->contains("role")) return fail("node needs role=");
    if (!kv->contains("level")) return fail("node needs level=");
    out_.run.nodes.push_back(std::move(n));
    return std::nullopt;
  }

  Expected<std::string, ParseError> resolve(const std::string& ref) const {
    if (auto it = out_.labels.find(ref); it != out_.labels.end()) return it->second;
    if (is_lower_hex(ref, 64)) return ref;
    return unexpected(*fail("'" + ref + "' is neither a label nor a 64-hex id"));
  }

  Expected<TrackingId, ParseError> tracking(const std::string& ref) const {
    auto r = resolve(ref);
    if (!r) return unexpected(r.error());
    return TrackingId{*r};
  }

  std::optional<ParseError> tx(const std::vector<std::string>& t) {
    if (t.size() < 4) return fail("tx needs <tick> <signer> <kind>");
    auto tick = parse_u64(t[1]);
    if (!tick) return fail("bad tick '" + t[1] + "'");
    auto kvr = keyvals(t, 4);
    if (!kvr) return kvr.error();
    auto kv = std::move(kvr).value();
    WorkloadItem item;
    item.submit_at = *tick;
    item.signer = t[2];
    const auto& kind = t[3];

    auto take = [&](const std::string& key) -> std::optional<std::string> {
      auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      auto v = it->second;
      kv.erase(it);
      return v;
    };
    auto need = [&](const std::string& key) -> Expected<std::string, ParseError> {
      auto v = take(key);
      if (!v) return unexpected(*fail(kind + " needs " + key + "="));
      return *v;
    };
    auto number = [&](const std::string& key, std::uint64_t dflt) -> Expected<std::uint64_t, ParseError> {
      auto v = take(key);
      if (!v) return dflt;
      auto n = parse_u64(*v);
      if (!n) return unexpected(*fail("bad number for " + key));
      return *n;
    };
#define RL_TRY(var, expr)             \
  auto var##_r = (expr);              \
  if (!var##_r) return var##_r.error(); \
  auto var = std::move(var##_r).value();

    if (auto targets = take("targets")) item.targets = split_on(*targets, ',');
    auto label = take("as");
    std::optional<std::string> created;

    if (kind == "Issue") {
      IssuePayload p;
      p.project_name = take("project").value_or("project");
      auto src = take("source").value_or("Solar");
      auto parsed = EnergySource::parse(src);
      if (!parsed) return fail("unknown source '" + src + "'");
      p.source = *parsed;
      auto type = take("type").value_or("Voluntary");
      if (type != "Voluntary" && type != "Compliance") return fail("type must be Voluntary or Compliance");
      p.certificate_type = type == "Voluntary" ? CertificateType::Voluntary : CertificateType::Compliance;
      RL_TRY(mwh, number("mwh", 1));
      RL_TRY(issued_at, number("issued_at", *tick));
      RL_TRY(nonce, number("nonce", 0));
      p.energy_mwh = mwh;
      p.issued_at = issued_at;
      p.nonce = nonce;
      p.generator = take("generator").value_or(item.signer);
      created = tracking_id_of(p).value;
      item.payload = p;
    } else if (kind == "Aggregate") {
      AggregatePayload p;
      p.broker = take("broker").value_or(item.signer);
      RL_TRY(members, need("members"));
      for (const auto& m : split_on(members, ',')) {
        RL_TRY(id, tracking(m));
        p.members.push_back(id);
      }
      created = derive_aggregate_id(p.members).value;
      item.payload = p;
    } else if (kind == "Trade") {
      TradePayload p;
      RL_TRY(to, need("to"));
      p.new_owner = to;
      if (auto agg = take("aggregate")) {
        RL_TRY(id, resolve(*agg));
        p.target = AggregateId{id};
      } else {
        RL_TRY(cert, need("cert"));
        RL_TRY(id, tracking(cert));
        p.target = id;
      }
      item.payload = p;
    } else if (kind == "Swap") {
      RL_TRY(cert, need("cert"));
      RL_TRY(id, tracking(cert));
      RL_TRY(to, need("to"));
      item.payload = SwapPayload{id, to};
    } else if (kind == "ConsumptionReport") {
      RL_TRY(cert, need("cert"));
      RL_TRY(id, tracking(cert));
      RL_TRY(mwh, number("mwh", 1));
      item.payload = ConsumptionReportPayload{id, take("consumer").value_or(item.signer), mwh};
    } else if (kind == "Retire") {
      RL_TRY(cert, need("cert"));
      RL_TRY(id, tracking(cert));
      auto reason = parse_reason(take("reason").value_or("PublicClaimPurchase"));
      if (!reason) return fail("unknown retirement reason");
      item.payload = RetirePayload{id, *reason};
    } else if (kind == "AuditCheckpoint") {
      RL_TRY(start, number("start", 0));
      RL_TRY(end, number("end", *tick));
      item.payload = AuditCheckpointPayload{start, end};
    } else {
      return fail("unknown transaction kind '" + kind + "'");
    }
#undef RL_TRY
    if (!kv.empty()) return fail("unknown key '" + kv.begin()->first + "' for " + kind);
    if (label) {
      if (!created) return fail("as= only applies to Issue and Aggregate");
      if (out_.labels.contains(*label)) return fail("label '" + *label + "' already defined");
      out_.labels[*label] = *created;
    }
    out_.run.workload.push_back(std::move(item));
    return std::nullopt;
  }

  std::optional<ParseError> fault(const std::vector<std::string>& t) {
    if (t.size() < 3) return fail("fault needs <tick> <kind>");
    auto tick = parse_u64(t[1]);
    if (!tick) return fail("bad tick '" + t[1] + "'");
    if (!out_.run.faults.empty() && fault_tick(out_.run.faults.back()) > *tick)
      return fail("faults must be listed in tick order");
    if (t[2] == "heal") {
      if (t.size() != 3) return fail("heal takes no arguments");
      out_.run.faults.push_back(HealAt{*tick});
      return std::nullopt;
    }
    if (t[2] == "partition") {
      std::string rest;
      for (std::size_t i = 3; i < t.size(); ++i) rest += t[i];
      PartitionAt p{*tick, {}};
      for (const auto& group : split_on(rest, '|')) {
        if (group.empty()) return fail("empty partition group");
        p.groups.push_back(split_on(group, ','));
      }
      if (p.groups.size() < 2) return fail("partition needs at least two groups separated by |");
      out_.run.faults.push_back(std::move(p));
      return std::nullopt;
    }
    if (t[2] == "inject") {
      if (t.size() != 5) return fail("inject takes <node> <Behavior>");
      auto b = behavior(t[4]);
      if (!b) return b.error();
      InjectAt inj{*tick, t[3], *b};
      pending_injects_.emplace_back(line_, inj);
      out_.run.faults.push_back(std::move(inj));
      return std::nullopt;
    }
    return fail("unknown fault '" + t[2] + "'");
  }

  Scenario out_;
  std::size_t line_ = 0;
  std::optional<std::map<int, std::size_t>> topology_;
  std::size_t topology_line_ = 0;
  std::vector<std::pair<std::size_t, InjectAt>> pending_injects_;
};

}  // namespace detail

inline Expected<Scenario, ParseError> parse_scenario(std::string_view text) {
  return detail::ScenarioParser{}.parse(text);
}

// ---------------------------------------------------------------------------
// Participant files: an `f <n>` line, then `id role level yes|no` per line.
// Keys are derived from the id, so the file is enough to rebuild the
// verification rules.

struct ParticipantFile {
  Directory participants;
  std::size_t f = 0;
};

inline std::string export_participants(const Directory& dir, std::size_t f) {
  std::string out = "f " + std::to_string(f) + '\n';
  for (const auto& [id, p] : dir)
    out += id + ' ' + std::string(role_name(p.role)) + ' ' + std::to_string(p.der_level) + ' ' +
           (p.validator ? "yes" : "no") + '\n';
  return out;
}

inline Expected<ParticipantFile, ParseError> parse_participants(std::string_view text) {
  ParticipantFile out;
  bool have_f = false;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto toks = detail::split_ws(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (toks.empty()) continue;
    if (toks[0] == "f" && toks.size() == 2) {
      auto f = detail::parse_u64(toks[1]);
      if (!f || have_f) return unexpected(ParseError{line_no, "bad or repeated f line"});
      out.f = *f;
      have_f = true;
      continue;
    }
    auto role = toks.size() == 4 ? parse_role(toks[1]) : std::nullopt;
    auto level = toks.size() == 4 ? detail::parse_u64(toks[2]) : std::nullopt;
    if (!role || !level || (toks[3] != "yes" && toks[3] != "no"))
      return unexpected(ParseError{line_no, "expected '<id> <role> <level> yes|no'"});
    out.participants[toks[0]] = Participant{toks[0], *role, static_cast<int>(*level),
                                            KeyPair::for_participant(toks[0]).public_key(), toks[3] == "yes"};
  }
  if (!have_f) return unexpected(ParseError{0, "missing 'f <n>' line"});
  return out;
}

inline Expected<ChainRules, ConfigError> rules_for(const ParticipantFile& file) {
  std::vector<ParticipantId> validators;
  for (const auto& [id, p] : file.participants)
    if (p.validator) validators.push_back(id);
  auto cfg = ConsensusConfig::make(validators, file.f);
  if (!cfg) return unexpected(cfg.error());
  return make_chain_rules(file.participants, *cfg);
}

}  // namespace recledger

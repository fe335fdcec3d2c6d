#pragma once

// Regulator-side view of a ledger: replay, annual reports, anomaly harvesting
// from the event log, and tagging of events with control families.
// Everything here reads its inputs and never mutates them.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "expected.hpp"
#include "ledger.hpp"
#include "netsim.hpp"
#include "rec_core.hpp"

namespace recledger {

// ---------------------------------------------------------------------------
// Replay

struct ReplayError {
  std::uint64_t height = 0;
  std::size_t tx_index = 0;
  LifecycleError error = LifecycleError::InvalidTransition;

  std::string describe() const {
    return "ReplayError(" + std::to_string(height) + ", " + std::to_string(tx_index) + ", " +
           std::string(error_name(error)) + ")";
  }
  friend bool operator==(const ReplayError&, const ReplayError&) = default;
};

namespace detail {

// Folds blocks [1, end) through apply; `on_tx` sees each accepted tx.
template <typename OnTx>
Expected<RegistryState, ReplayError> fold_chain(std::span<const LedgerBlock> blocks, const Directory& participants,
                                                OnTx&& on_tx) {
  RegistryState state;
  for (std::size_t h = 1; h < blocks.size(); ++h) {
    const auto& b = blocks[h];
    for (std::size_t i = 0; i < b.transactions.size(); ++i) {
      const auto& tx = b.transactions[i];
      auto next = apply(state, tx.payload, tx.signer, b.proposed_at, participants);
      if (!next) return unexpected(ReplayError{b.height, i, next.error()});
      on_tx(b, tx, state, next.value());
      state = std::move(next).value();
    }
  }
  return state;
}

}  // namespace detail

/// Rebuilds the registry by applying every committed transaction from
/// genesis, with the block's proposal tick as the clock. Role checks need
/// the participant directory, which the chain itself does not carry.
inline Expected<RegistryState, ReplayError> replay(std::span<const LedgerBlock> blocks, const Directory& participants) {
  return detail::fold_chain(blocks, participants, [](const auto&...) {});
}

inline Expected<RegistryState, ReplayError> replay(const Chain& chain, const Directory& participants) {
  return replay(chain.blocks(), participants);
}

// ---------------------------------------------------------------------------
// Event log

struct LogEvent {
  Tick tick = 0;
  std::string node;
  std::string kind;
  std::string details;

  /// Value of `key=` in the space-separated details, if present.
  std::optional<std::string> field(std::string_view key) const {
    std::size_t pos = 0;
    while (pos < details.size()) {
      auto end = details.find(' ', pos);
      if (end == std::string::npos) end = details.size();
      std::string_view tok(details.data() + pos, end - pos);
      if (tok.size() > key.size() && tok.substr(0, key.size()) == key && tok[key.size()] == '=')
        return std::string(tok.substr(key.size() + 1));
      pos = end + 1;
    }
    return std::nullopt;
  }
  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

struct LogParseError {
  std::size_t line = 0;
  std::string message;
};

inline Expected<std::vector<LogEvent>, LogParseError> parse_event_log(std::string_view text) {
  std::vector<LogEvent> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::array<std::string_view, 4> fields;
    std::size_t start = 0;
    for (std::size_t f = 0; f < 3; ++f) {
      auto tab = line.find('\t', start);
      if (tab == std::string_view::npos) return unexpected(LogParseError{line_no, "expected 4 tab-separated fields"});
      fields[f] = line.substr(start, tab - start);
      start = tab + 1;
    }
    fields[3] = line.substr(start);
    LogEvent ev;
    try {
      std::size_t used = 0;
      ev.tick = std::stoull(std::string(fields[0]), &used);
      if (used != fields[0].size()) throw std::invalid_argument("tick");
    } catch (const std::exception&) {
      return unexpected(LogParseError{line_no, "bad tick '" + std::string(fields[0]) + "'"});
    }
    ev.node = fields[1];
    ev.kind = fields[2];
    ev.details = fields[3];
    if (ev.kind.empty()) return unexpected(LogParseError{line_no, "empty event kind"});
    out.push_back(std::move(ev));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Control map

using ControlMap = std::map<std::string, std::vector<std::string>>;

struct ControlMapError {
  std::size_t line = 0;  // 0 when the problem is not tied to one line
  std::string message;
};

/// Parses `event-kind: family[,family...]` lines; `#` starts a comment.
/// The event kind may itself contain ':', so the last ':' separates it.
/// Every kind in `required` must be mapped.
inline Expected<ControlMap, ControlMapError> parse_control_map(
    std::string_view text, const std::vector<std::string>& required = simulator_event_kinds()) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  };
  ControlMap map;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto colon = line.rfind(':');
    if (colon == std::string_view::npos)
      return unexpected(ControlMapError{line_no, "expected 'event-kind: family[,family...]'"});
    std::string kind(trim(line.substr(0, colon)));
    if (kind.empty()) return unexpected(ControlMapError{line_no, "empty event kind"});
    if (map.contains(kind)) return unexpected(ControlMapError{line_no, "duplicate entry for " + kind});
    std::vector<std::string> families;
    std::string_view rest = line.substr(colon + 1);
    while (!rest.empty()) {
      auto comma = rest.find(',');
      auto fam = trim(rest.substr(0, comma));
      if (fam.empty()) return unexpected(ControlMapError{line_no, "empty control family"});
      families.emplace_back(fam);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (families.empty()) return unexpected(ControlMapError{line_no, kind + " maps to no family"});
    map.emplace(std::move(kind), std::move(families));
  }
  std::vector<std::string> missing;
  for (const auto& k : required)
    if (!map.contains(k)) missing.push_back(k);
  if (!missing.empty()) {
    std::string msg = "unmapped event kinds:";
    for (const auto& k : missing) msg += " " + k;
    return unexpected(ControlMapError{0, msg});
  }
  return map;
}

// NISTIR 7628 family identifiers: SG.AC access control, SG.AU audit and
// accountability, SG.CP continuity, SG.IA identification and authentication,
// SG.IR incident response, SG.SC system and communication protection,
// SG.SI system and information integrity.
inline constexpr std::string_view kDefaultControlMap = R"(# event-kind: family[,family...]
submit: SG.AU
propose: SG.AU
prevote: SG.AU
precommit: SG.AU
commit: SG.AU,SG.SI
timeout: SG.CP
commit_failed: SG.SI
conservation_violation: SG.SI,SG.IR
equivocation_detected: SG.SI,SG.IR
tamper_detected: SG.SI,SG.IR
partition: SG.SC,SG.CP
heal: SG.SC,SG.CP
fault_injected: SG.IR
guarantees_void: SG.IR
tamper: SG.IR
forge: SG.IR
replay: SG.IR
double_spend: SG.IR
reject:BadSignature: SG.IA,SG.SI
reject:StaleNonce: SG.SC,SG.SI
reject:CertificateRetired: SG.SI,SG.AU
reject:UnknownCertificate: SG.SI
reject:NotOwner: SG.AC
reject:UnauthorizedRole: SG.AC
reject:MemberNotIssued: SG.SI
reject:MissingConsumptionReport: SG.AU
reject:DuplicateMember: SG.SI
reject:EmptyAggregate: SG.SI
reject:DuplicateId: SG.SI,SG.AU
reject:BadEnergyQuantity: SG.SI
reject:UnknownSource: SG.SI
reject:UnknownParticipant: SG.IA
reject:InvalidTransition: SG.SI
proposal_rejected:BadLink: SG.SI
proposal_rejected:BadTx: SG.SI
proposal_rejected:WrongLeader: SG.AC
)";

inline ControlMap default_control_map() { return parse_control_map(kDefaultControlMap).value(); }

struct UnmappedEventKind {
  std::string kind;
};

/// Count of events per control family; an event mapped to k families counts
/// once in each of them.
inline Expected<std::map<std::string, std::size_t>, UnmappedEventKind> tag_events(std::span<const LogEvent> events,
                                                                                  const ControlMap& map) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ev : events) {
    auto it = map.find(ev.kind);
    if (it == map.end()) return unexpected(UnmappedEventKind{ev.kind});
    for (const auto& fam : it->second) ++counts[fam];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Annual audit

struct AuditPeriod {
  Tick start = 0;
  Tick end = 0;  // inclusive
  bool contains(Tick t) const { return t >= start && t <= end; }
  friend bool operator==(const AuditPeriod&, const AuditPeriod&) = default;
};

enum class AnomalyKind : std::uint8_t {
  DoubleRetireAttempt,
  TradeAfterRetire,
  DuplicateTrackingId,
  EquivocationObserved,
  ChainIntegrityFailure,
};

inline constexpr std::string_view anomaly_name(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::DoubleRetireAttempt: return "DoubleRetireAttempt";
    case AnomalyKind::TradeAfterRetire: return "TradeAfterRetire";
    case AnomalyKind::DuplicateTrackingId: return "DuplicateTrackingId";
    case AnomalyKind::EquivocationObserved: return "EquivocationObserved";
    case AnomalyKind::ChainIntegrityFailure: return "ChainIntegrityFailure";
  }
  return "?";
}

inline std::optional<AnomalyKind> parse_anomaly(std::string_view s) {
  for (auto k : {AnomalyKind::DoubleRetireAttempt, AnomalyKind::TradeAfterRetire, AnomalyKind::DuplicateTrackingId,
                 AnomalyKind::EquivocationObserved, AnomalyKind::ChainIntegrityFailure})
    if (anomaly_name(k) == s) return k;
  return std::nullopt;
}

/// Evidence points either into the chain (height, tx index) or into the
/// event log (tick, node, tx id).
struct AnomalyFinding {
  AnomalyKind kind = AnomalyKind::ChainIntegrityFailure;
  std::optional<std::uint64_t> height;
  std::optional<std::size_t> tx_index;
  std::optional<Tick> tick;
  std::optional<std::string> node;
  std::optional<std::string> tx;
  std::string detail;
  friend bool operator==(const AnomalyFinding&, const AnomalyFinding&) = default;
};

struct AuditReport {
  AuditPeriod period;
  std::uint64_t issued_count = 0;
  std::uint64_t issued_mwh = 0;
  std::map<RetirementReason, std::uint64_t> retired_by_reason;  // always holds all three reasons
  std::uint64_t active_count = 0;
  std::uint64_t aggregated_count = 0;
  std::uint64_t swap_total = 0;
  std::vector<AnomalyFinding> anomalies;
  bool conservation_ok = true;
  std::map<std::string, std::size_t> control_coverage;

  AuditReport() {
    for (auto r : kAllRetirementReasons) retired_by_reason[r] = 0;
  }

  std::uint64_t retired_count() const {
    std::uint64_t n = 0;
    for (const auto& [r, c] : retired_by_reason) n += c;
    return n;
  }
  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

struct AuditError {
  std::string message;
};

/// Reports on the cohort of certificates committed inside `period`, with
/// their status as of the period's end. Swaps are counted when committed in
/// the period. Anomalies come from the chain itself and from the period's
/// slice of the event log. The chain is re-verified first; a failure
/// becomes a ChainIntegrityFailure finding and only the valid prefix is used.
inline Expected<AuditReport, AuditError> annual_audit(std::span<const LedgerBlock> blocks, AuditPeriod period,
                                                      std::span<const LogEvent> events, const ControlMap& controls,
                                                      const ChainRules& rules) {
  if (period.end < period.start) return unexpected(AuditError{"period end precedes start"});
  AuditReport rep;
  rep.period = period;

  std::size_t usable = blocks.size();
  if (auto verdict = verify_chain(blocks, rules); !verdict.valid()) {
    AnomalyFinding f;
    f.kind = AnomalyKind::ChainIntegrityFailure;
    f.height = *verdict.invalid_height;
    f.tx_index = verdict.fault->tx_index;
    f.detail = verdict.describe();
    rep.anomalies.push_back(f);
    usable = *verdict.invalid_height;
  }

  // Replay the prefix up to the period end, noting when each cert was committed.
  std::vector<LedgerBlock> prefix;
  for (std::size_t h = 0; h < usable; ++h) {
    if (h > 0 && blocks[h].proposed_at > period.end) break;
    prefix.push_back(blocks[h]);
  }
  std::map<TrackingId, Tick> committed_at;
  auto state = detail::fold_chain(prefix, rules.participants, [&](const LedgerBlock& b, const SignedTransaction& tx, const RegistryState&,
                                              const RegistryState&) {
    if (auto* issue = std::get_if<IssuePayload>(&tx.payload)) committed_at[tracking_id_of(*issue)] = b.proposed_at;
    if (std::holds_alternative<SwapPayload>(tx.payload) && period.contains(b.proposed_at)) ++rep.swap_total;
  });
  if (!state) {
    AnomalyFinding f;
    f.kind = AnomalyKind::ChainIntegrityFailure;
    f.height = state.error().height;
    f.tx_index = state.error().tx_index;
    f.detail = state.error().describe();
    rep.anomalies.push_back(f);
    rep.conservation_ok = false;
  } else {
    const RegistryState& s = state.value();
    for (const auto& [id, cert] : s.certificates) {
      if (!period.contains(committed_at.at(id))) continue;
      ++rep.issued_count;
      rep.issued_mwh += cert.energy_mwh;
      switch (cert.status.kind) {
        case CertStatus::Kind::Issued:
        case CertStatus::Kind::Owned: ++rep.active_count; break;
        case CertStatus::Kind::Aggregated: ++rep.aggregated_count; break;
        case CertStatus::Kind::Retired: ++rep.retired_by_reason[cert.retirement->reason]; break;
      }
    }
    rep.conservation_ok = mwh_balance(s).holds() && !check_invariants(s);
    if (!rep.conservation_ok) {
      AnomalyFinding f;
      f.kind = AnomalyKind::ChainIntegrityFailure;
      f.height = prefix.empty() ? 0 : prefix.back().height;
      f.detail = "conservation identity fails";
      rep.anomalies.push_back(f);
    }
  }

  // Event-log anomalies, one finding per rejected tx id or per equivocator.
  std::vector<LogEvent> in_period;
  std::set<std::string> seen;
  for (const auto& ev : events) {
    if (!period.contains(ev.tick)) continue;
    in_period.push_back(ev);
    std::optional<AnomalyKind> kind;
    std::string key;
    if (ev.kind == "reject:CertificateRetired") {
      auto k = ev.field("kind").value_or("");
      if (k == "Retire") kind = AnomalyKind::DoubleRetireAttempt;
      else if (k == "Trade" || k == "Swap") kind = AnomalyKind::TradeAfterRetire;
      key = ev.field("tx").value_or("");
    } else if (ev.kind == "reject:DuplicateId") {
      kind = AnomalyKind::DuplicateTrackingId;
      key = ev.field("tx").value_or("");
    } else if (ev.kind == "equivocation_detected") {
      kind = AnomalyKind::EquivocationObserved;
      key = "voter:" + ev.field("voter").value_or("");
    } else if (ev.kind == "tamper_detected") {
      kind = AnomalyKind::ChainIntegrityFailure;
      key = "node:" + ev.node;
    }
    if (!kind || !seen.insert(std::string(anomaly_name(*kind)) + "/" + key).second) continue;
    AnomalyFinding f;
    f.kind = *kind;
    f.tick = ev.tick;
    f.node = ev.node;
    if (*kind == AnomalyKind::EquivocationObserved) {
      f.node = ev.field("voter");
      f.detail = "observed by " + ev.node;
    } else if (*kind == AnomalyKind::ChainIntegrityFailure) {
      // verdict=InvalidAt(h, Code)
      auto verdict = ev.details.substr(ev.details.find('=') + 1);
      f.detail = verdict.substr(0, verdict.find(" action="));
      auto open = verdict.find('(');
      if (open != std::string::npos) {
        try {
          f.height = std::stoull(verdict.substr(open + 1));
        } catch (const std::exception&) {
        }
      }
    } else {
      f.tx = ev.field("tx");
      f.detail = "signer " + ev.field("signer").value_or("?");
    }
    rep.anomalies.push_back(std::move(f));
  }

  auto coverage = tag_events(in_period, controls);
  if (!coverage) return unexpected(AuditError{"unmapped event kind " + coverage.error().kind});
  rep.control_coverage = std::move(coverage).value();
  return rep;
}

// ---------------------------------------------------------------------------
// Export

enum class ReportFormat { Text, Machine };

/// Machine format: `key: value` lines, nested sections indented two spaces.
/// The anomalies section is left out when there are none.
inline std::string export_report(const AuditReport& r, ReportFormat format) {
  std::ostringstream o;
  auto yn = [](bool b) { return b ? "true" : "false"; };
  if (format == ReportFormat::Text) {
    o << "Audit report for ticks " << r.period.start << " to " << r.period.end << '\n'
      << "  certificates issued: " << r.issued_count << " (" << r.issued_mwh << " MWh)\n"
      << "  active: " << r.active_count << ", aggregated: " << r.aggregated_count
      << ", retired: " << r.retired_count() << '\n';
    for (const auto& [reason, n] : r.retired_by_reason) o << "    retired for " << reason_name(reason) << ": " << n << '\n';
    o << "  swaps: " << r.swap_total << '\n'
      << "  MWh conservation: " << (r.conservation_ok ? "holds" : "VIOLATED") << '\n';
    o << "  anomalies: " << r.anomalies.size() << '\n';
    for (const auto& a : r.anomalies) {
      o << "    " << anomaly_name(a.kind);
      if (a.height) o << " at height " << *a.height;
      if (a.tx_index) o << " tx " << *a.tx_index;
      if (a.tick) o << " tick " << *a.tick;
      if (a.node) o << " node " << *a.node;
      if (a.tx) o << " tx-id " << a.tx->substr(0, 16);
      if (!a.detail.empty()) o << " (" << a.detail << ")";
      o << '\n';
    }
    o << "  control coverage:\n";
    for (const auto& [fam, n] : r.control_coverage) o << "    " << fam << ": " << n << '\n';
    return o.str();
  }
  o << "period: " << r.period.start << ':' << r.period.end << '\n'
    << "issued_count: " << r.issued_count << '\n'
    << "issued_mwh: " << r.issued_mwh << '\n'
    << "retired:\n";
  for (const auto& [reason, n] : r.retired_by_reason) o << "  " << reason_name(reason) << ": " << n << '\n';
  o << "active_count: " << r.active_count << '\n'
    << "aggregated_count: " << r.aggregated_count << '\n'
    << "swap_total: " << r.swap_total << '\n'
    << "conservation_ok: " << yn(r.conservation_ok) << '\n'
    << "control_coverage:\n";
  for (const auto& [fam, n] : r.control_coverage) o << "  " << fam << ": " << n << '\n';
  if (!r.anomalies.empty()) {
    o << "anomalies:\n";
    for (const auto& a : r.anomalies) {
      o << "  - kind: " << anomaly_name(a.kind) << '\n';
      if (a.height) o << "    height: " << *a.height << '\n';
      if (a.tx_index) o << "    tx_index: " << *a.tx_index << '\n';
      if (a.tick) o << "    tick: " << *a.tick << '\n';
      if (a.node) o << "    node: " << *a.node << '\n';
      if (a.tx) o << "    tx: " << *a.tx << '\n';
      if (!a.detail.empty()) o << "    detail: " << a.detail << '\n';
    }
  }
  return o.str();
}

/// Inverse of export_report(..., Machine).
inline Expected<AuditReport, AuditError> parse_report(std::string_view text) {
  AuditReport r;
  std::string section;
  std::size_t line_no = 0, pos = 0;
  auto fail = [&](const std::string& msg) {
    return unexpected(AuditError{"line " + std::to_string(line_no) + ": " + msg});
  };
  auto num = [](const std::string& s) -> std::optional<std::uint64_t> {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return std::nullopt;
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::size_t indent = line.find_first_not_of(' ');
    bool item = line.compare(indent, 2, "- ") == 0;
    std::string body = line.substr(item ? indent + 2 : indent);
    auto colon = body.find(": ");
    std::string key = colon == std::string::npos ? body.substr(0, body.size() - (body.ends_with(':') ? 1 : 0))
                                                 : body.substr(0, colon);
    std::string value = colon == std::string::npos ? "" : body.substr(colon + 2);
    if (indent == 0) {
      section.clear();
      if (colon == std::string::npos) {
        section = key;
        continue;
      }
      if (key == "period") {
        auto c = value.find(':');
        auto s = num(value.substr(0, c)), e = c == std::string::npos ? std::nullopt : num(value.substr(c + 1));
        if (!s || !e) return fail("bad period");
        r.period = {*s, *e};
        continue;
      }
      if (key == "conservation_ok") {
        if (value != "true" && value != "false") return fail("bad boolean");
        r.conservation_ok = value == "true";
        continue;
      }
      auto v = num(value);
      if (!v) return fail("bad number for " + key);
      if (key == "issued_count") r.issued_count = *v;
      else if (key == "issued_mwh") r.issued_mwh = *v;
      else if (key == "active_count") r.active_count = *v;
      else if (key == "aggregated_count") r.aggregated_count = *v;
      else if (key == "swap_total") r.swap_total = *v;
      else return fail("unknown key " + key);
      continue;
    }
    if (section == "retired") {
      auto reason = parse_reason(key);
      auto v = num(value);
      if (!reason || !v) return fail("bad retired entry");
      r.retired_by_reason[*reason] = *v;
    } else if (section == "control_coverage") {
      auto v = num(value);
      if (!v) return fail("bad coverage count");
      r.control_coverage[key] = *v;
    } else if (section == "anomalies") {
      if (item) {
        if (key != "kind") return fail("anomaly must start with kind");
        auto k = parse_anomaly(value);
        if (!k) return fail("unknown anomaly " + value);
        r.anomalies.push_back(AnomalyFinding{*k, {}, {}, {}, {}, {}, {}});
        continue;
      }
      if (r.anomalies.empty()) return fail("anomaly field outside an entry");
      auto& a = r.anomalies.back();
      if (key == "node") a.node = value;
      else if (key == "tx") a.tx = value;
      else if (key == "detail") a.detail = value;
      else {
        auto v = num(value);
        if (!v) return fail("bad number for " + key);
        if (key == "height") a.height = *v;
        else if (key == "tx_index") a.tx_index = *v;
        else if (key == "tick") a.tick = *v;
        else return fail("unknown anomaly field " + key);
      }
    } else {
      return fail("indented line outside a section");
    }
  }
  return r;
}

}  // namespace recledger

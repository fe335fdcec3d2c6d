#pragma once

// Renewable Energy Certificate registry: domain types and the pure lifecycle
// transition function. Every certificate is a 1 MWh unit that moves through
//
//   Issued -> Aggregated -> Owned -> Retired
//   Issued -----------------^  ^--(trade/swap)
//
// and never leaves Retired.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codec.hpp"
#include "crypto.hpp"
#include "expected.hpp"

namespace recledger {

using Tick = std::uint64_t;
using ParticipantId = std::string;

enum class Role : std::uint8_t {
  Generator,
  Broker,
  Buyer,
  Marketer,
  Utility,
  TradingPlatform,
  Regulator,
  Validator,
};

inline constexpr std::string_view role_name(Role r) {
  switch (r) {
    case Role::Generator: return "Generator";
    case Role::Broker: return "Broker";
    case Role::Buyer: return "Buyer";
    case Role::Marketer: return "Marketer";
    case Role::Utility: return "Utility";
    case Role::TradingPlatform: return "TradingPlatform";
    case Role::Regulator: return "Regulator";
    case Role::Validator: return "Validator";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view s) {
  for (auto r : {Role::Generator, Role::Broker, Role::Buyer, Role::Marketer, Role::Utility,
                 Role::TradingPlatform, Role::Regulator, Role::Validator})
    if (role_name(r) == s) return r;
  return std::nullopt;
}

struct Participant {
  ParticipantId id;
  Role role = Role::Buyer;
  int der_level = 1;
  PublicKey public_key{};
  bool validator = false;
  friend bool operator==(const Participant&, const Participant&) = default;
};

/// Registered participants keyed by id (the permissioned role table).
using Directory = std::map<ParticipantId, Participant>;

inline const Participant* find_participant(const Directory& dir, const ParticipantId& id) {
  auto it = dir.find(id);
  return it == dir.end() ? nullptr : &it->second;
}

struct EnergySource {
  enum class Kind : std::uint8_t { Solar, Wind, Hydro, Biomass, Geothermal, Other };
  Kind kind = Kind::Solar;
  std::string other_name;  // only for Kind::Other

  static EnergySource other(std::string name) { return {Kind::Other, std::move(name)}; }

  bool well_formed() const { return kind != Kind::Other || !other_name.empty(); }

  // Canonical text used in digests and files: "Solar" ... "Other:<name>".
  std::string canonical() const {
    switch (kind) {
      case Kind::Solar: return "Solar";
      case Kind::Wind: return "Wind";
      case Kind::Hydro: return "Hydro";
      case Kind::Biomass: return "Biomass";
      case Kind::Geothermal: return "Geothermal";
      case Kind::Other: return "Other:" + other_name;
    }
    return "?";
  }

  static std::optional<EnergySource> parse(std::string_view s) {
    if (s == "Solar") return EnergySource{Kind::Solar, {}};
    if (s == "Wind") return EnergySource{Kind::Wind, {}};
    if (s == "Hydro") return EnergySource{Kind::Hydro, {}};
    if (s == "Biomass") return EnergySource{Kind::Biomass, {}};
    if (s == "Geothermal") return EnergySource{Kind::Geothermal, {}};
    if (s.starts_with("Other:")) return EnergySource{Kind::Other, std::string(s.substr(6))};
    return std::nullopt;
  }

  friend bool operator==(const EnergySource&, const EnergySource&) = default;
};

/// 64-char lowercase hex rendering of a SHA-256 digest.
struct TrackingId {
  std::string value;

  static std::optional<TrackingId> parse(std::string_view s) {
    if (!is_lower_hex(s, 64)) return std::nullopt;
    return TrackingId{std::string(s)};
  }
  friend auto operator<=>(const TrackingId&, const TrackingId&) = default;
};

struct AggregateId {
  std::string value;

  static std::optional<AggregateId> parse(std::string_view s) {
    if (!is_lower_hex(s, 64)) return std::nullopt;
    return AggregateId{std::string(s)};
  }
  friend auto operator<=>(const AggregateId&, const AggregateId&) = default;
};

enum class CertificateType : std::uint8_t { Compliance, Voluntary };

enum class RetirementReason : std::uint8_t {
  StatutoryOrRegulatoryUse,
  PublicClaimPurchase,
  AttributePurchase,
};

inline constexpr RetirementReason kAllRetirementReasons[] = {
    RetirementReason::StatutoryOrRegulatoryUse,
    RetirementReason::PublicClaimPurchase,
    RetirementReason::AttributePurchase,
};

inline constexpr std::string_view reason_name(RetirementReason r) {
  switch (r) {
    case RetirementReason::StatutoryOrRegulatoryUse: return "StatutoryOrRegulatoryUse";
    case RetirementReason::PublicClaimPurchase: return "PublicClaimPurchase";
    case RetirementReason::AttributePurchase: return "AttributePurchase";
  }
  return "?";
}

inline std::optional<RetirementReason> parse_reason(std::string_view s) {
  for (auto r : kAllRetirementReasons)
    if (reason_name(r) == s) return r;
  return std::nullopt;
}

struct RetirementRecord {
  RetirementReason reason = RetirementReason::StatutoryOrRegulatoryUse;
  ParticipantId retired_by;
  Tick retired_at = 0;
  friend bool operator==(const RetirementRecord&, const RetirementRecord&) = default;
};

struct CertStatus {
  enum class Kind : std::uint8_t { Issued, Aggregated, Owned, Retired };
  Kind kind = Kind::Issued;
  std::optional<AggregateId> parent;  // set iff kind == Aggregated

  static CertStatus issued() { return {Kind::Issued, std::nullopt}; }
  static CertStatus aggregated(AggregateId id) { return {Kind::Aggregated, std::move(id)}; }
  static CertStatus owned() { return {Kind::Owned, std::nullopt}; }
  static CertStatus retired() { return {Kind::Retired, std::nullopt}; }

  friend bool operator==(const CertStatus&, const CertStatus&) = default;
};

inline constexpr std::string_view status_name(CertStatus::Kind k) {
  switch (k) {
    case CertStatus::Kind::Issued: return "Issued";
    case CertStatus::Kind::Aggregated: return "Aggregated";
    case CertStatus::Kind::Owned: return "Owned";
    case CertStatus::Kind::Retired: return "Retired";
  }
  return "?";
}

struct Certificate {
  TrackingId tracking_id;
  std::string project_name;
  CertificateType certificate_type = CertificateType::Voluntary;
  EnergySource source;
  std::uint64_t energy_mwh = 1;
  ParticipantId generator;
  Tick issued_at = 0;
  CertStatus status;
  ParticipantId owner;
  std::optional<RetirementRecord> retirement;
  std::uint64_t swap_count = 0;

  friend bool operator==(const Certificate&, const Certificate&) = default;
};

struct AggregateBlock {
  AggregateId id;
  std::vector<TrackingId> members;
  ParticipantId broker;
  std::uint64_t total_mwh = 0;
  friend bool operator==(const AggregateBlock&, const AggregateBlock&) = default;
};

struct ConsumptionEntry {
  TrackingId tracking_id;
  ParticipantId consumer;
  std::uint64_t mwh_used = 0;
  Tick tick = 0;
  friend bool operator==(const ConsumptionEntry&, const ConsumptionEntry&) = default;
};

// ---------------------------------------------------------------------------
// Transaction payloads

struct IssuePayload {
  std::string project_name;
  CertificateType certificate_type = CertificateType::Voluntary;
  EnergySource source;
  std::uint64_t energy_mwh = 1;
  ParticipantId generator;
  Tick issued_at = 0;
  std::uint64_t nonce = 0;  // issuance nonce, distinct from the signer nonce
  friend bool operator==(const IssuePayload&, const IssuePayload&) = default;
};

struct AggregatePayload {
  ParticipantId broker;
  std::vector<TrackingId> members;
  friend bool operator==(const AggregatePayload&, const AggregatePayload&) = default;
};

using TradeTarget = std::variant<TrackingId, AggregateId>;

struct TradePayload {
  TradeTarget target;
  ParticipantId new_owner;
  friend bool operator==(const TradePayload&, const TradePayload&) = default;
};

struct SwapPayload {
  TrackingId tracking_id;
  ParticipantId new_owner;
  friend bool operator==(const SwapPayload&, const SwapPayload&) = default;
};

struct ConsumptionReportPayload {
  TrackingId tracking_id;
  ParticipantId consumer;
  std::uint64_t mwh_used = 1;
  friend bool operator==(const ConsumptionReportPayload&, const ConsumptionReportPayload&) = default;
};

struct RetirePayload {
  TrackingId tracking_id;
  RetirementReason reason = RetirementReason::PublicClaimPurchase;
  friend bool operator==(const RetirePayload&, const RetirePayload&) = default;
};

struct AuditCheckpointPayload {
  Tick period_start = 0;
  Tick period_end = 0;
  friend bool operator==(const AuditCheckpointPayload&, const AuditCheckpointPayload&) = default;
};

using TransactionPayload =
    std::variant<IssuePayload, AggregatePayload, TradePayload, SwapPayload,
                 ConsumptionReportPayload, RetirePayload, AuditCheckpointPayload>;

inline constexpr std::string_view payload_kind(const TransactionPayload& p) {
  constexpr std::string_view names[] = {"Issue", "Aggregate", "Trade", "Swap",
                                        "ConsumptionReport", "Retire", "AuditCheckpoint"};
  return names[p.index()];
}

// ---------------------------------------------------------------------------
// Registry

struct RegistryState {
  std::map<TrackingId, Certificate> certificates;
  std::map<AggregateId, AggregateBlock> aggregates;
  std::vector<ConsumptionEntry> consumption_log;
  std::uint64_t issued_mwh = 0;  // running total of every accepted issuance

  friend bool operator==(const RegistryState&, const RegistryState&) = default;
};

enum class LifecycleError : std::uint8_t {
  CertificateRetired,
  UnknownCertificate,
  NotOwner,
  UnauthorizedRole,
  MemberNotIssued,
  MissingConsumptionReport,
  DuplicateMember,
  EmptyAggregate,
  DuplicateId,
  BadEnergyQuantity,
  UnknownSource,
  UnknownParticipant,
  InvalidTransition,
};

inline constexpr LifecycleError kAllLifecycleErrors[] = {
    LifecycleError::CertificateRetired, LifecycleError::UnknownCertificate,
    LifecycleError::NotOwner,           LifecycleError::UnauthorizedRole,
    LifecycleError::MemberNotIssued,    LifecycleError::MissingConsumptionReport,
    LifecycleError::DuplicateMember,    LifecycleError::EmptyAggregate,
    LifecycleError::DuplicateId,        LifecycleError::BadEnergyQuantity,
    LifecycleError::UnknownSource,      LifecycleError::UnknownParticipant,
    LifecycleError::InvalidTransition,
};

inline constexpr std::string_view error_name(LifecycleError e) {
  switch (e) {
    case LifecycleError::CertificateRetired: return "CertificateRetired";
    case LifecycleError::UnknownCertificate: return "UnknownCertificate";
    case LifecycleError::NotOwner: return "NotOwner";
    case LifecycleError::UnauthorizedRole: return "UnauthorizedRole";
    case LifecycleError::MemberNotIssued: return "MemberNotIssued";
    case LifecycleError::MissingConsumptionReport: return "MissingConsumptionReport";
    case LifecycleError::DuplicateMember: return "DuplicateMember";
    case LifecycleError::EmptyAggregate: return "EmptyAggregate";
    case LifecycleError::DuplicateId: return "DuplicateId";
    case LifecycleError::BadEnergyQuantity: return "BadEnergyQuantity";
    case LifecycleError::UnknownSource: return "UnknownSource";
    case LifecycleError::UnknownParticipant: return "UnknownParticipant";
    case LifecycleError::InvalidTransition: return "InvalidTransition";
  }
  return "?";
}

inline std::optional<LifecycleError> parse_lifecycle_error(std::string_view s) {
  for (auto e : kAllLifecycleErrors)
    if (error_name(e) == s) return e;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Canonical encodings

inline void encode(Encoder& enc, const EnergySource& s) { enc.str(s.canonical()); }

inline void encode(Encoder& enc, const TransactionPayload& payload) {
  enc.u8(static_cast<std::uint8_t>(payload.index()));
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, IssuePayload>) {
          enc.str(p.project_name).u8(static_cast<std::uint8_t>(p.certificate_type));
          encode(enc, p.source);
          enc.u64(p.energy_mwh).str(p.generator).u64(p.issued_at).u64(p.nonce);
        } else if constexpr (std::is_same_v<P, AggregatePayload>) {
          enc.str(p.broker).u64(p.members.size());
          for (const auto& m : p.members) enc.str(m.value);
        } else if constexpr (std::is_same_v<P, TradePayload>) {
          if (auto* t = std::get_if<TrackingId>(&p.target))
            enc.u8(0).str(t->value);
          else
            enc.u8(1).str(std::get<AggregateId>(p.target).value);
          enc.str(p.new_owner);
        } else if constexpr (std::is_same_v<P, SwapPayload>) {
          enc.str(p.tracking_id.value).str(p.new_owner);
        } else if constexpr (std::is_same_v<P, ConsumptionReportPayload>) {
          enc.str(p.tracking_id.value).str(p.consumer).u64(p.mwh_used);
        } else if constexpr (std::is_same_v<P, RetirePayload>) {
          enc.str(p.tracking_id.value).u8(static_cast<std::uint8_t>(p.reason));
        } else {
          enc.u64(p.period_start).u64(p.period_end);
        }
      },
      payload);
}

namespace detail {
inline TrackingId read_tracking_id(Decoder& dec) {
  auto id = TrackingId::parse(dec.str());
  if (!id) throw DecodeError("malformed tracking id");
  return *id;
}
inline AggregateId read_aggregate_id(Decoder& dec) {
  auto id = AggregateId::parse(dec.str());
  if (!id) throw DecodeError("malformed aggregate id");
  return *id;
}
}  // namespace detail

inline TransactionPayload decode_payload(Decoder& dec) {
  auto tag = dec.u8();
  switch (tag) {
    case 0: {
      IssuePayload p;
      p.project_name = dec.str();
      auto type = dec.u8();
      if (type > 1) throw DecodeError("bad certificate type");
      p.certificate_type = static_cast<CertificateType>(type);
      auto source = EnergySource::parse(dec.str());
      if (!source) throw DecodeError("bad energy source");
      p.source = *source;
      p.energy_mwh = dec.u64();
      p.generator = dec.str();
      p.issued_at = dec.u64();
      p.nonce = dec.u64();
      return p;
    }
    case 1: {
      AggregatePayload p;
      p.broker = dec.str();
      auto n = dec.count(4);
      for (std::size_t i = 0; i < n; ++i) p.members.push_back(detail::read_tracking_id(dec));
      return p;
    }
    case 2: {
      TradePayload p;
      auto kind = dec.u8();
      if (kind == 0)
        p.target = detail::read_tracking_id(dec);
      else if (kind == 1)
        p.target = detail::read_aggregate_id(dec);
      else
        throw DecodeError("bad trade target");
      p.new_owner = dec.str();
      return p;
    }
    case 3: {
      SwapPayload p;
      p.tracking_id = detail::read_tracking_id(dec);
      p.new_owner = dec.str();
      return p;
    }
    case 4: {
      ConsumptionReportPayload p;
      p.tracking_id = detail::read_tracking_id(dec);
      p.consumer = dec.str();
      p.mwh_used = dec.u64();
      return p;
    }
    case 5: {
      RetirePayload p;
      p.tracking_id = detail::read_tracking_id(dec);
      auto reason = dec.u8();
      if (reason > 2) throw DecodeError("bad retirement reason");
      p.reason = static_cast<RetirementReason>(reason);
      return p;
    }
    case 6: {
      AuditCheckpointPayload p;
      p.period_start = dec.u64();
      p.period_end = dec.u64();
      return p;
    }
    default:
      throw DecodeError("unknown payload tag");
  }
}

inline Bytes encode_payload(const TransactionPayload& payload) {
  Encoder enc;
  encode(enc, payload);
  return std::move(enc).data();
}

inline void encode(Encoder& enc, const Certificate& c) {
  enc.str(c.tracking_id.value)
      .str(c.project_name)
      .u8(static_cast<std::uint8_t>(c.certificate_type));
  encode(enc, c.source);
  enc.u64(c.energy_mwh).str(c.generator).u64(c.issued_at);
  enc.u8(static_cast<std::uint8_t>(c.status.kind)).str(c.status.parent ? c.status.parent->value : "");
  enc.str(c.owner);
  enc.u8(c.retirement ? 1 : 0);
  if (c.retirement)
    enc.u8(static_cast<std::uint8_t>(c.retirement->reason))
        .str(c.retirement->retired_by)
        .u64(c.retirement->retired_at);
  enc.u64(c.swap_count);
}

/// Canonical bytes of a registry snapshot; equal states encode identically.
inline Bytes encode_registry(const RegistryState& state) {
  Encoder enc;
  enc.u64(state.issued_mwh).u64(state.certificates.size());
  for (const auto& [id, cert] : state.certificates) encode(enc, cert);
  enc.u64(state.aggregates.size());
  for (const auto& [id, agg] : state.aggregates) {
    enc.str(id.value).str(agg.broker).u64(agg.total_mwh).u64(agg.members.size());
    for (const auto& m : agg.members) enc.str(m.value);
  }
  enc.u64(state.consumption_log.size());
  for (const auto& e : state.consumption_log)
    enc.str(e.tracking_id.value).str(e.consumer).u64(e.mwh_used).u64(e.tick);
  return std::move(enc).data();
}

// ---------------------------------------------------------------------------
// Operations

inline TrackingId derive_tracking_id(const ParticipantId& generator, const EnergySource& source,
                                     Tick issued_at, std::uint64_t nonce) {
  Encoder enc;
  enc.str(generator).str(source.canonical()).u64(issued_at).u64(nonce);
  return TrackingId{sha256(enc.data()).hex()};
}

inline TrackingId tracking_id_of(const IssuePayload& p) {
  return derive_tracking_id(p.generator, p.source, p.issued_at, p.nonce);
}

inline AggregateId derive_aggregate_id(const std::vector<TrackingId>& members) {
  Encoder enc;
  for (const auto& m : members) enc.str(m.value);
  return AggregateId{sha256(enc.data()).hex()};
}

struct ValidationResult {
  std::optional<LifecycleError> rejection;
  bool accepted() const { return !rejection; }
};

/// Issuance gate. Checks run in a fixed order so exactly one reason is reported.
inline ValidationResult validate_issuance(const IssuePayload& payload, const RegistryState& registry,
                                          const Directory& participants) {
  if (registry.certificates.contains(tracking_id_of(payload)))
    return {LifecycleError::DuplicateId};
  if (payload.energy_mwh != 1) return {LifecycleError::BadEnergyQuantity};
  if (!payload.source.well_formed()) return {LifecycleError::UnknownSource};
  auto* issuer = find_participant(participants, payload.generator);
  if (!issuer || issuer->role != Role::Generator) return {LifecycleError::UnauthorizedRole};
  return {};
}

using ApplyResult = Expected<RegistryState, LifecycleError>;

inline ApplyResult aggregate(const RegistryState& registry, const Directory& participants,
                             const ParticipantId& broker, const std::vector<TrackingId>& members) {
  auto* who = find_participant(participants, broker);
  if (!who || who->role != Role::Broker) return unexpected(LifecycleError::UnauthorizedRole);
  if (members.empty()) return unexpected(LifecycleError::EmptyAggregate);
  std::set<TrackingId> seen(members.begin(), members.end());
  if (seen.size() != members.size()) return unexpected(LifecycleError::DuplicateMember);
  for (const auto& m : members) {
    auto it = registry.certificates.find(m);
    if (it == registry.certificates.end()) return unexpected(LifecycleError::UnknownCertificate);
    if (it->second.status.kind != CertStatus::Kind::Issued)
      return unexpected(LifecycleError::MemberNotIssued);
  }

  RegistryState next = registry;
  AggregateBlock block{derive_aggregate_id(members), members, broker, 0};
  for (const auto& m : members) {
    auto& cert = next.certificates.at(m);
    cert.status = CertStatus::aggregated(block.id);
    cert.owner = broker;
    block.total_mwh += cert.energy_mwh;
  }
  next.aggregates.emplace(block.id, std::move(block));
  return next;
}

namespace detail {

// Breaks an aggregate apart: every member becomes Owned by `owner`.
inline void dissolve(RegistryState& state, const AggregateId& id, const ParticipantId& owner) {
  auto it = state.aggregates.find(id);
  for (const auto& m : it->second.members) {
    auto& cert = state.certificates.at(m);
    cert.status = CertStatus::owned();
    cert.owner = owner;
  }
  state.aggregates.erase(it);
}

inline bool has_consumption_report(const RegistryState& state, const TrackingId& id,
                                   const ParticipantId& consumer) {
  return std::any_of(state.consumption_log.begin(), state.consumption_log.end(),
                     [&](const ConsumptionEntry& e) {
                       return e.tracking_id == id && e.consumer == consumer;
                     });
}

}  // namespace detail

/// Applies one transaction on behalf of `actor`. The input state is never
/// modified; on success the returned state carries exactly one transition.
inline ApplyResult apply(const RegistryState& registry, const TransactionPayload& tx,
                         const ParticipantId& actor, Tick now, const Directory& participants) {
  using K = CertStatus::Kind;
  auto* who = find_participant(participants, actor);
  if (!who) return unexpected(LifecycleError::UnauthorizedRole);

  return std::visit(
      [&](const auto& p) -> ApplyResult {
        using P = std::decay_t<decltype(p)>;

        if constexpr (std::is_same_v<P, IssuePayload>) {
          if (auto v = validate_issuance(p, registry, participants); !v.accepted())
            return unexpected(*v.rejection);
          if (actor != p.generator) return unexpected(LifecycleError::UnauthorizedRole);
          RegistryState next = registry;
          Certificate cert;
          cert.tracking_id = tracking_id_of(p);
          cert.project_name = p.project_name;
          cert.certificate_type = p.certificate_type;
          cert.source = p.source;
          cert.energy_mwh = p.energy_mwh;
          cert.generator = p.generator;
          cert.issued_at = p.issued_at;
          cert.status = CertStatus::issued();
          cert.owner = p.generator;
          next.issued_mwh += cert.energy_mwh;
          next.certificates.emplace(cert.tracking_id, std::move(cert));
          return next;

        } else if constexpr (std::is_same_v<P, AggregatePayload>) {
          if (actor != p.broker) return unexpected(LifecycleError::UnauthorizedRole);
          return aggregate(registry, participants, p.broker, p.members);

        } else if constexpr (std::is_same_v<P, TradePayload>) {
          if (auto* agg_id = std::get_if<AggregateId>(&p.target)) {
            auto it = registry.aggregates.find(*agg_id);
            if (it == registry.aggregates.end())
              return unexpected(LifecycleError::UnknownCertificate);
            if (it->second.broker != actor) return unexpected(LifecycleError::NotOwner);
            if (!find_participant(participants, p.new_owner))
              return unexpected(LifecycleError::UnknownParticipant);
            RegistryState next = registry;
            detail::dissolve(next, *agg_id, p.new_owner);
            return next;
          }
          const auto& id = std::get<TrackingId>(p.target);
          auto it = registry.certificates.find(id);
          if (it == registry.certificates.end())
            return unexpected(LifecycleError::UnknownCertificate);
          const auto& cert = it->second;
          if (cert.status.kind == K::Retired) return unexpected(LifecycleError::CertificateRetired);
          if (cert.owner != actor) return unexpected(LifecycleError::NotOwner);
          if (!find_participant(participants, p.new_owner))
            return unexpected(LifecycleError::UnknownParticipant);
          RegistryState next = registry;
          // Selling one member out of an aggregate breaks the whole block up;
          // the rest stay with the broker as individually owned certificates.
          if (cert.status.kind == K::Aggregated) detail::dissolve(next, *cert.status.parent, actor);
          auto& moved = next.certificates.at(id);
          moved.status = CertStatus::owned();
          moved.owner = p.new_owner;
          return next;

        } else if constexpr (std::is_same_v<P, SwapPayload>) {
          auto it = registry.certificates.find(p.tracking_id);
          if (it == registry.certificates.end())
            return unexpected(LifecycleError::UnknownCertificate);
          const auto& cert = it->second;
          if (cert.status.kind == K::Retired) return unexpected(LifecycleError::CertificateRetired);
          if (cert.owner != actor) return unexpected(LifecycleError::NotOwner);
          if (cert.status.kind != K::Owned) return unexpected(LifecycleError::InvalidTransition);
          if (!find_participant(participants, p.new_owner))
            return unexpected(LifecycleError::UnknownParticipant);
          RegistryState next = registry;
          auto& swapped = next.certificates.at(p.tracking_id);
          swapped.owner = p.new_owner;
          ++swapped.swap_count;
          return next;

        } else if constexpr (std::is_same_v<P, ConsumptionReportPayload>) {
          auto it = registry.certificates.find(p.tracking_id);
          if (it == registry.certificates.end())
            return unexpected(LifecycleError::UnknownCertificate);
          const auto& cert = it->second;
          if (cert.status.kind == K::Retired) return unexpected(LifecycleError::CertificateRetired);
          if (cert.owner != actor || p.consumer != actor) return unexpected(LifecycleError::NotOwner);
          if (cert.status.kind != K::Owned) return unexpected(LifecycleError::InvalidTransition);
          if (p.mwh_used == 0 || p.mwh_used > cert.energy_mwh)
            return unexpected(LifecycleError::BadEnergyQuantity);
          RegistryState next = registry;
          next.consumption_log.push_back({p.tracking_id, p.consumer, p.mwh_used, now});
          return next;

        } else if constexpr (std::is_same_v<P, RetirePayload>) {
          auto it = registry.certificates.find(p.tracking_id);
          if (it == registry.certificates.end())
            return unexpected(LifecycleError::UnknownCertificate);
          const auto& cert = it->second;
          if (cert.status.kind == K::Retired) return unexpected(LifecycleError::CertificateRetired);
          if (cert.owner != actor) return unexpected(LifecycleError::NotOwner);
          if (cert.status.kind != K::Owned) return unexpected(LifecycleError::InvalidTransition);
          if (who->role == Role::Buyer &&
              !detail::has_consumption_report(registry, p.tracking_id, actor))
            return unexpected(LifecycleError::MissingConsumptionReport);
          RegistryState next = registry;
          auto& retired = next.certificates.at(p.tracking_id);
          retired.status = CertStatus::retired();
          retired.retirement = RetirementRecord{p.reason, actor, now};
          return next;

        } else {
          if (who->role != Role::Regulator) return unexpected(LifecycleError::UnauthorizedRole);
          if (p.period_start > p.period_end) return unexpected(LifecycleError::InvalidTransition);
          return registry;
        }
      },
      tx);
}

// ---------------------------------------------------------------------------
// Invariants

struct MwhBalance {
  std::uint64_t issued = 0;     // running issuance total
  std::uint64_t active = 0;     // Issued + Owned
  std::uint64_t aggregated = 0;
  std::uint64_t retired = 0;

  bool holds() const { return issued == active + aggregated + retired; }
};

inline MwhBalance mwh_balance(const RegistryState& state) {
  MwhBalance b;
  b.issued = state.issued_mwh;
  for (const auto& [id, cert] : state.certificates) {
    switch (cert.status.kind) {
      case CertStatus::Kind::Issued:
      case CertStatus::Kind::Owned: b.active += cert.energy_mwh; break;
      case CertStatus::Kind::Aggregated: b.aggregated += cert.energy_mwh; break;
      case CertStatus::Kind::Retired: b.retired += cert.energy_mwh; break;
    }
  }
  return b;
}

/// Full structural check of a registry; returns a description of the first
/// violated invariant.
inline std::optional<std::string> check_invariants(const RegistryState& state) {
  if (!mwh_balance(state).holds()) return "MWh conservation identity violated";
  std::uint64_t aggregate_mwh = 0;
  std::set<TrackingId> in_aggregate;
  for (const auto& [id, agg] : state.aggregates) {
    if (agg.members.empty() || agg.total_mwh != agg.members.size())
      return "aggregate " + id.value + " total does not match member count";
    for (const auto& m : agg.members) {
      if (!in_aggregate.insert(m).second) return "certificate " + m.value + " in two aggregates";
      auto it = state.certificates.find(m);
      if (it == state.certificates.end() || it->second.status != CertStatus::aggregated(id))
        return "aggregate member " + m.value + " not in Aggregated status";
    }
    aggregate_mwh += agg.total_mwh;
  }
  if (aggregate_mwh != mwh_balance(state).aggregated)
    return "aggregated MWh does not match aggregate blocks";
  for (const auto& [id, cert] : state.certificates) {
    if (cert.tracking_id != id) return "certificate keyed under a foreign tracking id";
    if (cert.energy_mwh != 1) return "certificate " + id.value + " is not 1 MWh";
    if (cert.retirement.has_value() != (cert.status.kind == CertStatus::Kind::Retired))
      return "retirement record present iff Retired violated for " + id.value;
  }
  return std::nullopt;
}

}  // namespace recledger

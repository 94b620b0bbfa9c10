#pragma once

// Simulated user sessions: the interchange format between the log
// generator and the miner. One JSON object per line:
//
//   {"session_id":"s0000042",
//    "snapshots":[{"tick":1,"text":"s"},{"tick":2,"text":"sn"},...],
//    "engagement":"sno isle",                 // or null
//    "transfer_correction":null}              // or {"typed":..,"system_corrected":..}

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapspell/error.hpp"

namespace mapspell {

struct Snapshot {
  std::int64_t tick = 0;
  std::string text;
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct TransferCorrection {
  std::string typed;
  std::string system_corrected;
  friend bool operator==(const TransferCorrection&, const TransferCorrection&) = default;
};

struct KeystrokeSession {
  std::string session_id;
  std::vector<Snapshot> snapshots;
  std::optional<std::string> engagement;
  std::optional<TransferCorrection> transfer_correction;
  friend bool operator==(const KeystrokeSession&, const KeystrokeSession&) = default;
};

/// Throws ContractError when ticks are not strictly increasing or there are no snapshots.
inline void validate(const KeystrokeSession& s) {
  if (s.snapshots.empty()) throw ContractError("session " + s.session_id + ": no snapshots");
  for (std::size_t i = 1; i < s.snapshots.size(); ++i)
    if (s.snapshots[i].tick <= s.snapshots[i - 1].tick)
      throw ContractError("session " + s.session_id + ": ticks not strictly increasing");
}

inline nlohmann::ordered_json to_json(const KeystrokeSession& s) {
  nlohmann::ordered_json j;
  j["session_id"] = s.session_id;
  auto snaps = nlohmann::ordered_json::array();
  for (const auto& snap : s.snapshots) snaps.push_back({{"tick", snap.tick}, {"text", snap.text}});
  j["snapshots"] = std::move(snaps);
  j["engagement"] = s.engagement ? nlohmann::ordered_json(*s.engagement) : nullptr;
  if (s.transfer_correction)
    j["transfer_correction"] = {{"typed", s.transfer_correction->typed},
                                {"system_corrected", s.transfer_correction->system_corrected}};
  else
    j["transfer_correction"] = nullptr;
  return j;
}

inline KeystrokeSession session_from_json(const nlohmann::json& j) {
  KeystrokeSession s;
  s.session_id = j.at("session_id").get<std::string>();
  for (const auto& snap : j.at("snapshots"))
    s.snapshots.push_back({snap.at("tick").get<std::int64_t>(), snap.at("text").get<std::string>()});
  if (j.contains("engagement") && !j["engagement"].is_null())
    s.engagement = j["engagement"].get<std::string>();
  if (j.contains("transfer_correction") && !j["transfer_correction"].is_null()) {
    const auto& t = j["transfer_correction"];
    s.transfer_correction = TransferCorrection{t.at("typed").get<std::string>(),
                                               t.at("system_corrected").get<std::string>()};
  }
  validate(s);
  return s;
}

inline void write_sessions(const std::vector<KeystrokeSession>& sessions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& s : sessions) out << to_json(s).dump() << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<KeystrokeSession> read_sessions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open session file");
  std::vector<KeystrokeSession> sessions;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      sessions.push_back(session_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, lineno, e.what());
    } catch (const ContractError& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return sessions;
}

}  // namespace mapspell

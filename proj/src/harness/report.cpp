#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vrx/harness/harness.hpp"

namespace vrx::harness {

using nlohmann::json;
namespace fs = std::filesystem;

json ExperimentReport::to_json() const {
  json j;
  j["experiment_id"] = experiment_id;
  j["config"] = config_snapshot;
  j["trials"] = trials;
  j["aggregates"] = aggregates;
  j["thresholds"] = thresholds;
  j["passed"] = passed;
  j["wall_clock_sec"] = wall_clock_sec;
  return j;
}

std::string ExperimentReport::canonical_dump() const {
  json j = to_json();
  j.erase("wall_clock_sec");
  return j.dump();
}

std::uint64_t ExperimentReport::content_hash() const { return fnv1a(canonical_dump()); }

std::string ExperimentReport::to_csv() const {
  // Union of trial keys, sorted for a stable column order.
  std::set<std::string> keys;
  for (const auto& t : trials)
    for (auto it = t.begin(); it != t.end(); ++it) keys.insert(it.key());
  std::ostringstream os;
  bool first = true;
  for (const auto& k : keys) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  os << "\n";
  for (const auto& t : trials) {
    first = true;
    for (const auto& k : keys) {
      os << (first ? "" : ",");
      first = false;
      if (!t.contains(k)) continue;
      const auto& v = t.at(k);
      if (v.is_string())
        os << v.get<std::string>();
      else
        os << v.dump();
    }
    os << "\n";
  }
  return os.str();
}

void ExperimentReport::save(const std::string& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / (experiment_id + ".json"));
    if (!out) throw Error("report: cannot write to " + dir);
    out << to_json().dump(2);
  }
  {
    std::ofstream out(fs::path(dir) / (experiment_id + ".csv"));
    out << to_csv();
  }
}

}  // namespace vrx::harness

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cohort file format: UTF-8, one JSON object per line, one patient per line.
//
//   {"format_version": 1,
//    "patient_id": "p0001",
//    "times": [0.7, 3.2, 9.9],                 // hours since window start, strictly increasing, <= 24
//    "labs": [[1.2, null], [null, 4.0], ...],  // one array of K values per encounter, null = not measured
//    "label": {"time_days": 12.5, "event": 1}, // from the end of the window; event 1 = death, 0 = censored
//    "regime": "A"}
//
// format_version is optional on input and always written.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepjoint/random.hpp"
#include "deepjoint/survival.hpp"

namespace deepjoint {

inline constexpr double kWindowHours = 24.0;
inline constexpr int kCohortFormatVersion = 1;

struct EncounterSequence {
  std::string patient_id;
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // NaN where not measured
  std::vector<std::vector<std::uint8_t>> mask;
  SurvivalLabel label;
  std::string regime = "A";

  [[nodiscard]] std::size_t length() const noexcept { return times.size(); }
  [[nodiscard]] std::size_t labs() const noexcept { return values.empty() ? 0 : values.front().size(); }

  void validate(double window = kWindowHours) const {
    auto fail = [&](const std::string& what) { throw DataError("patient '" + patient_id + "': " + what); };
    if (times.empty()) fail("at least one encounter is required");
    if (values.size() != times.size() || mask.size() != times.size()) {
      fail("times, labs and mask must have one entry per encounter");
    }
    const std::size_t k = labs();
    if (k == 0) fail("encounters must carry at least one lab slot");
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!std::isfinite(times[j]) || times[j] < 0.0 || times[j] > window) {
        fail("encounter time " + std::to_string(times[j]) + " outside [0, window]");
      }
      if (j > 0 && !(times[j] > times[j - 1])) fail("encounter times must be strictly increasing");
      if (values[j].size() != k || mask[j].size() != k) fail("every encounter must have K labs");
      for (std::size_t c = 0; c < k; ++c) {
        if (mask[j][c] > 1) fail("mask entries must be 0 or 1");
        if (mask[j][c] && !std::isfinite(values[j][c])) fail("observed lab value is not finite");
      }
    }
    label.validate();
  }
};

using Cohort = std::vector<EncounterSequence>;

inline nlohmann::json to_json(const EncounterSequence& s) {
  nlohmann::json labs = nlohmann::json::array();
  for (std::size_t j = 0; j < s.length(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < s.labs(); ++c) {
      if (s.mask[j][c]) row.push_back(s.values[j][c]);
      else row.push_back(nullptr);
    }
    labs.push_back(std::move(row));
  }
  return {{"format_version", kCohortFormatVersion},
          {"patient_id", s.patient_id},
          {"times", s.times},
          {"labs", std::move(labs)},
          {"label", {{"time_days", s.label.time}, {"event", s.label.event ? 1 : 0}}},
          {"regime", s.regime}};
}

/// Parses one cohort record; errors name the line.
inline EncounterSequence parse_cohort_record(const std::string& line, std::size_t line_no) {
  auto fail = [&](const std::string& what) -> DataError {
    return DataError("cohort line " + std::to_string(line_no) + ": " + what);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("invalid JSON (") + e.what() + ")");
  }
  try {
    if (!j.is_object()) throw fail("record must be a JSON object");
    if (j.contains("format_version") && j.at("format_version").get<int>() != kCohortFormatVersion) {
      throw fail("unsupported format_version " + j.at("format_version").dump());
    }
    EncounterSequence s;
    s.patient_id = j.at("patient_id").get<std::string>();
    s.times = j.at("times").get<std::vector<double>>();
    const auto& labs = j.at("labs");
    if (!labs.is_array()) throw fail("'labs' must be an array of arrays");
    for (const auto& row : labs) {
      if (!row.is_array()) throw fail("'labs' must be an array of arrays");
      std::vector<double> v;
      std::vector<std::uint8_t> m;
      for (const auto& x : row) {
        if (x.is_null()) {
          v.push_back(std::numeric_limits<double>::quiet_NaN());
          m.push_back(0);
        } else if (x.is_number()) {
          v.push_back(x.get<double>());
          m.push_back(1);
        } else {
          throw fail("lab values must be numbers or null");
        }
      }
      s.values.push_back(std::move(v));
      s.mask.push_back(std::move(m));
    }
    const auto& label = j.at("label");
    s.label.time = label.at("time_days").get<double>();
    const int event = label.at("event").get<int>();
    if (event != 0 && event != 1) throw fail("label.event must be 0 or 1");
    s.label.event = event == 1;
    s.regime = j.value("regime", std::string("A"));
    s.validate();
    return s;
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (what.rfind("cohort line", 0) == 0) throw;
    throw fail(what);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("schema error (") + e.what() + ")");
  }
}

inline Cohort read_cohort(std::istream& in) {
  Cohort cohort;
  std::string line;
  std::size_t line_no = 0;
  std::size_t labs = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto s = parse_cohort_record(line, line_no);
    if (labs == 0) labs = s.labs();
    if (s.labs() != labs) {
      throw DataError("cohort line " + std::to_string(line_no) + ": patient has " +
                      std::to_string(s.labs()) + " labs, earlier records have " + std::to_string(labs));
    }
    cohort.push_back(std::move(s));
  }
  if (cohort.empty()) throw DataError("cohort: no records");
  return cohort;
}

inline Cohort read_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file '" + path + "'");
  return read_cohort(in);
}

inline void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const auto& s : cohort) out << to_json(s).dump() << '\n';
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Content digest of a file (FNV-1a, 64 bit).
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for digest");
  std::ostringstream buf;
  buf << in.rdbuf();
  return "fnv1a64:" + hex64(fnv1a(buf.str()));
}

/// Order-sensitive digest of a set of patient ids; tags test sets.
inline std::string ids_digest(const std::vector<std::string>& ids) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& id : ids) {
    h = fnv1a(id, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return "ids:" + hex64(h) + ":" + std::to_string(ids.size());
}

}  // namespace deepjoint

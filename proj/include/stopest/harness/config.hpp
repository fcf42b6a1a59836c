#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/error.hpp"
#include "stopest/process_models.hpp"

namespace stopest::harness {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Largest budget the 32-bit border array can index.
inline constexpr std::uint64_t kMaxBudget = std::numeric_limits<std::uint32_t>::max();

struct RunConfig {
  ProcessSpec spec = Iid{0.5};
  std::uint64_t k_max = 12;
  std::uint64_t bit_budget = 10'000'000;
  std::uint64_t runs = 1;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> l_values;
  double epsilon = 0.3;
  std::string output_dir = "out";
  std::uint64_t workers = 1;
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where,
                                ErrorCode code = ErrorCode::InvalidArgument) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw Error(code, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::InvalidSpec, std::string("missing '") + key + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("bad '") + key + "' in " + where + ": " + e.what());
  }
}

inline std::vector<std::uint8_t> pattern_from_json(const json& j) {
  if (j.is_string()) return parse_bits(j.get<std::string>());
  std::vector<std::uint8_t> out;
  for (const auto& b : j) out.push_back(static_cast<std::uint8_t>(b.get<int>()));
  return out;
}

}  // namespace detail

inline ProcessSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "process spec must be a JSON object");
  const auto variant = detail::required<std::string>(j, "variant", "spec");
  ProcessSpec spec;
  if (variant == "IID") {
    detail::reject_unknown_keys(j, {"variant", "p"}, "IID spec", ErrorCode::InvalidSpec);
    spec = Iid{detail::required<double>(j, "p", "IID spec")};
  } else if (variant == "Markov2") {
    detail::reject_unknown_keys(j, {"variant", "p01", "p10"}, "Markov2 spec", ErrorCode::InvalidSpec);
    spec = Markov2{detail::required<double>(j, "p01", "Markov2 spec"), detail::required<double>(j, "p10", "Markov2 spec")};
  } else if (variant == "HMM") {
    detail::reject_unknown_keys(j, {"variant", "transition", "emission"}, "HMM spec", ErrorCode::InvalidSpec);
    const auto rows = detail::required<std::vector<std::vector<double>>>(j, "transition", "HMM spec");
    Hmm hmm;
    const auto m = static_cast<Eigen::Index>(rows.size());
    hmm.transition.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
        throw Error(ErrorCode::InvalidSpec, "HMM transition must be square");
      }
      for (Eigen::Index c = 0; c < m; ++c) hmm.transition(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    hmm.emission = detail::pattern_from_json(j.at("emission"));
    spec = std::move(hmm);
  } else if (variant == "Mixture") {
    detail::reject_unknown_keys(j, {"variant", "p1", "p2", "w"}, "Mixture spec", ErrorCode::InvalidSpec);
    spec = Mixture{detail::required<double>(j, "p1", "Mixture spec"), detail::required<double>(j, "p2", "Mixture spec"),
                   detail::required<double>(j, "w", "Mixture spec")};
  } else if (variant == "Periodic") {
    detail::reject_unknown_keys(j, {"variant", "pattern"}, "Periodic spec", ErrorCode::InvalidSpec);
    if (!j.contains("pattern")) throw Error(ErrorCode::InvalidSpec, "missing 'pattern' in Periodic spec");
    spec = Periodic{detail::pattern_from_json(j.at("pattern"))};
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown process variant '" + variant + "'");
  }
  stopest::validate(spec);
  return spec;
}

inline json spec_to_json(const ProcessSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Iid>) {
          return {{"variant", "IID"}, {"p", s.p}};
        } else if constexpr (std::is_same_v<T, Markov2>) {
          return {{"variant", "Markov2"}, {"p01", s.p01}, {"p10", s.p10}};
        } else if constexpr (std::is_same_v<T, Hmm>) {
          json rows = json::array();
          for (Eigen::Index i = 0; i < s.transition.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index c = 0; c < s.transition.cols(); ++c) row.push_back(s.transition(i, c));
            rows.push_back(row);
          }
          json em = json::array();
          for (auto e : s.emission) em.push_back(static_cast<int>(e));
          return {{"variant", "HMM"}, {"transition", rows}, {"emission", em}};
        } else if constexpr (std::is_same_v<T, Mixture>) {
          return {{"variant", "Mixture"}, {"p1", s.p1}, {"p2", s.p2}, {"w", s.w}};
        } else {
          std::string pat;
          for (auto b : s.pattern) pat.push_back(b ? '1' : '0');
          return {{"variant", "Periodic"}, {"pattern", pat}};
        }
      },
      spec);
}

inline void validate_config(const RunConfig& c) {
  stopest::validate(c.spec);
  if (c.k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be at least 1");
  if (c.bit_budget < 1 || c.bit_budget > kMaxBudget) throw Error(ErrorCode::InvalidArgument, "bit_budget must lie in [1, 2^32 - 1]");
  if (c.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be at least 1");
  if (c.workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be at least 1");
  if (!(c.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  for (std::size_t i = 0; i < c.l_values.size(); ++i) {
    if (c.l_values[i] < 1) throw Error(ErrorCode::InvalidArgument, "l values must be at least 1");
    if (i > 0 && c.l_values[i] <= c.l_values[i - 1]) throw Error(ErrorCode::InvalidArgument, "l values must be increasing");
  }
  if (c.output_dir.empty()) throw Error(ErrorCode::InvalidArgument, "output_dir must be set");
}

inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  detail::reject_unknown_keys(
      j, {"schema_version", "spec", "k_max", "bit_budget", "runs", "seed", "l_values", "epsilon", "output_dir", "workers"},
      "config");
  if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion) {
    throw Error(ErrorCode::SchemaMismatch, "config schema_version must be " + std::to_string(kSchemaVersion));
  }
  RunConfig c;
  c.spec = spec_from_json(detail::required<json>(j, "spec", "config"));
  try {
    c.k_max = j.value("k_max", c.k_max);
    c.bit_budget = j.value("bit_budget", c.bit_budget);
    c.runs = j.value("runs", c.runs);
    c.seed = j.value("seed", c.seed);
    c.l_values = j.value("l_values", c.l_values);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline json config_to_json(const RunConfig& c) {
  return {{"schema_version", kSchemaVersion}, {"spec", spec_to_json(c.spec)}, {"k_max", c.k_max},
          {"bit_budget", c.bit_budget},       {"runs", c.runs},                {"seed", c.seed},
          {"l_values", c.l_values},           {"epsilon", c.epsilon},          {"output_dir", c.output_dir},
          {"workers", c.workers}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace stopest::harness

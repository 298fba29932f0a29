#ifndef DEPCL_CONFIG_HPP
#define DEPCL_CONFIG_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "depcl/errors.hpp"
#include "depcl/random.hpp"
#include "depcl/transforms.hpp"

namespace depcl {

using Json = nlohmann::json;

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

/// Parses `{kind: "scaling", s: 100.0}` style records (bare keys allowed).
inline Json parse_record(const std::string& text) {
  static const std::regex bare_key(R"(([\{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:)");
  const std::string quoted = std::regex_replace(text, bare_key, "$1\"$2\":");
  try {
    return Json::parse(quoted);
  } catch (const Json::exception& e) {
    throw ConfigError("cannot parse record '" + text + "': " + e.what());
  }
}

/**
 * Flat key = value configuration. `[section]` headers prefix the keys that
 * follow with `section.`; `#` and `;` start comments. Later assignments win.
 */
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = strip_comment(line);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      c.kv_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void erase(const std::string& key) { kv_.erase(key); }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  /// Applies `key=value`.
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  }

  std::string str(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::string v = it->second;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
  }

  double num(const std::string& key, double def) const {
    if (!has(key)) return def;
    const std::string v = str(key, "");
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (detail::trim(v.substr(pos)).size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    }
  }

  long integer(const std::string& key, long def) const {
    if (!has(key)) return def;
    const double d = num(key, static_cast<double>(def));
    if (d != static_cast<double>(static_cast<long>(d))) throw ConfigError("key '" + key + "' expects an integer");
    return static_cast<long>(d);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const std::string v = str(key, "");
    try {
      std::size_t pos = 0;
      const auto r = std::stoull(v, &pos, 0);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
  }

  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string v = str(key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
  }

  Json json(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing key '" + key + "'");
    return parse_record(kv_.at(key));
  }

  std::vector<double> num_list(const std::string& key) const {
    const Json j = json(key);
    if (!j.is_array()) throw ConfigError("key '" + key + "' expects a list");
    std::vector<double> out;
    for (const auto& e : j) {
      if (!e.is_number()) throw ConfigError("key '" + key + "' expects numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  /// Sorted `key=value` lines; the basis of the config hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
    return out;
  }

  /// FNV-1a 64-bit of the canonical dump, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  static std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (!in_str && (line[i] == '#' || line[i] == ';')) return line.substr(0, i);
    }
    return line;
  }

  std::map<std::string, std::string> kv_;
};

/// Builds a transformation from a record. Random rotations/permutations draw from rng.
inline Transformation transform_from_json(const Json& j, int d_x, Rng& rng) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("transform record needs a kind");
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "identity") return Transformation::identity();
    if (kind == "scaling") return Transformation::scaling(j.at("s").get<double>());
    if (kind == "rotation") {
      if (j.contains("matrix")) {
        const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
        Matrix q(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.size()) throw ConfigError("rotation matrix must be square");
          for (std::size_t c = 0; c < rows.size(); ++c) q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        return Transformation::rotation(q);
      }
      if (j.contains("angles")) {
        const auto ang = j.at("angles").get<std::vector<double>>();
        std::vector<double> rad;
        const bool deg = j.value("degrees", false);
        for (double a : ang) rad.push_back(deg ? a * 3.14159265358979323846 / 180.0 : a);
        return Transformation::plane_rotation(d_x, rad);
      }
      return Transformation::random_rotation(d_x, rng);
    }
    if (kind == "permutation") {
      if (j.contains("perm")) return Transformation::permutation(j.at("perm").get<std::vector<int>>());
      std::vector<int> perm(static_cast<std::size_t>(d_x));
      for (int i = 0; i < d_x; ++i) perm[static_cast<std::size_t>(i)] = i;
      for (int i = d_x - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
      return Transformation::permutation(perm);
    }
    if (kind == "affine") {
      const auto rows = j.at("A").get<std::vector<std::vector<double>>>();
      const auto b = j.value("b", std::vector<double>(rows.size(), 0.0));
      Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size()) throw ConfigError("affine matrix must be square");
        for (std::size_t c = 0; c < rows.size(); ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      return Transformation::affine(a, Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
    }
    if (kind == "composition") {
      std::vector<Transformation> parts;
      for (const auto& p : j.at("parts")) parts.push_back(transform_from_json(p, d_x, rng));
      return Transformation::composition(std::move(parts));
    }
  } catch (const Json::exception& e) {
    throw ConfigError("bad '" + kind + "' transform record: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad '" + kind + "' transform record: " + e.what());
  }
  throw ConfigError("unknown transform kind '" + kind + "'");
}

/**
 * Chain from `chain.default` (maps 2..T) and per-task overrides `chain.<t>`.
 * Task 1 is always the identity.
 */
inline DependencyChain chain_from_config(const Config& cfg, int T, int d_x, std::uint64_t seed) {
  std::vector<Transformation> maps{Transformation::identity()};
  for (int t = 2; t <= T; ++t) {
    const std::string key = "chain." + std::to_string(t);
    Rng rng = make_stream(seed, Stream::input, 0xC4A1u, static_cast<std::uint64_t>(t));
    if (cfg.has(key)) maps.push_back(transform_from_json(cfg.json(key), d_x, rng));
    else if (cfg.has("chain.default")) maps.push_back(transform_from_json(cfg.json("chain.default"), d_x, rng));
    else maps.push_back(Transformation::identity());
  }
  DependencyChain chain(std::move(maps));
  chain.check_dimension(d_x);
  return chain;
}

}  // namespace depcl

#endif  // DEPCL_CONFIG_HPP

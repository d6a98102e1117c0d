#pragma once

// Experiment files are INI: top-level `key = value` lines plus `[section]`
// blocks. Both forms flatten to dotted keys, so `[pipe]\nshort.capacity = 60`
// and a top-level `pipe.short.capacity = 60` are the same setting.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/format.hpp"

namespace phyto::config {

class FlatConfig {
 public:
  FlatConfig() = default;

  static FlatConfig from_string(const std::string& text, const std::string& origin = "<string>") {
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    FlatConfig cfg;
    cfg.origin_ = origin;
    for (const auto& [name, node] : tree) {
      if (node.empty()) {
        cfg.set(name, node.data());
        continue;
      }
      cfg.sections_.push_back(name);
      for (const auto& [key, leaf] : node) cfg.set(name + "." + key, leaf.data());
    }
    return cfg;
  }

  static FlatConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path.string());
  }

  void set(const std::string& key, std::string value) {
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> text(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string text(const std::string& key, const std::string& fallback) const { return text(key).value_or(fallback); }

  double number(const std::string& key, double fallback) const {
    auto t = text(key);
    if (!t) return fallback;
    auto v = parse_double(*t);
    if (!v) throw ConfigError(origin_ + ": '" + key + "' must be a number, got '" + *t + "'");
    return *v;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    auto t = text(key);
    if (!t) return fallback;
    auto v = parse_int(*t);
    if (!v) throw ConfigError(origin_ + ": '" + key + "' must be an integer, got '" + *t + "'");
    return *v;
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto t = text(key);
    if (!t) return fallback;
    if (*t == "true" || *t == "1" || *t == "yes" || *t == "on") return true;
    if (*t == "false" || *t == "0" || *t == "no" || *t == "off") return false;
    throw ConfigError(origin_ + ": '" + key + "' must be a boolean, got '" + *t + "'");
  }

  /// Names X of every section spelled `[prefix.X]`, in file order.
  std::vector<std::string> sections_under(std::string_view prefix) const {
    std::vector<std::string> out;
    const std::string lead = std::string(prefix) + ".";
    for (const auto& s : sections_) {
      if (s.starts_with(lead) && s.size() > lead.size()) out.push_back(s.substr(lead.size()));
    }
    return out;
  }

  /// All keys below `prefix.` with the prefix removed.
  std::map<std::string, std::string> subtree(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    const std::string lead = prefix + ".";
    for (const auto& k : order_) {
      if (k.starts_with(lead)) {
        used_.insert(k);
        out[k.substr(lead.size())] = values_.at(k);
      }
    }
    return out;
  }

  /// Keys never read; reported so typos do not pass silently.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
      if (!used_.contains(k)) out.push_back(k);
    }
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_ = "<config>";
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  std::vector<std::string> sections_;
  mutable std::set<std::string> used_;
};

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace phyto::config

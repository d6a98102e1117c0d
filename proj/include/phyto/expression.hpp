#pragma once

// Binding expressions over the output vector.
//
//   expr       := or_expr
//   or_expr    := and_expr ('OR' and_expr)*
//   and_expr   := unary ('AND' unary)*
//   unary      := 'NOT' unary | primary
//   primary    := '(' expr ')' | 'BERNOULLI' '(' number ')' | ID [cmp number]
//   cmp        := '==' | '!=' | '<' | '<=' | '>' | '>='
//
// A bare ID means "ID == 1". Keywords are case-insensitive.

#include <cctype>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/format.hpp"

namespace phyto::actuate {

enum class Compare { eq, ne, lt, le, gt, ge };

inline constexpr std::string_view to_string(Compare c) {
  switch (c) {
    case Compare::eq: return "==";
    case Compare::ne: return "!=";
    case Compare::lt: return "<";
    case Compare::le: return "<=";
    case Compare::gt: return ">";
    case Compare::ge: return ">=";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Comparison {
  std::string detector;
  Compare op = Compare::eq;
  double literal = 1.0;
};
struct Bernoulli {
  double p = 0.5;
  std::size_t leaf = 0;  // index among BERNOULLI leaves, for stream selection
};
struct Not {
  ExprPtr operand;
};
struct And {
  std::vector<ExprPtr> operands;
};
struct Or {
  std::vector<ExprPtr> operands;
};

struct Expr {
  std::variant<Comparison, Bernoulli, Not, And, Or> node;
};

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    auto e = parse_or();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(text_.substr(pos_)) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression '" + std::string(text_) + "': " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'; }

  std::string peek_word() {
    skip_space();
    std::size_t end = pos_;
    while (end < text_.size() && ident_char(text_[end])) ++end;
    return std::string(text_.substr(pos_, end - pos_));
  }

  static std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  }

  bool accept_keyword(std::string_view kw) {
    auto w = peek_word();
    if (upper(w) != kw) return false;
    pos_ += w.size();
    return true;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double parse_number() {
    skip_space();
    std::size_t end = pos_;
    while (end < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[end])) || std::string_view("+-.eE").find(text_[end]) != std::string_view::npos)) ++end;
    auto v = parse_double(text_.substr(pos_, end - pos_));
    if (!v) fail("expected a number at offset " + std::to_string(pos_));
    pos_ = end;
    return *v;
  }

  ExprPtr parse_or() {
    auto first = parse_and();
    std::vector<ExprPtr> ops{first};
    while (accept_keyword("OR")) ops.push_back(parse_and());
    if (ops.size() == 1) return first;
    return std::make_shared<const Expr>(Expr{Or{std::move(ops)}});
  }

  ExprPtr parse_and() {
    auto first = parse_unary();
    std::vector<ExprPtr> ops{first};
    while (accept_keyword("AND")) ops.push_back(parse_unary());
    if (ops.size() == 1) return first;
    return std::make_shared<const Expr>(Expr{And{std::move(ops)}});
  }

  ExprPtr parse_unary() {
    if (accept_keyword("NOT")) return std::make_shared<const Expr>(Expr{Not{parse_unary()}});
    return parse_primary();
  }

  std::optional<Compare> parse_compare() {
    skip_space();
    auto rest = text_.substr(pos_);
    for (auto [tok, op] : {std::pair{"==", Compare::eq}, std::pair{"!=", Compare::ne}, std::pair{"<=", Compare::le},
                           std::pair{">=", Compare::ge}, std::pair{"<", Compare::lt}, std::pair{">", Compare::gt}}) {
      if (rest.starts_with(tok)) {
        pos_ += std::string_view(tok).size();
        return op;
      }
    }
    return std::nullopt;
  }

  ExprPtr parse_primary() {
    if (accept('(')) {
      auto e = parse_or();
      if (!accept(')')) fail("missing ')'");
      return e;
    }
    auto word = peek_word();
    if (word.empty()) fail("expected a detector id at offset " + std::to_string(pos_));
    if (upper(word) == "BERNOULLI") {
      pos_ += word.size();
      if (!accept('(')) fail("BERNOULLI needs '('");
      const double p = parse_number();
      if (!accept(')')) fail("BERNOULLI needs ')'");
      if (!(p >= 0.0 && p <= 1.0)) fail("BERNOULLI probability outside [0, 1]");
      return std::make_shared<const Expr>(Expr{Bernoulli{p, bernoulli_leaves_++}});
    }
    if (upper(word) == "AND" || upper(word) == "OR" || upper(word) == "NOT") fail("misplaced keyword " + word);
    pos_ += word.size();
    Comparison cmp{word, Compare::eq, 1.0};
    if (auto op = parse_compare()) {
      cmp.op = *op;
      cmp.literal = parse_number();
    }
    return std::make_shared<const Expr>(Expr{std::move(cmp)});
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t bernoulli_leaves_ = 0;
};

inline ExprPtr parse_expression(std::string_view text) { return ExpressionParser(text).parse(); }

inline void collect_detectors(const Expr& e, std::set<std::string>& out) {
  std::visit(
      [&out](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          out.insert(n.detector);
        } else if constexpr (std::is_same_v<T, Not>) {
          collect_detectors(*n.operand, out);
        } else if constexpr (std::is_same_v<T, And> || std::is_same_v<T, Or>) {
          for (const auto& op : n.operands) collect_detectors(*op, out);
        }
      },
      e.node);
}

inline std::string to_string(const Expr& e) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          return n.detector + " " + std::string(to_string(n.op)) + " " + format_double(n.literal);
        } else if constexpr (std::is_same_v<T, Bernoulli>) {
          return "BERNOULLI(" + format_double(n.p) + ")";
        } else if constexpr (std::is_same_v<T, Not>) {
          return "NOT " + to_string(*n.operand);
        } else {
          const char* sep = std::is_same_v<T, And> ? " AND " : " OR ";
          std::string s = "(";
          for (std::size_t i = 0; i < n.operands.size(); ++i) s += (i ? sep : "") + to_string(*n.operands[i]);
          return s + ")";
        }
      },
      e.node);
}

}  // namespace phyto::actuate

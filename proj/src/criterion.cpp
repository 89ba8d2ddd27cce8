#include "policylab/criterion.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace policylab::metasim {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

enum class Tok { number, ident, lparen, rparen, relop, kw_and, kw_or, kw_not, end, invalid };

struct Token {
  Tok kind = Tok::end;
  std::size_t offset = 0;
  std::string text;
  double number = 0.0;
  RelOp op = RelOp::lt;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {
    end_offset_ = 0;
    for (std::size_t i = text.size(); i > 0; --i) {
      if (!std::isspace(static_cast<unsigned char>(text[i - 1]))) {
        end_offset_ = i - 1;
        break;
      }
    }
  }

  Token next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    Token tok;
    tok.offset = pos_;
    if (pos_ >= text_.size()) {
      tok.kind = Tok::end;
      tok.offset = end_offset_;
      tok.text = "end of input";
      return tok;
    }
    const char c = text_[pos_];
    if (c == '(' || c == ')') {
      tok.kind = c == '(' ? Tok::lparen : Tok::rparen;
      tok.text = std::string(1, c);
      ++pos_;
      return tok;
    }
    if (c == '<' || c == '>' || c == '=' || c == '!') {
      const bool has_eq = pos_ + 1 < text_.size() && text_[pos_ + 1] == '=';
      if (c == '<') tok.op = has_eq ? RelOp::le : RelOp::lt;
      else if (c == '>') tok.op = has_eq ? RelOp::ge : RelOp::gt;
      else if (c == '=' && has_eq) tok.op = RelOp::eq;
      else if (c == '!' && has_eq) tok.op = RelOp::ne;
      else {
        tok.kind = Tok::invalid;
        tok.text = std::string(1, c);
        return tok;
      }
      tok.kind = Tok::relop;
      tok.text = std::string(text_.substr(pos_, has_eq ? 2 : 1));
      pos_ += has_eq ? 2 : 1;
      return tok;
    }
    if (digit(c) || (c == '-' && pos_ + 1 < text_.size() && digit(text_[pos_ + 1]))) {
      std::size_t end = pos_ + 1;
      while (end < text_.size() && digit(text_[end])) ++end;
      if (end + 1 < text_.size() && text_[end] == '.' && digit(text_[end + 1])) {
        end += 2;
        while (end < text_.size() && digit(text_[end])) ++end;
      }
      if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
        std::size_t exp = end + 1;
        if (exp < text_.size() && (text_[exp] == '+' || text_[exp] == '-')) ++exp;
        if (exp < text_.size() && digit(text_[exp])) {
          end = exp;
          while (end < text_.size() && digit(text_[end])) ++end;
        }
      }
      tok.kind = Tok::number;
      tok.text = std::string(text_.substr(pos_, end - pos_));
      tok.number = std::strtod(tok.text.c_str(), nullptr);
      pos_ = end;
      return tok;
    }
    if (ident_start(c)) {
      std::size_t end = pos_ + 1;
      while (end < text_.size() && ident_char(text_[end])) ++end;
      tok.text = std::string(text_.substr(pos_, end - pos_));
      if (tok.text == "AND") tok.kind = Tok::kw_and;
      else if (tok.text == "OR") tok.kind = Tok::kw_or;
      else if (tok.text == "NOT") tok.kind = Tok::kw_not;
      else tok.kind = Tok::ident;
      pos_ = end;
      return tok;
    }
    tok.kind = Tok::invalid;
    tok.text = std::string(1, c);
    return tok;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t end_offset_ = 0;
};

const std::vector<std::string> kTermStart{"NUMBER", "IDENT", "avg", "min", "max"};
const std::vector<std::string> kRelops{"<", "<=", ">", ">=", "==", "!="};

std::optional<Aggregate> aggregate_of(const std::string& name) {
  if (name == "avg") return Aggregate::avg;
  if (name == "min") return Aggregate::min;
  if (name == "max") return Aggregate::max;
  return std::nullopt;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  ExprPtr parse() {
    auto expr = parse_or();
    if (current_.kind != Tok::end) fail({"AND", "OR", "end of input"});
    return expr;
  }

 private:
  void advance() { current_ = lexer_.next(); }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw CriterionParseError(current_.offset, std::move(expected), current_.text);
  }

  ExprPtr parse_or() {
    auto left = parse_and();
    while (current_.kind == Tok::kw_or) {
      advance();
      auto right = parse_and();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::disjunction;
      node->left = std::move(left);
      node->right = std::move(right);
      left = std::move(node);
    }
    return left;
  }

  ExprPtr parse_and() {
    auto left = parse_unary();
    while (current_.kind == Tok::kw_and) {
      advance();
      auto right = parse_unary();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::conjunction;
      node->left = std::move(left);
      node->right = std::move(right);
      left = std::move(node);
    }
    return left;
  }

  ExprPtr parse_unary() {
    if (current_.kind == Tok::kw_not) {
      advance();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::negation;
      node->left = parse_unary();
      return node;
    }
    if (current_.kind == Tok::lparen) {
      advance();
      auto inner = parse_or();
      if (current_.kind != Tok::rparen) fail({"AND", "OR", ")"});
      advance();
      return inner;
    }
    if (current_.kind != Tok::number && current_.kind != Tok::ident) {
      std::vector<std::string> expected{"NOT", "("};
      expected.insert(expected.end(), kTermStart.begin(), kTermStart.end());
      fail(std::move(expected));
    }
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::compare;
    node->lhs = parse_term();
    if (current_.kind != Tok::relop) fail(kRelops);
    node->op = current_.op;
    advance();
    node->rhs = parse_term();
    if (current_.kind == Tok::relop) fail({"AND", "OR", ")", "end of input"});
    return node;
  }

  Term parse_term() {
    Term term;
    if (current_.kind == Tok::number) {
      term.kind = Term::Kind::number;
      term.number = current_.number;
      advance();
      return term;
    }
    if (current_.kind != Tok::ident) fail(kTermStart);
    if (const auto agg = aggregate_of(current_.text)) {
      term.kind = Term::Kind::aggregate;
      term.aggregate = *agg;
      advance();
      if (current_.kind != Tok::lparen) fail({"("});
      advance();
      if (current_.kind != Tok::ident || aggregate_of(current_.text)) fail({"IDENT"});
      term.name = current_.text;
      advance();
      if (current_.kind != Tok::rparen) fail({")"});
      advance();
      return term;
    }
    term.kind = Term::Kind::parameter;
    term.name = current_.text;
    advance();
    return term;
  }

  Lexer lexer_;
  Token current_;
};

std::string print_number(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, result.ptr);
}

std::string print_term(const Term& t) {
  switch (t.kind) {
    case Term::Kind::number: return print_number(t.number);
    case Term::Kind::parameter: return t.name;
    case Term::Kind::aggregate: {
      const char* agg = t.aggregate == Aggregate::avg ? "avg" : (t.aggregate == Aggregate::min ? "min" : "max");
      return std::string(agg) + "(" + t.name + ")";
    }
  }
  return {};
}

const char* relop_text(RelOp op) {
  switch (op) {
    case RelOp::lt: return "<";
    case RelOp::le: return "<=";
    case RelOp::gt: return ">";
    case RelOp::ge: return ">=";
    case RelOp::eq: return "==";
    case RelOp::ne: return "!=";
  }
  return "<";
}

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::disjunction: return 1;
    case Expr::Kind::conjunction: return 2;
    default: return 3;
  }
}

std::string print_operand(const Expr& child, int min_precedence) {
  auto text = print(child);
  if (precedence(child) < min_precedence) return "(" + text + ")";
  return text;
}

double resolve(const Term& term, const AggregateSet& aggregates, const Json& params) {
  switch (term.kind) {
    case Term::Kind::number: return term.number;
    case Term::Kind::parameter: {
      const auto it = params.is_object() ? params.find(term.name) : params.end();
      if (!params.is_object() || it == params.end()) {
        throw Error(ErrorCode::UnknownParameter, "unknown parameter '" + term.name + "'", term.name);
      }
      if (!it->is_number()) {
        throw Error(ErrorCode::UnknownParameter, "parameter '" + term.name + "' is not numeric", term.name);
      }
      return it->get<double>();
    }
    case Term::Kind::aggregate: {
      const auto it = aggregates.find(term.name);
      if (it == aggregates.end()) {
        throw Error(ErrorCode::UnknownAttribute, "unknown attribute '" + term.name + "'", term.name);
      }
      switch (term.aggregate) {
        case Aggregate::avg: return it->second.avg;
        case Aggregate::min: return it->second.min;
        case Aggregate::max: return it->second.max;
      }
    }
  }
  return 0.0;
}

bool eval(const Expr& e, const AggregateSet& aggregates, const Json& params) {
  switch (e.kind) {
    case Expr::Kind::compare: {
      const double a = resolve(e.lhs, aggregates, params);
      const double b = resolve(e.rhs, aggregates, params);
      switch (e.op) {
        case RelOp::lt: return a < b;
        case RelOp::le: return a <= b;
        case RelOp::gt: return a > b;
        case RelOp::ge: return a >= b;
        case RelOp::eq: return a == b;
        case RelOp::ne: return a != b;
      }
      return false;
    }
    case Expr::Kind::conjunction: {
      // Both sides always evaluate so unknown references surface deterministically.
      const bool l = eval(*e.left, aggregates, params);
      const bool r = eval(*e.right, aggregates, params);
      return l && r;
    }
    case Expr::Kind::disjunction: {
      const bool l = eval(*e.left, aggregates, params);
      const bool r = eval(*e.right, aggregates, params);
      return l || r;
    }
    case Expr::Kind::negation: return !eval(*e.left, aggregates, params);
  }
  return false;
}

}  // namespace

CriterionParseError::CriterionParseError(std::size_t offset, std::vector<std::string> expected, std::string found)
    : Error(ErrorCode::CriterionParseError,
            "criterion parse error at offset " + std::to_string(offset) + ": expected one of {" + join(expected) +
                "}, found '" + found + "'",
            std::to_string(offset)),
      offset_(offset),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::compare: return a.lhs == b.lhs && a.op == b.op && a.rhs == b.rhs;
    case Expr::Kind::negation: return structurally_equal(*a.left, *b.left);
    default: return structurally_equal(*a.left, *b.left) && structurally_equal(*a.right, *b.right);
  }
}

std::string print(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::compare: return print_term(e.lhs) + " " + relop_text(e.op) + " " + print_term(e.rhs);
    case Expr::Kind::negation: return "NOT " + print_operand(*e.left, 3);
    case Expr::Kind::conjunction:
      return print_operand(*e.left, 2) + " AND " + print_operand(*e.right, 3);
    case Expr::Kind::disjunction:
      return print_operand(*e.left, 1) + " OR " + print_operand(*e.right, 2);
  }
  return {};
}

Criterion parse_criterion(std::string_view text) {
  Parser parser(text);
  return Criterion{std::string(text), parser.parse()};
}

bool evaluate_criterion(const Criterion& criterion, const AggregateSet& aggregates, const Json& params) {
  return eval(*criterion.root, aggregates, params);
}

}  // namespace policylab::metasim

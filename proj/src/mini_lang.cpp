// SPDX-License-Identifier: Apache-2.0
#include "ddpt/mini_lang.hpp"

#include <cctype>

#include "ddpt/error.hpp"

namespace ddpt {

const char* kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Program: return "program";
    case NodeKind::Assignment: return "assignment";
    case NodeKind::If: return "if";
    case NodeKind::Return: return "return";
    case NodeKind::Call: return "call";
    case NodeKind::BinaryOp: return "binary-op";
    case NodeKind::Identifier: return "identifier";
    case NodeKind::Literal: return "literal";
  }
  return "?";
}

const std::vector<std::string>& mini_keywords() {
  static const std::vector<std::string> words{"if", "else", "return", "and", "or", "not"};
  return words;
}

namespace {

enum class Tok { Ident, Number, Keyword, Op, Separator, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int column = 1;
};

bool is_keyword(const std::string& word) {
  for (const auto& k : mini_keywords()) {
    if (k == word) return true;
  }
  return false;
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int column = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
      if (src[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n' || c == ';') {
      out.push_back({Tok::Separator, std::string(1, c), line, column});
      advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    const int l = line;
    const int col = column;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      std::string word(src.substr(i, j - i));
      out.push_back({is_keyword(word) ? Tok::Keyword : Tok::Ident, word, l, col});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      out.push_back({Tok::Number, std::string(src.substr(i, j - i)), l, col});
      advance(j - i);
      continue;
    }
    if (i + 1 < src.size()) {
      const std::string two(src.substr(i, 2));
      if (two == "==" || two == "!=" || two == "<=" || two == ">=") {
        out.push_back({Tok::Op, two, l, col});
        advance(2);
        continue;
      }
    }
    if (std::string_view("=<>+-*/%(),:").find(c) != std::string_view::npos) {
      out.push_back({Tok::Op, std::string(1, c), l, col});
      advance(1);
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", l, col);
  }
  out.push_back({Tok::End, "", line, column});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  MiniAst program() {
    MiniAst root{NodeKind::Program, "", {}};
    skip_separators();
    while (peek().kind != Tok::End) {
      root.children.push_back(statement());
      skip_separators();
    }
    return root;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at(Tok kind, const std::string& text) const { return peek().kind == kind && peek().text == text; }
  void skip_separators() {
    while (peek().kind == Tok::Separator) ++pos_;
  }
  [[noreturn]] void fail(const Token& t) const {
    const std::string what = t.kind == Tok::End         ? "unexpected end of input"
                             : t.kind == Tok::Separator ? "unexpected end of line"
                                                        : "unexpected '" + t.text + "'";
    throw ParseError(what, t.line, t.column);
  }
  void expect(Tok kind, const std::string& text) {
    if (!at(kind, text)) fail(peek());
    ++pos_;
  }

  MiniAst statement() {
    if (at(Tok::Keyword, "if")) {
      ++pos_;
      MiniAst node{NodeKind::If, "", {}};
      node.children.push_back(expr());
      expect(Tok::Op, ":");
      skip_separators();
      node.children.push_back(statement());
      std::size_t save = pos_;
      skip_separators();
      if (at(Tok::Keyword, "else")) {
        ++pos_;
        expect(Tok::Op, ":");
        skip_separators();
        node.children.push_back(statement());
      } else {
        pos_ = save;
      }
      return node;
    }
    if (at(Tok::Keyword, "return")) {
      ++pos_;
      return MiniAst{NodeKind::Return, "", {expr()}};
    }
    if (peek().kind == Tok::Ident && peek(1).kind == Tok::Op && peek(1).text == "=") {
      MiniAst target{NodeKind::Identifier, take().text, {}};
      ++pos_;
      return MiniAst{NodeKind::Assignment, "", {std::move(target), expr()}};
    }
    return expr();
  }

  MiniAst binary(std::string op, MiniAst lhs, MiniAst rhs) {
    return MiniAst{NodeKind::BinaryOp, std::move(op), {std::move(lhs), std::move(rhs)}};
  }

  MiniAst expr() {
    MiniAst lhs = conjunction();
    while (at(Tok::Keyword, "or")) {
      ++pos_;
      lhs = binary("or", std::move(lhs), conjunction());
    }
    return lhs;
  }

  MiniAst conjunction() {
    MiniAst lhs = comparison();
    while (at(Tok::Keyword, "and")) {
      ++pos_;
      lhs = binary("and", std::move(lhs), comparison());
    }
    return lhs;
  }

  MiniAst comparison() {
    MiniAst lhs = sum();
    const Token& t = peek();
    if (t.kind == Tok::Op &&
        (t.text == "<" || t.text == ">" || t.text == "<=" || t.text == ">=" || t.text == "==" || t.text == "!=")) {
      std::string op = take().text;
      lhs = binary(std::move(op), std::move(lhs), sum());
    }
    return lhs;
  }

  MiniAst sum() {
    MiniAst lhs = term();
    while (peek().kind == Tok::Op && (peek().text == "+" || peek().text == "-")) {
      std::string op = take().text;
      lhs = binary(std::move(op), std::move(lhs), term());
    }
    return lhs;
  }

  MiniAst term() {
    MiniAst lhs = unary();
    while (peek().kind == Tok::Op && (peek().text == "*" || peek().text == "/" || peek().text == "%")) {
      std::string op = take().text;
      lhs = binary(std::move(op), std::move(lhs), unary());
    }
    return lhs;
  }

  MiniAst unary() {
    if (at(Tok::Op, "-")) {
      ++pos_;
      if (peek().kind == Tok::Number) return MiniAst{NodeKind::Literal, "-" + take().text, {}};
      return MiniAst{NodeKind::BinaryOp, "-", {unary()}};
    }
    return primary();
  }

  MiniAst primary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) return MiniAst{NodeKind::Literal, take().text, {}};
    if (t.kind == Tok::Ident) {
      MiniAst name{NodeKind::Identifier, take().text, {}};
      if (!at(Tok::Op, "(")) return name;
      ++pos_;
      MiniAst call{NodeKind::Call, "", {std::move(name)}};
      if (!at(Tok::Op, ")")) {
        call.children.push_back(expr());
        while (at(Tok::Op, ",")) {
          ++pos_;
          call.children.push_back(expr());
        }
      }
      expect(Tok::Op, ")");
      return call;
    }
    if (at(Tok::Op, "(")) {
      ++pos_;
      MiniAst inner = expr();
      expect(Tok::Op, ")");
      return inner;
    }
    fail(t);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

void sexpr(const MiniAst& node, bool with_text, std::string& out) {
  const bool leaf = node.children.empty();
  const bool show_text = !node.text.empty() && (with_text || node.kind == NodeKind::BinaryOp);
  if (leaf && node.kind != NodeKind::Program && node.kind != NodeKind::Call) {
    out += '(';
    out += kind_name(node.kind);
    if (show_text) out += ' ' + node.text;
    out += ')';
    return;
  }
  out += '(';
  out += kind_name(node.kind);
  if (show_text) out += ' ' + node.text;
  for (const auto& c : node.children) {
    out += ' ';
    sexpr(c, with_text, out);
  }
  out += ')';
}

int precedence(const MiniAst& node) {
  if (node.kind != NodeKind::BinaryOp) return 10;
  if (node.children.size() == 1) return 6;
  const std::string& op = node.text;
  if (op == "or") return 1;
  if (op == "and") return 2;
  if (op == "+" || op == "-") return 4;
  if (op == "*" || op == "/" || op == "%") return 5;
  return 3;
}

std::string print_expr(const MiniAst& node);

std::string operand(const MiniAst& child, int parent, bool right) {
  const int p = precedence(child);
  // Comparisons do not chain, so a nested comparison is always wrapped.
  const bool wrap = p < parent || (right && p == parent) || (p == 3 && parent == 3);
  const std::string text = print_expr(child);
  return wrap ? "(" + text + ")" : text;
}

std::string print_expr(const MiniAst& node) {
  switch (node.kind) {
    case NodeKind::Identifier:
    case NodeKind::Literal: return node.text;
    case NodeKind::Call: {
      std::string out = node.children.front().text + "(";
      for (std::size_t i = 1; i < node.children.size(); ++i) {
        if (i > 1) out += ", ";
        out += print_expr(node.children[i]);
      }
      return out + ")";
    }
    case NodeKind::BinaryOp: {
      const int p = precedence(node);
      if (node.children.size() == 1) {
        const MiniAst& arg = node.children[0];
        return arg.kind == NodeKind::Literal ? "-(" + arg.text + ")" : "-" + operand(arg, p, false);
      }
      return operand(node.children[0], p, false) + " " + node.text + " " + operand(node.children[1], p, true);
    }
    default: return pretty_print(node);
  }
}

void collect(const MiniAst& node, std::vector<std::string>& out) {
  if (node.children.empty()) return;
  std::string s;
  sexpr(node, false, s);
  out.push_back(std::move(s));
  for (const auto& c : node.children) collect(c, out);
}

}  // namespace

MiniAst parse_mini(std::string_view code) { return Parser(lex(code)).program(); }

std::string to_sexpr(const MiniAst& node) {
  std::string out;
  sexpr(node, true, out);
  return out;
}

std::string pretty_print(const MiniAst& node) {
  switch (node.kind) {
    case NodeKind::Program: {
      std::string out;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        if (i > 0) out += '\n';
        out += pretty_print(node.children[i]);
      }
      return out;
    }
    case NodeKind::Assignment:
      return node.children[0].text + " = " + print_expr(node.children[1]);
    case NodeKind::Return: return "return " + print_expr(node.children[0]);
    case NodeKind::If: {
      std::string out = "if " + print_expr(node.children[0]) + ": " + pretty_print(node.children[1]);
      if (node.children.size() > 2) out += "\nelse: " + pretty_print(node.children[2]);
      return out;
    }
    default: return print_expr(node);
  }
}

std::vector<std::string> subtree_signatures(const MiniAst& root) {
  std::vector<std::string> out;
  collect(root, out);
  return out;
}

}  // namespace ddpt

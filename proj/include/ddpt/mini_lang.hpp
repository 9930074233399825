// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ddpt {

// Node kinds of the mini-language the corpus programs are written in.
enum class NodeKind { Program, Assignment, If, Return, Call, BinaryOp, Identifier, Literal };

const char* kind_name(NodeKind kind);

// `text` holds the identifier name, literal spelling or operator; it is empty
// for the other kinds. If nodes have children [condition, then, else?]; call
// nodes [callee identifier, args...]; a binary-op with one child is a unary minus.
struct MiniAst {
  NodeKind kind = NodeKind::Program;
  std::string text;
  std::vector<MiniAst> children;

  friend bool operator==(const MiniAst&, const MiniAst&) = default;
};

// Grammar (newlines and ';' separate statements but are optional):
//   program    := statement*
//   statement  := 'if' expr ':' statement ['else' ':' statement]
//               | 'return' expr | IDENT '=' expr | expr
//   expr       := and ('or' and)*        and := cmp ('and' cmp)*
//   cmp        := sum [('<'|'>'|'<='|'>='|'=='|'!=') sum]
//   sum        := term (('+'|'-') term)*  term := unary (('*'|'/'|'%') unary)*
//   unary      := '-' unary | primary
//   primary    := NUMBER | IDENT ['(' [expr (',' expr)*] ')'] | '(' expr ')'
// Throws ParseError with the offending line and column.
MiniAst parse_mini(std::string_view code);

// Full serialization including identifier names and literal values.
std::string to_sexpr(const MiniAst& node);
// Source text that parses back to the same tree.
std::string pretty_print(const MiniAst& node);
// One entry per non-leaf node: its subtree serialized by kind and operator,
// with identifier names and literal values erased.
std::vector<std::string> subtree_signatures(const MiniAst& root);

// Reserved words; the keyword weights of the weighted n-gram match use these.
const std::vector<std::string>& mini_keywords();

}  // namespace ddpt

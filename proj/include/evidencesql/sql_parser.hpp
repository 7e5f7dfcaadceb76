#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "evidencesql/sql_ast.hpp"

namespace evidencesql::sql {

enum class TokenKind { Word, Integer, Decimal, String, DoubleQuoted, Symbol, End };

struct Token {
    TokenKind kind;
    /// Raw source slice (for String/DoubleQuoted: the unescaped contents).
    std::string text;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Splits SQL text into tokens. Comment syntax (`--`, `/*`) and unterminated
/// literals raise SyntaxError at the offending offset.
std::vector<Token> tokenize(std::string_view text);

/// Parses exactly one SELECT statement of the supported subset.
/// Throws SyntaxError or UnsupportedFeature.
QueryAst parse(std::string_view text);

/// Canonical text: uppercase keywords, single spaces, minimal deterministic
/// parentheses. parse(render(q)) == q for every well-formed AST.
std::string render(const QueryAst& q);
std::string render_expr(const Expr& e);
/// SQL literal text for a value (`'it''s'`, `NULL`, `-2.5`).
std::string render_literal(const Value& v);

/// Words that cannot be used as identifiers (keywords of the subset, known
/// unsupported SQL words and statement heads). Case-insensitive.
bool is_reserved_word(std::string_view word);

/// Clause keywords and function names of the subset, used by keyword repair.
const std::vector<std::string>& subset_keywords();

/// Statement heads that are never allowed (write or administrative commands).
const std::vector<std::string>& forbidden_statement_heads();

/// Unsupported trailing clauses that may be dropped when the preceding text
/// is a complete query.
bool is_droppable_clause_keyword(std::string_view upper_word);

bool is_identifier(std::string_view word);
std::string to_upper(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace evidencesql::sql

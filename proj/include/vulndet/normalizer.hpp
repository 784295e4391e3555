#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace vulndet {

enum class TokenKind {
  Keyword,
  Identifier,
  NumberLiteral,
  StringLiteral,
  CharLiteral,
  Operator,
  Punctuator,
  Comment,
  PreprocessorDirective,
};

std::string_view to_string(TokenKind kind);

struct SourcePosition {
  std::size_t line = 1;
  std::size_t column = 1;

  friend bool operator==(const SourcePosition&, const SourcePosition&) = default;
};

struct Token {
  TokenKind kind;
  std::string text;
  SourcePosition position;
  std::size_t offset = 0;  // byte offset of the first character in the source
};

enum class LexIssue { UnterminatedString, UnterminatedChar, UnterminatedComment };

std::string_view to_string(LexIssue issue);

struct LexDiagnostic {
  LexIssue issue;
  SourcePosition position;
};

/// Lexer output. A sample is flagged when any diagnostic was raised; the
/// offending literal or comment is closed at end of input.
struct TokenStream {
  std::vector<Token> tokens;
  std::vector<LexDiagnostic> diagnostics;

  bool flagged() const { return !diagnostics.empty(); }
};

/// True for members of the fixed C89/C99 + C++17 keyword table.
bool is_keyword(std::string_view word);

TokenStream tokenize(std::string_view source);

enum class IdentifierKind { Variable, FunctionName };

struct IdentifierRole {
  IdentifierKind role;
  std::string canonical_text;  // "VAR<k>" or "FUNC<k>"
};

/// Placeholders emitted by the normalizer that must survive re-normalization.
inline constexpr std::string_view kNumberPlaceholder = "NUMBER";
inline constexpr std::string_view kStringPlaceholder = "STRING";
inline constexpr std::string_view kCharPlaceholder = "CHAR";

struct NormalizerOptions {
  // Identifiers kept verbatim (for example library calls such as "strcpy").
  std::unordered_set<std::string> preserved_names;
};

/// Assigns a role and canonical name to every identifier, by first occurrence.
/// An identifier is a function name iff the next token that is neither a
/// comment nor a preprocessor directive is "(" at its first occurrence.
std::unordered_map<std::string, IdentifierRole> classify_identifiers(
    const std::vector<Token>& tokens, const NormalizerOptions& options = {});

struct NormalizedSample {
  std::vector<std::string> tokens;
  std::string source_id;
  bool flagged = false;  // the lexer reported an unterminated literal or comment

  std::string joined() const;
};

NormalizedSample normalize(const std::vector<Token>& tokens, const NormalizerOptions& options = {});

NormalizedSample normalize_source(std::string_view source, const NormalizerOptions& options = {});

/// Loads a whitelist of identifiers (one per line, '#' comments allowed).
NormalizerOptions load_preserved_names(const std::string& path);

/// A top-level function definition found in a source file.
struct FunctionSlice {
  std::string name;
  std::size_t line = 1;
  std::string text;
};

/// Splits a translation unit into its top-level function definitions. A
/// definition is a brace block at namespace depth whose opening brace follows
/// a ")" (optionally separated by qualifiers such as const or noexcept).
std::vector<FunctionSlice> split_functions(std::string_view source);

}  // namespace vulndet

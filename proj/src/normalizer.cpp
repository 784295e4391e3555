#include "vulndet/normalizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <optional>

#include "vulndet/error.hpp"

namespace vulndet {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Keyword: return "Keyword";
    case TokenKind::Identifier: return "Identifier";
    case TokenKind::NumberLiteral: return "NumberLiteral";
    case TokenKind::StringLiteral: return "StringLiteral";
    case TokenKind::CharLiteral: return "CharLiteral";
    case TokenKind::Operator: return "Operator";
    case TokenKind::Punctuator: return "Punctuator";
    case TokenKind::Comment: return "Comment";
    case TokenKind::PreprocessorDirective: return "PreprocessorDirective";
  }
  return "?";
}

std::string_view to_string(LexIssue issue) {
  switch (issue) {
    case LexIssue::UnterminatedString: return "UnterminatedString";
    case LexIssue::UnterminatedChar: return "UnterminatedChar";
    case LexIssue::UnterminatedComment: return "UnterminatedComment";
  }
  return "?";
}

namespace {

// C89/C99 keywords plus the C++17 keyword set (including alternative operator
// spellings).
const std::unordered_set<std::string_view>& keyword_table() {
  static const std::unordered_set<std::string_view> table = {
      // C89
      "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
      "enum", "extern", "float", "for", "goto", "if", "int", "long", "register", "return",
      "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
      "unsigned", "void", "volatile", "while",
      // C99
      "inline", "restrict", "_Bool", "_Complex", "_Imaginary",
      // C++17
      "alignas", "alignof", "and", "and_eq", "asm", "bitand", "bitor", "bool", "catch",
      "char16_t", "char32_t", "class", "compl", "constexpr", "const_cast", "decltype",
      "delete", "dynamic_cast", "explicit", "export", "false", "friend", "mutable",
      "namespace", "new", "noexcept", "not", "not_eq", "nullptr", "operator", "or", "or_eq",
      "private", "protected", "public", "reinterpret_cast", "static_assert", "static_cast",
      "template", "this", "thread_local", "throw", "true", "try", "typeid", "typename",
      "using", "virtual", "wchar_t", "xor", "xor_eq"};
  return table;
}

// Longest match first.
constexpr std::array<std::string_view, 30> kMultiCharOperators = {
    ">>=", "<<=", "<=>", "->*", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", ".*", "##", "<:", ":>", "%:"};

constexpr std::string_view kSingleCharOperators = "+-*/%=<>!&|^~?:.#";
constexpr std::string_view kPunctuators = "(){}[];,";

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  TokenStream run() {
    TokenStream out;
    bool line_start = true;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\n') {
        advance();
        line_start = true;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
        continue;
      }
      const std::size_t start = pos_;
      const SourcePosition at = here();
      TokenKind kind;
      if (c == '/' && peek(1) == '/') {
        kind = TokenKind::Comment;
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        kind = TokenKind::Comment;
        advance(2);
        bool closed = false;
        while (pos_ < src_.size()) {
          if (src_[pos_] == '*' && peek(1) == '/') {
            advance(2);
            closed = true;
            break;
          }
          advance();
        }
        if (!closed) out.diagnostics.push_back({LexIssue::UnterminatedComment, at});
      } else if (c == '#' && line_start) {
        kind = TokenKind::PreprocessorDirective;
        lex_directive();
      } else if (auto prefix = literal_prefix(); prefix) {
        advance(*prefix);
        const char quote = src_[pos_];
        const bool raw = *prefix > 0 && src_[pos_ - 1] == 'R';
        kind = quote == '"' ? TokenKind::StringLiteral : TokenKind::CharLiteral;
        const bool closed = raw ? lex_raw_string() : lex_quoted(quote);
        if (!closed) {
          out.diagnostics.push_back(
              {quote == '"' ? LexIssue::UnterminatedString : LexIssue::UnterminatedChar, at});
        }
      } else if (is_digit(c) || (c == '.' && is_digit(peek(1)))) {
        kind = TokenKind::NumberLiteral;
        lex_number();
      } else if (is_ident_start(c)) {
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
        kind = is_keyword(src_.substr(start, pos_ - start)) ? TokenKind::Keyword
                                                             : TokenKind::Identifier;
      } else if (kPunctuators.find(c) != std::string_view::npos) {
        kind = TokenKind::Punctuator;
        advance();
      } else if (auto len = operator_length(); len > 0) {
        kind = TokenKind::Operator;
        advance(len);
      } else {
        // Stray byte (or a whole UTF-8 sequence); kept so nothing is silently lost.
        kind = TokenKind::Punctuator;
        advance();
        while (pos_ < src_.size() && (static_cast<unsigned char>(src_[pos_]) & 0xC0) == 0x80) {
          advance();
        }
      }
      line_start = false;
      out.tokens.push_back({kind, std::string(src_.substr(start, pos_ - start)), at, start});
    }
    return out;
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  SourcePosition here() const { return {line_, column_}; }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        column_ = 1;
      } else {
        ++column_;
      }
      ++pos_;
    }
  }

  // Length of an encoding/raw prefix when the cursor starts a string or char
  // literal (0 for a bare quote), nullopt otherwise.
  std::optional<std::size_t> literal_prefix() const {
    static constexpr std::array<std::string_view, 10> prefixes = {
        "u8R", "uR", "UR", "LR", "R", "u8", "u", "U", "L", ""};
    for (auto p : prefixes) {
      if (src_.substr(pos_, p.size()) != p) continue;
      const char q = peek(p.size());
      const bool raw = !p.empty() && p.back() == 'R';
      if (q == '"' || (q == '\'' && !raw)) return p.size();
    }
    return std::nullopt;
  }

  bool lex_quoted(char quote) {
    advance();
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\\') {
        advance(2);
        continue;
      }
      if (c == '\n') return false;  // literals end at the line; the newline is not consumed
      advance();
      if (c == quote) return true;
    }
    return false;
  }

  bool lex_raw_string() {
    advance();  // opening quote
    std::string delimiter;
    while (pos_ < src_.size() && src_[pos_] != '(' && delimiter.size() < 16) {
      delimiter.push_back(src_[pos_]);
      advance();
    }
    if (pos_ >= src_.size() || src_[pos_] != '(') {
      return lex_quoted_tail();
    }
    const std::string terminator = ")" + delimiter + "\"";
    const auto end = src_.find(terminator, pos_);
    if (end == std::string_view::npos) {
      advance(src_.size() - pos_);
      return false;
    }
    advance(end + terminator.size() - pos_);
    return true;
  }

  // Fallback for a malformed raw-string opener: read up to the next quote.
  bool lex_quoted_tail() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      advance();
      if (c == '"') return true;
    }
    return false;
  }

  void lex_directive() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\\' && (peek(1) == '\n' || (peek(1) == '\r' && peek(2) == '\n'))) {
        advance(peek(1) == '\r' ? 3 : 2);
        continue;
      }
      if (c == '\n') break;
      if (c == '/' && peek(1) == '*') {
        // Block comments may span lines inside a directive.
        advance(2);
        while (pos_ < src_.size() && !(src_[pos_] == '*' && peek(1) == '/')) advance();
        advance(2);
        continue;
      }
      advance();
    }
  }

  // pp-number: digits, letters, '.', digit separators, and signed exponents.
  void lex_number() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if ((c == 'e' || c == 'E' || c == 'p' || c == 'P') && (peek(1) == '+' || peek(1) == '-')) {
        advance(2);
      } else if (c == '\'' && is_ident_char(peek(1))) {
        advance(2);
      } else if (is_ident_char(c) || c == '.') {
        advance();
      } else {
        break;
      }
    }
  }

  std::size_t operator_length() const {
    for (auto op : kMultiCharOperators) {
      if (src_.substr(pos_, op.size()) == op) return op.size();
    }
    return kSingleCharOperators.find(src_[pos_]) != std::string_view::npos ? 1 : 0;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

bool is_placeholder(std::string_view text) {
  return text == kNumberPlaceholder || text == kStringPlaceholder || text == kCharPlaceholder;
}

bool skipped_in_lookahead(TokenKind kind) {
  return kind == TokenKind::Comment || kind == TokenKind::PreprocessorDirective;
}

}  // namespace

bool is_keyword(std::string_view word) { return keyword_table().contains(word); }

TokenStream tokenize(std::string_view source) { return Lexer(source).run(); }

std::unordered_map<std::string, IdentifierRole> classify_identifiers(
    const std::vector<Token>& tokens, const NormalizerOptions& options) {
  std::unordered_map<std::string, IdentifierRole> roles;
  std::size_t next_var = 0;
  std::size_t next_func = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& tok = tokens[i];
    if (tok.kind != TokenKind::Identifier || roles.contains(tok.text)) continue;
    if (is_placeholder(tok.text) || options.preserved_names.contains(tok.text)) continue;
    std::size_t j = i + 1;
    while (j < tokens.size() && skipped_in_lookahead(tokens[j].kind)) ++j;
    const bool is_call = j < tokens.size() && tokens[j].text == "(";
    if (is_call) {
      roles.emplace(tok.text,
                    IdentifierRole{IdentifierKind::FunctionName, "FUNC" + std::to_string(next_func++)});
    } else {
      roles.emplace(tok.text,
                    IdentifierRole{IdentifierKind::Variable, "VAR" + std::to_string(next_var++)});
    }
  }
  return roles;
}

std::string NormalizedSample::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

NormalizedSample normalize(const std::vector<Token>& tokens, const NormalizerOptions& options) {
  const auto roles = classify_identifiers(tokens, options);
  NormalizedSample sample;
  sample.tokens.reserve(tokens.size());
  for (const Token& tok : tokens) {
    switch (tok.kind) {
      case TokenKind::NumberLiteral:
        sample.tokens.emplace_back(kNumberPlaceholder);
        break;
      case TokenKind::StringLiteral:
        sample.tokens.emplace_back(kStringPlaceholder);
        break;
      case TokenKind::CharLiteral:
        sample.tokens.emplace_back(kCharPlaceholder);
        break;
      case TokenKind::Identifier: {
        auto it = roles.find(tok.text);
        sample.tokens.push_back(it == roles.end() ? tok.text : it->second.canonical_text);
        break;
      }
      case TokenKind::Comment:
      case TokenKind::PreprocessorDirective:
        break;
      default:
        sample.tokens.push_back(tok.text);
    }
  }
  return sample;
}

NormalizedSample normalize_source(std::string_view source, const NormalizerOptions& options) {
  const TokenStream stream = tokenize(source);
  NormalizedSample sample = normalize(stream.tokens, options);
  sample.flagged = stream.flagged();
  return sample;
}

NormalizerOptions load_preserved_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open preserved-names file '" + path + "'");
  NormalizerOptions options;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    options.preserved_names.insert(line.substr(first, last - first + 1));
  }
  return options;
}

std::vector<FunctionSlice> split_functions(std::string_view source) {
  const TokenStream stream = tokenize(source);
  std::vector<const Token*> toks;
  for (const Token& t : stream.tokens) {
    if (t.kind != TokenKind::Comment) toks.push_back(&t);
  }

  static const std::unordered_set<std::string_view> trailing_qualifiers = {
      "const", "noexcept", "override", "final", "volatile", "throw"};

  std::vector<FunctionSlice> slices;
  // Scopes that may contain function definitions: the file and namespace /
  // extern "C" blocks. Everything else (class bodies, initializers) is opaque.
  std::vector<bool> transparent_scopes;
  std::size_t segment_start = 0;
  std::size_t i = 0;
  auto at_transparent_level = [&] {
    return std::all_of(transparent_scopes.begin(), transparent_scopes.end(),
                       [](bool t) { return t; });
  };
  while (i < toks.size()) {
    const Token& tok = *toks[i];
    if (tok.kind == TokenKind::PreprocessorDirective) {
      if (i == segment_start) ++segment_start;
      ++i;
      continue;
    }
    if (tok.text == ";" && at_transparent_level()) {
      segment_start = i + 1;
      ++i;
      continue;
    }
    if (tok.text == "}") {
      if (!transparent_scopes.empty()) transparent_scopes.pop_back();
      segment_start = i + 1;
      ++i;
      continue;
    }
    if (tok.text != "{") {
      ++i;
      continue;
    }
    if (!at_transparent_level()) {
      transparent_scopes.push_back(false);
      ++i;
      continue;
    }
    // Walk back over trailing qualifiers to see whether a ")" precedes the brace.
    std::size_t k = i;
    while (k > segment_start && (trailing_qualifiers.contains(toks[k - 1]->text))) --k;
    const bool is_function = k > segment_start && toks[k - 1]->text == ")";
    const bool is_namespace = std::any_of(
        toks.begin() + static_cast<std::ptrdiff_t>(segment_start),
        toks.begin() + static_cast<std::ptrdiff_t>(i), [](const Token* t) {
          return t->text == "namespace" || t->kind == TokenKind::StringLiteral;  // extern "C"
        });
    if (!is_function) {
      transparent_scopes.push_back(is_namespace);
      segment_start = i + 1;
      ++i;
      continue;
    }
    // Find the matching close brace.
    std::size_t depth = 0;
    std::size_t j = i;
    for (; j < toks.size(); ++j) {
      if (toks[j]->text == "{") ++depth;
      if (toks[j]->text == "}" && --depth == 0) break;
    }
    const std::size_t last = std::min(j, toks.size() - 1);
    FunctionSlice slice;
    for (std::size_t m = segment_start; m < i; ++m) {
      if (toks[m]->text == "(") break;
      if (toks[m]->kind == TokenKind::Identifier) slice.name = toks[m]->text;
    }
    const Token& first = *toks[segment_start];
    const Token& end = *toks[last];
    slice.line = first.position.line;
    slice.text = std::string(source.substr(first.offset, end.offset + end.text.size() - first.offset));
    slices.push_back(std::move(slice));
    segment_start = last + 1;
    i = last + 1;
  }
  return slices;
}

}  // namespace vulndet

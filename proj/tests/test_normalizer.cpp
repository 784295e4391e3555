#include <gtest/gtest.h>

#include <regex>

#include "support/snippets.hpp"
#include "vulndet/normalizer.hpp"

using namespace vulndet;

namespace {

using Kinds = std::vector<std::pair<TokenKind, std::string>>;

Kinds kinds_of(std::string_view src) {
  Kinds out;
  for (const auto& t : tokenize(src).tokens) out.emplace_back(t.kind, t.text);
  return out;
}

std::vector<std::string> norm(std::string_view src, const NormalizerOptions& o = {}) {
  return normalize_source(src, o).tokens;
}

using V = std::vector<std::string>;

}  // namespace

TEST(Tokenize, SimpleAssignment) {
  const Kinds expected{{TokenKind::Identifier, "x"},
                       {TokenKind::Operator, "="},
                       {TokenKind::NumberLiteral, "5"},
                       {TokenKind::Punctuator, ";"}};
  EXPECT_EQ(kinds_of("x = 5;"), expected);
}

TEST(Tokenize, EmptyInput) {
  const auto s = tokenize("");
  EXPECT_TRUE(s.tokens.empty());
  EXPECT_FALSE(s.flagged());
}

TEST(Tokenize, FunctionSignature) {
  using K = TokenKind;
  const Kinds expected{{K::Keyword, "int"},     {K::Identifier, "add"}, {K::Punctuator, "("},
                       {K::Keyword, "int"},     {K::Identifier, "a"},   {K::Punctuator, ","},
                       {K::Keyword, "int"},     {K::Identifier, "b"},   {K::Punctuator, ")"}};
  EXPECT_EQ(kinds_of("int add(int a, int b)"), expected);
}

TEST(Tokenize, CommentsAndDirectives) {
  const auto s = tokenize("#include <stdio.h>\n// line\nint /* block */ x;\n#define M(a) \\\n  a\n");
  ASSERT_EQ(s.tokens.size(), 7u);
  EXPECT_EQ(s.tokens[0].kind, TokenKind::PreprocessorDirective);
  EXPECT_EQ(s.tokens[0].text, "#include <stdio.h>");
  EXPECT_EQ(s.tokens[1].kind, TokenKind::Comment);
  EXPECT_EQ(s.tokens[3].kind, TokenKind::Comment);
  EXPECT_EQ(s.tokens[3].text, "/* block */");
  EXPECT_EQ(s.tokens[6].kind, TokenKind::PreprocessorDirective);
  EXPECT_NE(s.tokens[6].text.find("a"), std::string::npos);
}

TEST(Tokenize, LiteralsAndOperators) {
  using K = TokenKind;
  const Kinds expected{{K::Identifier, "p"},       {K::Operator, "->"},       {K::Identifier, "n"},
                       {K::Operator, "<<="},       {K::NumberLiteral, "0x1Fu"}, {K::Punctuator, ";"},
                       {K::Identifier, "s"},       {K::Operator, "="},        {K::StringLiteral, "L\"w\\\"x\""},
                       {K::Punctuator, ";"},       {K::Identifier, "c"},      {K::Operator, "="},
                       {K::CharLiteral, "'\\n'"},  {K::Punctuator, ";"},      {K::Identifier, "d"},
                       {K::Operator, "="},         {K::NumberLiteral, "1.5e-3"}, {K::Punctuator, ";"}};
  EXPECT_EQ(kinds_of("p->n <<= 0x1Fu; s = L\"w\\\"x\"; c = '\\n'; d = 1.5e-3;"), expected);
}

TEST(Tokenize, RawString) {
  const auto s = tokenize("auto r = R\"d(a \" b)d\";");
  ASSERT_EQ(s.tokens.size(), 5u);
  EXPECT_EQ(s.tokens[3].kind, TokenKind::StringLiteral);
  EXPECT_EQ(s.tokens[3].text, "R\"d(a \" b)d\"");
}

TEST(Tokenize, Positions) {
  const auto s = tokenize("a\n  bb = 1;");
  ASSERT_GE(s.tokens.size(), 2u);
  EXPECT_EQ(s.tokens[1].position, (SourcePosition{2, 3}));
  EXPECT_EQ(s.tokens[1].offset, 4u);
}

TEST(Tokenize, EveryNonSpaceCharacterIsConsumedOnce) {
  const std::string src = "int main(){ char*s=\"a b\"; /* x y */ return s[0]+'c'; } @ $v";
  const auto s = tokenize(src);
  std::string covered(src.size(), ' ');
  for (const auto& t : s.tokens) {
    ASSERT_FALSE(t.text.empty());
    EXPECT_EQ(src.substr(t.offset, t.text.size()), t.text);
    for (std::size_t i = 0; i < t.text.size(); ++i) {
      EXPECT_EQ(covered[t.offset + i], ' ') << "overlap at " << t.offset + i;
      covered[t.offset + i] = 'x';
    }
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isspace(static_cast<unsigned char>(src[i]))) EXPECT_EQ(covered[i], 'x') << "byte " << i;
  }
}

TEST(Tokenize, UnterminatedStringRecovers) {
  const auto s = tokenize("x = \"abc");
  ASSERT_EQ(s.diagnostics.size(), 1u);
  EXPECT_EQ(s.diagnostics[0].issue, LexIssue::UnterminatedString);
  EXPECT_EQ(s.diagnostics[0].position, (SourcePosition{1, 5}));
  EXPECT_EQ(s.tokens.back().kind, TokenKind::StringLiteral);
  EXPECT_TRUE(normalize_source("x = \"abc").flagged);
}

TEST(Tokenize, UnterminatedCommentRecovers) {
  const auto s = tokenize("x; /* open");
  ASSERT_EQ(s.diagnostics.size(), 1u);
  EXPECT_EQ(s.diagnostics[0].issue, LexIssue::UnterminatedComment);
  EXPECT_EQ(s.tokens.back().kind, TokenKind::Comment);
  EXPECT_EQ(norm("x; /* open"), (V{"VAR0", ";"}));
}

TEST(Tokenize, StringDoesNotSpanNewline) {
  const auto s = tokenize("a = 'x\nb;");
  ASSERT_EQ(s.diagnostics.size(), 1u);
  EXPECT_EQ(s.diagnostics[0].issue, LexIssue::UnterminatedChar);
  EXPECT_EQ(s.tokens.back().text, ";");
}

TEST(Keywords, Table) {
  for (const char* k : {"int", "while", "_Bool", "restrict", "class", "constexpr", "nullptr", "static_assert",
                        "thread_local", "and_eq"})
    EXPECT_TRUE(is_keyword(k)) << k;
  for (const char* k : {"printf", "main", "VAR0", "NUMBER", "override", "final", "concept"})
    EXPECT_FALSE(is_keyword(k)) << k;
}

TEST(Classify, CallSite) {
  const auto roles = classify_identifiers(tokenize("add(a, b)").tokens);
  ASSERT_EQ(roles.size(), 3u);
  EXPECT_EQ(roles.at("add").role, IdentifierKind::FunctionName);
  EXPECT_EQ(roles.at("a").role, IdentifierKind::Variable);
  EXPECT_EQ(roles.at("b").role, IdentifierKind::Variable);
}

TEST(Classify, NoCalls) {
  const auto roles = classify_identifiers(tokenize("x = y;").tokens);
  ASSERT_EQ(roles.size(), 2u);
  EXPECT_EQ(roles.at("x").role, IdentifierKind::Variable);
  EXPECT_EQ(roles.at("y").role, IdentifierKind::Variable);
}

TEST(Classify, RepeatedCallSingleEntry) {
  const auto roles = classify_identifiers(tokenize("f(); f();").tokens);
  ASSERT_EQ(roles.size(), 1u);
  EXPECT_EQ(roles.at("f").role, IdentifierKind::FunctionName);
  EXPECT_EQ(roles.at("f").canonical_text, "FUNC0");
}

TEST(Classify, FirstOccurrenceWins) {
  const auto roles = classify_identifiers(tokenize("g = 1; g(2);").tokens);
  EXPECT_EQ(roles.at("g").role, IdentifierKind::Variable);
  EXPECT_EQ(norm("g = 1; g(2);"), (V{"VAR0", "=", "NUMBER", ";", "VAR0", "(", "NUMBER", ")", ";"}));
}

TEST(Classify, CommentBetweenNameAndParen) {
  EXPECT_EQ(classify_identifiers(tokenize("f /* c */ (x);").tokens).at("f").role, IdentifierKind::FunctionName);
}

TEST(Normalize, WorkedExample) {
  const V expected{"int", "FUNC0", "(", "int", "VAR0", ",", "int", "VAR1", ")", "{",
                   "return", "VAR0", "+", "VAR1", ";", "}"};
  EXPECT_EQ(norm("int add(int a, int b) { return a + b; }"), expected);
  EXPECT_EQ(norm("int add(int a, int b){return a+b;}"), expected);
}

TEST(Normalize, LiteralsBecomePlaceholders) {
  EXPECT_EQ(norm("x = 5; s = \"hi\";"), (V{"VAR0", "=", "NUMBER", ";", "VAR1", "=", "STRING", ";"}));
  EXPECT_EQ(norm("c = 'a';"), (V{"VAR0", "=", "CHAR", ";"}));
}

TEST(Normalize, EmptyInput) {
  const auto s = normalize({});
  EXPECT_TRUE(s.tokens.empty());
  EXPECT_FALSE(s.flagged);
}

TEST(NormalizeSource, Examples) {
  EXPECT_EQ(norm("y = x;"), (V{"VAR0", "=", "VAR1", ";"}));
  EXPECT_EQ(norm("/* c */ x;"), (V{"VAR0", ";"}));
  EXPECT_EQ(norm("while (1) {}"), (V{"while", "(", "NUMBER", ")", "{", "}"}));
}

TEST(NormalizeSource, MatchesComposition) {
  const std::string src = "int f(int q) { return g(q) + 3; }";
  const auto tokens = tokenize(src).tokens;
  EXPECT_EQ(normalize(tokens).tokens, norm(src));
}

TEST(NormalizeSource, DirectivesDropped) {
  EXPECT_EQ(norm("#include <a.h>\n#define N 4\nint x;"), (V{"int", "VAR0", ";"}));
}

TEST(NormalizeSource, ApiNamesRenamedByDefault) {
  EXPECT_EQ(norm("strcpy(dst, src);"), (V{"FUNC0", "(", "VAR0", ",", "VAR1", ")", ";"}));
}

TEST(NormalizeSource, PreservedNamesPassThrough) {
  NormalizerOptions o;
  o.preserved_names = {"strcpy"};
  EXPECT_EQ(norm("strcpy(dst, src); f(dst);", o),
            (V{"strcpy", "(", "VAR0", ",", "VAR1", ")", ";", "FUNC0", "(", "VAR0", ")", ";"}));
}

TEST(NormalizeSource, CountersResetPerSample) {
  EXPECT_EQ(norm("a = b;"), norm("zz = yy;"));
}

TEST(NormalizeSource, Deterministic) {
  const std::string src = "void f(char *p) { memcpy(p, \"x\", 2); }";
  EXPECT_EQ(norm(src), norm(src));
}

TEST(Joined, SpaceSeparated) {
  EXPECT_EQ(normalize_source("x=1;").joined(), "VAR0 = NUMBER ;");
}

// Property tests over a generated corpus.

class NormalizerCorpus : public ::testing::Test {
 protected:
  static std::vector<testkit::SnippetTemplate> corpus() {
    std::mt19937_64 rng(2024);
    std::vector<testkit::SnippetTemplate> out;
    for (int i = 0; i < 50; ++i) out.push_back(testkit::random_snippet(rng));
    return out;
  }
};

TEST_F(NormalizerCorpus, AlphaRenamingInvariance) {
  std::mt19937_64 rng(99);
  for (const auto& t : corpus()) {
    const auto a = testkit::instantiate(t, testkit::random_names(rng, t.variables, "v"),
                                        testkit::random_names(rng, t.functions, "fn"));
    const auto b = testkit::instantiate(t, testkit::random_names(rng, t.variables, "w"),
                                        testkit::random_names(rng, t.functions, "gx"));
    ASSERT_NE(a, b);
    EXPECT_EQ(norm(a), norm(b)) << a << "\n---\n" << b;
  }
}

TEST_F(NormalizerCorpus, CanonicalClosure) {
  std::mt19937_64 rng(5);
  for (const auto& t : corpus()) {
    const auto src = testkit::instantiate(t, testkit::random_names(rng, t.variables, "v"),
                                          testkit::random_names(rng, t.functions, "f"));
    const auto once = normalize_source(src);
    EXPECT_EQ(norm(once.joined()), once.tokens) << src;
  }
}

TEST_F(NormalizerCorpus, NoRawLiteralsOrIdentifiers) {
  const std::regex numeric(R"(^\.?[0-9].*)");
  const std::regex quoted(R"(^(u8|u|U|L)?R?["'].*)");
  const std::regex canonical(R"(^(VAR|FUNC)(0|[1-9][0-9]*)$)");
  std::mt19937_64 rng(6);
  for (const auto& t : corpus()) {
    const auto src = testkit::instantiate(t, testkit::random_names(rng, t.variables, "v"),
                                          testkit::random_names(rng, t.functions, "f"));
    for (const auto& tok : norm(src)) {
      EXPECT_FALSE(std::regex_match(tok, numeric)) << tok;
      EXPECT_FALSE(std::regex_match(tok, quoted)) << tok;
      const bool word = std::isalpha(static_cast<unsigned char>(tok[0])) || tok[0] == '_';
      if (word && !is_keyword(tok)) {
        EXPECT_TRUE(std::regex_match(tok, canonical) || tok == "NUMBER" || tok == "STRING" || tok == "CHAR")
            << tok;
      }
    }
  }
}

TEST_F(NormalizerCorpus, IndexDensityInFirstOccurrenceOrder) {
  std::mt19937_64 rng(7);
  for (const auto& t : corpus()) {
    const auto src = testkit::instantiate(t, testkit::random_names(rng, t.variables, "v"),
                                          testkit::random_names(rng, t.functions, "f"));
    std::size_t next_var = 0, next_func = 0;
    for (const auto& tok : norm(src)) {
      for (auto [prefix, next] : {std::pair{std::string("VAR"), &next_var}, {std::string("FUNC"), &next_func}}) {
        if (tok.rfind(prefix, 0) == 0 && tok.size() > prefix.size()) {
          const auto k = std::stoul(tok.substr(prefix.size()));
          EXPECT_LE(k, *next) << "gap before " << tok;
          if (k == *next) ++*next;
        }
      }
    }
  }
}

TEST(SplitFunctions, TopLevelDefinitions) {
  const std::string src =
      "#include <x.h>\n"
      "struct S { int a; };\n"
      "static int helper(int v) { if (v) { return 1; } return 0; }\n"
      "int decl(void);\n"
      "namespace ns {\n"
      "void inner() const noexcept { char s[] = \"}\"; }\n"
      "}\n"
      "int main(int argc, char **argv)\n{\n  return helper(argc);\n}\n";
  const auto fns = split_functions(src);
  ASSERT_EQ(fns.size(), 3u);
  EXPECT_EQ(fns[0].name, "helper");
  EXPECT_EQ(fns[0].line, 3u);
  EXPECT_EQ(fns[1].name, "inner");
  EXPECT_EQ(fns[2].name, "main");
  EXPECT_EQ(fns[2].line, 8u);
  EXPECT_NE(fns[2].text.find("return helper(argc);"), std::string::npos);
  EXPECT_EQ(fns[2].text.back(), '}');
}

TEST(SplitFunctions, NoFunctions) {
  EXPECT_TRUE(split_functions("int x = 3;\nstruct A { int b; };").empty());
}

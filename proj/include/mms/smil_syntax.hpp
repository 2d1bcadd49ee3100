#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mms/smil_model.hpp"

namespace mms::smil {

enum class TokenKind { TagOpen, TagClose, TagSelfClose, AttrName, AttrValue, Text, Eof };

std::string_view token_kind_name(TokenKind kind);

struct Token {
  TokenKind kind = TokenKind::Eof;
  std::string lexeme;      // tag/attribute name, decoded value or text
  int line = 1;            // 1-based
  int column = 1;          // 1-based, in bytes
  std::size_t offset = 0;  // byte span in the input covered by this token
  std::size_t length = 0;

  bool operator==(const Token&) const = default;
};

class LexError : public std::runtime_error {
 public:
  LexError(int line, int column, const std::string& what);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

enum class ParseErrorCode { UnexpectedToken, UnknownElement, BadClockValue, BadDimension, Unclosed, MissingAttribute };

std::string_view parse_error_name(ParseErrorCode code);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorCode code, int line, int column, std::string detail);
  ParseErrorCode code() const { return code_; }
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& detail() const { return detail_; }

 private:
  ParseErrorCode code_;
  int line_;
  int column_;
  std::string detail_;
};

class SerializeError : public std::runtime_error {
 public:
  explicit SerializeError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Splits SMIL text into tokens. Whitespace between tags, comments and
/// `<?...?>` declarations are skipped. The stream always ends with Eof.
std::vector<Token> tokenize(std::string_view input);

struct ParseOptions {
  /// Unknown elements become warnings and their subtree is skipped.
  bool lenient = false;
};

struct ParseWarning {
  int line = 1;
  int column = 1;
  std::string detail;
};

struct ParseOutcome {
  SmilTree tree;
  std::vector<ParseWarning> warnings;
};

SmilTree parse(std::span<const Token> tokens);
ParseOutcome parse(std::span<const Token> tokens, const ParseOptions& options);

/// tokenize + parse.
SmilTree parse_text(std::string_view input);

/// Clock value to integer milliseconds: "5s", "1.5s", "250ms", "7" (seconds).
/// Rounds half-up. Returns nullopt on malformed input.
std::optional<std::int64_t> parse_clock_value(std::string_view text);

/// "10", "10px" (pixels) or "12.5%" (percent).
std::optional<Dimension> parse_dimension(std::string_view text);

std::string format_dimension(const Dimension& d);

/// Canonical form: CRLF line endings, 2-space indent, fixed attribute order,
/// times rendered as "<N>ms". Throws SerializeError if validate() fails.
std::string serialize(const SmilTree& tree);

}  // namespace mms::smil

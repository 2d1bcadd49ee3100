#include "mms/smil_syntax.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <set>

namespace mms::smil {

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::TagOpen: return "TagOpen";
    case TokenKind::TagClose: return "TagClose";
    case TokenKind::TagSelfClose: return "TagSelfClose";
    case TokenKind::AttrName: return "AttrName";
    case TokenKind::AttrValue: return "AttrValue";
    case TokenKind::Text: return "Text";
    case TokenKind::Eof: return "Eof";
  }
  return "?";
}

std::string_view parse_error_name(ParseErrorCode code) {
  switch (code) {
    case ParseErrorCode::UnexpectedToken: return "UnexpectedToken";
    case ParseErrorCode::UnknownElement: return "UnknownElement";
    case ParseErrorCode::BadClockValue: return "BadClockValue";
    case ParseErrorCode::BadDimension: return "BadDimension";
    case ParseErrorCode::Unclosed: return "Unclosed";
    case ParseErrorCode::MissingAttribute: return "MissingAttribute";
  }
  return "?";
}

LexError::LexError(int line, int column, const std::string& what)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

ParseError::ParseError(ParseErrorCode code, int line, int column, std::string detail)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " +
                         std::string(parse_error_name(code)) + ": " + detail),
      code_(code),
      line_(line),
      column_(column),
      detail_(std::move(detail)) {}

namespace {

std::string describe(const std::vector<Violation>& violations) {
  std::string s = "invalid SMIL tree:";
  for (const auto& v : violations) {
    s += " ";
    s += violation_name(v.code);
    s += " at ";
    s += v.path;
    s += ";";
  }
  return s;
}

}  // namespace

SerializeError::SerializeError(std::vector<Violation> violations)
    : std::runtime_error(describe(violations)), violations_(std::move(violations)) {}

// ---------------------------------------------------------------------------
// Lexer

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
         c == '_' || c == ':' || c == '.';
}

std::string decode_entities(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '&') {
      static constexpr std::pair<std::string_view, char> kEntities[] = {
          {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}};
      bool matched = false;
      for (const auto& [name, ch] : kEntities) {
        if (raw.substr(i, name.size()) == name) {
          out += ch;
          i += name.size() - 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out += raw[i];
  }
  return out;
}

class Lexer {
 public:
  explicit Lexer(std::string_view input) : in_(input) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (at_end()) break;
      if (peek() == '<') {
        lex_markup(out);
      } else {
        lex_text(out);
      }
    }
    out.push_back({TokenKind::Eof, "", line_, col_, pos_, 0});
    return out;
  }

 private:
  bool at_end() const { return pos_ >= in_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < in_.size() ? in_[pos_ + ahead] : '\0';
  }
  bool starts_with(std::string_view s) const { return in_.substr(pos_, s.size()) == s; }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < in_.size(); ++i) {
      if (in_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_space() {
    while (!at_end() && is_space(peek())) advance();
  }

  [[noreturn]] void fail(const std::string& what) const { throw LexError(line_, col_, what); }

  void skip_until(std::string_view terminator, const std::string& what) {
    const auto end = in_.find(terminator, pos_);
    if (end == std::string_view::npos) fail("unterminated " + what);
    advance(end + terminator.size() - pos_);
  }

  std::string read_name() {
    const std::size_t start = pos_;
    while (!at_end() && is_name_char(peek())) advance();
    return std::string(in_.substr(start, pos_ - start));
  }

  void lex_markup(std::vector<Token>& out) {
    if (starts_with("<!--")) {
      skip_until("-->", "comment");
      return;
    }
    if (starts_with("<?")) {
      skip_until("?>", "declaration");
      return;
    }
    if (starts_with("<!")) fail("DOCTYPE and CDATA sections are not supported");

    const int line = line_;
    const int col = col_;
    const std::size_t start = pos_;
    if (starts_with("</")) {
      advance(2);
      std::string name = read_name();
      if (name.empty()) fail("expected element name after '</'");
      skip_space();
      if (peek() != '>') fail("expected '>' to end closing tag");
      advance();
      out.push_back({TokenKind::TagClose, std::move(name), line, col, start, pos_ - start});
      return;
    }

    advance();
    std::string name = read_name();
    if (name.empty()) fail("expected element name after '<'");
    out.push_back({TokenKind::TagOpen, std::move(name), line, col, start, pos_ - start});

    while (true) {
      skip_space();
      if (at_end()) fail("unterminated tag");
      if (starts_with("/>")) {
        out.push_back({TokenKind::TagSelfClose, "/>", line_, col_, pos_, 2});
        advance(2);
        return;
      }
      if (peek() == '>') {
        advance();
        return;
      }
      if (!is_name_char(peek())) fail(std::string("unexpected character '") + peek() + "' in tag");

      const int aline = line_;
      const int acol = col_;
      const std::size_t astart = pos_;
      std::string attr = read_name();
      out.push_back({TokenKind::AttrName, std::move(attr), aline, acol, astart, pos_ - astart});
      skip_space();
      if (peek() != '=') fail("expected '=' after attribute name");
      advance();
      skip_space();
      const char quote = peek();
      if (quote != '"' && quote != '\'') fail("expected quoted attribute value");
      const int vline = line_;
      const int vcol = col_;
      const std::size_t vstart = pos_;
      const auto close = in_.find(quote, pos_ + 1);
      if (close == std::string_view::npos) fail("unterminated attribute value");
      std::string value = decode_entities(in_.substr(pos_ + 1, close - pos_ - 1));
      advance(close + 1 - pos_);
      out.push_back({TokenKind::AttrValue, std::move(value), vline, vcol, vstart, pos_ - vstart});
    }
  }

  void lex_text(std::vector<Token>& out) {
    const int line = line_;
    const int col = col_;
    const std::size_t start = pos_;
    auto end = in_.find('<', pos_);
    if (end == std::string_view::npos) end = in_.size();
    std::string_view raw = in_.substr(start, end - start);
    advance(end - pos_);
    while (!raw.empty() && is_space(raw.back())) raw.remove_suffix(1);
    out.push_back({TokenKind::Text, decode_entities(raw), line, col, start, raw.size()});
  }

  std::string_view in_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view input) { return Lexer(input).run(); }

// ---------------------------------------------------------------------------
// Value syntax

std::optional<std::int64_t> parse_clock_value(std::string_view text) {
  std::int64_t scale = 1000;  // bare number = seconds
  if (text.size() > 2 && text.substr(text.size() - 2) == "ms") {
    scale = 1;
    text.remove_suffix(2);
  } else if (!text.empty() && text.back() == 's') {
    text.remove_suffix(1);
  }
  if (text.empty()) return std::nullopt;

  const auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() || (dot != std::string_view::npos && frac.empty())) return std::nullopt;
  for (char c : whole) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  for (char c : frac) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  if (whole.size() > 12) return std::nullopt;

  std::int64_t units = 0;
  std::from_chars(whole.data(), whole.data() + whole.size(), units);
  if (frac.size() > 12) frac = frac.substr(0, 12);
  std::int64_t frac_value = 0;
  std::int64_t denom = 1;
  for (char c : frac) {
    frac_value = frac_value * 10 + (c - '0');
    denom *= 10;
  }
  // round half-up of frac_value * scale / denom
  const std::int64_t frac_ms = (2 * frac_value * scale + denom) / (2 * denom);
  return units * scale + frac_ms;
}

std::optional<Dimension> parse_dimension(std::string_view text) {
  Unit unit = Unit::Pixels;
  if (!text.empty() && text.back() == '%') {
    unit = Unit::Percent;
    text.remove_suffix(1);
  } else if (text.size() > 2 && text.substr(text.size() - 2) == "px") {
    text.remove_suffix(2);
  }
  if (text.empty()) return std::nullopt;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || c == '.')) return std::nullopt;
  }
  double value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  if (unit == Unit::Pixels && value != std::floor(value)) return std::nullopt;
  return Dimension{value, unit};
}

std::string format_dimension(const Dimension& d) {
  char buf[64];
  std::to_chars_result r;
  if (d.unit == Unit::Pixels) {
    r = std::to_chars(buf, buf + sizeof buf, static_cast<std::int64_t>(d.value));
  } else {
    r = std::to_chars(buf, buf + sizeof buf, d.value, std::chars_format::fixed);
  }
  std::string s(buf, r.ptr);
  if (d.unit == Unit::Percent) s += '%';
  return s;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Attr {
  std::string name;
  std::string value;
  const Token* value_token;
};

struct Element {
  std::string name;
  const Token* open = nullptr;
  std::vector<Attr> attrs;
  std::vector<std::unique_ptr<Element>> children;

  const Attr* attr(std::string_view key) const {
    for (const auto& a : attrs) {
      if (a.name == key) return &a;
    }
    return nullptr;
  }
};

class TreeReader {
 public:
  explicit TreeReader(std::span<const Token> tokens) : tokens_(tokens) {}

  std::unique_ptr<Element> read_document() {
    auto root = read_element();
    if (current().kind != TokenKind::Eof) unexpected(current(), "content after root element");
    return root;
  }

 private:
  const Token& current() const {
    static const Token kEof{};
    return pos_ < tokens_.size() ? tokens_[pos_] : (tokens_.empty() ? kEof : tokens_.back());
  }

  [[noreturn]] static void unexpected(const Token& t, const std::string& what) {
    throw ParseError(ParseErrorCode::UnexpectedToken, t.line, t.column,
                     what + " (got " + std::string(token_kind_name(t.kind)) +
                         (t.lexeme.empty() ? "" : " '" + t.lexeme + "'") + ")");
  }

  std::unique_ptr<Element> read_element() {
    const Token& open = current();
    if (open.kind != TokenKind::TagOpen) unexpected(open, "expected element");
    ++pos_;
    auto el = std::make_unique<Element>();
    el->name = open.lexeme;
    el->open = &open;

    std::set<std::string> seen;
    while (current().kind == TokenKind::AttrName) {
      const Token& name = current();
      ++pos_;
      if (current().kind != TokenKind::AttrValue) unexpected(current(), "expected attribute value");
      if (!seen.insert(name.lexeme).second) unexpected(name, "duplicate attribute '" + name.lexeme + "'");
      el->attrs.push_back({name.lexeme, current().lexeme, &current()});
      ++pos_;
    }
    if (current().kind == TokenKind::TagSelfClose) {
      ++pos_;
      return el;
    }
    while (true) {
      const Token& t = current();
      switch (t.kind) {
        case TokenKind::TagOpen:
          el->children.push_back(read_element());
          break;
        case TokenKind::TagClose:
          if (t.lexeme != el->name) {
            unexpected(t, "closing tag does not match <" + el->name + ">");
          }
          ++pos_;
          return el;
        case TokenKind::Eof:
          throw ParseError(ParseErrorCode::Unclosed, t.line, t.column, "<" + el->name + "> is never closed");
        default:
          unexpected(t, "unexpected content inside <" + el->name + ">");
      }
    }
  }

  std::span<const Token> tokens_;
  std::size_t pos_ = 0;
};

class Interpreter {
 public:
  explicit Interpreter(const ParseOptions& options) : options_(options) {}

  ParseOutcome run(const Element& root) {
    if (root.name != "smil") reject_element(root, "document root must be <smil>", true);
    bool seen_head = false;
    bool seen_body = false;
    for (const auto& child : root.children) {
      if (child->name == "head" && !seen_head && !seen_body) {
        seen_head = true;
        read_head(*child);
      } else if (child->name == "body" && !seen_body) {
        seen_body = true;
        read_body(*child);
      } else {
        reject_element(*child, "<" + child->name + "> not allowed in <smil>");
      }
    }
    return std::move(outcome_);
  }

 private:
  static bool known_element(std::string_view name) {
    static const std::set<std::string_view> kKnown = {"smil", "head", "layout", "root-layout", "region", "body",
                                                      "par", "img", "text", "audio", "video", "ref"};
    return kKnown.count(name) != 0;
  }

  // Unknown elements may be skipped in lenient mode; misplaced known ones
  // are always errors.
  void reject_element(const Element& el, const std::string& what, bool fatal = false) {
    const Token& t = *el.open;
    if (!known_element(el.name)) {
      if (options_.lenient && !fatal) {
        outcome_.warnings.push_back({t.line, t.column, "skipped unknown element <" + el.name + ">"});
        return;
      }
      throw ParseError(ParseErrorCode::UnknownElement, t.line, t.column, "<" + el.name + ">");
    }
    throw ParseError(ParseErrorCode::UnexpectedToken, t.line, t.column, what);
  }

  static std::int64_t clock(const Attr& a) {
    const auto v = parse_clock_value(a.value);
    if (!v) {
      throw ParseError(ParseErrorCode::BadClockValue, a.value_token->line, a.value_token->column,
                       a.name + "=\"" + a.value + "\"");
    }
    return *v;
  }

  static Dimension dimension(const Attr& a) {
    const auto v = parse_dimension(a.value);
    if (!v) {
      throw ParseError(ParseErrorCode::BadDimension, a.value_token->line, a.value_token->column,
                       a.name + "=\"" + a.value + "\"");
    }
    return *v;
  }

  static std::int64_t root_extent(const Attr& a) {
    const Dimension d = dimension(a);
    if (d.unit != Unit::Pixels) {
      throw ParseError(ParseErrorCode::BadDimension, a.value_token->line, a.value_token->column,
                       "root-layout " + a.name + " must be in pixels");
    }
    return static_cast<std::int64_t>(d.value);
  }

  static const Attr& require(const Element& el, std::string_view name) {
    if (const Attr* a = el.attr(name)) return *a;
    throw ParseError(ParseErrorCode::MissingAttribute, el.open->line, el.open->column,
                     "<" + el.name + "> requires " + std::string(name));
  }

  void read_head(const Element& head) {
    bool seen_layout = false;
    for (const auto& child : head.children) {
      if (child->name == "layout" && !seen_layout) {
        seen_layout = true;
        read_layout(*child);
      } else {
        reject_element(*child, "<" + child->name + "> not allowed in <head>");
      }
    }
  }

  void read_layout(const Element& layout) {
    bool seen_root = false;
    for (const auto& child : layout.children) {
      if (child->name == "root-layout" && !seen_root) {
        seen_root = true;
        no_children(*child);
        if (const Attr* w = child->attr("width")) outcome_.tree.layout.root_width = root_extent(*w);
        if (const Attr* h = child->attr("height")) outcome_.tree.layout.root_height = root_extent(*h);
      } else if (child->name == "region") {
        no_children(*child);
        Region r;
        r.id = require(*child, "id").value;
        if (const Attr* a = child->attr("left")) r.left = dimension(*a);
        if (const Attr* a = child->attr("top")) r.top = dimension(*a);
        if (const Attr* a = child->attr("width")) r.width = dimension(*a);
        if (const Attr* a = child->attr("height")) r.height = dimension(*a);
        if (const Attr* a = child->attr("z-index")) {
          int z = 0;
          const auto& v = a->value;
          const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), z);
          if (ec != std::errc() || ptr != v.data() + v.size()) {
            throw ParseError(ParseErrorCode::UnexpectedToken, a->value_token->line, a->value_token->column,
                             "z-index must be an integer");
          }
          r.z_index = z;
        }
        outcome_.tree.layout.regions.push_back(std::move(r));
      } else {
        reject_element(*child, "<" + child->name + "> not allowed in <layout>");
      }
    }
  }

  void no_children(const Element& el) {
    for (const auto& child : el.children) {
      reject_element(*child, "<" + el.name + "> must be empty");
    }
  }

  void read_body(const Element& body) {
    for (const auto& child : body.children) {
      if (child->name == "par") {
        read_par(*child);
      } else {
        reject_element(*child, "<" + child->name + "> not allowed in <body>");
      }
    }
  }

  void read_par(const Element& el) {
    Par par;
    if (const Attr* b = el.attr("begin"); b && clock(*b) != 0) {
      throw ParseError(ParseErrorCode::UnexpectedToken, b->value_token->line, b->value_token->column,
                       "par begin offsets are not supported");
    }
    if (const Attr* d = el.attr("dur")) {
      par.dur_ms = clock(*d);
    } else if (const Attr* e = el.attr("end")) {
      par.dur_ms = clock(*e);
    }
    for (const auto& child : el.children) {
      const auto kind = kind_from_element(child->name);
      if (!kind) {
        reject_element(*child, "<" + child->name + "> not allowed in <par>");
        continue;
      }
      par.media.push_back(read_media(*child, *kind));
    }
    outcome_.tree.pars.push_back(std::move(par));
  }

  MediaItem read_media(const Element& el, MediaKind kind) {
    no_children(el);
    MediaItem item;
    item.kind = kind;
    item.src = require(el, "src").value;
    if (const Attr* a = el.attr("region")) item.region_id = a->value;
    if (const Attr* a = el.attr("begin")) item.begin_ms = clock(*a);
    if (const Attr* a = el.attr("dur")) {
      item.dur_ms = clock(*a);
    } else if (const Attr* e = el.attr("end")) {
      const std::int64_t end = clock(*e);
      if (end < item.begin_ms) {
        throw ParseError(ParseErrorCode::BadClockValue, e->value_token->line, e->value_token->column,
                         "end precedes begin");
      }
      item.dur_ms = end - item.begin_ms;
    }
    if (const Attr* a = el.attr("alt")) item.alt = a->value;
    return item;
  }

  const ParseOptions& options_;
  ParseOutcome outcome_;
};

}  // namespace

ParseOutcome parse(std::span<const Token> tokens, const ParseOptions& options) {
  const auto root = TreeReader(tokens).read_document();
  return Interpreter(options).run(*root);
}

SmilTree parse(std::span<const Token> tokens) { return parse(tokens, ParseOptions{}).tree; }

SmilTree parse_text(std::string_view input) {
  const auto tokens = tokenize(input);
  return parse(tokens);
}

// ---------------------------------------------------------------------------
// Serializer

namespace {

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Writer {
 public:
  void line(int depth, std::string_view text) {
    out_.append(static_cast<std::size_t>(depth) * 2, ' ');
    out_ += text;
    out_ += "\r\n";
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

void add_attr(std::string& tag, std::string_view name, std::string_view value) {
  tag += ' ';
  tag += name;
  tag += "=\"";
  tag += escape(value);
  tag += '"';
}

std::string ms(std::int64_t v) { return std::to_string(v) + "ms"; }

}  // namespace

std::string serialize(const SmilTree& tree) {
  if (auto violations = validate(tree); !violations.empty()) throw SerializeError(std::move(violations));

  Writer w;
  w.line(0, "<smil>");
  const Layout& layout = tree.layout;
  if (!layout.empty()) {
    w.line(1, "<head>");
    w.line(2, "<layout>");
    if (layout.root_width || layout.root_height) {
      std::string tag = "<root-layout";
      if (layout.root_width) add_attr(tag, "width", std::to_string(*layout.root_width));
      if (layout.root_height) add_attr(tag, "height", std::to_string(*layout.root_height));
      w.line(3, tag + "/>");
    }
    for (const Region& r : layout.regions) {
      std::string tag = "<region";
      add_attr(tag, "id", r.id);
      add_attr(tag, "left", format_dimension(r.left));
      add_attr(tag, "top", format_dimension(r.top));
      add_attr(tag, "width", format_dimension(r.width));
      add_attr(tag, "height", format_dimension(r.height));
      if (r.z_index != 0) add_attr(tag, "z-index", std::to_string(r.z_index));
      w.line(3, tag + "/>");
    }
    w.line(2, "</layout>");
    w.line(1, "</head>");
  }

  if (tree.pars.empty()) {
    w.line(1, "<body/>");
  } else {
    w.line(1, "<body>");
    for (const Par& par : tree.pars) {
      std::string tag = "<par";
      if (par.dur_ms) add_attr(tag, "dur", ms(*par.dur_ms));
      if (par.media.empty()) {
        w.line(2, tag + "/>");
        continue;
      }
      w.line(2, tag + ">");
      for (const MediaItem& m : par.media) {
        std::string mtag = "<" + std::string(element_name(m.kind));
        add_attr(mtag, "src", m.src);
        if (m.region_id) add_attr(mtag, "region", *m.region_id);
        if (m.begin_ms != 0) add_attr(mtag, "begin", ms(m.begin_ms));
        if (m.dur_ms) add_attr(mtag, "dur", ms(*m.dur_ms));
        if (m.alt) add_attr(mtag, "alt", *m.alt);
        w.line(3, mtag + "/>");
      }
      w.line(2, "</par>");
    }
    w.line(1, "</body>");
  }
  w.line(0, "</smil>");
  return w.take();
}

}  // namespace mms::smil

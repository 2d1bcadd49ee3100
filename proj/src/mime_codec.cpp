#include "mms/mime_codec.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace mms::mime {

std::string_view mime_error_name(MimeErrorCode code) {
  switch (code) {
    case MimeErrorCode::MissingBoundary: return "MissingBoundary";
    case MimeErrorCode::MissingStart: return "MissingStart";
    case MimeErrorCode::TruncatedPart: return "TruncatedPart";
    case MimeErrorCode::BadBase64: return "BadBase64";
    case MimeErrorCode::DuplicateContentId: return "DuplicateContentId";
    case MimeErrorCode::MissingContentId: return "MissingContentId";
  }
  return "?";
}

MimeError::MimeError(MimeErrorCode code, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(mime_error_name(code)) + " at byte " + std::to_string(offset) + ": " + detail),
      code_(code),
      offset_(offset) {}

namespace {

constexpr std::string_view kCrlf = "\r\n";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string_view strip_angles(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '<' && s.back() == '>') s = s.substr(1, s.size() - 2);
  return s;
}

constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string_view encoding_token(TransferEncoding e) { return e == TransferEncoding::Base64 ? "base64" : "7bit"; }

}  // namespace

std::string media_type(std::string_view content_type) {
  return lower(trim(content_type.substr(0, content_type.find(';'))));
}

bool is_seven_bit_safe(std::string_view body) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    const auto c = static_cast<unsigned char>(body[i]);
    if (c > 0x7F) return false;
    if (c == '\r') {
      if (i + 1 >= body.size() || body[i + 1] != '\n') return false;
      ++i;
    } else if (c == '\n') {
      return false;
    }
  }
  return true;
}

TransferEncoding choose_transfer_encoding(std::string_view content_type, std::string_view body) {
  const std::string type = media_type(content_type);
  if ((type == "text/plain" || type == kSmilContentType) && is_seven_bit_safe(body)) {
    return TransferEncoding::SevenBit;
  }
  return TransferEncoding::Base64;
}

std::string base64_encode(std::string_view bytes, std::size_t line_width) {
  std::string flat;
  flat.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
    flat += kBase64Alphabet[(v >> 18) & 63];
    flat += kBase64Alphabet[(v >> 12) & 63];
    flat += kBase64Alphabet[(v >> 6) & 63];
    flat += kBase64Alphabet[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    flat += kBase64Alphabet[(v >> 18) & 63];
    flat += kBase64Alphabet[(v >> 12) & 63];
    flat += rest == 2 ? kBase64Alphabet[(v >> 6) & 63] : '=';
    flat += '=';
  }
  if (line_width == 0 || flat.size() <= line_width) return flat;

  std::string wrapped;
  wrapped.reserve(flat.size() + flat.size() / line_width * 2);
  for (std::size_t pos = 0; pos < flat.size(); pos += line_width) {
    if (pos != 0) wrapped += kCrlf;
    wrapped.append(flat, pos, line_width);
  }
  return wrapped;
}

std::string base64_decode(std::string_view text, std::size_t base_offset) {
  static const auto kTable = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kBase64Alphabet[i])] = i;
    return t;
  }();

  std::string out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int count = 0;
  int padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == '\r' || c == '\n') continue;
    if (c == '=') {
      if (count < 2) throw MimeError(MimeErrorCode::BadBase64, base_offset + i, "misplaced padding");
      ++padding;
      acc <<= 6;
      if (++count == 4) {
        out += static_cast<char>((acc >> 16) & 0xFF);
        if (padding == 1) out += static_cast<char>((acc >> 8) & 0xFF);
        count = 0;
        acc = 0;
      }
      continue;
    }
    if (padding > 0) throw MimeError(MimeErrorCode::BadBase64, base_offset + i, "data after padding");
    const int v = kTable[c];
    if (v < 0) throw MimeError(MimeErrorCode::BadBase64, base_offset + i, "byte outside base64 alphabet");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    if (++count == 4) {
      out += static_cast<char>((acc >> 16) & 0xFF);
      out += static_cast<char>((acc >> 8) & 0xFF);
      out += static_cast<char>(acc & 0xFF);
      count = 0;
      acc = 0;
    }
  }
  if (count != 0) throw MimeError(MimeErrorCode::BadBase64, base_offset + text.size(), "incomplete quantum");
  return out;
}

// ---------------------------------------------------------------------------
// Encapsulation

namespace {

bool is_bchar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || std::string_view("'()+_,-./:=? ").find(c) != std::string_view::npos;
}

bool valid_boundary(std::string_view b) {
  return !b.empty() && b.size() <= 70 && b.back() != ' ' && std::all_of(b.begin(), b.end(), is_bchar);
}

bool valid_header_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return c > 0x20 && c < 0x7F && c != ':';
  });
}

bool valid_header_value(std::string_view value) {
  if (value.find_first_of("\r\n") != std::string_view::npos) return false;
  return trim(value) == value;
}

std::string encoded_body(const MimePart& part) {
  return part.transfer_encoding == TransferEncoding::Base64 ? base64_encode(part.body) : part.body;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

bool collides(std::string_view boundary, const std::vector<std::string>& bodies) {
  return std::any_of(bodies.begin(), bodies.end(),
                     [&](const std::string& b) { return b.find(boundary) != std::string::npos; });
}

std::string pick_boundary_for(const MmsEnvelope& envelope, const std::vector<std::string>& bodies,
                              const EncapsulateOptions& options) {
  if (!envelope.boundary.empty()) {
    if (!collides(envelope.boundary, bodies)) return envelope.boundary;
    if (options.policy == BoundaryPolicy::Strict) {
      throw EnvelopeError(EnvelopeError::Code::BoundaryCollision,
                          "boundary '" + envelope.boundary + "' occurs inside a part body");
    }
  }
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::string candidate = generated_boundary(options.seed, attempt);
    if (!collides(candidate, bodies)) return candidate;
  }
}

}  // namespace

std::string generated_boundary(std::uint64_t seed, std::uint64_t attempt) {
  static constexpr std::string_view kChars = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
  std::string out = "mms-";
  std::uint64_t state = splitmix64(seed ^ splitmix64(attempt));
  for (int i = 0; i < 24; ++i) {
    state = splitmix64(state);
    out += kChars[state % kChars.size()];
  }
  return out;
}

void check_envelope(const MmsEnvelope& envelope) {
  auto invalid = [](const std::string& what) { throw EnvelopeError(EnvelopeError::Code::InvalidEnvelope, what); };

  for (const auto& [name, value] : envelope.transport_headers) {
    if (!valid_header_name(name)) invalid("bad transport header name '" + name + "'");
    if (!valid_header_value(value)) invalid("bad value for transport header '" + name + "'");
    if (iequals(name, "Content-Type")) invalid("Content-Type is generated and may not be supplied");
  }
  if (!envelope.boundary.empty() && !valid_boundary(envelope.boundary)) {
    invalid("boundary '" + envelope.boundary + "' is not 1-70 MIME boundary characters");
  }

  std::set<std::string> ids;
  int smil_parts = 0;
  for (const auto& part : envelope.parts) {
    if (part.content_id.empty()) invalid("part without Content-ID");
    if (part.content_id.find_first_of("<>\r\n") != std::string::npos || trim(part.content_id) != part.content_id) {
      invalid("bad Content-ID '" + part.content_id + "'");
    }
    if (!ids.insert(part.content_id).second) invalid("duplicate Content-ID '" + part.content_id + "'");
    if (part.content_type.empty() || !valid_header_value(part.content_type)) {
      invalid("bad Content-Type for part '" + part.content_id + "'");
    }
    if (part.transfer_encoding == TransferEncoding::SevenBit && !is_seven_bit_safe(part.body)) {
      invalid("part '" + part.content_id + "' is not 7bit-safe");
    }
    if (media_type(part.content_type) == kSmilContentType) {
      ++smil_parts;
      if (part.content_id != envelope.start_id) invalid("SMIL part id differs from start id");
    }
  }
  if (smil_parts != 1) invalid("envelope must hold exactly one application/smil part");
}

std::string pick_boundary(const MmsEnvelope& envelope, const EncapsulateOptions& options) {
  std::vector<std::string> bodies;
  for (const auto& part : envelope.parts) bodies.push_back(encoded_body(part));
  return pick_boundary_for(envelope, bodies, options);
}

std::string encapsulate(const MmsEnvelope& envelope, const EncapsulateOptions& options) {
  check_envelope(envelope);
  std::vector<std::string> bodies;
  bodies.reserve(envelope.parts.size());
  for (const auto& part : envelope.parts) bodies.push_back(encoded_body(part));
  const std::string boundary = pick_boundary_for(envelope, bodies, options);

  std::string out;
  for (const auto& [name, value] : envelope.transport_headers) {
    out += name;
    out += ": ";
    out += value;
    out += kCrlf;
  }
  out += "Content-Type: multipart/related; boundary=\"" + boundary + "\"; start=\"<" + envelope.start_id + ">\"";
  out += kCrlf;
  out += kCrlf;
  for (std::size_t i = 0; i < envelope.parts.size(); ++i) {
    const auto& part = envelope.parts[i];
    out += "--" + boundary;
    out += kCrlf;
    out += "Content-Type: " + part.content_type;
    out += kCrlf;
    out += "Content-ID: <" + part.content_id + ">";
    out += kCrlf;
    out += "Content-Transfer-Encoding: ";
    out += encoding_token(part.transfer_encoding);
    out += kCrlf;
    out += kCrlf;
    out += bodies[i];
    out += kCrlf;
  }
  out += "--" + boundary + "--";
  out += kCrlf;
  return out;
}

// ---------------------------------------------------------------------------
// Decapsulation

namespace {

struct HeaderBlock {
  std::vector<Header> headers;
  std::size_t end = 0;  // offset just past the blank line
};

HeaderBlock read_headers(std::string_view bytes, std::size_t pos) {
  HeaderBlock block;
  while (true) {
    const auto eol = bytes.find(kCrlf, pos);
    if (eol == std::string_view::npos) {
      throw MimeError(MimeErrorCode::TruncatedPart, pos, "header section not terminated by a blank line");
    }
    const std::string_view line = bytes.substr(pos, eol - pos);
    pos = eol + 2;
    if (line.empty()) break;
    if ((line.front() == ' ' || line.front() == '\t') && !block.headers.empty()) {
      auto& value = block.headers.back().second;
      value += ' ';
      value += trim(line);
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) continue;
    block.headers.emplace_back(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }
  block.end = pos;
  return block;
}

/// Splits `type/sub; a=b; c="d;e"` into lower-cased parameter names and
/// unquoted values.
std::vector<std::pair<std::string, std::string>> content_type_params(std::string_view value) {
  std::vector<std::pair<std::string, std::string>> params;
  std::size_t i = value.find(';');
  while (i != std::string_view::npos && i < value.size()) {
    ++i;
    const auto eq = value.find('=', i);
    if (eq == std::string_view::npos) break;
    std::string name = lower(trim(value.substr(i, eq - i)));
    std::size_t j = eq + 1;
    while (j < value.size() && (value[j] == ' ' || value[j] == '\t')) ++j;
    std::string param;
    if (j < value.size() && value[j] == '"') {
      ++j;
      while (j < value.size() && value[j] != '"') {
        if (value[j] == '\\' && j + 1 < value.size()) ++j;
        param += value[j++];
      }
      i = value.find(';', j);
    } else {
      const auto semi = value.find(';', j);
      param = std::string(trim(value.substr(j, semi == std::string_view::npos ? std::string_view::npos : semi - j)));
      i = semi;
    }
    params.emplace_back(std::move(name), std::move(param));
  }
  return params;
}

const std::string* find_param(const std::vector<std::pair<std::string, std::string>>& params, std::string_view name) {
  for (const auto& [k, v] : params) {
    if (k == name) return &v;
  }
  return nullptr;
}

}  // namespace

const std::string* find_header(const std::vector<Header>& headers, std::string_view name) {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return &v;
  }
  return nullptr;
}

MmsEnvelope decapsulate(std::string_view bytes) {
  MmsEnvelope env;
  const HeaderBlock top = read_headers(bytes, 0);

  const std::string* content_type = nullptr;
  for (const auto& h : top.headers) {
    if (iequals(h.first, "Content-Type") && !content_type) {
      content_type = &h.second;
    } else {
      env.transport_headers.push_back(h);
    }
  }
  if (!content_type || media_type(*content_type) != "multipart/related") {
    throw MimeError(MimeErrorCode::MissingBoundary, 0, "no multipart/related Content-Type");
  }
  const auto params = content_type_params(*content_type);
  const std::string* boundary = find_param(params, "boundary");
  if (!boundary || boundary->empty()) throw MimeError(MimeErrorCode::MissingBoundary, 0, "no boundary parameter");
  const std::string* start = find_param(params, "start");
  if (!start) throw MimeError(MimeErrorCode::MissingStart, 0, "no start parameter");
  env.boundary = *boundary;
  env.start_id = std::string(strip_angles(*start));

  const std::string delimiter = "--" + env.boundary;
  const std::string inner_delimiter = "\r\n" + delimiter;

  // Locates the next delimiter line at or after `from`; returns npos if none.
  auto next_delimiter = [&](std::size_t from, bool at_line_start_ok) -> std::size_t {
    std::size_t pos = from;
    while (true) {
      std::size_t hit;
      if (at_line_start_ok && bytes.substr(pos, delimiter.size()) == delimiter) {
        hit = pos;
      } else {
        const auto found = bytes.find(inner_delimiter, pos);
        if (found == std::string_view::npos) return found;
        hit = found + 2;
      }
      const std::size_t after = hit + delimiter.size();
      if (after >= bytes.size() || bytes[after] == '-' || bytes[after] == '\r' || bytes[after] == ' ' ||
          bytes[after] == '\t') {
        return hit;
      }
      pos = hit;
      at_line_start_ok = false;
    }
  };

  std::size_t pos = next_delimiter(top.end, true);
  if (pos == std::string_view::npos) throw MimeError(MimeErrorCode::TruncatedPart, top.end, "no opening boundary");

  std::set<std::string> ids;
  while (true) {
    std::size_t cursor = pos + delimiter.size();
    if (bytes.substr(cursor, 2) == "--") break;
    while (cursor < bytes.size() && (bytes[cursor] == ' ' || bytes[cursor] == '\t')) ++cursor;
    if (bytes.substr(cursor, 2) != kCrlf) throw MimeError(MimeErrorCode::TruncatedPart, cursor, "boundary line not terminated");
    const std::size_t part_offset = cursor + 2;
    const HeaderBlock ph = read_headers(bytes, part_offset);

    const std::size_t close = bytes.find(inner_delimiter, ph.end);
    std::size_t next = close == std::string_view::npos ? close : next_delimiter(close, false);
    if (next == std::string_view::npos) {
      throw MimeError(MimeErrorCode::TruncatedPart, part_offset, "part not followed by a boundary");
    }
    const std::string_view raw = bytes.substr(ph.end, next - 2 - ph.end);

    MimePart part;
    const std::string* type = find_header(ph.headers, "Content-Type");
    part.content_type = type ? *type : "text/plain";
    const std::string* id = find_header(ph.headers, "Content-ID");
    if (!id) id = find_header(ph.headers, "Content-Location");
    if (!id || strip_angles(*id).empty()) {
      throw MimeError(MimeErrorCode::MissingContentId, part_offset, "part has no Content-ID");
    }
    part.content_id = std::string(strip_angles(*id));
    if (!ids.insert(part.content_id).second) {
      throw MimeError(MimeErrorCode::DuplicateContentId, part_offset, "Content-ID <" + part.content_id + "> repeated");
    }
    const std::string* cte = find_header(ph.headers, "Content-Transfer-Encoding");
    if (cte && iequals(*cte, "base64")) {
      part.transfer_encoding = TransferEncoding::Base64;
      part.body = base64_decode(raw, ph.end);
    } else {
      part.transfer_encoding = TransferEncoding::SevenBit;
      part.body = std::string(raw);
    }
    env.parts.push_back(std::move(part));
    pos = next;
  }

  if (!find_part(env, env.start_id)) {
    throw MimeError(MimeErrorCode::MissingStart, 0, "start part <" + env.start_id + "> not present");
  }
  return env;
}

const MimePart* find_part(const MmsEnvelope& envelope, std::string_view content_id) {
  for (const auto& part : envelope.parts) {
    if (part.content_id == content_id) return &part;
  }
  return nullptr;
}

const MimePart* start_part(const MmsEnvelope& envelope) { return find_part(envelope, envelope.start_id); }

Resolution resolve_media(const MmsEnvelope& envelope, const smil::SmilTree& tree) {
  Resolution out;
  for (std::size_t p = 0; p < tree.pars.size(); ++p) {
    const auto& par = tree.pars[p];
    for (std::size_t m = 0; m < par.media.size(); ++m) {
      const auto& item = par.media[m];
      std::string_view ref = item.src;
      if (ref.size() >= 4 && iequals(ref.substr(0, 4), "cid:")) ref.remove_prefix(4);
      if (const MimePart* part = find_part(envelope, ref)) {
        out.bindings.push_back({static_cast<int>(p), static_cast<int>(m), item, *part});
      } else {
        out.unbound.push_back({smil::ViolationCode::UnboundSrc,
                               "pars[" + std::to_string(p) + "].media[" + std::to_string(m) + "]", item.src});
      }
    }
  }
  return out;
}

}  // namespace mms::mime

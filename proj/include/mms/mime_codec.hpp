#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mms/smil_model.hpp"

namespace mms::mime {

using Header = std::pair<std::string, std::string>;

enum class TransferEncoding { SevenBit, Base64 };

struct MimePart {
  std::string content_type;
  std::string content_id;
  TransferEncoding transfer_encoding = TransferEncoding::Base64;
  std::string body;  // raw bytes

  bool operator==(const MimePart&) const = default;
};

struct MmsEnvelope {
  std::vector<Header> transport_headers;
  std::string start_id;
  std::vector<MimePart> parts;
  std::string boundary;  // empty: generated on encapsulation

  bool operator==(const MmsEnvelope&) const = default;
};

inline constexpr std::string_view kSmilContentType = "application/smil";

class EnvelopeError : public std::runtime_error {
 public:
  enum class Code { InvalidEnvelope, BoundaryCollision };
  EnvelopeError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class MimeErrorCode { MissingBoundary, MissingStart, TruncatedPart, BadBase64, DuplicateContentId, MissingContentId };

std::string_view mime_error_name(MimeErrorCode code);

class MimeError : public std::runtime_error {
 public:
  MimeError(MimeErrorCode code, std::size_t offset, const std::string& detail);
  MimeErrorCode code() const { return code_; }
  std::size_t offset() const { return offset_; }

 private:
  MimeErrorCode code_;
  std::size_t offset_;
};

/// "text/plain; charset=x" -> "text/plain", lower-cased.
std::string media_type(std::string_view content_type);

/// text/plain and application/smil travel as 7bit when the body is pure
/// ASCII with CRLF-only line breaks; everything else as base64.
TransferEncoding choose_transfer_encoding(std::string_view content_type, std::string_view body);

/// True if `body` may be sent with SevenBit.
bool is_seven_bit_safe(std::string_view body);

std::string base64_encode(std::string_view bytes, std::size_t line_width = 76);
/// Ignores CR/LF; throws MimeError(BadBase64) on any other non-alphabet byte
/// or bad padding.
std::string base64_decode(std::string_view text, std::size_t base_offset = 0);

enum class BoundaryPolicy {
  Strict,      // a supplied boundary found in a body is an error
  Regenerate,  // draw a fresh generated boundary instead
};

struct EncapsulateOptions {
  BoundaryPolicy policy = BoundaryPolicy::Strict;
  std::uint64_t seed = 1;
};

/// "mms-" + 24 alphanumerics; the attempt'th draw for this seed.
std::string generated_boundary(std::uint64_t seed, std::uint64_t attempt);

/// The boundary encapsulate() would use for this envelope.
std::string pick_boundary(const MmsEnvelope& envelope, const EncapsulateOptions& options = {});

/// Checks the envelope invariants; throws EnvelopeError(InvalidEnvelope).
void check_envelope(const MmsEnvelope& envelope);

/// Transport headers, the multipart/related Content-Type, then each part
/// framed by "--boundary" lines and closed with "--boundary--". CRLF line
/// endings throughout.
std::string encapsulate(const MmsEnvelope& envelope, const EncapsulateOptions& options = {});

/// Inverse of encapsulate. Header names are matched case-insensitively;
/// transport headers other than Content-Type are kept verbatim and in order.
MmsEnvelope decapsulate(std::string_view bytes);

/// Part whose Content-ID equals start_id.
const MimePart* start_part(const MmsEnvelope& envelope);
const MimePart* find_part(const MmsEnvelope& envelope, std::string_view content_id);

/// Transport header lookup, case-insensitive on the name.
const std::string* find_header(const std::vector<Header>& headers, std::string_view name);

struct Binding {
  int par_index = 0;
  int media_index = 0;
  smil::MediaItem item;
  MimePart part;
};

struct Resolution {
  std::vector<Binding> bindings;
  std::vector<smil::Violation> unbound;  // code UnboundSrc
};

/// Matches every media src to a part by Content-ID, accepting an optional
/// "cid:" prefix on the src.
Resolution resolve_media(const MmsEnvelope& envelope, const smil::SmilTree& tree);

}  // namespace mms::mime

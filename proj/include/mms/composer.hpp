#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mms/layout_adapter.hpp"
#include "mms/mime_codec.hpp"
#include "mms/playback.hpp"
#include "mms/smil_model.hpp"

namespace mms::composer {

struct SlideSpec {
  std::optional<std::string> text;   // inline
  std::optional<std::string> image;  // file paths
  std::optional<std::string> audio;
  std::optional<std::string> video;
  std::optional<std::int64_t> dur_ms;
};

struct Manifest {
  std::string from;
  std::string to;
  std::optional<std::string> subject;
  std::optional<layout::DeviceProfile> device;
  std::vector<SlideSpec> slides;
  /// Relative media paths resolve against this directory.
  std::filesystem::path base_dir;
};

class ComposeError : public std::runtime_error {
 public:
  enum class Code { EmptySlide, MissingFile, BadManifest };
  ComposeError(Code code, const std::string& what, std::string path = {})
      : std::runtime_error(what), code_(code), path_(std::move(path)) {}
  Code code() const { return code_; }
  const std::string& path() const { return path_; }

 private:
  Code code_;
  std::string path_;
};

/// Parses the manifest JSON. "device" may be a built-in profile name or an
/// object with name/screen_width/screen_height.
Manifest manifest_from_json(std::string_view json_text, std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);

inline constexpr std::string_view kSmilPartId = "mms.smil";

/// One MIME part the composed message needs: either a file on disk or an
/// inline text body.
struct PartSource {
  std::string content_id;
  std::string content_type;
  std::optional<std::filesystem::path> file;
  std::optional<std::string> inline_text;
};

/// Content-ID assignment for every slide medium, in first-use order. A file
/// referenced twice yields one part; distinct files sharing a basename get
/// "-2", "-3"... before the extension.
std::vector<PartSource> plan_parts(const Manifest& manifest);

/// Content type guessed from a file extension.
std::string content_type_for(const std::filesystem::path& file);

/// One par per slide on the default two-region layout.
smil::SmilTree compose(const Manifest& manifest);

struct ExportOptions {
  std::optional<std::int64_t> date_epoch_ms;  // default: now
  std::optional<std::string> message_id;      // default: derived from content
  std::uint64_t boundary_seed = 1;
};

/// Builds the envelope (SMIL start part plus one part per PartSource) with
/// From/To/Subject/Date/Message-ID transport headers.
mime::MmsEnvelope build_envelope(const Manifest& manifest, const ExportOptions& options = {});

/// build_envelope + encapsulate: the bytes of the .mms file.
std::string export_mms(const Manifest& manifest, const ExportOptions& options = {});

/// Plan for one slide alone, fitted to the manifest's device (or the default
/// profile). Throws std::out_of_range on a bad index.
playback::RenderPlan preview(const Manifest& manifest, std::size_t slide_index);

/// RFC 3339 UTC timestamp with second precision, e.g. 2024-01-02T03:04:05Z.
std::string rfc3339_utc(std::int64_t epoch_ms);

}  // namespace mms::composer

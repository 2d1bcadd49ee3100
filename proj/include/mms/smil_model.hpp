#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mms::smil {

enum class Unit { Pixels, Percent };

/// A length on one screen axis. Pixel values are whole numbers; percent
/// values are relative to the root-layout extent of the same axis.
struct Dimension {
  double value = 0;
  Unit unit = Unit::Pixels;

  static Dimension px(std::int64_t v) { return {static_cast<double>(v), Unit::Pixels}; }
  static Dimension pct(double v) { return {v, Unit::Percent}; }

  bool is_pixels() const { return unit == Unit::Pixels; }
  bool operator==(const Dimension&) const = default;
};

struct Region {
  std::string id;
  Dimension left = Dimension::px(0);
  Dimension top = Dimension::px(0);
  Dimension width = Dimension::pct(100);
  Dimension height = Dimension::pct(100);
  int z_index = 0;

  bool operator==(const Region&) const = default;
};

struct Layout {
  std::optional<std::int64_t> root_width;
  std::optional<std::int64_t> root_height;
  std::vector<Region> regions;

  /// A layout with neither root-layout nor regions counts as absent.
  bool empty() const { return !root_width && !root_height && regions.empty(); }
  const Region* find_region(std::string_view id) const;
  bool operator==(const Layout&) const = default;
};

enum class MediaKind { Text, Image, Audio, Video, Ref };

inline constexpr int kMediaKindCount = 5;

/// Element name used in SMIL text: text, img, audio, video, ref.
std::string_view element_name(MediaKind kind);
std::optional<MediaKind> kind_from_element(std::string_view name);
std::string_view kind_name(MediaKind kind);

/// Visual kinds paint into a region; audio and ref do not.
constexpr bool is_visual(MediaKind kind) {
  return kind == MediaKind::Text || kind == MediaKind::Image || kind == MediaKind::Video;
}

struct MediaItem {
  MediaKind kind = MediaKind::Text;
  std::string src;
  std::optional<std::string> region_id;
  std::int64_t begin_ms = 0;
  std::optional<std::int64_t> dur_ms;
  std::optional<std::string> alt;

  bool operator==(const MediaItem&) const = default;
};

struct Par {
  std::optional<std::int64_t> dur_ms;
  std::vector<MediaItem> media;

  bool operator==(const Par&) const = default;
};

struct SmilTree {
  Layout layout;
  std::vector<Par> pars;

  bool operator==(const SmilTree&) const = default;
};

enum class ViolationCode {
  DuplicateKindInPar,
  UnresolvedRegion,
  DuplicateRegionId,
  EmptyRegionId,
  BadDimension,
  NonPositiveRegionSize,
  NonPositiveRootSize,
  EmptySrc,
  NegativeBegin,
  NonPositiveDuration,
  UnboundSrc,
};

std::string_view violation_name(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string path;  // e.g. "pars[0].media[1]" or "layout.regions[2]"
  std::string detail;

  bool operator==(const Violation&) const = default;
};

/// Checks every conformance rule and returns all violations in document
/// order. An empty result means the tree is valid.
std::vector<Violation> validate(const SmilTree& tree);

/// Empty message: the two-region default screen (Image over Text), no pars.
SmilTree default_tree();

/// Media item paint order within a par: region z-index first, then
/// document order. Returns, for each media index, its rank (0 = bottom).
std::vector<int> z_ranks(const SmilTree& tree, const Par& par);

}  // namespace mms::smil

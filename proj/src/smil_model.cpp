#include "mms/smil_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

namespace mms::smil {

const Region* Layout::find_region(std::string_view id) const {
  for (const auto& r : regions) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::string_view element_name(MediaKind kind) {
  switch (kind) {
    case MediaKind::Text: return "text";
    case MediaKind::Image: return "img";
    case MediaKind::Audio: return "audio";
    case MediaKind::Video: return "video";
    case MediaKind::Ref: return "ref";
  }
  return "?";
}

std::optional<MediaKind> kind_from_element(std::string_view name) {
  if (name == "text") return MediaKind::Text;
  if (name == "img") return MediaKind::Image;
  if (name == "audio") return MediaKind::Audio;
  if (name == "video") return MediaKind::Video;
  if (name == "ref") return MediaKind::Ref;
  return std::nullopt;
}

std::string_view kind_name(MediaKind kind) {
  switch (kind) {
    case MediaKind::Text: return "Text";
    case MediaKind::Image: return "Image";
    case MediaKind::Audio: return "Audio";
    case MediaKind::Video: return "Video";
    case MediaKind::Ref: return "Ref";
  }
  return "?";
}

std::string_view violation_name(ViolationCode code) {
  switch (code) {
    case ViolationCode::DuplicateKindInPar: return "DuplicateKindInPar";
    case ViolationCode::UnresolvedRegion: return "UnresolvedRegion";
    case ViolationCode::DuplicateRegionId: return "DuplicateRegionId";
    case ViolationCode::EmptyRegionId: return "EmptyRegionId";
    case ViolationCode::BadDimension: return "BadDimension";
    case ViolationCode::NonPositiveRegionSize: return "NonPositiveRegionSize";
    case ViolationCode::NonPositiveRootSize: return "NonPositiveRootSize";
    case ViolationCode::EmptySrc: return "EmptySrc";
    case ViolationCode::NegativeBegin: return "NegativeBegin";
    case ViolationCode::NonPositiveDuration: return "NonPositiveDuration";
    case ViolationCode::UnboundSrc: return "UnboundSrc";
  }
  return "?";
}

namespace {

bool dimension_ok(const Dimension& d) {
  if (!std::isfinite(d.value) || d.value < 0) return false;
  if (d.unit == Unit::Percent) return d.value <= 100;
  return d.value == std::floor(d.value);
}

void check_dimension(const Dimension& d, const std::string& path, std::string_view name,
                     std::vector<Violation>& out) {
  if (!dimension_ok(d)) {
    out.push_back({ViolationCode::BadDimension, path, std::string(name)});
  }
}

}  // namespace

std::vector<Violation> validate(const SmilTree& tree) {
  std::vector<Violation> out;
  const Layout& layout = tree.layout;

  if (layout.root_width && *layout.root_width <= 0) {
    out.push_back({ViolationCode::NonPositiveRootSize, "layout.root", "width"});
  }
  if (layout.root_height && *layout.root_height <= 0) {
    out.push_back({ViolationCode::NonPositiveRootSize, "layout.root", "height"});
  }

  std::set<std::string> seen_ids;
  for (std::size_t i = 0; i < layout.regions.size(); ++i) {
    const Region& r = layout.regions[i];
    const std::string path = "layout.regions[" + std::to_string(i) + "]";
    if (r.id.empty()) {
      out.push_back({ViolationCode::EmptyRegionId, path, ""});
    } else if (!seen_ids.insert(r.id).second) {
      out.push_back({ViolationCode::DuplicateRegionId, path, r.id});
    }
    check_dimension(r.left, path, "left", out);
    check_dimension(r.top, path, "top", out);
    check_dimension(r.width, path, "width", out);
    check_dimension(r.height, path, "height", out);
    if (r.width.value <= 0) out.push_back({ViolationCode::NonPositiveRegionSize, path, "width"});
    if (r.height.value <= 0) out.push_back({ViolationCode::NonPositiveRegionSize, path, "height"});
  }

  for (std::size_t p = 0; p < tree.pars.size(); ++p) {
    const Par& par = tree.pars[p];
    const std::string par_path = "pars[" + std::to_string(p) + "]";
    if (par.dur_ms && *par.dur_ms <= 0) {
      out.push_back({ViolationCode::NonPositiveDuration, par_path, "dur"});
    }
    std::array<int, kMediaKindCount> kind_count{};
    for (std::size_t m = 0; m < par.media.size(); ++m) {
      const MediaItem& item = par.media[m];
      const std::string path = par_path + ".media[" + std::to_string(m) + "]";
      if (item.src.empty()) out.push_back({ViolationCode::EmptySrc, path, ""});
      if (item.region_id && !layout.find_region(*item.region_id)) {
        out.push_back({ViolationCode::UnresolvedRegion, path, *item.region_id});
      }
      if (item.begin_ms < 0) out.push_back({ViolationCode::NegativeBegin, path, ""});
      if (item.dur_ms && *item.dur_ms <= 0) {
        out.push_back({ViolationCode::NonPositiveDuration, path, "dur"});
      }
      // Reported once per kind, at the par, when the second item shows up.
      if (++kind_count[static_cast<int>(item.kind)] == 2) {
        out.push_back({ViolationCode::DuplicateKindInPar, par_path, std::string(kind_name(item.kind))});
      }
    }
  }
  return out;
}

SmilTree default_tree() {
  SmilTree tree;
  tree.layout.regions.push_back(
      {"Image", Dimension::px(0), Dimension::px(0), Dimension::pct(100), Dimension::pct(50), 0});
  tree.layout.regions.push_back(
      {"Text", Dimension::px(0), Dimension::pct(50), Dimension::pct(100), Dimension::pct(50), 1});
  return tree;
}

std::vector<int> z_ranks(const SmilTree& tree, const Par& par) {
  const std::size_t n = par.media.size();
  std::vector<int> region_z(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (const auto& rid = par.media[i].region_id) {
      if (const Region* r = tree.layout.find_region(*rid)) region_z[i] = r->z_index;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return region_z[a] < region_z[b]; });
  std::vector<int> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<int>(r);
  return rank;
}

}  // namespace mms::smil

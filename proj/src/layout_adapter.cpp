#include "mms/layout_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mms::layout {

using smil::Dimension;
using smil::SmilTree;
using smil::Unit;

void check_profile(const DeviceProfile& device) {
  if (device.screen_width < kMinScreenExtent || device.screen_height < kMinScreenExtent) {
    throw std::invalid_argument("device '" + device.name + "': screen must be at least 16x16 pixels");
  }
}

DeviceProfile default_profile() { return {"default", 176, 208}; }

DeviceProfile builtin_profile(std::string_view name) {
  if (name == "default") return default_profile();
  if (name == "qcif") return {"qcif", 176, 144};
  if (name == "qvga") return {"qvga", 240, 320};
  if (name == "small") return {"small", 128, 128};
  if (name == "vga") return {"vga", 480, 640};
  throw std::invalid_argument("unknown device profile '" + std::string(name) + "'");
}

DeviceProfile profile_from_json(std::string_view json_text) {
  DeviceProfile p;
  try {
    const auto j = nlohmann::json::parse(json_text);
    p.name = j.value("name", std::string{});
    p.screen_width = j.at("screen_width").get<std::int64_t>();
    p.screen_height = j.at("screen_height").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad device profile: ") + e.what());
  }
  check_profile(p);
  return p;
}

DeviceProfile load_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read device profile " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

namespace {

std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

std::int64_t to_pixels(const Dimension& d, std::int64_t extent) {
  if (d.unit == Unit::Pixels) return static_cast<std::int64_t>(d.value);
  return round_half_up(d.value * static_cast<double>(extent) / 100.0);
}

}  // namespace

SmilTree fit(const SmilTree& tree, const DeviceProfile& device) {
  check_profile(device);
  SmilTree out = tree;
  if (out.layout.empty()) out.layout = smil::default_tree().layout;

  const std::int64_t dev_w = device.screen_width;
  const std::int64_t dev_h = device.screen_height;
  const std::int64_t root_w = out.layout.root_width.value_or(dev_w);
  const std::int64_t root_h = out.layout.root_height.value_or(dev_h);

  double scale = 1.0;
  if (root_w > dev_w || root_h > dev_h) {
    scale = std::min(static_cast<double>(dev_w) / static_cast<double>(root_w),
                     static_cast<double>(dev_h) / static_cast<double>(root_h));
  }
  auto scaled = [scale](std::int64_t v) { return scale == 1.0 ? v : round_half_up(static_cast<double>(v) * scale); };

  for (auto& r : out.layout.regions) {
    std::int64_t left = scaled(to_pixels(r.left, root_w));
    std::int64_t top = scaled(to_pixels(r.top, root_h));
    std::int64_t width = std::max<std::int64_t>(1, scaled(to_pixels(r.width, root_w)));
    std::int64_t height = std::max<std::int64_t>(1, scaled(to_pixels(r.height, root_h)));

    left = std::clamp<std::int64_t>(left, 0, dev_w - 1);
    top = std::clamp<std::int64_t>(top, 0, dev_h - 1);
    width = std::min(width, dev_w - left);
    height = std::min(height, dev_h - top);

    r.left = Dimension::px(left);
    r.top = Dimension::px(top);
    r.width = Dimension::px(width);
    r.height = Dimension::px(height);
  }
  out.layout.root_width = dev_w;
  out.layout.root_height = dev_h;
  return out;
}

}  // namespace mms::layout

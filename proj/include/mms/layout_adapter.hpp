#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mms/smil_model.hpp"

namespace mms::layout {

struct DeviceProfile {
  std::string name;
  std::int64_t screen_width = 0;
  std::int64_t screen_height = 0;

  bool operator==(const DeviceProfile&) const = default;
};

inline constexpr std::int64_t kMinScreenExtent = 16;

/// Throws std::invalid_argument if either extent is below kMinScreenExtent.
void check_profile(const DeviceProfile& device);

/// 176x208, the profile used when a message names no device.
DeviceProfile default_profile();

/// Built-in profiles by name ("default", "qcif", "qvga", "small", "vga").
/// Throws std::invalid_argument for an unknown name.
DeviceProfile builtin_profile(std::string_view name);

/// Reads `{"name": ..., "screen_width": N, "screen_height": N}`.
DeviceProfile profile_from_json(std::string_view json_text);
DeviceProfile load_profile(const std::string& path);

/// Layout fitting for playback on `device`:
///  - installs the default layout when the tree has none;
///  - resolves percentages against the original root-layout (the device
///    extent when the root is absent);
///  - scales everything by min(devW/rootW, devH/rootH) when the root is
///    larger than the device on either axis, never upwards;
///  - rounds half-up, floors sizes at 1 pixel and clamps into the screen;
///  - sets root-layout to the device size.
/// Requires validate(tree) to be empty.
smil::SmilTree fit(const smil::SmilTree& tree, const DeviceProfile& device);

}  // namespace mms::layout

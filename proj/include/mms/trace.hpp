#pragma once

#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>

namespace mms {

enum class Direction { In, Out };

/// Frame monitor: one line per frame (direction, time, command, txn,
/// length, peer), a hex line of the leading bytes, then the decoded headers
/// indented. Safe to share between threads.
class FrameTracer {
 public:
  explicit FrameTracer(std::ostream& out) : out_(out) {}

  void trace(Direction dir, std::int64_t time_ms, std::string_view peer, std::string_view frame_bytes);

  /// Line format used by trace(); exposed for tests.
  static std::string format(Direction dir, std::int64_t time_ms, std::string_view peer, std::string_view frame_bytes);

 private:
  std::mutex mu_;
  std::ostream& out_;
};

}  // namespace mms

#include "mms/trace.hpp"

#include <cstdio>

#include "mms/transport.hpp"

namespace mms {

namespace {

constexpr std::size_t kHexBytes = 48;

}  // namespace

std::string FrameTracer::format(Direction dir, std::int64_t time_ms, std::string_view peer,
                                std::string_view frame_bytes) {
  std::string out = dir == Direction::In ? "<< " : ">> ";
  char stamp[32];
  std::snprintf(stamp, sizeof stamp, "%lld.%03lld", static_cast<long long>(time_ms / 1000),
                static_cast<long long>(time_ms % 1000));
  out += stamp;

  std::string decoded_headers;
  try {
    const auto pdu = transport::decode_frame(frame_bytes);
    out += ' ';
    out += transport::command_name(pdu.command);
    out += " txn=" + std::to_string(pdu.txn_id);
    for (const auto& [k, v] : pdu.headers) decoded_headers += "    " + k + ": " + v + "\n";
    if (pdu.body) decoded_headers += "    (body " + std::to_string(pdu.body->size()) + " bytes)\n";
  } catch (const transport::FrameError& e) {
    out += " UNDECODABLE (";
    out += e.what();
    out += ")";
  }
  out += " len=" + std::to_string(frame_bytes.size());
  if (!peer.empty()) {
    out += ' ';
    out += peer;
  }
  out += "\n    hex:";
  for (std::size_t i = 0; i < frame_bytes.size() && i < kHexBytes; ++i) {
    char hex[4];
    std::snprintf(hex, sizeof hex, " %02x", static_cast<unsigned char>(frame_bytes[i]));
    out += hex;
  }
  if (frame_bytes.size() > kHexBytes) out += " ...";
  out += "\n";
  out += decoded_headers;
  return out;
}

void FrameTracer::trace(Direction dir, std::int64_t time_ms, std::string_view peer, std::string_view frame_bytes) {
  const std::string text = format(dir, time_ms, peer, frame_bytes);
  std::lock_guard lock(mu_);
  out_ << text;
  out_.flush();
}

}  // namespace mms

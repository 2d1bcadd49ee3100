#include "mms/journal.hpp"

#include <sstream>
#include <stdexcept>

namespace mms::relay {

Journal::Journal(const std::string& path) : out_(path, std::ios::binary | std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open journal " + path);
}

void Journal::client(const std::string& client_id, const Address& address) {
  std::lock_guard lock(mu_);
  out_ << "C " << client_id << ' ' << (address.host.empty() ? "-" : address.host) << ' ' << address.port << '\n';
  out_.flush();
}

void Journal::write_entry(char kind, const std::string& owner, const StoredEntry& entry) {
  const std::string frame = transport::encode_frame(entry.pdu);
  std::lock_guard lock(mu_);
  out_ << kind << ' ' << entry.seq << ' ' << owner << ' ' << entry.stored_at << ' ' << entry.sender << ' '
       << entry.sender_txn << ' ' << entry.message_id << '\n';
  out_.write(frame.data(), static_cast<std::streamsize>(frame.size()));
  out_.flush();
}

void Journal::store(const std::string& owner, const StoredEntry& entry) { write_entry('Q', owner, entry); }

void Journal::pending_status(const std::string& owner, const StoredEntry& entry) { write_entry('P', owner, entry); }

void Journal::remove(std::uint64_t seq) {
  std::lock_guard lock(mu_);
  out_ << "D " << seq << '\n';
  out_.flush();
}

std::vector<Journal::Record> Journal::replay(const std::string& path) {
  std::vector<Record> records;
  std::ifstream in(path, std::ios::binary);
  if (!in) return records;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();

  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto eol = data.find('\n', pos);
    if (eol == std::string::npos) break;
    std::istringstream line(data.substr(pos, eol - pos));
    pos = eol + 1;

    Record r;
    if (!(line >> r.kind)) break;
    if (r.kind == 'C') {
      if (!(line >> r.owner >> r.address.host >> r.address.port)) break;
      if (r.address.host == "-") r.address.host.clear();
    } else if (r.kind == 'D') {
      if (!(line >> r.entry.seq)) break;
    } else if (r.kind == 'Q' || r.kind == 'P') {
      if (!(line >> r.entry.seq >> r.owner >> r.entry.stored_at >> r.entry.sender >> r.entry.sender_txn)) break;
      line.get();
      std::getline(line, r.entry.message_id);
      if (data.size() - pos < 4) break;
      const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos])) << 24) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 1])) << 16) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 2])) << 8) |
                              static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 3]));
      if (data.size() - pos - 4 < n) break;
      try {
        r.entry.pdu = transport::decode_frame(std::string_view(data).substr(pos, 4 + n));
      } catch (const transport::FrameError&) {
        break;
      }
      pos += 4 + n;
    } else {
      break;
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace mms::relay

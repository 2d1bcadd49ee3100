#pragma once

#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "mms/relay.hpp"

namespace mms::relay {

/// Append-only record of the offline store. Each record is one text line,
/// optionally followed by one length-prefixed transport frame:
///
///   C <client> <host> <port>
///   Q <seq> <owner> <stored_at> <sender> <sender_txn> <message-id>   + frame
///   P <seq> <owner> <stored_at> <sender> <sender_txn> <message-id>   + frame
///   D <seq>
///
/// Q holds a NOTIFY for an offline recipient, P a STATUS owed to an offline
/// sender, D removes a Q or P entry.
class Journal {
 public:
  explicit Journal(const std::string& path);

  void client(const std::string& client_id, const Address& address);
  void store(const std::string& owner, const StoredEntry& entry);
  void pending_status(const std::string& owner, const StoredEntry& entry);
  void remove(std::uint64_t seq);

  struct Record {
    char kind = 'C';
    std::string owner;  // client id for C, Q, P
    Address address;    // C
    StoredEntry entry;  // Q, P (seq only for D)
  };

  /// Reads every complete record; a torn final record is ignored.
  static std::vector<Record> replay(const std::string& path);

 private:
  void write_entry(char kind, const std::string& owner, const StoredEntry& entry);

  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace mms::relay

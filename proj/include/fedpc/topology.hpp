#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedpc {

// Sender id of the very first transmission: the receiver trains from the
// initial (pretrained-analogue) model rather than another client's.
inline constexpr int kSource = -1;

struct TransmissionEvent {
  int round = 0;
  int step = 0;   // position within the round
  int sender = kSource;
  int receiver = 0;

  bool operator==(const TransmissionEvent&) const = default;
};

enum class Protocol { gossip, ring, line };

std::string to_string(Protocol p);

// Ordered transmission plan; the single source of truth for who trains
// when and whose model they receive. The model is one token passed along
// the event chain: event k's sender is event k-1's receiver.
struct Schedule {
  Protocol protocol = Protocol::gossip;
  std::uint64_t seed = 0;
  int rounds = 0;
  std::vector<int> clients;  // ascending training-client ids
  std::vector<TransmissionEvent> events;

  int events_per_round() const { return static_cast<int>(clients.size()); }
};

// Fixed ascending order, each client receives exactly once per round; the
// chain continues across round boundaries.
Schedule ring_schedule(std::vector<int> clients, int rounds);

// Uniform random walk without self-transmission; |clients| events per
// round, chain unbroken across rounds, fully determined by the seed.
Schedule gossip_schedule(std::vector<int> clients, int rounds, std::uint64_t seed);

// A ring run for a single round.
Schedule line_schedule(std::vector<int> clients);

// Audit export: round,step,sender,receiver with SOURCE for the sentinel.
void write_schedule_csv(std::ostream& out, const Schedule& schedule);

}  // namespace fedpc

#include "fedpc/topology.hpp"

#include <algorithm>
#include <ostream>

#include "fedpc/errors.hpp"
#include "fedpc/rng.hpp"

namespace fedpc {
namespace {

std::vector<int> sorted_unique(std::vector<int> clients) {
  std::sort(clients.begin(), clients.end());
  if (std::adjacent_find(clients.begin(), clients.end()) != clients.end())
    throw ConfigError("schedule: duplicate client ids");
  if (clients.size() < 2) throw ConfigError("schedule: need at least 2 clients");
  return clients;
}

}  // namespace

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::gossip: return "gossip";
    case Protocol::ring: return "ring";
    case Protocol::line: return "line";
  }
  return "?";
}

Schedule ring_schedule(std::vector<int> clients, int rounds) {
  if (rounds < 1) throw ConfigError("schedule: rounds must be >= 1");
  Schedule s;
  s.protocol = Protocol::ring;
  s.rounds = rounds;
  s.clients = sorted_unique(std::move(clients));
  int prev = kSource;
  for (int t = 0; t < rounds; ++t) {
    for (int j = 0; j < static_cast<int>(s.clients.size()); ++j) {
      s.events.push_back({t, j, prev, s.clients[j]});
      prev = s.clients[j];
    }
  }
  return s;
}

Schedule gossip_schedule(std::vector<int> clients, int rounds, std::uint64_t seed) {
  if (rounds < 1) throw ConfigError("schedule: rounds must be >= 1");
  Schedule s;
  s.protocol = Protocol::gossip;
  s.seed = seed;
  s.rounds = rounds;
  s.clients = sorted_unique(std::move(clients));
  Rng rng(seed);
  const int n = static_cast<int>(s.clients.size());
  int holder = kSource;
  for (int t = 0; t < rounds; ++t) {
    for (int j = 0; j < n; ++j) {
      int receiver;
      if (holder == kSource) {
        receiver = s.clients[rng.uniform_below(n)];
      } else {
        // Uniform over everyone but the current holder.
        const int holder_pos = static_cast<int>(
            std::lower_bound(s.clients.begin(), s.clients.end(), holder) -
            s.clients.begin());
        int pick = static_cast<int>(rng.uniform_below(n - 1));
        if (pick >= holder_pos) ++pick;
        receiver = s.clients[pick];
      }
      s.events.push_back({t, j, holder, receiver});
      holder = receiver;
    }
  }
  return s;
}

Schedule line_schedule(std::vector<int> clients) {
  Schedule s = ring_schedule(std::move(clients), 1);
  s.protocol = Protocol::line;
  return s;
}

void write_schedule_csv(std::ostream& out, const Schedule& schedule) {
  out << "round,step,sender,receiver\n";
  for (const auto& e : schedule.events) {
    out << e.round << ',' << e.step << ',';
    if (e.sender == kSource)
      out << "SOURCE";
    else
      out << e.sender;
    out << ',' << e.receiver << "\n";
  }
}

}  // namespace fedpc

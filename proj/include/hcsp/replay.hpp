#ifndef HCSP_REPLAY_HPP_
#define HCSP_REPLAY_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "hcsp/game.hpp"

namespace hcsp::game {

// One line-delimited replay record per step. Field order, space separated:
//   step_index
//   6 x 23 drone root-state floats (drones 0..5)
//   6 ball floats (position xyz, velocity xyz)
//   events: comma-joined kind:actor pairs, "-" when empty
//   outcome code: 0 ongoing, 1 win team1, 2 win team2, 3 draw
struct ReplayRecord {
  int step = 0;
  std::array<DroneRootState, 6> drones{};
  std::array<double, 6> ball{};
  std::vector<GameEvent> events;
  Outcome outcome;
};

ReplayRecord make_replay_record(const GameState& state,
                                const std::vector<GameEvent>& events,
                                const Outcome& outcome,
                                DynamicsBackend backend);

std::string format_replay_record(const ReplayRecord& rec);
ReplayRecord parse_replay_record(const std::string& line);

void write_replay(std::ostream& os, const std::vector<ReplayRecord>& records);
std::vector<ReplayRecord> read_replay(std::istream& is);

}  // namespace hcsp::game

#endif  // HCSP_REPLAY_HPP_

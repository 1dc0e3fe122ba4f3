#include "hcsp/replay.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hcsp::game {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, n);
}

int outcome_code(const Outcome& o) {
  switch (o.result) {
    case Outcome::Result::Ongoing:
      return 0;
    case Outcome::Result::Win:
      return o.winner == Team::Team1 ? 1 : 2;
    case Outcome::Result::Draw:
      return 3;
  }
  return 0;
}

Outcome outcome_from_code(int c) {
  switch (c) {
    case 0:
      return Outcome::ongoing();
    case 1:
      return Outcome::win(Team::Team1);
    case 2:
      return Outcome::win(Team::Team2);
    case 3:
      return Outcome::draw();
  }
  throw std::invalid_argument("bad outcome code");
}

}  // namespace

ReplayRecord make_replay_record(const GameState& state,
                                const std::vector<GameEvent>& events,
                                const Outcome& outcome,
                                DynamicsBackend backend) {
  ReplayRecord rec;
  rec.step = state.step_count;
  for (int d = 0; d < 6; ++d) rec.drones[d] = state.drone_root(d, backend);
  rec.ball = {state.ball.position.x, state.ball.position.y,
              state.ball.position.z, state.ball.velocity.x,
              state.ball.velocity.y, state.ball.velocity.z};
  rec.events = events;
  rec.outcome = outcome;
  return rec;
}

std::string format_replay_record(const ReplayRecord& rec) {
  std::string out;
  out.reserve(3000);
  out += std::to_string(rec.step);
  for (const auto& drone : rec.drones)
    for (double v : drone) {
      out += ' ';
      append_double(out, v);
    }
  for (double v : rec.ball) {
    out += ' ';
    append_double(out, v);
  }
  out += ' ';
  if (rec.events.empty()) {
    out += '-';
  } else {
    for (size_t i = 0; i < rec.events.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(static_cast<int>(rec.events[i].kind));
      out += ':';
      out += std::to_string(rec.events[i].actor);
    }
  }
  out += ' ';
  out += std::to_string(outcome_code(rec.outcome));
  return out;
}

ReplayRecord parse_replay_record(const std::string& line) {
  std::istringstream is(line);
  ReplayRecord rec;
  if (!(is >> rec.step)) throw std::invalid_argument("bad replay line");
  for (auto& drone : rec.drones)
    for (double& v : drone)
      if (!(is >> v)) throw std::invalid_argument("bad replay line");
  for (double& v : rec.ball)
    if (!(is >> v)) throw std::invalid_argument("bad replay line");
  std::string events_field;
  int code = 0;
  if (!(is >> events_field >> code))
    throw std::invalid_argument("bad replay line");
  if (events_field != "-") {
    std::istringstream es(events_field);
    std::string tok;
    while (std::getline(es, tok, ',')) {
      auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("bad event token");
      GameEvent e;
      e.kind = static_cast<GameEvent::Kind>(std::stoi(tok.substr(0, colon)));
      e.actor = std::stoi(tok.substr(colon + 1));
      e.step = rec.step;
      rec.events.push_back(e);
    }
  }
  rec.outcome = outcome_from_code(code);
  return rec;
}

void write_replay(std::ostream& os, const std::vector<ReplayRecord>& records) {
  for (const auto& rec : records) os << format_replay_record(rec) << '\n';
}

std::vector<ReplayRecord> read_replay(std::istream& is) {
  std::vector<ReplayRecord> records;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    records.push_back(parse_replay_record(line));
  }
  return records;
}

}  // namespace hcsp::game

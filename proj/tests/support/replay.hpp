#pragma once

// Scripted client: replays a recorded sequence of null-space rates through a
// running session host and returns the trial result it reports.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ikk/trial.hpp"
#include "ws_client.hpp"

namespace ikk::testing {

struct ReplayOutcome {
  nlohmann::json hello;
  nlohmann::json result;
  int states = 0;
  double max_drift = 0.0;
};

inline ReplayOutcome replay_exp1(unsigned short port, std::uint64_t seed,
                                 const std::vector<double>& null_rate, double jog_max,
                                 double tick_s = 0.01, double lead_s = 0.5) {
  WsClient c("127.0.0.1", port);
  ReplayOutcome out;
  c.send({{"type", "hello"}});
  out.hello = c.receive("hello");

  std::size_t next = 0;
  auto batch = [&](double horizon) {
    nlohmann::json inputs = nlohmann::json::array();
    while (next < null_rate.size() && static_cast<double>(next + 1) * tick_s <= horizon + 1e-9) {
      inputs.push_back({{"type", "jog"}, {"u", null_rate[next] / jog_max},
                        {"at", static_cast<double>(next + 1) * tick_s}});
      ++next;
    }
    return inputs;
  };

  c.send({{"type", "start"}, {"mode", "exp1"}, {"seed", seed}, {"inputs", batch(lead_s)}});
  c.receive("started");
  while (true) {
    auto m = c.receive();
    const auto type = m.value("type", "");
    if (type == "result") {
      out.result = m;
      break;
    }
    if (type == "error") throw std::runtime_error(m.value("message", "error"));
    if (type != "state") continue;
    ++out.states;
    const double t = m["task"].value("t", 0.0);
    for (auto& in : batch(t + lead_s)) c.send(in);
  }
  return out;
}

}  // namespace ikk::testing

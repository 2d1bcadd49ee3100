#include "mms/playback.hpp"

#include <algorithm>

#include "json.hpp"

namespace mms::playback {

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Start: return "Start";
    case Action::Stop: return "Stop";
    case Action::ParBegin: return "ParBegin";
    case Action::ParEnd: return "ParEnd";
    case Action::MessageEnd: return "MessageEnd";
  }
  return "?";
}

std::int64_t effective_par_duration(const smil::Par& par) {
  if (par.dur_ms) return *par.dur_ms;
  if (par.media.empty()) return kDefaultParDurationMs;
  std::int64_t longest = 0;
  for (const auto& m : par.media) {
    if (!m.dur_ms) return kDefaultParDurationMs;
    longest = std::max(longest, m.begin_ms + *m.dur_ms);
  }
  return longest;
}

namespace {

// Tie-break among events at the same instant: whatever ends goes first, so
// adjacent pars never overlap.
int rank(Action a) {
  switch (a) {
    case Action::Stop: return 0;
    case Action::ParEnd: return 1;
    case Action::ParBegin: return 2;
    case Action::Start: return 3;
    case Action::MessageEnd: return 4;
  }
  return 5;
}

}  // namespace

RenderPlan build_plan(const smil::SmilTree& tree) {
  RenderPlan plan;
  std::int64_t par_start = 0;
  for (std::size_t p = 0; p < tree.pars.size(); ++p) {
    const auto& par = tree.pars[p];
    const std::int64_t dur = effective_par_duration(par);
    if (dur <= 0) throw PlanError("par " + std::to_string(p) + " has no positive duration");
    const int pi = static_cast<int>(p);
    plan.events.push_back({par_start, Action::ParBegin, pi, std::nullopt, std::nullopt, 0});

    const auto z = smil::z_ranks(tree, par);
    for (std::size_t m = 0; m < par.media.size(); ++m) {
      const auto& item = par.media[m];
      const std::int64_t b = item.begin_ms;
      const std::int64_t d = item.dur_ms.value_or(dur - b);
      const std::int64_t start = par_start + std::min(b, dur);
      const std::int64_t stop = par_start + std::min(b + d, dur);
      if (stop <= start) continue;
      const int mi = static_cast<int>(m);
      plan.events.push_back({start, Action::Start, pi, mi, item.region_id, z[m]});
      plan.events.push_back({stop, Action::Stop, pi, mi, item.region_id, z[m]});
    }
    plan.events.push_back({par_start + dur, Action::ParEnd, pi, std::nullopt, std::nullopt, 0});
    par_start += dur;
  }
  plan.total_ms = par_start;
  plan.events.push_back({par_start, Action::MessageEnd, 0, std::nullopt, std::nullopt, 0});
  if (!tree.pars.empty()) plan.events.back().par_index = static_cast<int>(tree.pars.size()) - 1;

  std::stable_sort(plan.events.begin(), plan.events.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
    if (a.at_ms != b.at_ms) return a.at_ms < b.at_ms;
    if (rank(a.action) != rank(b.action)) return rank(a.action) < rank(b.action);
    if (a.par_index != b.par_index) return a.par_index < b.par_index;
    return a.media_index.value_or(-1) < b.media_index.value_or(-1);
  });
  return plan;
}

std::vector<ActiveMedia> active_set(const RenderPlan& plan, std::int64_t t_ms) {
  if (t_ms < 0 || t_ms >= plan.total_ms) {
    throw std::out_of_range("time " + std::to_string(t_ms) + " outside [0, " + std::to_string(plan.total_ms) + ")");
  }
  std::vector<ActiveMedia> live;
  for (const auto& e : plan.events) {
    if (e.at_ms > t_ms) break;
    if (e.action == Action::Start) {
      live.push_back({e.par_index, *e.media_index, e.region_id, e.z});
    } else if (e.action == Action::Stop) {
      std::erase_if(live, [&](const ActiveMedia& a) {
        return a.par_index == e.par_index && a.media_index == *e.media_index;
      });
    }
  }
  std::sort(live.begin(), live.end(), [](const ActiveMedia& a, const ActiveMedia& b) {
    if (a.z != b.z) return a.z < b.z;
    return a.media_index < b.media_index;
  });
  return live;
}

std::vector<ParSpan> par_spans(const RenderPlan& plan) {
  std::vector<ParSpan> spans;
  for (const auto& e : plan.events) {
    if (e.action == Action::ParBegin) {
      if (spans.size() <= static_cast<std::size_t>(e.par_index)) spans.resize(e.par_index + 1);
      spans[e.par_index].begin_ms = e.at_ms;
    } else if (e.action == Action::ParEnd) {
      if (spans.size() <= static_cast<std::size_t>(e.par_index)) spans.resize(e.par_index + 1);
      spans[e.par_index].end_ms = e.at_ms;
    }
  }
  return spans;
}

std::string plan_to_json(const RenderPlan& plan) {
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto& e : plan.events) {
    nlohmann::ordered_json j;
    j["at_ms"] = e.at_ms;
    j["action"] = action_name(e.action);
    j["par"] = e.par_index;
    if (e.media_index) j["media"] = *e.media_index;
    if (e.region_id) j["region"] = *e.region_id;
    if (e.action == Action::Start || e.action == Action::Stop) j["z"] = e.z;
    events.push_back(std::move(j));
  }
  return events.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Stopped: return "Stopped";
    case Mode::Playing: return "Playing";
    case Mode::Paused: return "Paused";
  }
  return "?";
}

std::string_view input_name(Input i) {
  switch (i) {
    case Input::Play: return "play";
    case Input::Pause: return "pause";
    case Input::Stop: return "stop";
    case Input::Rewind: return "rewind";
    case Input::Next: return "next";
  }
  return "?";
}

std::optional<Input> input_from_name(std::string_view name) {
  for (Input i : {Input::Play, Input::Pause, Input::Stop, Input::Rewind, Input::Next}) {
    if (input_name(i) == name) return i;
  }
  return std::nullopt;
}

int par_at(const RenderPlan& plan, std::int64_t position_ms) {
  const auto spans = par_spans(plan);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (position_ms >= spans[i].begin_ms && position_ms < spans[i].end_ms) return static_cast<int>(i);
  }
  return spans.empty() ? 0 : static_cast<int>(spans.size()) - 1;
}

namespace {

PlayerState settle(PlayerState s, const RenderPlan& plan) {
  if (s.position_ms >= plan.total_ms) {
    s.position_ms = plan.total_ms;
    if (s.mode == Mode::Playing) s.mode = Mode::Stopped;
  }
  s.position_ms = std::max<std::int64_t>(0, s.position_ms);
  s.current_par = par_at(plan, s.position_ms);
  return s;
}

}  // namespace

PlayerState advance(PlayerState state, const RenderPlan& plan, std::int64_t wall_elapsed_ms) {
  if (state.mode == Mode::Playing && wall_elapsed_ms > 0) state.position_ms += wall_elapsed_ms;
  return settle(state, plan);
}

PlayerState control(PlayerState state, const RenderPlan& plan, Input input, std::int64_t wall_elapsed_ms) {
  state = advance(state, plan, wall_elapsed_ms);
  const auto spans = par_spans(plan);
  switch (input) {
    case Input::Play:
      if (state.mode == Mode::Stopped) {
        state.mode = Mode::Playing;
        state.position_ms = 0;
      } else if (state.mode == Mode::Paused) {
        state.mode = Mode::Playing;
      }
      break;
    case Input::Pause:
      if (state.mode == Mode::Playing) state.mode = Mode::Paused;
      break;
    case Input::Stop:
      state.mode = Mode::Stopped;
      state.position_ms = 0;
      break;
    case Input::Rewind: {
      if (state.mode == Mode::Stopped || spans.empty()) break;
      const int k = par_at(plan, state.position_ms);
      if (state.position_ms == spans[k].begin_ms && k > 0) {
        state.position_ms = spans[k - 1].begin_ms;
      } else {
        state.position_ms = spans[k].begin_ms;
      }
      break;
    }
    case Input::Next: {
      if (state.mode == Mode::Stopped || spans.empty()) break;
      const int k = par_at(plan, state.position_ms);
      if (static_cast<std::size_t>(k) + 1 < spans.size()) {
        state.position_ms = spans[k + 1].begin_ms;
      } else {
        state.mode = Mode::Stopped;
        state.position_ms = plan.total_ms;
      }
      break;
    }
  }
  return settle(state, plan);
}

}  // namespace mms::playback

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mms/smil_model.hpp"

namespace mms::playback {

/// Par duration used when neither the par nor all of its media say how long
/// it lasts.
inline constexpr std::int64_t kDefaultParDurationMs = 5000;

enum class Action { Start, Stop, ParBegin, ParEnd, MessageEnd };

std::string_view action_name(Action a);

struct TimelineEvent {
  std::int64_t at_ms = 0;
  Action action = Action::MessageEnd;
  int par_index = 0;
  std::optional<int> media_index;
  std::optional<std::string> region_id;
  int z = 0;

  bool operator==(const TimelineEvent&) const = default;
};

struct RenderPlan {
  std::vector<TimelineEvent> events;
  std::int64_t total_ms = 0;

  bool operator==(const RenderPlan&) const = default;
};

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Duration a par occupies on the timeline.
std::int64_t effective_par_duration(const smil::Par& par);

/// Lays pars end to end and emits one Start/Stop pair per media item that
/// survives clipping to its par. Media begin times are par-relative.
RenderPlan build_plan(const smil::SmilTree& tree);

struct ActiveMedia {
  int par_index = 0;
  int media_index = 0;
  std::optional<std::string> region_id;
  int z = 0;

  bool operator==(const ActiveMedia&) const = default;
};

/// Media live at t_ms under half-open [start, stop) intervals, ordered by z
/// (paint order, bottom first). Throws std::out_of_range unless
/// 0 <= t_ms < total_ms.
std::vector<ActiveMedia> active_set(const RenderPlan& plan, std::int64_t t_ms);

struct ParSpan {
  std::int64_t begin_ms = 0;
  std::int64_t end_ms = 0;
};

/// Par intervals recovered from the plan's ParBegin/ParEnd events.
std::vector<ParSpan> par_spans(const RenderPlan& plan);

/// JSON array of events, keys in fixed order.
std::string plan_to_json(const RenderPlan& plan);

// ---------------------------------------------------------------------------
// Player controls on a virtual clock

enum class Mode { Stopped, Playing, Paused };
enum class Input { Play, Pause, Stop, Rewind, Next };

std::string_view mode_name(Mode m);
std::string_view input_name(Input i);
std::optional<Input> input_from_name(std::string_view name);

struct PlayerState {
  Mode mode = Mode::Stopped;
  std::int64_t position_ms = 0;
  int current_par = 0;

  bool operator==(const PlayerState&) const = default;
};

/// Moves a playing state forward by elapsed wall time. Reaching the end
/// stops the player at total_ms.
PlayerState advance(PlayerState state, const RenderPlan& plan, std::int64_t wall_elapsed_ms);

/// Applies elapsed time, then the button press. Every input is legal in every
/// mode. Rewind and Next are ignored while Stopped, since Play always starts
/// from zero.
PlayerState control(PlayerState state, const RenderPlan& plan, Input input, std::int64_t wall_elapsed_ms = 0);

/// Index of the par holding position_ms (the last par at the very end).
int par_at(const RenderPlan& plan, std::int64_t position_ms);

}  // namespace mms::playback

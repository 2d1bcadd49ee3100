#include "doctest.h"

#include "gen.hpp"
#include "mms/layout_adapter.hpp"
#include "mms/playback.hpp"
#include "properties.hpp"

using namespace mms;
using playback::Action;
using playback::Input;
using playback::Mode;
using playback::PlayerState;

namespace {

smil::MediaItem media(smil::MediaKind kind, std::optional<std::string> region, std::int64_t begin = 0,
                      std::optional<std::int64_t> dur = {}) {
  smil::MediaItem m;
  m.kind = kind;
  m.src = "x";
  m.region_id = std::move(region);
  m.begin_ms = begin;
  m.dur_ms = dur;
  return m;
}

smil::SmilTree one_image(std::int64_t par_dur, std::int64_t begin = 0) {
  smil::SmilTree t = smil::default_tree();
  t.pars.push_back({par_dur, {media(smil::MediaKind::Image, "Image", begin)}});
  return t;
}

smil::SmilTree durations(std::vector<std::int64_t> durs) {
  smil::SmilTree t = smil::default_tree();
  for (auto d : durs) t.pars.push_back({d, {media(smil::MediaKind::Text, "Text")}});
  return t;
}

}  // namespace

TEST_SUITE("playback_scheduler") {
  TEST_CASE("single image par") {
    const auto plan = playback::build_plan(one_image(5000));
    using E = playback::TimelineEvent;
    const std::vector<E> want = {
        {0, Action::ParBegin, 0, std::nullopt, std::nullopt, 0},
        {0, Action::Start, 0, 0, "Image", 0},
        {5000, Action::Stop, 0, 0, "Image", 0},
        {5000, Action::ParEnd, 0, std::nullopt, std::nullopt, 0},
        {5000, Action::MessageEnd, 0, std::nullopt, std::nullopt, 0},
    };
    CHECK(plan.events == want);
    CHECK(plan.total_ms == 5000);
  }

  TEST_CASE("media beginning after its par ends is dropped") {
    const auto plan = playback::build_plan(one_image(5000, 6000));
    CHECK(plan.events.size() == 3);
    for (const auto& e : plan.events) CHECK(e.action != Action::Start);
  }

  TEST_CASE("pars are laid end to end") {
    const auto plan = playback::build_plan(durations({3000, 4000}));
    const auto spans = playback::par_spans(plan);
    REQUIRE(spans.size() == 2);
    CHECK(spans[1].begin_ms == 3000);
    CHECK(plan.events.back().action == Action::MessageEnd);
    CHECK(plan.events.back().at_ms == 7000);
    // Stop of par 0 precedes the start of par 1 at the shared instant.
    std::vector<Action> at3000;
    for (const auto& e : plan.events) {
      if (e.at_ms == 3000) at3000.push_back(e.action);
    }
    CHECK(at3000 == std::vector<Action>{Action::Stop, Action::ParEnd, Action::ParBegin, Action::Start});
  }

  TEST_CASE("effective par duration") {
    using smil::MediaKind;
    CHECK(playback::effective_par_duration({1234, {}}) == 1234);
    CHECK(playback::effective_par_duration({std::nullopt, {}}) == playback::kDefaultParDurationMs);
    CHECK(playback::effective_par_duration(
              {std::nullopt, {media(MediaKind::Text, {}, 500, 1000), media(MediaKind::Audio, {}, 0, 2000)}}) == 2000);
    CHECK(playback::effective_par_duration(
              {std::nullopt, {media(MediaKind::Text, {}, 500, 1000), media(MediaKind::Audio, {}, 0)}}) == 5000);
  }

  TEST_CASE("active set") {
    const auto plan = playback::build_plan(one_image(5000));
    const auto live = playback::active_set(plan, 2500);
    REQUIRE(live.size() == 1);
    CHECK(live[0] == playback::ActiveMedia{0, 0, "Image", 0});

    // Half-open: absent at the Stop instant.
    smil::SmilTree t = smil::default_tree();
    t.pars.push_back({5000, {media(smil::MediaKind::Image, "Image", 0, 1000)}});
    const auto p2 = playback::build_plan(t);
    CHECK(playback::active_set(p2, 999).size() == 1);
    CHECK(playback::active_set(p2, 1000).empty());

    CHECK_THROWS_AS(playback::active_set(playback::build_plan(smil::SmilTree{}), 0), std::out_of_range);
    CHECK_THROWS_AS(playback::active_set(plan, 5000), std::out_of_range);
    CHECK_THROWS_AS(playback::active_set(plan, -1), std::out_of_range);
  }

  TEST_CASE("active set is in paint order") {
    smil::SmilTree t = smil::default_tree();  // Image z0, Text z1
    t.pars.push_back({1000, {media(smil::MediaKind::Text, "Text"), media(smil::MediaKind::Image, "Image")}});
    const auto live = playback::active_set(playback::build_plan(t), 10);
    REQUIRE(live.size() == 2);
    CHECK(live[0].media_index == 1);
    CHECK(live[1].media_index == 0);
  }

  TEST_CASE("controls") {
    const auto plan = playback::build_plan(durations({3000, 4000}));
    PlayerState s;
    s = playback::control(s, plan, Input::Play);
    CHECK(s == PlayerState{Mode::Playing, 0, 0});

    s = playback::advance(s, plan, 3500);
    CHECK(s.current_par == 1);
    CHECK(playback::control(s, plan, Input::Rewind).position_ms == 3000);
    // Twice: back to the previous par.
    CHECK(playback::control(playback::control(s, plan, Input::Rewind), plan, Input::Rewind).position_ms == 0);

    const auto end = playback::control(s, plan, Input::Next);
    CHECK(end == PlayerState{Mode::Stopped, 7000, 1});

    const auto paused = playback::control(s, plan, Input::Pause, 100);
    CHECK(paused.mode == Mode::Paused);
    CHECK(paused.position_ms == 3600);
    const auto still = playback::advance(paused, plan, 5000);
    CHECK(still.position_ms == 3600);
    CHECK(playback::control(still, plan, Input::Play).position_ms == 3600);

    const auto stopped = playback::control(s, plan, Input::Stop);
    CHECK(stopped == PlayerState{Mode::Stopped, 0, 0});
    CHECK(playback::control(stopped, plan, Input::Play) == PlayerState{Mode::Playing, 0, 0});

    const auto ran_out = playback::advance(playback::control({}, plan, Input::Play), plan, 10'000);
    CHECK(ran_out == PlayerState{Mode::Stopped, 7000, 1});
  }

  TEST_CASE("property: control algebra") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      gen::Rng rng(seed);
      const auto plan = playback::build_plan(gen::tree(rng));
      PlayerState s;
      for (int i = 0; i < 40; ++i) {
        const auto input = static_cast<Input>(rng.below(5));
        const std::int64_t dt = rng.range(0, 3000);
        const PlayerState before = playback::advance(s, plan, dt);
        const PlayerState after = playback::control(s, plan, input, dt);
        CHECK(after.position_ms >= 0);
        CHECK(after.position_ms <= plan.total_ms);
        switch (input) {
          case Input::Rewind: CHECK(after.position_ms <= before.position_ms); break;
          case Input::Next: CHECK(after.position_ms >= before.position_ms); break;
          case Input::Stop: CHECK(after == PlayerState{Mode::Stopped, 0, 0}); break;
          case Input::Pause:
            if (before.mode == Mode::Playing) {
              CHECK(after.mode == Mode::Paused);
              const auto resumed = playback::control(after, plan, Input::Play, rng.range(0, 5000));
              CHECK(resumed.position_ms == after.position_ms);
              CHECK(resumed.mode == Mode::Playing);
            }
            break;
          case Input::Play:
            if (before.mode == Mode::Stopped) CHECK(after.position_ms == 0);
            break;
        }
        s = after;
      }
    }
  }

  TEST_CASE("property: plans are deterministic and economical") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      gen::Rng rng(seed);
      const auto tree = gen::tree(rng);
      const auto a = playback::build_plan(tree);
      CHECK(playback::plan_to_json(a) == playback::plan_to_json(playback::build_plan(tree)));
      CHECK(a.events.size() == 2 * tree.pars.size() + 2 * oracle::visible_media(tree) + 1);
      CHECK(std::is_sorted(a.events.begin(), a.events.end(),
                           [](const auto& x, const auto& y) { return x.at_ms < y.at_ms; }));
    }
  }

  TEST_CASE("property: active set matches the tick oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const std::string failure = prop::schedule_vs_ticks(seed);
      CHECK_MESSAGE(failure.empty(), failure);
    }
  }
}

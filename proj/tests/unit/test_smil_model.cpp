#include <array>

#include "doctest.h"

#include "gen.hpp"
#include "mms/smil_model.hpp"

using namespace mms::smil;

namespace {

MediaItem item(MediaKind kind, std::string src, std::optional<std::string> region = {}) {
  MediaItem m;
  m.kind = kind;
  m.src = std::move(src);
  m.region_id = std::move(region);
  return m;
}

}  // namespace

TEST_SUITE("smil_model") {
  TEST_CASE("empty tree is valid") { CHECK(validate(SmilTree{}).empty()); }

  TEST_CASE("two images in one par") {
    SmilTree t;
    t.pars.push_back({5000, {item(MediaKind::Image, "a.jpg"), item(MediaKind::Image, "b.jpg")}});
    const auto v = validate(t);
    REQUIRE(v.size() == 1);
    CHECK(v[0].code == ViolationCode::DuplicateKindInPar);
    CHECK(v[0].path == "pars[0]");
  }

  TEST_CASE("dangling region reference") {
    SmilTree t;
    t.pars.push_back({std::nullopt, {item(MediaKind::Image, "a.jpg", "Img")}});
    const auto v = validate(t);
    REQUIRE(v.size() == 1);
    CHECK(v[0].code == ViolationCode::UnresolvedRegion);
    CHECK(v[0].path == "pars[0].media[0]");
    CHECK(v[0].detail == "Img");
  }

  TEST_CASE("default tree") {
    const SmilTree t = default_tree();
    REQUIRE(t.layout.regions.size() == 2);
    CHECK(t.layout.regions[0].id == "Image");
    CHECK(t.layout.regions[1].id == "Text");
    CHECK(t.layout.regions[0].z_index == 0);
    CHECK(t.layout.regions[1].z_index == 1);
    CHECK(t.layout.regions[1].top == Dimension::pct(50));
    CHECK(t.pars.empty());
    CHECK(validate(t).empty());
  }

  TEST_CASE("violations accumulate in document order") {
    SmilTree t;
    t.layout.root_width = 0;
    Region a{"A", Dimension::px(0), Dimension::px(0), Dimension::pct(120), Dimension::px(10), 0};
    Region b{"A", Dimension{1.5, Unit::Pixels}, Dimension::px(0), Dimension::px(0), Dimension::px(10), 0};
    Region c{"", Dimension::px(0), Dimension::px(0), Dimension::px(1), Dimension::px(1), 0};
    t.layout.regions = {a, b, c};
    MediaItem bad = item(MediaKind::Text, "");
    bad.begin_ms = -1;
    bad.dur_ms = 0;
    t.pars.push_back({0, {bad}});

    std::vector<ViolationCode> codes;
    for (const auto& v : validate(t)) codes.push_back(v.code);
    const std::vector<ViolationCode> want = {
        ViolationCode::NonPositiveRootSize,   ViolationCode::BadDimension,    ViolationCode::DuplicateRegionId,
        ViolationCode::BadDimension,          ViolationCode::NonPositiveRegionSize, ViolationCode::EmptyRegionId,
        ViolationCode::NonPositiveDuration,   ViolationCode::EmptySrc,        ViolationCode::NegativeBegin,
        ViolationCode::NonPositiveDuration,
    };
    CHECK(codes == want);
  }

  TEST_CASE("audio and ref need no region") {
    SmilTree t;
    t.pars.push_back({std::nullopt, {item(MediaKind::Audio, "a.amr"), item(MediaKind::Ref, "x.vcf")}});
    CHECK(validate(t).empty());
  }

  TEST_CASE("one item of every kind is allowed") {
    SmilTree t = default_tree();
    t.pars.push_back({std::nullopt,
                      {item(MediaKind::Text, "t", "Text"), item(MediaKind::Image, "i", "Image"),
                       item(MediaKind::Audio, "a"), item(MediaKind::Video, "v", "Image"), item(MediaKind::Ref, "r")}});
    CHECK(validate(t).empty());
  }

  TEST_CASE("z ranks: region z first, document order second") {
    SmilTree t;
    t.layout.regions = {{"Top", Dimension::px(0), Dimension::px(0), Dimension::px(1), Dimension::px(1), 5},
                        {"Low", Dimension::px(0), Dimension::px(0), Dimension::px(1), Dimension::px(1), -1}};
    const Par par{std::nullopt,
                  {item(MediaKind::Text, "t", "Top"), item(MediaKind::Image, "i", "Low"), item(MediaKind::Audio, "a"),
                   item(MediaKind::Video, "v", "Low")}};
    CHECK(z_ranks(t, par) == std::vector<int>{3, 0, 2, 1});
    // Without z-index differences, later is on top.
    const Par flat{std::nullopt, {item(MediaKind::Text, "t"), item(MediaKind::Image, "i")}};
    CHECK(z_ranks(t, flat) == std::vector<int>{0, 1});
  }

  TEST_CASE("element and kind names") {
    for (int k = 0; k < kMediaKindCount; ++k) {
      const auto kind = static_cast<MediaKind>(k);
      CHECK(kind_from_element(element_name(kind)) == kind);
    }
    CHECK(element_name(MediaKind::Image) == "img");
    CHECK_FALSE(kind_from_element("image").has_value());
    CHECK(is_visual(MediaKind::Video));
    CHECK_FALSE(is_visual(MediaKind::Audio));
  }

  TEST_CASE("property: generated trees are valid and validate is pure") {
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
      gen::Rng rng(seed);
      const SmilTree t = gen::tree(rng);
      const auto v1 = validate(t);
      CHECK(v1.empty());
      for (const auto& par : t.pars) {
        std::array<int, kMediaKindCount> n{};
        for (const auto& m : par.media) CHECK(++n[static_cast<int>(m.kind)] == 1);
      }
      SmilTree broken = t;
      if (!broken.pars.empty() && !broken.pars[0].media.empty()) {
        broken.pars[0].media.push_back(broken.pars[0].media[0]);
        const auto a = validate(broken);
        CHECK(a == validate(broken));
        CHECK_FALSE(a.empty());
      }
    }
  }
}

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fp8emu/loss_scaling.hpp"

using namespace fp8emu;

namespace {

LossScaler::Options dyn(double scale) {
    LossScaler::Options o;
    o.kind = LossScaler::Kind::DynamicBackoff;
    o.scale = scale;
    o.min_threshold_schedule = {{40, 8192.0}, {150, 32768.0}};
    return o;
}

} // namespace

TEST_CASE("constant scaler never moves") {
    LossScaler::Options o;
    o.scale = 1024.0;
    LossScaler s(o);
    CHECK(s.kind() == LossScaler::Kind::Constant);
    for (std::int64_t it = 0; it < 5000; ++it) {
        const ScaleEvent ev = s.step(it % 7 != 0, it); // overflows sprinkled in
        CHECK(ev.action == ScaleAction::None);
        CHECK(ev.scale_after == 1024.0);
    }
    CHECK(s.scale() == 1024.0);
    CHECK(s.scale_loss(2.0f) == 2048.0f);
}

TEST_CASE("min threshold follows the schedule") {
    LossScaler s(dyn(32768.0));
    CHECK(s.min_threshold(0) == 1.0);
    CHECK(s.min_threshold(39) == 1.0);
    CHECK(s.min_threshold(40) == 8192.0);
    CHECK(s.min_threshold(149) == 8192.0);
    CHECK(s.min_threshold(150) == 32768.0);
    CHECK(s.min_threshold(100000) == 32768.0);

    LossScaler bare{[] {
        LossScaler::Options o;
        o.kind = LossScaler::Kind::DynamicBackoff;
        o.scale = 8.0;
        return o;
    }()};
    CHECK(bare.min_threshold(0) == 1.0);
    CHECK(bare.min_threshold(1 << 20) == 1.0);
}

TEST_CASE("backoff halves the scale when the floor allows it") {
    LossScaler s(dyn(32768.0));
    const ScaleEvent ev = s.step(false, 200); // threshold 32768 is below 32768*?  -> candidate 16384 < 32768
    // At iteration 200 the floor is 32768, so halving is forbidden.
    CHECK(ev.action == ScaleAction::ClampedToMin);
    CHECK(ev.scale_after == 32768.0);

    LossScaler s2(dyn(32768.0));
    const ScaleEvent ev2 = s2.step(false, 100); // floor 8192, candidate 16384 is fine
    CHECK(ev2.action == ScaleAction::Backoff);
    CHECK(ev2.scale_after == 16384.0);
    CHECK(s2.scale() == 16384.0);
    CHECK(s2.steps_since_overflow() == 0);
}

TEST_CASE("backoff clamps at the active minimum") {
    LossScaler s(dyn(8192.0));
    const ScaleEvent ev = s.step(false, 100); // candidate 4096 < floor 8192
    CHECK(ev.action == ScaleAction::ClampedToMin);
    CHECK(ev.scale_after == 8192.0);
    CHECK(s.scale() == 8192.0);

    // Repeated overflows keep it pinned rather than driving it to zero.
    for (int i = 0; i < 20; ++i) {
        const ScaleEvent e = s.step(false, 101 + i);
        CHECK(e.action == ScaleAction::ClampedToMin);
        CHECK(e.scale_after == 8192.0);
    }
}

TEST_CASE("growth fires after the clean-step interval and resets the counter") {
    LossScaler::Options o = dyn(1024.0);
    o.growth_interval = 2000;
    o.min_threshold_schedule.clear();
    LossScaler s(o);
    std::int64_t it = 0;
    for (int i = 0; i < 1999; ++i) {
        const ScaleEvent ev = s.step(true, it++);
        CHECK(ev.action == ScaleAction::None);
    }
    CHECK(s.steps_since_overflow() == 1999);
    const ScaleEvent grow = s.step(true, it++);
    CHECK(grow.action == ScaleAction::Growth);
    CHECK(grow.scale_after == 2048.0);
    CHECK(s.steps_since_overflow() == 0);

    // An overflow right after growth restarts the count.
    const ScaleEvent back = s.step(false, it++);
    CHECK(back.action == ScaleAction::Backoff);
    CHECK(back.scale_after == 1024.0);
    for (int i = 0; i < 2000; ++i) s.step(true, it++);
    CHECK(s.scale() == 2048.0);
}

TEST_CASE("a schedule step raises the scale even without an overflow") {
    LossScaler s(dyn(4096.0)); // below the iteration-40 floor of 8192
    const ScaleEvent before = s.step(true, 10);
    CHECK(before.action == ScaleAction::None);
    CHECK(before.scale_after == 4096.0);
    const ScaleEvent after = s.step(true, 40);
    CHECK(after.action == ScaleAction::ClampedToMin);
    CHECK(after.scale_after == 8192.0);
    CHECK(s.scale() == 8192.0);
}

TEST_CASE("scaled training trace around a threshold boundary") {
    // Start high, overflow twice just before and just after the 150 boundary.
    LossScaler s(dyn(65536.0));
    CHECK(s.step(false, 148).scale_after == 32768.0);      // floor 8192: plain backoff
    CHECK(s.step(false, 149).scale_after == 16384.0);      // still fine
    const ScaleEvent ev = s.step(false, 150);               // floor jumps to 32768
    CHECK(ev.action == ScaleAction::ClampedToMin);
    CHECK(ev.scale_after == 32768.0);
}

TEST_CASE("constructor validates options") {
    LossScaler::Options o = dyn(1024.0);
    o.backoff_factor = 1.0;
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.backoff_factor = 0.0;
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.growth_factor = 1.0;
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.growth_interval = 0;
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.min_threshold_schedule = {{40, 8192.0}, {40, 16384.0}};
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.min_threshold_schedule = {{40, -1.0}};
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    o = dyn(1024.0);
    o.scale = 0.0;
    CHECK_THROWS_AS(LossScaler{o}, std::invalid_argument);
    LossScaler::Options c;
    c.scale = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(LossScaler{c}, std::invalid_argument);
}

TEST_CASE("unscale divides in fp32 and leaves non-finite entries non-finite") {
    LossScaler::Options o;
    o.scale = 4096.0;
    LossScaler s(o);
    Tensor g({4});
    g.data = {4096.0f, -8192.0f, std::numeric_limits<float>::infinity(),
              std::numeric_limits<float>::quiet_NaN()};
    const Tensor u = s.unscale_gradients(g);
    CHECK(u.data[0] == 1.0f);
    CHECK(u.data[1] == -2.0f);
    CHECK(std::isinf(u.data[2]));
    CHECK(std::isnan(u.data[3]));
    // Unscale is true division; scale 3 would not be exact with a reciprocal.
    LossScaler::Options o3;
    o3.scale = 3.0;
    LossScaler s3(o3);
    Tensor h({1});
    h.data = {9.0f};
    CHECK(s3.unscale_gradients(h).data[0] == 3.0f);
}

TEST_CASE("event log serializes as csv") {
    std::vector<ScaleEvent> evs;
    evs.push_back({12, ScaleAction::Backoff, 512.0});
    evs.push_back({40, ScaleAction::ClampedToMin, 8192.0});
    evs.push_back({2052, ScaleAction::Growth, 16384.0});
    const std::string csv = scale_events_csv(evs);
    CHECK(csv == "iteration,action,scale_after\n"
                 "12,backoff,512\n"
                 "40,clamped_to_min,8192\n"
                 "2052,growth,16384\n");
}

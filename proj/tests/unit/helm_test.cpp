#include "doctest.h"

#include <cmath>
#include <fstream>
#include <limits>

#include "mauv/helm.hpp"
#include "support.hpp"

using namespace mauv;
using namespace mauv::helm;

TEST_SUITE("helm")
{
    TEST_CASE("mission grammar")
    {
        const auto one = parse_mission("ADD_LEG: start_time=120, heading=180, speed=1.5, depth=1.5");
        REQUIRE(one.size() == 1);
        CHECK(one[0] == MissionLeg{120, 180, 1.5, 1.5, {}});

        const auto tuned = parse_mission("ADD_LEG: start_time=410, heading=250, speed=1.5, depth=2.0, heading_kp=0.8");
        REQUIRE(tuned.size() == 1);
        CHECK(tuned[0].gain_overrides.at("heading_kp") == 0.8);

        CHECK(parse_mission("").empty());
        CHECK(parse_mission("# nothing\n\n   \n").empty());

        CHECK_THROWS_AS(parse_mission("ADD_LEG: start_time=1, heading=0, speed=1"), MissionParseError);
        CHECK_THROWS_AS(parse_mission("GO: start_time=1"), MissionParseError);
        CHECK_THROWS_AS(parse_mission("ADD_LEG: start_time=x, heading=0, speed=1, depth=1"), MissionParseError);
        CHECK_THROWS_AS(parse_mission("ADD_LEG: start_time=1, heading=0, speed=1, depth=1, warp=9"), MissionParseError);
        try {
            parse_mission("ADD_LEG: start_time=1, heading=0, speed=1, depth=1\nADD_LEG: oops");
            FAIL("expected a parse error");
        }
        catch (const MissionParseError& e) {
            CHECK(e.line() == 2);
        }
    }

    TEST_CASE("render round trip")
    {
        const auto legs = load_mission(test::data_path("missions/listing.mission"));
        CHECK(parse_mission(render_mission(legs)) == legs);
    }

    TEST_CASE("passive helm schedule")
    {
        PassiveHelm h(load_mission(test::data_path("missions/listing.mission")));
        const auto before = h.step(50, 33, 0.4);
        CHECK(before.active_leg == -1);
        CHECK(before.speed == 0.0);
        CHECK(before.heading == 33);
        CHECK(before.depth == 0.4);

        const auto first = h.step(130, 0, 0);
        CHECK(first.active_leg == 0);
        CHECK(first.heading == 180);
        CHECK(first.speed == 1.5);
        CHECK(first.depth == 1.5);

        const auto third = h.step(415, 0, 0);
        CHECK(third.active_leg == 2);
        REQUIRE(third.gain_updates.size() == 1);
        CHECK(third.gain_updates[0] == std::pair<std::string, double>{"heading_kp", 0.8});
        CHECK(h.step(416, 0, 0).gain_updates.empty());
    }

    TEST_CASE("frontseat state machine")
    {
        SafetyEnvelope env;
        env.actuator_engage_delay = 30;
        env.mission_end_time = 100;
        plant::VehicleHealth ok;
        nav::NavSolution sol;

        const auto wait = fsm_step({}, 5, ok, sol, env);
        CHECK(wait.state.mode == VehicleMode::launch_wait);
        CHECK_FALSE(wait.actuators_enabled);
        const auto soon = fsm_step(wait.state, 25, ok, sol, env);
        CHECK(soon.state.mode == VehicleMode::engage_imminent);
        CHECK_FALSE(soon.actuators_enabled);
        const auto active = fsm_step(soon.state, 30, ok, sol, env);
        CHECK(active.state.mode == VehicleMode::mission_active);
        CHECK(active.actuators_enabled);

        sol.z = env.max_cruise_depth + 0.1;
        const auto deep = fsm_step(active.state, 31, ok, sol, env);
        CHECK(deep.state.mode == VehicleMode::safe_mode);
        CHECK(deep.state.reason == SafetyReason::depth);
        CHECK_FALSE(deep.actuators_enabled);

        // Absorbing until an operator reset.
        sol.z = 1.0;
        CHECK(fsm_step(deep.state, 32, ok, sol, env).state.mode == VehicleMode::safe_mode);
        CHECK(operator_reset().mode == VehicleMode::launch_wait);

        plant::VehicleHealth low;
        low.battery_v = env.min_voltage - 0.5;
        const auto v = fsm_step({}, 1, low, sol, env);
        CHECK(v.state.mode == VehicleMode::safe_mode);
        CHECK(v.state.reason == SafetyReason::voltage);

        CHECK(to_string(VehicleMode::mission_active) == "MISSION_ACTIVE");
        SafetyEnvelope bad;
        bad.max_depth = -1;
        CHECK_THROWS(bad.validate());
    }

    TEST_CASE("payload ingest")
    {
        SafetyEnvelope env;
        PayloadIngest ingest({true, false, 5.0}, env);
        const Desired hold{10, 0, 1};
        CHECK(ingest.push({0.0, 90.0, 1.2, 3.0}));
        const auto d = ingest.desired(1.0, hold);
        CHECK(d.heading == 90.0);
        CHECK(d.speed == 1.2);
        CHECK(d.depth == 3.0);

        ingest.push({2.0, std::nullopt, std::nullopt, 100.0});
        CHECK(ingest.desired(2.5, hold).depth <= env.max_cruise_depth);
        CHECK(ingest.clamped() == 1);

        CHECK_FALSE(ingest.push({3.0, std::numeric_limits<double>::quiet_NaN(), std::nullopt, std::nullopt}));
        CHECK_FALSE(ingest.push({3.0, std::nullopt, -1.0, std::nullopt}));
        CHECK(ingest.rejected() == 2);

        const auto stale = ingest.desired(20.0, hold);
        CHECK(stale.heading == hold.heading);
        CHECK(stale.speed == hold.speed);
        CHECK(stale.depth == hold.depth);

        PayloadIngest silent({true, false, 5.0}, env);
        CHECK(silent.desired(10.0, hold).depth == hold.depth);
    }
}

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mauv/control.hpp"
#include "support.hpp"

using namespace mauv;
using namespace mauv::control;

TEST_SUITE("control")
{
    TEST_CASE("pid basics")
    {
        PidState st;
        CHECK(pid_step({1, 1, 1}, 0.0, 0.05, st) == 0.0);

        st.reset();
        CHECK(pid_step({0.8}, 10.0, 0.05, st) == doctest::Approx(8.0));

        // Integral clamp and output clamp.
        st.reset();
        PidGains g{0.0, 10.0, 0.0, 0.5, 0.0};
        for (int k = 0; k < 100; ++k)
            pid_step(g, 1.0, 0.1, st);
        CHECK(st.integral == doctest::Approx(0.5));
        st.reset();
        CHECK(pid_step({100, 0, 0, 0, 2.0}, 1.0, 0.1, st) == 2.0);
        CHECK(pid_step({100, 0, 0, 0, 2.0}, -1.0, 0.1, st) == -2.0);

        // Derivative only after the first sample.
        st.reset();
        CHECK(pid_step({0, 0, 1}, 1.0, 0.1, st) == 0.0);
        CHECK(pid_step({0, 0, 1}, 2.0, 0.1, st) == doctest::Approx(10.0));

        CHECK_THROWS_AS(pid_step({1}, 1.0, 0.0, st), ControlError);
    }

    TEST_CASE("heading error wraps")
    {
        CHECK(heading_error_deg(350, 10) == doctest::Approx(-20));
        CHECK(heading_error_deg(10, 350) == doctest::Approx(20));
        CHECK(heading_error_deg(180, 0) == doctest::Approx(180));
        std::mt19937_64 rng(10);
        for (int i = 0; i < 1000; ++i) {
            const double e = heading_error_deg(test::uni(rng, -720, 720), test::uni(rng, -720, 720));
            CHECK(e > -180.0);
            CHECK(e <= 180.0);
        }
    }

    TEST_CASE("imu offsets")
    {
        const Attitude raw{0.01, -0.02, deg2rad(33)};
        const auto same = imu_offset_correct(raw, {});
        CHECK(same.phi == raw.phi);
        CHECK(same.psi == doctest::Approx(raw.psi));

        auto off = capture_offset(OffsetAxis::heading, Attitude{0, 0, deg2rad(3)}, {});
        CHECK(rad2deg(imu_offset_correct(raw, off).psi) == doctest::Approx(30));
        CHECK(off.roll == 0.0);

        off = capture_offset(OffsetAxis::roll, Attitude{deg2rad(1.5), 0, 0}, off);
        const auto file = std::filesystem::temp_directory_path() / "mauv_offsets_test.cfg";
        save_offsets(file, off);
        bool missing = true;
        const auto back = load_offsets(file, &missing);
        CHECK_FALSE(missing);
        CHECK(back.roll == doctest::Approx(off.roll));
        CHECK(back.heading == doctest::Approx(off.heading));
        std::filesystem::remove(file);

        const auto none = load_offsets(file, &missing);
        CHECK(missing);
        CHECK(none.heading == 0.0);
    }

    TEST_CASE("depth cascade")
    {
        GainSet g;
        g.depth = {0.3, 0.02, 0.1, 0.1, 0};
        g.pitch = {3, 1, 0, 0.1, 0};
        DepthLoopState st;
        CHECK(depth_cascade(2.0, 2.0, 0.0, g, 0.05, ControlMode::propelled, st) == 0.0);

        st = {};
        double desired = 0.0;
        depth_cascade(2.0, 1.0, 0.0, g, 0.05, ControlMode::glide, st, deg2rad(-10), &desired);
        CHECK(desired == doctest::Approx(deg2rad(-10)));

        // Far too shallow: nose down, clamped.
        st = {};
        depth_cascade(50.0, 0.0, 0.0, g, 0.05, ControlMode::propelled, st, 0.0, &desired);
        CHECK(desired == doctest::Approx(-kPitchLimit));
    }

    TEST_CASE("closed-loop depth step")
    {
        auto sc = test::shipped();
        sc.mission_path.clear();
        sc.legs = {{0, 0, 1.5, 2.0, {}}, {40, 0, 1.5, 4.0, {}}};
        sc.duration = 120;
        const auto res = harness::run(sc);
        double lo = 1e9, hi = -1e9;
        for (const auto& row : res.rows)
            if (row.t >= 90) {
                lo = std::min(lo, row.truth.z);
                hi = std::max(hi, row.truth.z);
            }
        CHECK(std::abs(lo - 4.0) <= 0.1);
        CHECK(std::abs(hi - 4.0) <= 0.1);
        CHECK(hi - lo <= 0.4);
    }

    TEST_CASE("mapper mixing identities")
    {
        ControlCorrectives c;
        c.psi_corr = 0.05;
        c.theta_corr = -0.03;
        c.phi_corr = 0.02;

        const auto level = map_correctives_unclamped(c, 0.0);
        CHECK(level.uppr_rudd == doctest::Approx(c.psi_corr + c.phi_corr));
        CHECK(level.lowr_rudd == doctest::Approx(c.psi_corr - c.phi_corr));
        CHECK(level.port_elev == doctest::Approx(c.theta_corr - c.phi_corr));
        CHECK(level.stbd_elev == doctest::Approx(c.theta_corr + c.phi_corr));

        c.phi_corr = 0.0;
        const auto side = map_correctives_unclamped(c, deg2rad(90));
        CHECK(side.uppr_rudd == doctest::Approx(-c.theta_corr));
        CHECK(side.port_elev == doctest::Approx(c.psi_corr));

        std::mt19937_64 rng(11);
        for (int i = 0; i < 1000; ++i) {
            ControlCorrectives r;
            r.psi_corr = test::uni(rng, -0.2, 0.2);
            r.theta_corr = test::uni(rng, -0.2, 0.2);
            r.phi_corr = test::uni(rng, -kRollCorrectiveLimit, kRollCorrectiveLimit);
            const auto a = map_correctives_unclamped(r, test::uni(rng, -3.14, 3.14));
            CHECK(a.uppr_rudd - a.lowr_rudd == doctest::Approx(2 * r.phi_corr));
            CHECK(a.stbd_elev - a.port_elev == doctest::Approx(2 * r.phi_corr));
            const auto clamped = map_correctives(r, 0.3);
            for (double s : {clamped.uppr_rudd, clamped.lowr_rudd, clamped.port_elev, clamped.stbd_elev})
                CHECK(std::abs(s) <= plant::kSternLimit);
        }
    }

    TEST_CASE("fin hysteresis table")
    {
        CHECK(morphing_logic(45, FinState::retracted, 0.1).action == FinAction::deploy);
        CHECK(morphing_logic(-45, FinState::retracted, 0.1).action == FinAction::deploy);
        CHECK(morphing_logic(4, FinState::deployed, 0.1).action == FinAction::retract);
        for (auto s : {FinState::retracted, FinState::deployed}) {
            const auto c = morphing_logic(20, s, 0.1);
            CHECK(c.action == FinAction::hold);
            CHECK(c.state == s);
        }
        CHECK(morphing_logic(45, FinState::retracted, 0.1).fin_angle == -0.1);
        CHECK(morphing_logic(45, FinState::retracted, 1.0).fin_angle == -plant::kFinLimit);
    }

    TEST_CASE("thrust map")
    {
        CHECK(thrust_map(0).thrust_pct == 0.0);
        CHECK(thrust_map(0).normalized == 0.0);
        CHECK(thrust_map(150).thrust_pct == 100.0);
        CHECK(thrust_map(150).normalized == 1.0);
        CHECK(thrust_map(55).thrust_pct == 55.0);
        CHECK(thrust_map(55).normalized == doctest::Approx(0.55));
        CHECK(thrust_map(-5).thrust_pct == 0.0);
    }

    TEST_CASE("fin policies in the mapper")
    {
        ControlCorrectives c;
        c.psi_corr = 0.1;
        ActuatorMapper off({true, FinPolicy::off});
        CHECK(off.map(c, 0, 90).command.fin_deploy == 0.0);
        ActuatorMapper on({true, FinPolicy::deployed});
        const auto out = on.map(c, 0, 0);
        CHECK(out.command.fin_deploy == 1.0);
        CHECK(out.command.fin_angle == doctest::Approx(-0.1));
        ActuatorMapper morph({true, FinPolicy::morphing});
        CHECK(morph.map(c, 0, 10).command.fin_deploy == 0.0);
        CHECK(morph.map(c, 0, 40).command.fin_deploy == 1.0);
        CHECK(morph.map(c, 0, 10).command.fin_deploy == 1.0);
        CHECK(morph.map(c, 0, 2).command.fin_deploy == 0.0);
    }

    TEST_CASE("runtime gain updates")
    {
        GainSet g;
        apply_gain(g, "heading_kp", 0.8);
        CHECK(g.heading.kp == 0.8);
        CHECK_THROWS_AS(apply_gain(g, "heading_kz", 1), ControlError);
        CHECK_THROWS_AS(apply_gain(g, "yaw_kp", 1), ControlError);

        ModeGainSet set;
        set.modes["propelled"].heading = {1.0};
        set.modes["glide"].heading = {2.0};
        ControlEngine eng(set, "propelled", 40);
        eng.queue_gain_update("heading_kp", 0.5);
        CHECK(eng.active_gains().heading.kp == 1.0);  // pending until the next tick
        Setpoints sp;
        sp.heading_deg = 10;
        const auto c = eng.step(sp, {}, 0.05);
        CHECK(eng.active_gains().heading.kp == 0.5);
        CHECK(c.psi_corr == doctest::Approx(0.5 * deg2rad(10)));

        eng.set_mode("glide", ControlMode::glide);
        CHECK(eng.mode() == "propelled");
        eng.step(sp, {}, 0.05);
        CHECK(eng.mode() == "glide");
        CHECK_THROWS_AS(eng.set_mode("hover"), ControlError);
    }
}

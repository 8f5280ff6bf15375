#include "doctest.h"

#include <cmath>
#include <random>

#include "mauv/navigation.hpp"
#include "support.hpp"

using namespace mauv;
using namespace mauv::nav;

namespace {

ModelRegressors excited(std::mt19937_64& rng)
{
    ModelRegressors x;
    x.rpm = test::uni(rng, 0.5, 2);
    x.p = test::uni(rng, -1, 1);
    x.q = test::uni(rng, -1, 1);
    x.r = test::uni(rng, -1, 1);
    x.z = test::uni(rng, 0, 5);
    x.u_prev = test::uni(rng, -1.5, 1.5);
    x.v_prev = test::uni(rng, -1.5, 1.5);
    x.w_prev = test::uni(rng, -1.5, 1.5);
    return x;
}

} // namespace

TEST_SUITE("navigation")
{
    TEST_CASE("depth filter")
    {
        DepthFilter f;
        for (int k = 0; k < 20; ++k)
            f.push({3.0, k * 0.1});
        CHECK(*f.value() == doctest::Approx(3.0));

        DepthFilter g;
        for (int k = 0; k < 20; ++k)
            g.push({2.0, k * 0.1});
        g.push({3.0, 2.0});
        CHECK(g.rejected() == 1);
        CHECK(*g.value() == doctest::Approx(2.0));

        // 20-sample average at 10 Hz delays a ramp by 0.95 s.
        DepthFilter r;
        double out = 0.0;
        for (int k = 0; k <= 200; ++k)
            out = *r.push({0.1 * k * 0.1, k * 0.1});
        const double lag = (2.0 - out) / 0.1;
        CHECK(lag == doctest::Approx(0.95).epsilon(1e-9));

        CHECK_THROWS(DepthFilter(0.0, 20));
    }

    TEST_CASE("flight model terms")
    {
        auto p = ModelParams::make();
        CHECK(model_velocity({}, p).norm() == 0.0);
        p.surge.theta[0] = 1e-3;
        p.surge.theta[1] = 2e-7;
        ModelRegressors x;
        x.rpm = 1000;
        CHECK(model_velocity(x, p).x() == doctest::Approx(1000 * 1e-3 + 1e6 * 2e-7));

        // Inactive terms contribute nothing.
        p.surge.active[1] = false;
        CHECK(model_velocity(x, p).x() == doctest::Approx(1.0));
        CHECK_THROWS(ModelParams::make(0.5));
    }

    TEST_CASE("rls zero innovation keeps parameters")
    {
        std::mt19937_64 rng(12);
        auto p = ModelParams::make();
        for (int i = 0; i < kSurgeTerms; ++i)
            p.surge.theta[i] = test::uni(rng, -1, 1);
        const auto x = excited(rng);
        const auto next = rls_update(p, x, model_velocity(x, p));
        CHECK((next.surge.theta - p.surge.theta).norm() == doctest::Approx(0.0));
    }

    TEST_CASE("rls fit reproduces its generator in sample")
    {
        std::mt19937_64 rng(13);
        Eigen::VectorXd a(kSurgeTerms), b(kSwayTerms), c(kHeaveTerms);
        for (auto* v : {&a, &b, &c})
            for (Eigen::Index i = 0; i < v->size(); ++i)
                (*v)[i] = test::uni(rng, -2, 2);
        std::vector<ModelRegressors> xs;
        auto p = ModelParams::make(1.0);
        for (int k = 0; k < 400; ++k) {
            xs.push_back(excited(rng));
            const auto& x = xs.back();
            p = rls_update(p, x, Vec3(surge_regressors(x).dot(a), sway_regressors(x).dot(b), heave_regressors(x).dot(c)));
        }
        for (const auto& x : xs) {
            const Vec3 truth(surge_regressors(x).dot(a), sway_regressors(x).dot(b), heave_regressors(x).dot(c));
            CHECK((model_velocity(x, p) - truth).norm() <= 1e-6 * std::max(1.0, truth.norm()));
        }
    }

    TEST_CASE("rls covariance guard")
    {
        auto p = ModelParams::make(0.95, 1e6);
        p.trace_limit = 1e7;
        RlsEvents ev;
        ModelRegressors zero;  // no excitation: covariance winds up
        for (int k = 0; k < 500; ++k)
            p = rls_update(p, zero, Vec3::Zero(), &ev);
        CHECK(ev.covariance_resets > 0);
        CHECK(p.surge.cov.allFinite());
    }

    TEST_CASE("calibrator")
    {
        ModelCalibrator still;
        for (int k = 0; k <= 60; ++k)
            still.calibrate(Vec3(1, 0, 0), Vec3(1, 0, 0), k);
        CHECK(still.current_est().norm() == doctest::Approx(0.0));

        ModelCalibrator cal;  // 10 s smoothing
        for (int k = 0; k <= 60; ++k)
            cal.calibrate(Vec3(1.0, 0, 0), Vec3(1.2, 0, 0), k);
        CHECK(cal.current_est().x() == doctest::Approx(0.2).epsilon(0.05));
        CHECK(std::abs(cal.current_est().y()) < 1e-12);
        CHECK(cal.adapt(Vec3(1, 0, 0)).x() == doctest::Approx(1.0 + cal.current_est().x()));

        // Current removed: first-order decay with the smoothing constant.
        const double start = cal.current_est().x();
        for (int k = 61; k <= 80; ++k)
            cal.calibrate(Vec3(1.0, 0, 0), Vec3(1.0, 0, 0), k);
        CHECK(cal.current_est().x() == doctest::Approx(start * std::exp(-20.0 / 10.0)).epsilon(1e-9));

        CHECK_FALSE(cal.frozen(100));
        CHECK(cal.frozen(200));
    }

    TEST_CASE("dvl preprocessing")
    {
        DvlProcessor id;
        const auto pass = id.process({1.0, 0.1, 0.0, 0.0, DvlFrame::sensor}, std::nullopt);
        CHECK(pass.velocity.isApprox(Vec3(1.0, 0.1, 0.0)));

        DvlConfig flipped;
        flipped.mount = Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix();
        DvlProcessor rot(flipped);
        CHECK(rot.process({1.0, 0.0, 0.0, 0.0, DvlFrame::sensor}, std::nullopt).velocity.x() == doctest::Approx(-1.0));

        DvlProcessor ice;
        const auto e = ice.process({1.0, 0.0, 0.0, 0.0, DvlFrame::body}, Vec3(0.5, 0, 0));
        CHECK(e.velocity.isApprox(Vec3(1.5, 0, 0)));

        // A persistent lateral reading on a straight track flags the mount.
        DvlProcessor mis;
        bool flagged = false;
        for (int k = 0; k < 600; ++k)
            flagged = mis.process({1.0, 0.4, 0.0, k * 0.2, DvlFrame::sensor}, std::nullopt, 0.0).mismatch;
        CHECK(flagged);
    }

    TEST_CASE("track buffer and acoustic extrapolation")
    {
        TrackBuffer tb(100.0, 0.0);
        CHECK(tb.empty());
        for (int k = 0; k <= 400; ++k)
            tb.push(k * 0.05, Vec2(1.6 * k * 0.05, 0.0));
        CHECK(tb.at(7.525)->x() == doctest::Approx(1.6 * 7.525));
        CHECK_FALSE(tb.at(25.0).has_value());

        const LblFix fix{5.0, 5.0, 0.0, 20.0};
        const auto moved = lbl_extrapolate(fix, tb, 20.0);
        REQUIRE(moved);
        CHECK(moved->x() == doctest::Approx(5.0 + 32.0));
        CHECK(moved->y() == doctest::Approx(5.0));

        TrackBuffer still;
        for (int k = 0; k <= 40; ++k)
            still.push(k * 0.5, Vec2(3, 4));
        const auto same = lbl_extrapolate(fix, still, 20.0);
        REQUIRE(same);
        CHECK(same->isApprox(Vec2(5, 5)));

        TrackBuffer late;
        late.push(30.0, Vec2(0, 0));
        late.push(40.0, Vec2(1, 0));
        CHECK_FALSE(lbl_extrapolate(fix, late, 40.0).has_value());
    }

    TEST_CASE("dead reckoning integrates the model")
    {
        SensorFusion f;
        f.initialize({}, 1.0);
        FusionInputs in;
        in.model_vel = Vec3(1.0, 0.5, 0.0);
        NavSolution s;
        for (int k = 1; k <= 200; ++k)
            s = f.fuse(in, k * 0.05, 0.05);
        CHECK(s.x == doctest::Approx(10.0 - 0.5 * 0.05 * 1.0).epsilon(1e-3));
        CHECK(s.y == doctest::Approx(5.0).epsilon(1e-2));

        // Unestimated 0.2 m/s current: 20 m error after 100 s.
        SensorFusion g;
        g.initialize({}, 1.0);
        FusionInputs still;
        double truth_e = 0.0;
        for (int k = 1; k <= 2000; ++k) {
            s = g.fuse(still, k * 0.05, 0.05);
            truth_e += 0.2 * 0.05;
        }
        CHECK(std::abs(truth_e - s.y) == doctest::Approx(20.0).epsilon(0.05));
    }

    TEST_CASE("model bias from acoustic fixes")
    {
        SensorFusion f;
        f.initialize({}, 1.0);
        const Vec2 truth_vel(1.0, 0.3);
        NavSolution s;
        const double dt = 0.05;
        for (int k = 1; k <= 12000; ++k) {
            const double t = k * dt;
            FusionInputs in;
            in.model_vel = Vec3(truth_vel.x() + 0.1, truth_vel.y(), 0.0);
            if (k % 200 == 0)
                in.position_fix = truth_vel * t;
            s = f.fuse(in, t, dt);
        }
        CHECK(s.model_bias.x() == doctest::Approx(0.1).epsilon(0.1));
        CHECK(std::abs(s.model_bias.y()) < 0.01);
        CHECK((Vec2(s.x, s.y) - truth_vel * 600.0).norm() < 2.0);
    }

    TEST_CASE("manager rules")
    {
        NavManager m;
        NavSolution s;
        s.cov = Mat6::Identity();
        CHECK_FALSE(m.needs_reinit(s, Vec2(3, 0), 1.0));
        CHECK(m.needs_reinit(s, Vec2(100, 0), 1.0));

        m.on_measurement(0.0);
        CHECK(m.status(1.0) == NavStatus::ok);
        CHECK(m.status(10.0) == NavStatus::degraded);
        m.on_measurement(10.0);
        for (int k = 0; k < 10; ++k)
            m.on_dvl(true);
        CHECK(m.status(10.0) == NavStatus::degraded);
        m.on_dvl(false);
        CHECK(m.status(10.0) == NavStatus::ok);
        m.on_reinit();
        CHECK(m.status(10.0) == NavStatus::reinit);
        CHECK(m.status(10.0) == NavStatus::ok);
    }

    TEST_CASE("engine rejects out of order measurements")
    {
        const auto sc = test::shipped();
        NavigationEngine e(sc.nav, sc.model);
        CHECK(e.push(DepthMeas{1.0, 2.0}));
        CHECK_FALSE(e.push(DepthMeas{1.0, 1.0}));
        CHECK(e.push(ImuMeas{0, 0, 0, 0, 0, 0, 1.0}));  // other streams are independent
        CHECK(e.counters().out_of_order == 1);
    }

    TEST_CASE("engine watchdog")
    {
        const auto sc = test::shipped();
        NavigationEngine e(sc.nav, sc.model);
        e.tick(1.0, 0.05);
        CHECK(e.status() == NavStatus::ok);
        e.tick(6.0, 0.05);
        CHECK(e.status() == NavStatus::degraded);
    }

    TEST_CASE("engine reinitializes once after a position jump")
    {
        auto sc = test::shipped();
        sc.env.noise = {};
        sc.env.lbl_interval = 0.0;
        NavigationEngine e(sc.nav, sc.model);
        plant::SensorSuite sensors(3);
        plant::BodyState st;
        st.u = 1.5;
        plant::ActuatorSet act;
        act.thrust_pct = 60;
        act.rpm = act.thrust_pct * sc.vehicle.actuators.rpm_per_pct;
        int reinit_events = 0;
        NavSolution sol;
        for (int k = 0; k <= 2400; ++k) {
            const double t = k * 0.05;
            if (k == 1200)
                st.x += 100.0;
            for (const auto& m : sensors.sense(st, act, sc.env, t))
                e.push(m);
            sol = e.tick(t, 0.05);
            if (e.status() == NavStatus::reinit)
                ++reinit_events;
            st = plant::step(st, act, sc.env, sc.vehicle, 0.05);
        }
        CHECK(reinit_events == 1);
        CHECK(e.counters().reinits == 1);
        CHECK(std::hypot(sol.x - st.x, sol.y - st.y) < 5.0);
    }
}

#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "mauv/hydromath.hpp"
#include "support.hpp"

using namespace mauv::hydro;

namespace {

// Direct evaluation of the defining formulas, kept apart from the library.
double ref_x_ac(const HydroConfig& c) { return c.n_v / c.y_v; }
double ref_x_r(const HydroConfig& c, double U) { return (c.mass * c.x_g * U - c.n_r) / (c.mass * U - c.y_r); }
double ref_c(const HydroConfig& c, double U)
{
    return -c.y_v * (c.mass * c.x_g * U - c.n_r) + c.n_v * (c.mass * U - c.y_r);
}

// Contribution of a lift surface of coefficient k at signed station x to C,
// written with the stern convention xi = -x.
double ref_surface_term(const HydroConfig& c, double U, double k, double x)
{
    const double xi = -x;
    const double q = c.mass * U - c.y_r;
    return k * ((ref_x_r(c, U) + xi) * q - c.y_v * xi * (ref_x_ac(c) + xi));
}

} // namespace

TEST_SUITE("hydromath")
{
    TEST_CASE("aerodynamic centre")
    {
        HydroConfig c;
        c.y_v = -2;
        c.n_v = 1;
        CHECK(aerodynamic_center(c) == doctest::Approx(-0.5));
        c.n_v = 0;
        CHECK(aerodynamic_center(c) == 0.0);
        c.y_v = 0;
        CHECK_THROWS_AS(aerodynamic_center(c), HydroError);

        std::mt19937_64 rng(1);
        for (int i = 0; i < 200; ++i) {
            const auto h = test::random_hull(rng, 1.5);
            CHECK(std::abs(aerodynamic_center(h) - ref_x_ac(h)) <= 1e-12 * std::max(1.0, std::abs(ref_x_ac(h))));
        }
    }

    TEST_CASE("centre of rotation")
    {
        HydroConfig c;
        c.mass = 1;
        c.x_g = 0.1;
        c.n_r = -0.2;
        c.y_r = 0;
        CHECK(center_of_rotation(c, 1.0) == doctest::Approx(0.3).epsilon(1e-12));
        c.x_g = 0;
        c.n_r = 0;
        for (double U : {0.5, 1.0, 2.5})
            CHECK(center_of_rotation(c, U) == 0.0);

        std::mt19937_64 rng(2);
        for (int i = 0; i < 200; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto h = test::random_hull(rng, U);
            CHECK(std::abs(center_of_rotation(h, U) - ref_x_r(h, U)) <= 1e-12 * std::max(1.0, std::abs(ref_x_r(h, U))));
        }
    }

    TEST_CASE("stability index")
    {
        HydroConfig sym;
        sym.mass = 10;
        sym.y_v = -20;
        sym.y_r = 1;
        CHECK(stability_index(sym, 1.5) == 0.0);

        std::mt19937_64 rng(3);
        for (int i = 0; i < 500; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto h = test::random_hull(rng, U);
            const double recast = -h.y_v * (h.mass * U - h.y_r) * (ref_x_r(h, U) - ref_x_ac(h));
            CHECK(stability_index(h, U) == doctest::Approx(recast).epsilon(1e-9));
            CHECK(stability_index(h, U) == doctest::Approx(ref_c(h, U)).epsilon(1e-9));
        }
    }

    TEST_CASE("rudder composition")
    {
        std::mt19937_64 rng(4);
        const auto h = test::random_hull(rng, 1.5);

        const auto none = with_rudder(h, make_rudder(0.0, -0.5), 1.5);
        CHECK(none.y_v == h.y_v);
        CHECK(none.n_r == h.n_r);
        CHECK(none.n_v == h.n_v);

        // A surface at the origin adds pure side force.
        HydroConfig rr = h;
        rr.y_v += -10.0 / 1.5;
        const auto at_origin = with_fin(h, make_fin(-10.0, 1e-300), 1.0, 1.5);
        CHECK(at_origin.y_v == doctest::Approx(rr.y_v));
        CHECK(at_origin.y_r == doctest::Approx(h.y_r));
        CHECK(at_origin.n_v == doctest::Approx(h.n_v));
        CHECK(at_origin.n_r == doctest::Approx(h.n_r));

        for (int i = 0; i < 500; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto b = test::random_hull(rng, U);
            const auto r = make_rudder(test::uni(rng, -80, -1), test::uni(rng, -1, -0.1));
            const double a = r.lift_per_angle / U;
            const double expected = ref_c(b, U) - ref_surface_term(b, U, a, r.station);
            CHECK(stability_index(with_rudder(b, r, U), U) == doctest::Approx(expected).epsilon(1e-9));
        }
    }

    TEST_CASE("fin composition")
    {
        std::mt19937_64 rng(5);
        const auto h = test::random_hull(rng, 1.5);
        const auto f = make_fin(-20, 0.3);
        const auto off = with_fin(h, f, 0.0, 1.5);
        CHECK(off.y_v == h.y_v);
        CHECK(off.n_r == h.n_r);

        for (int i = 0; i < 500; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto b = test::random_hull(rng, U);
            const auto r = make_rudder(test::uni(rng, -80, -1), test::uni(rng, -1, -0.1));
            const auto fin = make_fin(test::uni(rng, -80, -1), test::uni(rng, 0.05, 1));
            const double a = r.lift_per_angle / U, bb = fin.lift_per_angle / U;
            const double xi = -r.station, eta = fin.station;
            // Each surface enters as a rank-one update, so the two together
            // carry the cross term AB(xi + eta)^2.
            const double expected = ref_c(b, U) - ref_surface_term(b, U, a, r.station) -
                                    ref_surface_term(b, U, bb, fin.station) + a * bb * (xi + eta) * (xi + eta);
            const double got = stability_index(with_fin(with_rudder(b, r, U), fin, 1.0, U), U);
            CHECK(got == doctest::Approx(expected).epsilon(1e-9));
            // Order of composition is irrelevant.
            CHECK(stability_index(with_rudder(with_fin(b, fin, 1.0, U), r, U), U) == doctest::Approx(got).epsilon(1e-9));
        }
    }

    TEST_CASE("fin term is the mirror of the rudder term")
    {
        std::mt19937_64 rng(6);
        for (int i = 0; i < 200; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto b = test::random_hull(rng, U);
            const double lift = test::uni(rng, -80, -1), x = test::uni(rng, 0.05, 1.0);
            // A fin at +x reduces C exactly as a rudder of equal lift would at
            // xi = -x.
            const double fin_drop = ref_c(b, U) - stability_index(with_fin(b, make_fin(lift, x), 1.0, U), U);
            CHECK(fin_drop == doctest::Approx(ref_surface_term(b, U, lift / U, x)).epsilon(1e-9));
            const double rudder_drop = ref_c(b, U) - stability_index(with_rudder(b, make_rudder(lift, -x), U), U);
            CHECK(rudder_drop == doctest::Approx(ref_surface_term(b, U, lift / U, -x)).epsilon(1e-9));
        }
    }

    TEST_CASE("steady yaw rate")
    {
        const auto sc = test::shipped();
        const auto& v = sc.vehicle;
        const double U = v.bare.ref_speed;
        CHECK(steady_yaw_rate(v.bare, v.rudder, std::nullopt, 0.0, U) == 0.0);
        CHECK(steady_yaw_rate(v.bare, v.rudder, v.fin, 0.0, U) == 0.0);

        // Linear and odd in delta.
        const double r1 = steady_yaw_rate(v.bare, v.rudder, std::nullopt, 0.02, U);
        CHECK(steady_yaw_rate(v.bare, v.rudder, std::nullopt, 0.04, U) == doctest::Approx(2 * r1).epsilon(1e-12));
        CHECK(steady_yaw_rate(v.bare, v.rudder, std::nullopt, -0.02, U) == doctest::Approx(-r1).epsilon(1e-12));

        // A zero-lift fin leaves the rudder-only answer.
        const auto null_fin = make_fin(0.0, v.fin.station);
        CHECK(steady_yaw_rate(v.bare, v.rudder, null_fin, 0.02, U) == doctest::Approx(r1).epsilon(1e-12));

        // Fin deflected to -delta turns the vehicle harder.
        const double ratio = steady_yaw_rate(v.bare, v.rudder, v.fin, 0.02, U) / r1;
        CHECK(ratio >= 1.35);
        CHECK(ratio <= 1.50);
    }

    TEST_CASE("steady yaw rate solves the linear sway-yaw balance")
    {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 200; ++i) {
            const double U = test::uni(rng, 0.5, 3);
            const auto b = test::random_hull(rng, U);
            const auto r = make_rudder(test::uni(rng, -80, -1), test::uni(rng, -1, -0.1));
            const auto f = make_fin(test::uni(rng, -80, -1), test::uni(rng, 0.05, 1));
            const auto comp = with_fin(with_rudder(b, r, U), f, 1.0, U);
            if (std::abs(stability_index(comp, U)) < 1e-3)
                continue;
            const double delta = 0.05;
            // 0 = Y_v v + (Y_r - mU) r + F,  0 = N_v v + (N_r - m x_G U) r + M
            const double force = r.lift_per_angle * delta + f.lift_per_angle * (-delta);
            const double moment = r.lift_per_angle * delta * r.station + f.lift_per_angle * (-delta) * f.station;
            Eigen::Matrix2d m;
            m << comp.y_v, comp.y_r - comp.mass * U, comp.n_v, comp.n_r - comp.mass * comp.x_g * U;
            const Eigen::Vector2d vr = m.colPivHouseholderQr().solve(Eigen::Vector2d(-force, -moment));
            CHECK(steady_yaw_rate(b, r, f, delta, U) == doctest::Approx(vr[1]).epsilon(1e-9));
        }
    }

    TEST_CASE("stabilizing rudder threshold")
    {
        HydroConfig neutral;
        neutral.mass = 10;
        neutral.y_v = -20;
        neutral.y_r = 1;
        CHECK(min_stabilizing_rudder(neutral, -0.5, 1.5).a == 0.0);

        std::mt19937_64 rng(8);
        int tested = 0;
        while (tested < 300) {
            const double U = test::uni(rng, 0.5, 3);
            const auto b = test::random_hull(rng, U);
            const double cb = ref_c(b, U);
            if (cb >= 0.0)
                continue;
            const double station = test::uni(rng, -1, -0.1);
            RudderThreshold th;
            try {
                th = min_stabilizing_rudder(b, station, U);
            }
            catch (const HydroError&) {
                continue;
            }
            if (th.a >= 0.0)
                continue;
            ++tested;
            CHECK(th.lift_per_angle == doctest::Approx(th.a * U));
            auto c_at = [&](double s) {
                return stability_index(with_rudder(b, make_rudder(th.lift_per_angle * s, station), U), U);
            };
            CHECK(std::abs(c_at(1.0)) <= 1e-9 * std::abs(cb));
            CHECK(c_at(1.1) > 0.0);
            CHECK(c_at(0.9) < 0.0);
        }
    }

    TEST_CASE("fin placement window")
    {
        const auto sc = test::shipped();
        const auto& bare = sc.vehicle.bare;
        const double U = bare.ref_speed;
        CHECK(stability_index(bare, U) < 0.0);
        CHECK(fin_placement_valid(sc.vehicle.fin.station, bare, U));
        CHECK_FALSE(fin_placement_valid(center_of_rotation(bare, U), bare, U));
        CHECK_FALSE(fin_placement_valid(aerodynamic_center(bare), bare, U));

        HydroConfig stable = bare;
        stable.n_v = -stable.n_v;  // aerodynamic centre aft of the rotation point
        REQUIRE(aerodynamic_center(stable) < center_of_rotation(stable, U));
        for (double eta = -2.0; eta <= 2.0; eta += 0.05)
            CHECK_FALSE(fin_placement_valid(eta, stable, U));
    }

    TEST_CASE("rudder lift from foil data")
    {
        CHECK(rudder_lift_per_angle(1000, 3.0, 0.0, 1.5) == 0.0);
        CHECK(std::abs(rudder_lift_per_angle(1000, 3.0, 0.001, 1.5)) == doctest::Approx(6.75).epsilon(1e-12));
        CHECK(rudder_lift_per_angle(1000, 3.0, 0.001, 1.5) < 0.0);
        CHECK(rudder_lift_per_angle(1000, 3.0, 0.001, 3.0) ==
              doctest::Approx(4 * rudder_lift_per_angle(1000, 3.0, 0.001, 1.5)));
    }

    TEST_CASE("appendage preconditions")
    {
        CHECK_THROWS_AS(make_rudder(-10, 0.2), HydroError);
        CHECK_THROWS_AS(make_rudder(10, -0.2), HydroError);
        CHECK_THROWS_AS(make_fin(-10, -0.2), HydroError);
        CHECK_THROWS_AS(center_of_rotation(HydroConfig{}, 1.0), HydroError);
        HydroConfig bad;
        bad.mass = -1;
        CHECK_THROWS_AS(bad.validate(), HydroError);
    }

    TEST_CASE("speed scaling")
    {
        const auto sc = test::shipped();
        const auto& b = sc.vehicle.bare;
        const auto half = at_speed(b, 0.5 * b.ref_speed);
        CHECK(half.y_v == doctest::Approx(0.5 * b.y_v));
        CHECK(half.n_r == doctest::Approx(0.5 * b.n_r));
        CHECK(half.mass == b.mass);
    }
}

#include <benchmark/benchmark.h>

#include <random>

#include "mauv/gateway.hpp"
#include "mauv/harness.hpp"
#include "mauv/hydromath.hpp"
#include "mauv/plant.hpp"

using namespace mauv;

namespace {

const harness::Scenario& shipped()
{
    static const auto sc = harness::load_scenario(std::string(MAUV_DATA_DIR) + "/config/default.ini");
    return sc;
}

void BM_StabilityIndex(benchmark::State& state)
{
    const auto& v = shipped().vehicle;
    const double U = v.bare.ref_speed;
    for (auto _ : state) {
        const auto comp = hydro::with_fin(hydro::with_rudder(v.bare, v.rudder, U), v.fin, 1.0, U);
        benchmark::DoNotOptimize(hydro::stability_index(comp, U));
    }
}
BENCHMARK(BM_StabilityIndex);

void BM_PlantStep(benchmark::State& state)
{
    const auto& sc = shipped();
    plant::BodyState s;
    s.u = 1.5;
    s.z = 2.0;
    plant::ActuatorSet act;
    act.thrust_pct = 60;
    act.uppr_rudd = act.lowr_rudd = 0.05;
    for (auto _ : state) {
        s = plant::step(s, act, sc.env, sc.vehicle, 0.05);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_PlantStep);

void BM_Encode(benchmark::State& state)
{
    const gateway::WireMessage msg{12.5, "NAV_X", 123.456, "hydroman"};
    for (auto _ : state)
        benchmark::DoNotOptimize(gateway::encode(msg));
}
BENCHMARK(BM_Encode);

void BM_Decode(benchmark::State& state)
{
    const auto bytes = gateway::encode({12.5, "NAV_X", 123.456, "hydroman"});
    for (auto _ : state)
        benchmark::DoNotOptimize(gateway::decode(bytes));
}
BENCHMARK(BM_Decode);

void BM_RlsUpdate(benchmark::State& state)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    auto p = nav::ModelParams::make();
    for (auto _ : state) {
        nav::ModelRegressors x{1 + u(rng), u(rng), u(rng), u(rng), 2 + u(rng), u(rng), u(rng), u(rng)};
        p = nav::rls_update(p, x, nav::Vec3(u(rng), u(rng), u(rng)));
    }
    benchmark::DoNotOptimize(p);
}
BENCHMARK(BM_RlsUpdate);

void BM_NavTick(benchmark::State& state)
{
    const auto& sc = shipped();
    nav::NavigationEngine engine(sc.nav, sc.model);
    plant::SensorSuite sensors(1);
    plant::BodyState s;
    s.u = 1.5;
    s.z = 2.0;
    plant::ActuatorSet act;
    act.rpm = 1800;
    double t = 0.0;
    for (auto _ : state) {
        for (const auto& m : sensors.sense(s, act, sc.env, t))
            engine.push(m);
        benchmark::DoNotOptimize(engine.tick(t, 0.05));
        s.x += 0.075;
        t += 0.05;
    }
}
BENCHMARK(BM_NavTick);

void BM_ZigzagRun(benchmark::State& state)
{
    auto sc = shipped();
    sc.nav_mode = state.range(0) ? harness::NavMode::hydroman : harness::NavMode::truth;
    for (auto _ : state)
        benchmark::DoNotOptimize(harness::run(sc));
    state.SetLabel(state.range(0) ? "hydroman nav" : "truth nav");
}
BENCHMARK(BM_ZigzagRun)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();

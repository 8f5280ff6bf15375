#include "doctest.h"

#include <chrono>
#include <random>
#include <thread>

#include "mauv/gateway.hpp"
#include "support.hpp"

using namespace mauv;
using namespace mauv::gateway;
using namespace std::chrono_literals;

namespace {

std::optional<WireMessage> receive_key(GatewayClient& c, const std::string& key)
{
    for (int i = 0; i < 50; ++i) {
        auto m = c.receive(200ms);
        if (m && m->key == key)
            return m;
    }
    return std::nullopt;
}

} // namespace

TEST_SUITE("gateway")
{
    TEST_CASE("codec")
    {
        const WireMessage zero{0.0, "NAV_X", 0.0, ""};
        CHECK(decode(encode(zero)) == zero);

        const WireMessage text{12.5, "STATUS", std::string("ok\0bin", 6), "helm"};
        CHECK(decode(encode(text)) == text);
        const WireMessage blob{-1.0, "RAW", Bytes{0, 1, 2, 255}, "x"};
        CHECK(decode(encode(blob)) == blob);

        CHECK_THROWS_AS(encode({0.0, "", 1.0, ""}), CodecError);
        CHECK_THROWS_AS(encode({0.0, std::string(300, 'k'), 1.0, ""}), CodecError);

        // Wire layout of a double message.
        const auto b = encode({1.0, "K", 2.0, "s"});
        REQUIRE(b.size() == 4 + 1 + 1 + 8 + 1 + 1 + 2 + 1 + 4 + 8);
        CHECK(b[3] == b.size() - 4);
        CHECK(b[4] == kWireVersion);
        CHECK(b[5] == 1);

        auto trailing = encode(zero);
        trailing.push_back(0);
        CHECK_THROWS_AS(decode(trailing), CodecError);
        const auto zero_bytes = encode(zero);
        const auto partial = decode_frame(std::span(zero_bytes).first(5));
        CHECK(partial.status == DecodeStatus::incomplete);
    }

    TEST_CASE("stream decoder")
    {
        std::vector<WireMessage> msgs;
        Bytes stream;
        for (int i = 0; i < 20; ++i) {
            msgs.push_back({static_cast<double>(i), "K" + std::to_string(i), static_cast<double>(i * i), "s"});
            const auto b = encode(msgs.back());
            stream.insert(stream.end(), b.begin(), b.end());
        }
        // Feed in awkward chunks.
        FrameDecoder dec;
        std::vector<WireMessage> got;
        std::mt19937_64 rng(14);
        for (std::size_t pos = 0; pos < stream.size();) {
            const std::size_t n = std::min<std::size_t>(1 + rng() % 7, stream.size() - pos);
            dec.feed(std::span(stream).subspan(pos, n));
            pos += n;
            while (auto m = dec.next())
                got.push_back(*m);
        }
        CHECK(got == msgs);
        CHECK_FALSE(dec.failed());

        FrameDecoder bad;
        const Bytes junk{0, 0, 0, 3, 9, 9, 9};
        bad.feed(junk);
        CHECK_FALSE(bad.next().has_value());
        CHECK(bad.failed());
    }

    TEST_CASE("fuzzed input never decodes as garbage")
    {
        std::mt19937_64 rng(15);
        for (int i = 0; i < 20000; ++i) {
            Bytes b(rng() % 64);
            for (auto& x : b)
                x = static_cast<std::uint8_t>(rng());
            const auto r = decode_frame(b);
            if (r.status == DecodeStatus::ok) {
                // Anything accepted must re-encode to the bytes it came from.
                CHECK(encode(r.message) == Bytes(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(r.consumed)));
            }
        }
    }

    TEST_CASE("key patterns")
    {
        CHECK(key_matches("NAV_X", "NAV_X"));
        CHECK_FALSE(key_matches("NAV_X", "NAV_XY"));
        CHECK(key_matches("NAV_*", "NAV_DEPTH"));
        CHECK_FALSE(key_matches("NAV_*", "SENSOR_DEPTH"));
        CHECK(key_matches("*", "ANY"));
    }

    TEST_CASE("bus fan-out skips the origin")
    {
        Bus bus;
        auto a = bus.subscribe({"NAV_*"});
        auto b = bus.subscribe({"NAV_X"});
        auto c = bus.subscribe({"SENSOR_*"});
        bus.publish({1, "NAV_X", 1.0, "t"});
        bus.publish({1, "NAV_Y", 2.0, "t"}, a->id());
        CHECK(a->queue().size() == 1);
        CHECK(b->queue().size() == 1);
        CHECK(c->queue().size() == 0);

        auto tiny = bus.subscribe({"*"}, 1);
        bus.publish({1, "A", 1.0, ""});
        bus.publish({1, "B", 1.0, ""});
        CHECK(tiny->overflowed());
    }

    TEST_CASE("sensor translation round trip")
    {
        const std::vector<Measurement> ms{DepthMeas{2.5, 1.0}, ImuMeas{0.1, 0.2, 0.3, 0.01, 0.02, 0.03, 1.0},
                                          GpsFix{3, 4, 1.0}, LblFix{5, 6, 0.5, 1.0}, RpmMeas{900, 1.0},
                                          DvlMeas{1.0, 0.1, 0.0, 1.0, DvlFrame::body}};
        SensorTranslator tr;
        std::vector<Measurement> back;
        for (const auto& m : ms)
            for (const auto& msg : sensor_messages(m))
                if (auto got = tr.accept(msg))
                    back.push_back(*got);
        REQUIRE(back.size() == ms.size());
        CHECK(std::get<DepthMeas>(back[0]).z == 2.5);
        CHECK(std::get<ImuMeas>(back[1]).psi == 0.3);
        CHECK(std::get<LblFix>(back[3]).t_n == 0.5);
        CHECK(std::get<LblFix>(back[3]).t_rx == 1.0);
        CHECK(std::get<RpmMeas>(back[4]).rpm == 900);
        CHECK(std::get<DvlMeas>(back[5]).vy == 0.1);

        tr.accept({1, "SENSOR_UNKNOWN", 1.0, ""});
        tr.accept({1, "SENSOR_DEPTH", std::string("deep"), ""});
        CHECK(tr.unknown() == 1);
        CHECK(tr.malformed() == 1);
    }

    TEST_CASE("tcp fan-out, routing and fault isolation")
    {
        Bus bus;
        GatewayServer server(bus, 0);
        server.start();
        REQUIRE(server.port() != 0);

        GatewayClient a("127.0.0.1", server.port(), "a");
        GatewayClient b("127.0.0.1", server.port(), "b");
        a.subscribe("NAV_*");
        b.subscribe("NAV_*");

        helm::PayloadIngest ingest({true, false, 5.0}, helm::SafetyEnvelope{});
        PayloadBridge payload(bus, ingest);
        GatewayClient pilot("127.0.0.1", server.port(), "payload");
        std::this_thread::sleep_for(150ms);

        bus.publish({1.0, "NAV_X", 7.0, "hydroman"});
        const auto ra = receive_key(a, "NAV_X");
        const auto rb = receive_key(b, "NAV_X");
        REQUIRE(ra);
        REQUIRE(rb);
        CHECK(std::get<double>(ra->value) == 7.0);
        CHECK(std::get<double>(rb->value) == 7.0);

        pilot.publish("DESIRED_HEADING", 90.0, 1.0);
        int accepted = 0;
        for (int i = 0; i < 50 && accepted == 0; ++i) {
            std::this_thread::sleep_for(20ms);
            accepted += payload.pump();
        }
        CHECK(accepted == 1);
        CHECK(ingest.desired(1.5, {}).heading == 90.0);

        // A client that vanishes mid-frame leaves the others untouched.
        {
            GatewayClient rogue("127.0.0.1", server.port(), "rogue");
            const auto frame = encode({1.0, "NAV_X", 1.0, "rogue"});
            rogue.send_raw(std::span(frame).first(frame.size() / 2));
            rogue.close();
        }
        std::this_thread::sleep_for(100ms);
        bus.publish({2.0, "NAV_X", 8.0, "hydroman"});
        const auto again = receive_key(a, "NAV_X");
        REQUIRE(again);
        CHECK(std::get<double>(again->value) == 8.0);
        CHECK(receive_key(b, "NAV_X").has_value());

        a.close();
        b.close();
        pilot.close();
        server.stop();
    }

    TEST_CASE("nav watchdog published over the bridge")
    {
        const auto sc = test::shipped();
        Bus bus;
        nav::NavigationEngine engine(sc.nav, sc.model);
        HydromanBridge bridge(bus, engine);
        auto sink = bus.subscribe({"NAV_STATUS"});
        bridge.tick(10.0, 0.05);
        std::optional<WireMessage> status;
        while (auto m = sink->queue().try_pop())
            status = *m;
        REQUIRE(status);
        CHECK(std::get<std::string>(status->value) == "DEGRADED");
    }
}

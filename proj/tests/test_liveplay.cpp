#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>

#include <gtest/gtest.h>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mirror/experiments.hpp"
#include "mirror/liveplay.hpp"
#include "mirror/liveplay_server.hpp"

using namespace mirror;
using namespace mirror::live;
namespace fs = std::filesystem;

namespace {

SessionConfig test_config(double max_duration = 600.0) {
    SessionConfig cfg;
    SynthOptions o;
    o.seed = 77;
    cfg.vp_signature = synth_signature(o, "vp");
    cfg.max_duration = max_duration;
    return cfg;
}

HpSource sinusoid(double amp, double freq, double until) {
    return [=](double t) -> std::optional<double> {
        if (t >= until - 1e-9) return std::nullopt;
        return amp * std::sin(2 * std::numbers::pi * freq * t);
    };
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mirror_live_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Session, StaysAtRestWithoutInput) {
    SessionConfig cfg = test_config();
    cfg.vp_signature = Signature{{0.0, 1.0}, {0.0, 0.0}, "still"};
    SessionState s = start_session(cfg);
    for (int i = 0; i < 100; ++i) EXPECT_LT(std::abs(session_tick(s, 0.0)), 1e-6);
    EXPECT_EQ(s.t.size(), 100u);
    EXPECT_EQ(s.faults(), 0);
}

TEST(Session, FollowsSinusoidalPartnerWithinDomain) {
    const SessionState s = run_headless(test_config(), sinusoid(0.4, 0.3, 60.0));
    ASSERT_EQ(s.t.size(), 1500u);
    EXPECT_EQ(s.phase, SessionPhase::finished);
    double gap = 0.0;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        ASSERT_TRUE(std::isfinite(s.vp_x[i]) && std::isfinite(s.u[i]));
        ASSERT_GE(s.vp_x[i], -0.5);
        ASSERT_LE(s.vp_x[i], 0.5);
        gap = std::max(gap, std::abs(s.vp_x[i] - s.hp[i]));
    }
    EXPECT_LT(gap, 1.0);
    // Tracking should be much better than not moving at all.
    EXPECT_LT(session_report(s).e_p, rms_position_error(s.hp, std::vector<double>(s.hp.size(), 0.0), 1.0));
}

TEST(Session, IsDeterministic) {
    const auto a = run_headless(test_config(), sinusoid(0.3, 0.5, 15.0));
    const auto b = run_headless(test_config(), sinusoid(0.3, 0.5, 15.0));
    EXPECT_EQ(a.vp_x, b.vp_x);
    EXPECT_EQ(a.u, b.u);
}

TEST(Session, ClampsInputAndOutput) {
    SessionState s = start_session(test_config());
    for (int i = 0; i < 200; ++i) {
        const double x = session_tick(s, 3.0);
        EXPECT_LE(x, 0.5);
    }
    for (double h : s.hp) EXPECT_EQ(h, 0.5);
    EXPECT_THROW(session_tick(s, std::nan("")), InvalidArgument);
}

TEST(Session, StopsAtMaximumDuration) {
    const auto s = run_headless(test_config(2.0), sinusoid(0.2, 0.3, 100.0));
    EXPECT_EQ(s.t.size(), 50u);
    EXPECT_NEAR(s.elapsed(), 2.0, 1e-12);
    SessionState done = s;
    EXPECT_THROW(session_tick(done, 0.0), InvalidArgument);
}

TEST(Session, MatchesBatchRunAgainstSameInput) {
    const SessionConfig cfg = test_config();
    const auto s = run_headless(cfg, sinusoid(0.3, 0.4, 20.0));
    const TrialRecord rec = run_vp_hp_trial(cfg.player_options(), cfg.vp_signature, s.hp);
    ASSERT_EQ(rec.x1.size(), s.vp_x.size());
    for (std::size_t i = 0; i < rec.x1.size(); ++i) {
        ASSERT_LT(std::abs(rec.x1[i]), 0.5);  // no clamping in play
        ASSERT_EQ(rec.x1[i], s.vp_x[i]);
        ASSERT_EQ(rec.u1[i], s.u[i]);
    }
}

// ---- report ------------------------------------------------------------------------------

TEST(Report, RequiresTenSeconds) {
    auto s = run_headless(test_config(), sinusoid(0.3, 0.4, 9.0));
    EXPECT_THROW(session_report(s), TooShort);
    SessionState running = start_session(test_config());
    EXPECT_THROW(session_report(running), InvalidArgument);
}

TEST(Report, IdenticalTracesHaveZeroError) {
    auto s = run_headless(test_config(), sinusoid(0.3, 0.4, 12.0));
    s.hp = s.vp_x;
    const auto a = session_report(s);
    EXPECT_EQ(a.e_p, 0.0);
    EXPECT_EQ(a.emd_nu1_nu2, 0.0);
    EXPECT_EQ(a.mds_labels, (std::vector<std::string>{"sigma_vp", "nu", "mu"}));
}

TEST(Report, AvatarVelocitiesMoveTowardsPartner) {
    SessionConfig cfg = test_config();
    cfg.hp_signature = Signature{{0.0, 1.0}, {0.0, 0.0}, "hp"};
    const auto s = run_headless(cfg, sinusoid(0.4, 0.3, 60.0));
    const auto a = session_report(s);
    EXPECT_EQ(a.mds_labels, (std::vector<std::string>{"sigma_vp", "sigma_hp", "nu", "mu"}));
    // mu: HP velocities; nu: VP velocities; sigma_vp: the VP's own signature.
    const auto mu = velocity_density(velocity_from_positions(s.t, s.hp, 1.0 / cfg.T).v);
    const auto sigma = velocity_density(cfg.vp_signature.v);
    EXPECT_LT(a.emd_nu1_nu2, emd(mu, sigma));
}

// ---- replay ------------------------------------------------------------------------------

TEST(Replay, ConstantRecording) {
    const auto dir = scratch("const");
    write_positions_csv((dir / "hp.csv").string(), {{0.0, 5.0, 12.0}, {0.2, 0.2, 0.2}});
    const auto src = replay_hp((dir / "hp.csv").string());
    const auto s = run_headless(test_config(), std::cref(src));
    EXPECT_EQ(s.t.size(), 301u);  // ticks at 0, 0.04, ..., 12.0
    for (double h : s.hp) EXPECT_EQ(h, 0.2);
    EXPECT_NO_THROW(session_report(s));
}

TEST(Replay, ResamplesHundredHertzToTickRate) {
    PositionRecording rec;
    for (int i = 0; i <= 1500; ++i) {
        rec.t.push_back(i / 100.0);
        rec.x.push_back(0.3 * std::sin(0.7 * rec.t.back()));
    }
    const auto dir = scratch("resample");
    write_positions_csv((dir / "hp.csv").string(), rec);
    const auto src = replay_hp((dir / "hp.csv").string());
    const auto s = run_headless(test_config(), std::cref(src));
    ASSERT_EQ(s.t.size(), 376u);
    for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.hp[i], 0.3 * std::sin(0.7 * s.t[i]), 1e-4);
}

TEST(Replay, EmptyAndInvalidRecordings) {
    const auto dir = scratch("empty");
    write_positions_csv((dir / "hp.csv").string(), {});
    const auto src = replay_hp((dir / "hp.csv").string());
    const auto s = run_headless(test_config(), std::cref(src));
    EXPECT_TRUE(s.t.empty());
    EXPECT_THROW(session_report(s), TooShort);

    std::ofstream((dir / "bad.csv").string()) << "t,x\n0,0.1\n1,nan\n";
    try {
        replay_hp((dir / "bad.csv").string());
        FAIL();
    } catch (const SchemaViolation& e) {
        EXPECT_NE(e.field().find("bad.csv"), std::string::npos);
    }
}

TEST(TickTiming, StatsAreOrdered) {
    const auto s = run_headless(test_config(), sinusoid(0.3, 0.4, 10.0));
    const auto st = tick_stats(s);
    EXPECT_GT(st.mean, 0.0);
    EXPECT_LE(st.mean, st.max);
    EXPECT_LE(st.p99, st.max);
}

// ---- protocol ----------------------------------------------------------------------------

TEST(Protocol, ParsesClientMessages) {
    using namespace protocol;
    EXPECT_EQ(std::get<Hello>(parse_client(R"({"type":"hello"})")).config_preset, "default");
    EXPECT_EQ(std::get<Hello>(parse_client(R"({"type":"hello","config_preset":"dyad4.vp1"})")).config_preset,
              "dyad4.vp1");
    const auto hp = std::get<Hp>(parse_client(R"({"type":"hp","t":1.5,"x":-0.25})"));
    EXPECT_EQ(hp.t, 1.5);
    EXPECT_EQ(hp.x, -0.25);
    EXPECT_TRUE(std::holds_alternative<Stop>(parse_client(R"({"type":"stop"})")));
    for (const char* bad : {"not json", "[1]", R"({"t":1})", R"({"type":"dance"})", R"({"type":"hp","t":1})",
                            R"({"type":"hp","t":1,"x":"a"})"})
        EXPECT_THROW(parse_client(bad), SchemaViolation) << bad;
}

TEST(Protocol, ServerFrames) {
    using nlohmann::json;
    const auto r = json::parse(protocol::ready(0.04, {-0.5, 0.5}));
    EXPECT_EQ(r["type"], "ready");
    EXPECT_EQ(r["T"], 0.04);
    EXPECT_EQ(r["domain"], json::array({-0.5, 0.5}));
    const auto v = json::parse(protocol::vp(1.25, 0.1));
    EXPECT_EQ(v["type"], "vp");
    EXPECT_EQ(v["t"], 1.25);
    EXPECT_EQ(v["x"], 0.1);
    EXPECT_EQ(json::parse(protocol::error("too_short"))["code"], "too_short");
}

TEST(LiveSessionLogic, FullExchange) {
    LiveSession live(test_config());
    EXPECT_EQ(nlohmann::json::parse(live.on_message(R"({"type":"hp","t":0,"x":0.1})").at(0))["code"], "not_running");
    EXPECT_EQ(nlohmann::json::parse(live.on_message(R"({"type":"hello","config_preset":"nope"})").at(0))["code"],
              "unknown_preset");
    EXPECT_EQ(nlohmann::json::parse(live.on_message("{bad").at(0))["code"], "schema_violation");
    EXPECT_EQ(nlohmann::json::parse(live.on_message(R"({"type":"hello"})").at(0))["type"], "ready");
    EXPECT_TRUE(live.running());
    EXPECT_EQ(nlohmann::json::parse(live.on_message(R"({"type":"hello"})").at(0))["code"], "already_running");
    for (int i = 0; i < 300; ++i) {
        live.on_message(nlohmann::json{{"type", "hp"}, {"t", i * 0.04}, {"x", 0.3 * std::sin(i * 0.04)}}.dump());
        const auto out = live.on_tick();
        ASSERT_EQ(out.size(), 1u);
        const auto f = nlohmann::json::parse(out[0]);
        EXPECT_NEAR(f["t"].get<double>(), (i + 1) * 0.04, 1e-12);
    }
    const auto rep = live.on_message(R"({"type":"stop"})");
    ASSERT_EQ(rep.size(), 1u);
    const auto j = nlohmann::json::parse(rep[0]);
    EXPECT_EQ(j["type"], "report");
    EXPECT_TRUE(j.contains("e_p"));
    EXPECT_TRUE(live.on_tick().empty());
    EXPECT_TRUE(live.on_message(R"({"type":"stop"})").empty());
}

TEST(LiveSessionLogic, ShortSessionReportsError) {
    LiveSession live(test_config());
    live.on_message(R"({"type":"hello","config_preset":"dyad5.vp1"})");
    EXPECT_EQ(live.state()->config.weights.theta_p, find_preset("dyad5.vp1")->theta_p);
    for (int i = 0; i < 10; ++i) live.on_tick();
    EXPECT_EQ(nlohmann::json::parse(live.on_message(R"({"type":"stop"})").at(0))["code"], "too_short");
}

TEST(LiveSessionLogic, ReportIsSentWhenMaximumDurationReached) {
    LiveSession live(test_config(10.0));
    live.on_message(R"({"type":"hello"})");
    std::vector<std::string> last;
    int ticks = 0;
    while (live.running()) {
        last = live.on_tick();
        ++ticks;
    }
    EXPECT_EQ(ticks, 250);
    ASSERT_EQ(last.size(), 2u);
    EXPECT_EQ(nlohmann::json::parse(last[1])["type"], "report");
}

// ---- WebSocket transport -------------------------------------------------------------------

TEST(Server, WebSocketRoundTrip) {
    namespace beast = boost::beast;
    namespace net = boost::asio;
    using nlohmann::json;

    net::io_context ioc;
    ServerOptions opt;
    opt.port = 0;
    opt.session = test_config();
    opt.tick_period = std::chrono::milliseconds(1);
    LiveServer server(ioc, opt);
    server.start();
    std::thread runner([&] { ioc.run(); });

    {
        net::io_context cioc;
        net::ip::tcp::socket sock(cioc);
        sock.connect({net::ip::make_address("127.0.0.1"), server.port()});
        beast::websocket::stream<net::ip::tcp::socket> ws(std::move(sock));
        ws.handshake("127.0.0.1", "/");
        ws.text(true);
        auto read = [&] {
            beast::flat_buffer buf;
            ws.read(buf);
            return json::parse(beast::buffers_to_string(buf.data()));
        };

        ws.write(net::buffer(std::string(R"({"type":"hello"})")));
        const json ready = read();
        EXPECT_EQ(ready["type"], "ready");
        EXPECT_EQ(ready["T"], 0.04);

        double last_t = 0.0;
        int frames = 0;
        while (last_t < 10.5) {
            const json f = read();
            ASSERT_EQ(f["type"], "vp") << f.dump();
            const double t = f["t"].get<double>();
            EXPECT_NEAR(t, last_t + 0.04, 1e-9);
            EXPECT_LE(std::abs(f["x"].get<double>()), 0.5);
            last_t = t;
            ++frames;
            ws.write(net::buffer(json{{"type", "hp"}, {"t", t}, {"x", 0.3 * std::sin(t)}}.dump()));
        }
        EXPECT_GE(frames, 263);
        ws.write(net::buffer(std::string(R"({"type":"stop"})")));
        json f;
        do f = read();
        while (f["type"] == "vp");
        EXPECT_EQ(f["type"], "report") << f.dump();
        EXPECT_TRUE(f.contains("phase_pdf"));
        ws.close(beast::websocket::close_code::normal);
    }

    server.stop();
    ioc.stop();
    runner.join();
}

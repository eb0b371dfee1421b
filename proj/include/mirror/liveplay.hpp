#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mirror/experiments.hpp"
#include "mirror/io.hpp"
#include "mirror/presets.hpp"
#include "mirror/signature.hpp"
#include "mirror/virtual_player.hpp"

namespace mirror::live {

struct SessionConfig {
    HkbParams vp{};
    CouplingWeights weights = kAvatarWeights;
    double T = 0.04;
    Signature vp_signature;
    std::optional<Signature> hp_signature;
    std::array<double, 2> domain{-0.5, 0.5};
    double max_duration = 600.0;
    int n_sub = 10;
    SolverOptions solver{};

    void validate() const {
        weights.validate();
        if (!vp.valid()) throw InvalidArgument("invalid HKB parameters");
        if (!(T > 0.0)) throw InvalidArgument("T must be positive");
        if (!(domain[0] < domain[1])) throw InvalidArgument("position domain must be nonempty");
        if (!(max_duration > 0.0)) throw InvalidArgument("max_duration must be positive");
        vp_signature.validate();
        if (hp_signature) hp_signature->validate();
    }

    VirtualPlayer::Options player_options() const {
        VirtualPlayer::Options o;
        o.dynamics = vp;
        o.weights = weights;
        o.T = T;
        o.n_sub = n_sub;
        o.solver = solver;
        return o;
    }
};

enum class SessionPhase { idle, running, finished };

/// One live session. Buffers hold one entry per tick, taken at the tick's
/// start time: the (clamped) HP input and the VP position shown at that time.
struct SessionState {
    SessionConfig config;
    SessionPhase phase = SessionPhase::idle;
    std::optional<VirtualPlayer> vp;
    std::vector<double> t;
    std::vector<double> hp;
    std::vector<double> vp_x;
    std::vector<double> u;
    std::vector<double> tick_seconds;  ///< wall-clock compute time per tick

    long tick() const { return vp ? vp->tick() : 0; }
    int faults() const { return vp ? vp->faults() : 0; }
    double elapsed() const { return static_cast<double>(tick()) * config.T; }
};

inline double clamp_to(const std::array<double, 2>& domain, double x) { return std::clamp(x, domain[0], domain[1]); }

inline SessionState start_session(SessionConfig cfg) {
    cfg.validate();
    SessionState s;
    s.config = std::move(cfg);
    // Captured by value: the state may be moved after construction.
    s.vp.emplace(s.config.player_options(),
                 [sig = s.config.vp_signature](double t) { return signature_at(sig, t); });
    s.phase = SessionPhase::running;
    return s;
}

/// Advances the session by one window given the latest HP position; returns
/// the VP position to emit, i.e. the clamped position at the next tick time.
inline double session_tick(SessionState& s, double hp_x) {
    if (s.phase != SessionPhase::running) throw InvalidArgument("session_tick: session is not running");
    if (!std::isfinite(hp_x)) throw InvalidArgument("session_tick: HP position must be finite");
    const auto started = std::chrono::steady_clock::now();
    const double hp = clamp_to(s.config.domain, hp_x);
    s.t.push_back(s.vp->time());
    s.hp.push_back(hp);
    s.vp_x.push_back(clamp_to(s.config.domain, s.vp->state().x));
    const WindowSolution& sol = s.vp->step(hp);
    s.u.push_back(sol.u.front());
    const double out = clamp_to(s.config.domain, s.vp->state().x);
    s.tick_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (s.vp->time() >= s.config.max_duration - 1e-9 * s.config.T) s.phase = SessionPhase::finished;
    return out;
}

inline void finish_session(SessionState& s) {
    if (s.phase == SessionPhase::running) s.phase = SessionPhase::finished;
}

/// Minimum session length accepted by `session_report`.
inline constexpr double kMinReportSeconds = 10.0;

/// Metrics of a finished session with the VP as player 1 and the HP as
/// player 2; MDS labels are sigma_vp, sigma_hp (if known), nu (VP), mu (HP).
inline TrialAnalysis session_report(const SessionState& s) {
    if (s.phase != SessionPhase::finished) throw InvalidArgument("session_report: session has not finished");
    if (s.elapsed() < kMinReportSeconds - 1e-9)
        throw TooShort("session_report: need at least 10 s of data, have " + std::to_string(s.elapsed()) + " s");
    AnalysisOptions opt;
    opt.range_length = s.config.domain[1] - s.config.domain[0];
    opt.labels = {"sigma_vp", "sigma_hp", "nu", "mu"};
    return analyze_traces(s.t, s.vp_x, s.hp, s.config.T, s.config.vp_signature,
                          s.config.hp_signature ? &*s.config.hp_signature : nullptr, opt);
}

// ---------------------------------------------------------------------------
// Scripted HP sources

/// HP positions from a `t,x` recording, resampled by linear interpolation.
/// The source ends after the last recorded time; an empty recording ends
/// immediately.
class ScriptedSource {
public:
    explicit ScriptedSource(PositionRecording rec) : rec_(std::move(rec)) {
        if (rec_.t.size() != rec_.x.size()) throw SchemaViolation("x", "column lengths differ");
        for (std::size_t i = 0; i < rec_.t.size(); ++i) {
            const std::string row = "row[" + std::to_string(i + 1) + "]";
            if (!std::isfinite(rec_.t[i]) || !std::isfinite(rec_.x[i])) throw SchemaViolation(row, "non-finite value");
            if (i > 0 && !(rec_.t[i] > rec_.t[i - 1])) throw SchemaViolation(row + ".t", "timestamps must increase");
        }
    }

    std::optional<double> operator()(double t) const {
        if (rec_.t.empty()) return std::nullopt;
        const double eps = 1e-9 * (1.0 + std::abs(t));
        if (t < rec_.t.front() - eps || t > rec_.t.back() + eps) return std::nullopt;
        if (t <= rec_.t.front()) return rec_.x.front();
        if (t >= rec_.t.back()) return rec_.x.back();
        const auto it = std::upper_bound(rec_.t.begin(), rec_.t.end(), t);
        const auto i = static_cast<std::size_t>(it - rec_.t.begin());
        const double t0 = rec_.t[i - 1], t1 = rec_.t[i];
        if (t == t0) return rec_.x[i - 1];
        const double a = (t - t0) / (t1 - t0);
        return rec_.x[i - 1] + a * (rec_.x[i] - rec_.x[i - 1]);
    }

    const PositionRecording& recording() const { return rec_; }

private:
    PositionRecording rec_;
};

inline ScriptedSource replay_hp(const std::string& path) {
    auto rec = read_positions_csv(path);
    try {
        return ScriptedSource(std::move(rec));
    } catch (const SchemaViolation& e) {
        throw SchemaViolation(path + "." + e.field(), e.message());
    }
}

using HpSource = std::function<std::optional<double>(double)>;

/// Runs a session without any transport: at each tick the source is sampled
/// at the tick time; the session ends when the source does, or at
/// `config.max_duration`.
inline SessionState run_headless(SessionConfig cfg, const HpSource& source) {
    SessionState s = start_session(std::move(cfg));
    while (s.phase == SessionPhase::running) {
        const auto x = source(s.elapsed());
        if (!x) break;
        session_tick(s, *x);
    }
    finish_session(s);
    return s;
}

struct TickStats {
    double mean = 0.0;
    double p99 = 0.0;
    double max = 0.0;
};

inline TickStats tick_stats(const SessionState& s) {
    TickStats out;
    if (s.tick_seconds.empty()) return out;
    std::vector<double> v = s.tick_seconds;
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double d : v) sum += d;
    out.mean = sum / static_cast<double>(v.size());
    out.p99 = sorted_quantile(v, 0.99);
    out.max = v.back();
    return out;
}

// ---------------------------------------------------------------------------
// Wire protocol: one JSON object per WebSocket text frame.

namespace protocol {

using json = nlohmann::json;

struct Hello {
    std::string config_preset = "default";
};
struct Hp {
    double t = 0.0;
    double x = 0.0;
};
struct Stop {};

using ClientMessage = std::variant<Hello, Hp, Stop>;

inline ClientMessage parse_client(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw SchemaViolation("", "message is not valid JSON");
    }
    if (!j.is_object()) throw SchemaViolation("", "message must be a JSON object");
    const auto type_it = j.find("type");
    if (type_it == j.end() || !type_it->is_string()) throw SchemaViolation("type", "missing message type");
    const std::string type = type_it->get<std::string>();
    if (type == "hello") {
        Hello h;
        if (j.contains("config_preset")) {
            if (!j["config_preset"].is_string()) throw SchemaViolation("config_preset", "expected a string");
            h.config_preset = j["config_preset"].get<std::string>();
        }
        return h;
    }
    if (type == "hp") {
        Hp h;
        h.t = io::detail::number(j, "t", "");
        h.x = io::detail::number(j, "x", "");
        if (!std::isfinite(h.t) || !std::isfinite(h.x)) throw SchemaViolation("x", "must be finite");
        return h;
    }
    if (type == "stop") return Stop{};
    throw SchemaViolation("type", "unknown message type '" + type + "'");
}

inline std::string ready(double T, const std::array<double, 2>& domain) {
    return json{{"type", "ready"}, {"T", T}, {"domain", domain}}.dump();
}

inline std::string vp(double t, double x) { return json{{"type", "vp"}, {"t", t}, {"x", x}}.dump(); }

inline std::string report(const TrialAnalysis& a) {
    json j = io::to_json(a);
    j["type"] = "report";
    return j.dump();
}

inline std::string error(std::string_view code) { return json{{"type", "error"}, {"code", code}}.dump(); }

}  // namespace protocol

/// Transport-independent session driver: feed it incoming frames and wall
/// clock ticks; it returns the frames to send back. HP samples are held, and
/// each tick consumes the most recent one (the last value is reused when no
/// new sample arrived).
class LiveSession {
public:
    explicit LiveSession(SessionConfig base) : base_(std::move(base)) { base_.validate(); }

    std::vector<std::string> on_message(std::string_view text) {
        protocol::ClientMessage msg;
        try {
            msg = protocol::parse_client(text);
        } catch (const SchemaViolation&) {
            return {protocol::error("schema_violation")};
        }
        if (const auto* h = std::get_if<protocol::Hello>(&msg)) {
            if (state_ && state_->phase == SessionPhase::running) return {protocol::error("already_running")};
            const auto w = find_preset(h->config_preset);
            if (!w) return {protocol::error("unknown_preset")};
            SessionConfig cfg = base_;
            cfg.weights = *w;
            state_ = start_session(std::move(cfg));
            latest_hp_ = 0.0;
            reported_ = false;
            return {protocol::ready(state_->config.T, state_->config.domain)};
        }
        if (const auto* hp = std::get_if<protocol::Hp>(&msg)) {
            if (!running()) return {protocol::error("not_running")};
            latest_hp_ = hp->x;
            return {};
        }
        if (!state_ || state_->phase == SessionPhase::idle) return {protocol::error("not_running")};
        finish_session(*state_);
        return finalize();
    }

    /// Called once per sampling period while running.
    std::vector<std::string> on_tick() {
        if (!running()) return {};
        const double x = session_tick(*state_, latest_hp_);
        std::vector<std::string> out{protocol::vp(state_->elapsed(), x)};
        if (state_->phase == SessionPhase::finished) {
            auto rep = finalize();
            out.insert(out.end(), rep.begin(), rep.end());
        }
        return out;
    }

    bool running() const { return state_ && state_->phase == SessionPhase::running; }
    bool finished() const { return state_ && state_->phase == SessionPhase::finished; }
    const SessionState* state() const { return state_ ? &*state_ : nullptr; }
    double tick_period() const { return state_ ? state_->config.T : base_.T; }

private:
    std::vector<std::string> finalize() {
        if (reported_) return {};
        reported_ = true;
        try {
            return {protocol::report(session_report(*state_))};
        } catch (const Error& e) {
            return {protocol::error(e.code())};
        }
    }

    SessionConfig base_;
    std::optional<SessionState> state_;
    double latest_hp_ = 0.0;
    bool reported_ = false;
};

}  // namespace mirror::live

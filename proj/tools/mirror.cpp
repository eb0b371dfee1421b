// mirror — command-line front end: signatures, simulation, analysis, MDS and
// the live WebSocket server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <boost/asio/signal_set.hpp>

#include "mirror/experiments.hpp"
#include "mirror/io.hpp"
#include "mirror/liveplay.hpp"
#include "mirror/liveplay_server.hpp"
#include "mirror/metrics.hpp"
#include "mirror/signature.hpp"

namespace fs = std::filesystem;
using mirror::io::json;

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitSolver = 3;
constexpr double kMinConverged = 0.99;

void print_warnings(const mirror::io::Warnings& w) {
    for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

// ---- sign -------------------------------------------------------------------

struct SignArgs {
    mirror::SynthOptions synth;
    std::string positions;
    double rate = 100.0;
    std::string out;
};

int run_sign_synth(const SignArgs& a) {
    const auto sig = mirror::synth_signature(a.synth, fs::path(a.out).stem().string());
    mirror::write_signature_csv(a.out, sig);
    std::cerr << "wrote " << sig.t.size() << " samples to " << a.out << '\n';
    return 0;
}

int run_sign_convert(const SignArgs& a) {
    const auto rec = mirror::read_positions_csv(a.positions);
    mirror::Signature sig;
    try {
        sig = mirror::velocity_from_positions(rec.t, rec.x, a.rate, a.positions);
    } catch (const mirror::NonMonotonicTime& e) {
        throw mirror::SchemaViolation(a.positions + ".t", e.what());
    }
    mirror::write_signature_csv(a.out, sig);
    std::cerr << "wrote " << sig.t.size() << " samples to " << a.out << '\n';
    return 0;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::vector<std::string> configs;
    std::string out_dir = ".";
    std::vector<int> trial;  // {h, k} for a single trial
    unsigned workers = 1;
    std::string init;  // write a default config here and exit
    std::string preset1 = "dyad1.vp1";
    std::string preset2 = "dyad1.vp2";
    std::uint64_t seed = 1;
    double duration = 60.0;
};

int run_simulate(const SimulateArgs& a) {
    if (!a.init.empty()) {
        auto cfg = mirror::make_dyad_config(a.preset1, a.preset2, a.seed);
        cfg.duration = a.duration;
        mirror::io::write_json_file(a.init, mirror::io::to_json(cfg));
        std::cerr << "wrote default config to " << a.init << '\n';
        return 0;
    }
    if (a.configs.empty()) throw CLI::ValidationError("simulate", "need at least one config file (or --init)");
    fs::create_directories(a.out_dir);

    bool solver_failure = false;
    auto report = [&](const std::string& stem, const mirror::TrialRecord& rec) {
        const auto prefix = (fs::path(a.out_dir) / (stem + "_h" + std::to_string(rec.h) + "k" + std::to_string(rec.k)))
                                .string();
        mirror::io::write_trial(prefix, rec);
        std::cout << prefix << "  converged=" << rec.converged_fraction << '\n';
        if (rec.converged_fraction < kMinConverged) solver_failure = true;
    };

    for (const auto& path : a.configs) {
        mirror::io::Warnings warnings;
        const auto cfg = mirror::io::read_dyad_config(path, &warnings);
        print_warnings(warnings);
        const std::string stem = fs::path(path).stem().string();
        if (!a.trial.empty()) {
            report(stem, mirror::run_vp_vp_trial(cfg, a.trial[0], a.trial[1]));
            continue;
        }
        for (const auto& o : mirror::run_dyad_batch(cfg, a.workers)) {
            if (!o.record) {
                std::cerr << stem << " (" << o.h << "," << o.k << "): " << o.error << '\n';
                solver_failure = true;
                continue;
            }
            report(stem, *o.record);
        }
    }
    return solver_failure ? kExitSolver : 0;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
    std::vector<std::string> prefixes;
    std::string out;
};

int run_analyze(const AnalyzeArgs& a) {
    for (const auto& prefix : a.prefixes) {
        mirror::io::Warnings warnings;
        const auto rec = mirror::io::read_trial(prefix, &warnings);
        print_warnings(warnings);
        const auto analysis = mirror::analyze_trial(rec);
        const std::string out = (a.out.empty() || a.prefixes.size() > 1) ? prefix + ".analysis.json" : a.out;
        mirror::io::write_analysis(out, analysis);
        std::cout << out << "  e_p=" << analysis.e_p << "  emd(nu1,nu2)=" << analysis.emd_nu1_nu2 << '\n';
    }
    return 0;
}

// ---- mds --------------------------------------------------------------------

struct MdsArgs {
    std::string in;
    std::string out;
    int dim = 2;
};

// Input: either a bare square array, or {"labels": [...], "matrix": [[...]]}.
int run_mds(const MdsArgs& a) {
    const json j = mirror::io::read_json_file(a.in);
    const json& m = j.is_object() ? mirror::io::detail::require(j, "matrix", "") : j;
    if (!m.is_array()) throw mirror::SchemaViolation("matrix", "expected a square array of numbers");
    const auto n = static_cast<Eigen::Index>(m.size());
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::string path = "matrix[" + std::to_string(i) + "]";
        const auto row = mirror::io::detail::numbers(m[static_cast<std::size_t>(i)], path);
        if (static_cast<Eigen::Index>(row.size()) != n) throw mirror::SchemaViolation(path, "row length differs from row count");
        for (Eigen::Index k = 0; k < n; ++k) d(i, k) = row[static_cast<std::size_t>(k)];
    }
    mirror::DistanceMatrix dm = [&] {
        try {
            return mirror::DistanceMatrix(d);
        } catch (const mirror::InvalidArgument& e) {
            throw mirror::SchemaViolation("matrix", e.what());
        }
    }();
    const Eigen::MatrixXd x = mirror::classical_mds(dm, a.dim);
    json coords = json::array();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < x.cols(); ++k) row.push_back(x(i, k));
        coords.push_back(row);
    }
    json out{{"coords", coords}};
    if (j.is_object() && j.contains("labels")) out["labels"] = j["labels"];
    if (a.out.empty())
        std::cout << out.dump(2) << '\n';
    else
        mirror::io::write_json_file(a.out, out);
    return 0;
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string address = "127.0.0.1";
    unsigned short port = 8765;
    std::string vp_signature;
    std::string hp_signature;
    std::uint64_t seed = 1;
    double max_duration = 600.0;
    double tick_ms = 0.0;  // 0: real time (T)
};

int run_serve(const ServeArgs& a) {
    mirror::live::ServerOptions opt;
    opt.address = a.address;
    opt.port = a.port;
    if (a.vp_signature.empty()) {
        mirror::SynthOptions s;
        s.seed = a.seed;
        opt.session.vp_signature = mirror::synth_signature(s, "sigma_vp");
    } else {
        opt.session.vp_signature = mirror::read_signature_csv(a.vp_signature);
    }
    if (!a.hp_signature.empty()) opt.session.hp_signature = mirror::read_signature_csv(a.hp_signature);
    opt.session.max_duration = a.max_duration;
    if (a.tick_ms > 0.0)
        opt.tick_period = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double, std::milli>(a.tick_ms));
    opt.log = [](const std::string& s) { std::cerr << s << '\n'; };

    boost::asio::io_context ioc;
    mirror::live::LiveServer server(ioc, opt);
    server.start();
    boost::asio::signal_set signals(ioc, SIGINT, SIGTERM);
    signals.async_wait([&](const boost::system::error_code&, int) { ioc.stop(); });
    std::cerr << "listening on ws://" << a.address << ':' << server.port() << '\n';
    ioc.run();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mirror-game virtual players: signatures, simulation, analysis and live play"};
    app.require_subcommand(1);

    // sign
    SignArgs sign;
    auto* sign_cmd = app.add_subcommand("sign", "Synthesize or convert motor signatures");
    sign_cmd->require_subcommand(1);
    auto* synth_cmd = sign_cmd->add_subcommand("synth", "Synthesize a band-limited velocity signature");
    synth_cmd->add_option("--seed", sign.synth.seed, "RNG seed")->capture_default_str();
    synth_cmd->add_option("--duration", sign.synth.duration, "Length in seconds")->capture_default_str();
    synth_cmd->add_option("--rate", sign.synth.rate, "Sample rate in Hz")->capture_default_str();
    synth_cmd->add_option("--components", sign.synth.n_components, "Number of sinusoids")->capture_default_str();
    synth_cmd->add_option("--f-lo", sign.synth.f_lo, "Lowest frequency (Hz)")->capture_default_str();
    synth_cmd->add_option("--f-hi", sign.synth.f_hi, "Highest frequency (Hz)")->capture_default_str();
    synth_cmd->add_option("--amplitude", sign.synth.amp_scale, "Sum of component amplitudes")->capture_default_str();
    synth_cmd->add_option("-o,--out", sign.out, "Output t,v CSV")->required();
    auto* convert_cmd = sign_cmd->add_subcommand("convert", "Velocity signature from a t,x position recording");
    convert_cmd->add_option("positions", sign.positions, "Input t,x CSV")->required()->check(CLI::ExistingFile);
    convert_cmd->add_option("--rate", sign.rate, "Output sample rate in Hz")->capture_default_str();
    convert_cmd->add_option("-o,--out", sign.out, "Output t,v CSV")->required();

    // simulate
    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run VP-VP trials from dyad config files");
    sim_cmd->add_option("configs", sim.configs, "Dyad config JSON files (one dyad = 9 trials each)");
    sim_cmd->add_option("-o,--out-dir", sim.out_dir, "Directory for trial files")->capture_default_str();
    sim_cmd->add_option("--trial", sim.trial, "Run only signature pair H K")->expected(2);
    sim_cmd->add_option("-j,--workers", sim.workers, "Concurrent trials")->capture_default_str();
    sim_cmd->add_option("--init", sim.init, "Write a default config to this path and exit");
    sim_cmd->add_option("--preset1", sim.preset1, "Weight preset of player 1 (with --init)")->capture_default_str();
    sim_cmd->add_option("--preset2", sim.preset2, "Weight preset of player 2 (with --init)")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "Signature seed (with --init)")->capture_default_str();
    sim_cmd->add_option("--duration", sim.duration, "Trial length in seconds (with --init)")->capture_default_str();

    // analyze
    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze", "Metrics from trial files (<prefix>.csv + <prefix>.json)");
    an_cmd->add_option("prefixes", an.prefixes, "Trial file prefixes")->required();
    an_cmd->add_option("-o,--out", an.out, "Output JSON (single trial; default <prefix>.analysis.json)");

    // mds
    MdsArgs mds;
    auto* mds_cmd = app.add_subcommand("mds", "Classical MDS of a JSON distance matrix");
    mds_cmd->add_option("matrix", mds.in, "JSON file")->required()->check(CLI::ExistingFile);
    mds_cmd->add_option("-o,--out", mds.out, "Output JSON (default stdout)");
    mds_cmd->add_option("--dim", mds.dim, "Embedding dimension")->capture_default_str();

    // serve
    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Start the live-play WebSocket server");
    serve_cmd->add_option("--address", serve.address)->capture_default_str();
    serve_cmd->add_option("--port", serve.port)->capture_default_str();
    serve_cmd->add_option("--vp-signature", serve.vp_signature, "VP signature t,v CSV (default: synthetic)");
    serve_cmd->add_option("--hp-signature", serve.hp_signature, "HP signature t,v CSV for reports");
    serve_cmd->add_option("--seed", serve.seed, "Seed of the synthetic VP signature")->capture_default_str();
    serve_cmd->add_option("--max-duration", serve.max_duration, "Session limit in seconds")->capture_default_str();
    serve_cmd->add_option("--tick-ms", serve.tick_ms, "Wall-clock tick period override (ms)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return run_sign_synth(sign);
        if (convert_cmd->parsed()) return run_sign_convert(sign);
        if (sim_cmd->parsed()) return run_simulate(sim);
        if (an_cmd->parsed()) return run_analyze(an);
        if (mds_cmd->parsed()) return run_mds(mds);
        if (serve_cmd->parsed()) return run_serve(serve);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const mirror::SchemaViolation& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const mirror::Error& e) {
        std::cerr << e.code() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

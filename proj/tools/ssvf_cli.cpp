// Command-line driver: private, plaintext and oracle runs, attack replays,
// the small-scale verify suite, and multi-process TCP runs.

#include <spawn.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>
#include <spdlog/sinks/stdout_color_sinks.h>

#include "ssvf/ssvf.hpp"

extern char** environ;

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using namespace ssvf;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Flat key=value echo of every resolved parameter; `--config` reads it back.
std::string echo_config(const RunConfig& c) {
    std::ostringstream os;
    auto kv = [&](const char* k, const std::string& v) { os << k << "=" << v << "\n"; };
    auto q = [](const std::string& s) { return "\"" + s + "\""; };
    kv("mode", q(to_string(c.mode)));
    kv("seed", std::to_string(c.seed));
    kv("n", std::to_string(c.n));
    kv("slots", std::to_string(c.slots));
    kv("dt", format_double(c.dt));
    kv("delta", std::to_string(c.delta));
    kv("degree", std::to_string(c.degree));
    kv("modulus", std::to_string(c.modulus));
    kv("gamma", format_double(c.gamma));
    kv("beta", format_double(c.beta));
    kv("eps0", format_double(c.eps0));
    kv("max-iter", std::to_string(c.max_iter));
    kv("r-u", format_double(c.r_u));
    kv("d-lo", format_double(c.d_lo));
    kv("d-hi", format_double(c.d_hi));
    kv("peak-kw", format_double(c.peak_kw));
    kv("valley-kw", format_double(c.valley_kw));
    if (!c.baseline.empty()) kv("baseline", q(c.baseline));
    kv("nodes", q(to_string(c.nodes)));
    kv("transport", q(to_string(c.transport)));
    if (!c.addresses.empty()) kv("addresses", q(c.addresses));
    kv("adversary", q(c.adversary.str()));
    kv("target", std::to_string(c.target));
    kv("attack-round", std::to_string(c.attack_round));
    kv("sample-rounds", std::to_string(c.sample_rounds));
    return os.str();
}

json outcome_to_json(const AgentOutcome& o) {
    json j;
    j["id"] = o.id;
    j["stopped"] = o.stopped;
    j["sent_digest"] = hex64(o.sent_digest);
    j["eps"] = o.eps;
    j["aggregates"] = o.aggregates;
    json hist = json::array();
    for (const auto& s : o.history) hist.push_back({{"x", s.x}, {"lambda", s.lambda}});
    j["history"] = std::move(hist);
    return j;
}

AgentOutcome outcome_from_json(const json& j) {
    AgentOutcome o;
    o.id = j.at("id").get<AgentId>();
    o.stopped = j.at("stopped").get<bool>();
    o.sent_digest = std::stoull(j.at("sent_digest").get<std::string>(), nullptr, 16);
    o.eps = j.at("eps").get<std::vector<double>>();
    o.aggregates = j.at("aggregates").get<std::vector<Vec>>();
    for (const auto& s : j.at("history")) {
        o.history.push_back({s.at("x").get<Vec>(), s.at("lambda").get<double>()});
    }
    return o;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json summarize(const RunConfig& c, const Scenario& sc, const RunResult& r, double seconds,
               std::optional<std::uint64_t> digest) {
    json j;
    j["mode"] = to_string(c.mode);
    j["transport"] = to_string(c.transport);
    j["iterations"] = r.iterations;
    j["final_objective"] = r.objective.back();
    j["max_demand_residual_kwh"] = max_demand_residual(sc, r.agents);
    std::size_t stopped = 0;
    for (bool b : r.stopped) stopped += b ? 1 : 0;
    j["stopped_agents"] = stopped;
    j["wall_seconds"] = seconds;
    if (digest) j["transcript_digest"] = hex64(*digest);
    return j;
}

void print_summary(const json& s) {
    std::cout << "mode: " << s["mode"].get<std::string>() << " (" << s["transport"].get<std::string>()
              << ")\n"
              << "iterations: " << s["iterations"] << "\n"
              << "final objective: " << s["final_objective"] << "\n"
              << "max demand residual: " << s["max_demand_residual_kwh"] << " kWh\n"
              << "wall-clock: " << s["wall_seconds"] << " s\n";
    if (s.contains("transcript_digest")) {
        std::cout << "transcript digest: " << s["transcript_digest"].get<std::string>() << "\n";
    }
}

void emit_results(const RunConfig& c, const Scenario& sc, const RunResult& r, const fs::path& out,
                  std::vector<RoundMessage> messages, std::vector<SecretPolynomial> polys,
                  double seconds, std::optional<std::uint64_t> digest) {
    RunArtifacts a;
    a.scenario = &sc;
    a.result = &r;
    a.messages = std::move(messages);
    a.polynomials = std::move(polys);
    write_results(a, out);
    const json s = summarize(c, sc, r, seconds, digest);
    write_json(out / "summary.json", s);
    print_summary(s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- modes -------------------------------------------------------------------

int run_plain(const RunConfig& c, const fs::path& out) {
    const Scenario sc = build_scenario(c);
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r;
    if (c.mode == RunMode::plaintext) {
        r = solve_plaintext(sc, AggregationMode::exact);
    } else {
        const FixedPointCodec codec = build_codec(c);
        r = solve_plaintext(sc, AggregationMode::quantized, &codec);
    }
    emit_results(c, sc, r, out, {}, {}, seconds_since(t0), std::nullopt);
    return 0;
}

int run_private_inproc(const RunConfig& c, const fs::path& out) {
    const Scenario sc = build_scenario(c);
    const ProtocolConfig cfg = build_protocol_config(c);
    ProtocolOptions po;
    po.bus = build_bus_options(c);
    po.sample_rounds = c.sample_rounds;
    po.record_slot0_polynomials = true;
    const auto t0 = std::chrono::steady_clock::now();
    ProtocolRun run = run_protocol(sc, cfg, po);
    emit_results(c, sc, run.result, out, std::move(run.sampled_messages),
                 std::move(run.outcomes.front().slot0_polynomials), seconds_since(t0),
                 run.transcript_digest);
    return 0;
}

int run_attack_replay(const RunConfig& c, const fs::path& out) {
    const Scenario sc = build_scenario(c);
    const ProtocolConfig cfg = build_protocol_config(c);
    AdversarySpec spec = *c.adversary.spec;
    spec.first_round = spec.last_round = c.attack_round;
    ProtocolOptions po;
    po.bus = build_bus_options(c);
    po.adversaries = {spec};
    // The run is deterministic in the seed, so replaying it reproduces the
    // recorded transcript exactly.
    const ProtocolRun run = run_protocol(sc, cfg, po);
    if (c.attack_round >= run.result.iterations) {
        throw ConfigError("attack round " + std::to_string(c.attack_round) + " was never executed (run stopped after " +
                          std::to_string(run.result.iterations) + " iterations)");
    }
    const AttackResult res = attack_reconstruct(run.views.front(), static_cast<AgentId>(c.target), c.attack_round);
    std::cout << "adversary: " << c.adversary.str() << "\n"
              << "transcript digest: " << hex64(run.transcript_digest) << "\n"
              << "captured messages: " << run.views.front().captured.size() << "\n"
              << (res.recovered ? "RECOVERED: " : "CERTIFICATE: ") << res.describe() << "\n";
    json j;
    j["adversary"] = c.adversary.str();
    j["target"] = c.target;
    j["round"] = c.attack_round;
    j["recovered"] = res.recovered;
    j["description"] = res.describe();
    j["transcript_digest"] = hex64(run.transcript_digest);
    if (res.recovered) {
        j["method"] = res.method;
        j["profile_kw"] = res.profile;
    }
    fs::create_directories(out);
    write_json(out / "attack.json", j);
    return 0;
}

int run_tcp_agent(const RunConfig& c, const fs::path& out, const TcpOptions& opts) {
    const Scenario sc = build_scenario(c);
    const ProtocolConfig cfg = build_protocol_config(c);
    const auto table = load_address_table(c.addresses);
    if (table.size() != c.n) throw ConfigError("address table lists " + std::to_string(table.size()) + " agents, n is " + std::to_string(c.n));
    const AgentId id = *c.agent_id;
    spdlog::debug("agent {} connecting", id);
    TcpEndpoint ep(id, table, opts);
    SecureAgent agent(id, cfg, ep);
    const AgentOutcome o = agent.run(sc);
    fs::create_directories(out);
    write_json(out / ("agent_" + std::to_string(id) + ".json"), outcome_to_json(o));
    spdlog::debug("agent {} done after {} iterations", id, o.eps.size());
    return 0;
}

int run_tcp_coordinator(const RunConfig& c, const fs::path& out, const std::vector<std::string>& argv) {
    const Scenario sc = build_scenario(c);
    const ProtocolConfig cfg = build_protocol_config(c);
    fs::create_directories(out);
    std::string addresses = c.addresses;
    if (addresses.empty()) {
        addresses = (out / "addresses.txt").string();
        std::vector<PeerAddress> table;
        const auto ports = pick_free_ports(c.n);
        for (std::size_t i = 0; i < c.n; ++i) table.push_back({static_cast<AgentId>(i), "127.0.0.1", ports[i]});
        write_address_table(addresses, table);
    }
    const fs::path agent_dir = out / "agents";
    fs::create_directories(agent_dir);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<pid_t> children;
    for (std::size_t i = 0; i < c.n; ++i) {
        std::vector<std::string> args = argv;
        args.insert(args.end(), {"--agent-id", std::to_string(i), "--addresses", addresses, "--out",
                                 agent_dir.string()});
        std::vector<char*> raw;
        for (auto& s : args) raw.push_back(s.data());
        raw.push_back(nullptr);
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        const std::string log = (agent_dir / ("agent_" + std::to_string(i) + ".log")).string();
        posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        pid_t pid = 0;
        const int rc = posix_spawn(&pid, "/proc/self/exe", &actions, nullptr, raw.data(), environ);
        posix_spawn_file_actions_destroy(&actions);
        if (rc != 0) {
            for (pid_t p : children) ::kill(p, SIGTERM);
            throw TransportError("cannot spawn agent process " + std::to_string(i));
        }
        children.push_back(pid);
    }
    std::string failed;
    for (std::size_t i = 0; i < children.size(); ++i) {
        int status = 0;
        ::waitpid(children[i], &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            failed += (failed.empty() ? "" : ",") + std::to_string(i);
        }
    }
    if (!failed.empty()) throw TransportError("agent processes failed: " + failed);

    std::vector<AgentOutcome> outcomes;
    for (std::size_t i = 0; i < c.n; ++i) {
        std::ifstream in(agent_dir / ("agent_" + std::to_string(i) + ".json"));
        if (!in) throw IoError("missing result of agent " + std::to_string(i));
        outcomes.push_back(outcome_from_json(json::parse(in)));
    }
    const RunResult r = assemble_run(sc, outcomes);
    emit_results(c, sc, r, out, {}, {}, seconds_since(t0), transcript_digest(outcomes, r));
    return 0;
}

int run_verify(std::optional<std::uint32_t> corrupt_round, bool tcp) {
    VerifyOptions opt;
    opt.corrupt_round = corrupt_round;
    opt.include_tcp = tcp;
    int failures = 0;
    for (const auto& check : verify_small(opt)) {
        std::cout << (check.passed ? "PASS" : "FAIL") << "  " << check.name << ": " << check.detail << "\n";
        failures += check.passed ? 0 : 1;
    }
    std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << "\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    std::string mode = "private", transport = "inproc", nodes = "sequential", adversary = "none";
    std::string log_level = "warn";
    bool paper_preset = false;
    double barrier_timeout = 30.0;

    CLI::App app{"Privacy-preserving EV valley filling with Shamir secret-shared aggregation"};
    // Later values win, so a child process can override --out and --addresses.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_config("--config", "", "flat key=value file mirroring the flag names");
    app.add_option("--mode", mode, "private | plaintext | quantized-oracle | attack-replay")
        ->check(CLI::IsMember({"private", "plaintext", "quantized-oracle", "attack-replay"}));
    app.add_flag("--paper-preset", paper_preset, "evaluation preset (20 EVs, 48 slots, k=3, e=2^31-1)");
    std::vector<CLI::Option*> science{
        app.add_option("--n", cfg.n, "number of EVs"),
        app.add_option("--slots", cfg.slots, "time slots T"),
        app.add_option("--dt", cfg.dt, "slot length in hours"),
        app.add_option("--delta", cfg.delta, "decimal digits kept by the fixed-point codec"),
        app.add_option("--degree", cfg.degree, "polynomial degree k"),
        app.add_option("--modulus", cfg.modulus, "prime field modulus e"),
        app.add_option("--gamma", cfg.gamma, "primal step size"),
        app.add_option("--beta", cfg.beta, "dual step size"),
        app.add_option("--eps0", cfg.eps0, "per-agent stopping tolerance"),
        app.add_option("--max-iter", cfg.max_iter, "iteration cap"),
        app.add_option("--r-u", cfg.r_u, "charger limit in kW"),
        app.add_option("--d-lo", cfg.d_lo, "lowest demand in kWh"),
        app.add_option("--d-hi", cfg.d_hi, "highest demand in kWh"),
        app.add_option("--peak-kw", cfg.peak_kw, "synthetic baseline peak"),
        app.add_option("--valley-kw", cfg.valley_kw, "synthetic baseline valley floor"),
        app.add_option("--baseline", cfg.baseline, "baseline CSV, one kW value per slot"),
        app.add_option("--nodes", nodes, "sequential (alpha_i = i) | random")
            ->check(CLI::IsMember({"sequential", "random"})),
    };
    app.add_option("--seed", cfg.seed, "master seed for fleet, baseline, coefficients and scheduler");
    app.add_option("--transport", transport, "inproc | tcp")->check(CLI::IsMember({"inproc", "tcp"}));
    app.add_option("--addresses", cfg.addresses, "address table: 'id host port' per line");
    app.add_option("--agent-id", cfg.agent_id, "run a single tcp agent");
    app.add_option("--barrier-timeout", barrier_timeout, "tcp barrier timeout in seconds");
    app.add_option("--adversary", adversary, "none | eavesdropper | coalition:<id,id,...>");
    app.add_option("--target", cfg.target, "agent attacked in attack-replay mode");
    app.add_option("--attack-round", cfg.attack_round, "iteration attacked in attack-replay mode");
    app.add_option("--sample-rounds", cfg.sample_rounds, "rounds of agent 0/1 traffic written to messages.csv");
    app.add_option("--out", cfg.out, "output directory")->envname("SSVF_OUT");
    app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")->envname("SSVF_LOG_LEVEL");

    auto* verify = app.add_subcommand("verify", "run the property suite at small scale");
    std::optional<std::uint32_t> corrupt_round;
    bool no_tcp = false;
    verify->add_option("--inject-corruption", corrupt_round, "corrupt one share in this round");
    verify->add_flag("--no-tcp", no_tcp, "skip the loopback transport check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorCategory::config);
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("ssvf"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*verify) return run_verify(corrupt_round, !no_tcp);

        if (paper_preset) {
            for (auto* opt : science) {
                if (opt->count() > 0) {
                    throw ConfigError("--paper-preset cannot be combined with " + opt->get_name());
                }
            }
        }
        cfg.mode = mode == "plaintext"          ? RunMode::plaintext
                   : mode == "quantized-oracle" ? RunMode::quantized_oracle
                   : mode == "attack-replay"    ? RunMode::attack_replay
                                                : RunMode::private_run;
        cfg.transport = transport == "tcp" ? TransportKind::tcp : TransportKind::inproc;
        cfg.nodes = nodes == "random" ? NodeScheme::random : NodeScheme::sequential;
        cfg.adversary = AdversaryChoice::parse(adversary);
        cfg.validate();

        const fs::path out(cfg.out);
        if (!cfg.agent_id) {
            fs::create_directories(out);
            std::ofstream echo(out / "config.ini");
            echo << echo_config(cfg);
            if (!echo) throw IoError("cannot write " + (out / "config.ini").string());
        }
        spdlog::info("mode {}, transport {}, n={}, seed={}", mode, transport, cfg.n, cfg.seed);

        switch (cfg.mode) {
            case RunMode::plaintext:
            case RunMode::quantized_oracle: return run_plain(cfg, out);
            case RunMode::attack_replay: return run_attack_replay(cfg, out);
            case RunMode::private_run: break;
        }
        if (cfg.transport == TransportKind::inproc) return run_private_inproc(cfg, out);
        if (cfg.agent_id) {
            TcpOptions opts;
            opts.barrier_timeout = std::chrono::milliseconds(static_cast<long>(barrier_timeout * 1000));
            opts.connect_timeout = opts.barrier_timeout;
            return run_tcp_agent(cfg, out, opts);
        }
        std::vector<std::string> child_args(argv, argv + argc);
        return run_tcp_coordinator(cfg, out, child_args);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.category()) << "): " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

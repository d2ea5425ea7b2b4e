// Acceptance suite on the evaluation preset. Prints one PASS/FAIL line per
// criterion and exits nonzero when any criterion fails.
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssvf/ssvf.hpp"

namespace {

using ssvf::CheckResult;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

struct Report {
    int failures = 0;

    void line(int id, const CheckResult& c, const std::vector<CheckResult>& parts = {}) {
        bool ok = c.passed;
        for (const auto& p : parts) ok = ok && p.passed;
        if (!ok) ++failures;
        std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << " " << c.name << ": " << c.detail << '\n';
        for (const auto& p : parts) {
            std::cout << "        " << (p.passed ? "ok  " : "no  ") << p.name << ": " << p.detail << '\n';
        }
        std::cout.flush();
    }
};

/// Demand residual and charging shape of the plaintext oracle over seeds
/// 1..count, for context only; the verdicts use the fixed preset seed.
std::pair<int, int> seed_sweep(int count) {
    int residual_ok = 0;
    int shape_ok = 0;
    for (int s = 1; s <= count; ++s) {
        ssvf::RunConfig rc;
        rc.seed = static_cast<std::uint64_t>(s);
        const auto sc = ssvf::build_scenario(rc);
        const auto codec = ssvf::build_codec(rc);
        const auto r = ssvf::solve_plaintext(sc, ssvf::AggregationMode::quantized, &codec);
        residual_ok += ssvf::check_valley_filling(sc, r).residual.passed ? 1 : 0;
        shape_ok += ssvf::check_charging_shape(sc, r).passed ? 1 : 0;
    }
    return {residual_ok, shape_ok};
}

}  // namespace

int main(int argc, char** argv) {
    namespace fs = std::filesystem;
    const std::string cli = argc > 1 ? argv[1] : "";
    Report report;

    const ssvf::RunConfig rc;  // evaluation preset, seed 1
    const auto sc = ssvf::build_scenario(rc);
    const auto cfg = ssvf::build_protocol_config(rc);
    const std::uint32_t target = 7;
    const std::uint32_t attack_round = 150;

    ssvf::ProtocolOptions po;
    po.bus = ssvf::build_bus_options(rc);
    po.adversaries = ssvf::standard_adversaries(rc.n, target, attack_round);
    auto start = Clock::now();
    const auto run = ssvf::run_protocol(sc, cfg, po);
    const double private_seconds = seconds_since(start);

    {
        auto c = ssvf::check_oracle_equivalence(sc, cfg, run.result);
        c.passed = c.passed && private_seconds < 30.0;
        c.detail += ssvf::detail::cat("; private run ", private_seconds, " s (limit 30 s)");
        report.line(1, c);
    }
    report.line(2, ssvf::check_rounding_bound(sc, cfg, run.result));
    report.line(3, ssvf::check_secure_sum_trials(100, 20, 8, 20240601));
    {
        start = Clock::now();
        auto c = ssvf::check_threshold_census({17, 31}, {1, 2, 3});
        const double secs = seconds_since(start);
        c.passed = c.passed && secs < 60.0;
        c.detail += ssvf::detail::cat(" (e in {17, 31}, k in {1, 2, 3}; ", secs, " s, limit 60 s)");
        report.line(4, c);
    }
    {
        const auto a = ssvf::check_adversaries(run, cfg, target, attack_round);
        report.line(5, {"adversary replays", true,
                        ssvf::detail::cat("target ", target, ", round ", attack_round)},
                    {a.insider, a.eavesdropper, a.coalition, a.two_agents});
    }
    const auto [residual_ok, shape_ok] = seed_sweep(50);
    {
        auto v = ssvf::check_valley_filling(sc, run.result);
        v.residual.detail += ssvf::detail::cat("; seeds 1..50 meeting it: ", residual_ok, "/50");
        report.line(6, {"valley filling", true, "synthetic valley preset, seed 1"},
                    {v.flattening, v.box, v.residual});
    }
    {
        auto c = ssvf::check_charging_shape(sc, run.result);
        c.detail += ssvf::detail::cat("; seeds 1..50 meeting it: ", shape_ok, "/50");
        report.line(7, c);
    }
    report.line(8, ssvf::check_gradients(100, 8));
    {
        CheckResult c{"transport equivalence", false, {}};
        const std::string inproc = hex64(run.transcript_digest);
        if (cli.empty()) {
            c.detail = "no CLI path given; cannot spawn agent processes";
        } else {
            const fs::path out = fs::temp_directory_path() / "ssvf_acceptance_tcp";
            fs::remove_all(out);
            const std::string cmd = "\"" + cli + "\" --paper-preset --transport tcp --log-level warn --out \"" +
                                    out.string() + "\" > \"" + (out.string() + ".log") + "\" 2>&1";
            start = Clock::now();
            const int rc_cli = std::system(cmd.c_str());
            const double secs = seconds_since(start);
            std::ifstream in(out / "summary.json");
            if (rc_cli != 0 || !in) {
                c.detail = ssvf::detail::cat("tcp run failed (status ", rc_cli, "), see ", out.string(), ".log");
            } else {
                const auto summary = nlohmann::json::parse(in);
                const std::string tcp = summary.at("transcript_digest").get<std::string>();
                c.passed = tcp == inproc;
                c.detail = ssvf::detail::cat("in-process ", inproc, ", tcp with ", rc.n, " agent processes ",
                                             tcp, " (", secs, " s)");
            }
        }
        report.line(9, c);
    }

    std::cout << (report.failures == 0 ? "all criteria passed"
                                       : std::to_string(report.failures) + " criteria failed")
              << '\n';
    return report.failures == 0 ? 0 : 1;
}

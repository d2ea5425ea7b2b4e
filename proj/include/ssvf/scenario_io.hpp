#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/optim.hpp"
#include "ssvf/protocol.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {

struct BaselineProfile {
    Vec values;  // kW per slot
    std::string label;
};

// --- number formatting -------------------------------------------------------

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <class T>
T field_as(std::string_view s, std::size_t row, const char* column) {
    T v{};
    if (!parse_number(s, v)) {
        throw ParseError(row, std::string("column ") + column + ": '" + std::string(s) +
                                  "' is not a number");
    }
    return v;
}

/// Non-empty lines of a file with their 1-based row numbers.
inline std::vector<std::pair<std::size_t, std::string>> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::pair<std::size_t, std::string>> rows;
    std::string line;
    for (std::size_t row = 1; std::getline(in, line); ++row) {
        if (!trim(line).empty()) rows.emplace_back(row, line);
    }
    return rows;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline void expect_header(const std::vector<std::pair<std::size_t, std::string>>& rows,
                          std::string_view header, const std::filesystem::path& path) {
    if (rows.empty() || trim(rows.front().second) != header) {
        throw ParseError(rows.empty() ? 1 : rows.front().first,
                         path.filename().string() + " must start with header '" + std::string(header) + "'");
    }
}

}  // namespace detail

// --- baseline ----------------------------------------------------------------

/// One kW value per row; a non-numeric first row is taken as a header.
inline BaselineProfile parse_baseline(std::istream& in, std::size_t slots, std::string label = {}) {
    BaselineProfile p;
    p.label = std::move(label);
    std::string line;
    for (std::size_t row = 1; std::getline(in, line); ++row) {
        const auto s = detail::trim(line);
        if (s.empty()) continue;
        double v = 0.0;
        if (!detail::parse_number(s, v)) {
            if (row == 1) continue;
            throw ParseError(row, "'" + std::string(s) + "' is not a kW value");
        }
        if (!std::isfinite(v) || v < 0.0) {
            throw ParseError(row, "baseline load must be finite and non-negative, got " + std::string(s));
        }
        p.values.push_back(v);
        if (p.values.size() > slots) {
            throw ParseError(row, "more than the expected " + std::to_string(slots) + " rows");
        }
    }
    if (p.values.size() < slots) {
        throw ParseError(p.values.size() + 1, "expected " + std::to_string(slots) + " rows, found " +
                                                  std::to_string(p.values.size()) + " (" +
                                                  std::to_string(slots - p.values.size()) + " missing)");
    }
    return p;
}

inline BaselineProfile load_baseline(const std::filesystem::path& path, const Horizon& horizon) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open baseline " + path.string());
    return parse_baseline(in, horizon.slots, path.string());
}

inline void write_baseline(const BaselineProfile& p, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "baseline_kw\n";
    for (double v : p.values) out << format_double(v) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

/// Raised-cosine overnight valley: `peak_kw` at both ends of the horizon,
/// `valley_kw` at its midpoint, plus seeded jitter of 2% of the swing.
inline BaselineProfile synthetic_valley(std::size_t slots, double peak_kw, double valley_kw,
                                        std::uint64_t seed) {
    if (slots == 0) throw InvalidInput("synthetic_valley needs at least one slot");
    if (!(valley_kw >= 0.0) || !std::isfinite(peak_kw)) {
        throw InvalidInput("synthetic_valley needs finite, non-negative loads");
    }
    if (valley_kw > peak_kw) {
        throw InvalidInput("valley load " + format_double(valley_kw) + " kW exceeds peak load " +
                           format_double(peak_kw) + " kW");
    }
    const double swing = peak_kw - valley_kw;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    BaselineProfile p;
    p.label = "synthetic valley peak=" + format_double(peak_kw) + " valley=" + format_double(valley_kw) +
              " seed=" + std::to_string(seed);
    p.values.reserve(slots);
    for (std::size_t t = 0; t < slots; ++t) {
        const double phase = 2.0 * std::numbers::pi * (static_cast<double>(t) + 0.5) / static_cast<double>(slots);
        const double shape = 0.5 * (1.0 + std::cos(phase));
        const double v = valley_kw + swing * shape + 0.02 * swing * jitter(rng);
        p.values.push_back(std::max(0.0, v));
    }
    return p;
}

// --- fleet -------------------------------------------------------------------

struct FleetSpec {
    std::size_t agents = 20;
    double r_u = 6.6;    // kW, every slot
    double d_lo = 10.0;  // kWh
    double d_hi = 20.0;
    double gamma = 0.01;
    std::uint64_t seed = 0;

    void validate(const Horizon& h) const {
        if (agents < 3) throw ConfigError("fleet needs at least 3 EVs");
        if (!(r_u > 0.0) || !std::isfinite(r_u)) throw ConfigError("r_u must be positive");
        if (!(d_lo >= 0.0) || d_lo > d_hi) throw ConfigError("demand range must satisfy 0 <= d_lo <= d_hi");
        const double capacity = h.dt * static_cast<double>(h.slots) * r_u;
        if (d_hi > capacity) {
            throw ConfigError("demand " + format_double(d_hi) + " kWh exceeds the " +
                              format_double(capacity) + " kWh an EV can draw over the horizon");
        }
    }
};

inline std::vector<EvSpec> sample_fleet(const FleetSpec& spec, const Horizon& horizon) {
    horizon.validate();
    spec.validate(horizon);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> demand(spec.d_lo, spec.d_hi);
    std::vector<EvSpec> fleet;
    fleet.reserve(spec.agents);
    for (std::size_t i = 0; i < spec.agents; ++i) {
        const double d = spec.d_lo == spec.d_hi ? spec.d_lo : demand(rng);
        fleet.push_back({Vec(horizon.slots, spec.r_u), d, spec.gamma});
    }
    return fleet;
}

// --- results -----------------------------------------------------------------

struct RunArtifacts {
    const Scenario* scenario = nullptr;
    const RunResult* result = nullptr;
    std::vector<RoundMessage> messages;
    std::vector<SecretPolynomial> polynomials;  // one agent, slot 0, per round
    std::size_t polynomial_agent = 0;
};

inline constexpr std::string_view kProfilesHeader = "agent,lambda";
inline constexpr std::string_view kTotalLoadHeader = "slot,baseline_kw,ev_kw,total_kw";
inline constexpr std::string_view kTraceHeader = "iteration,agent,eps,lambda,objective";
inline constexpr std::string_view kMessagesHeader = "round,kind,sender,receiver,slot,payload";
inline constexpr std::string_view kPolynomialsHeader = "round,agent,slot,degree,coefficients";

inline std::string profiles_header(std::size_t slots) {
    std::string h(kProfilesHeader);
    for (std::size_t t = 0; t < slots; ++t) h += ",x" + std::to_string(t);
    return h;
}

inline void write_results(const RunArtifacts& a, const std::filesystem::path& dir) {
    if (a.scenario == nullptr || a.result == nullptr) throw InvalidInput("write_results needs a run");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const Scenario& sc = *a.scenario;
    const RunResult& r = *a.result;
    const std::size_t slots = sc.horizon.slots;

    {
        auto out = detail::open_output(dir / "profiles.csv");
        out << profiles_header(slots) << '\n';
        // A run that never iterated has no results, only headers.
        for (std::size_t i = 0; i < (r.iterations ? r.agents.size() : 0); ++i) {
            out << i << ',' << format_double(r.agents[i].lambda);
            for (double v : r.agents[i].x) out << ',' << format_double(v);
            out << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "total_load.csv");
        out << kTotalLoadHeader << '\n';
        const Vec ev = sum_profiles(r.agents, slots);
        for (std::size_t t = 0; t < (r.iterations ? slots : 0); ++t) {
            out << t << ',' << format_double(sc.baseline[t]) << ',' << format_double(ev[t]) << ','
                << format_double(sc.baseline[t] + ev[t]) << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "trace.csv");
        out << kTraceHeader << '\n';
        for (const auto& row : r.trace) {
            out << row.iteration << ',' << row.agent << ',' << format_double(row.eps) << ','
                << format_double(row.lambda) << ',' << format_double(row.objective) << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "messages.csv");
        out << kMessagesHeader << '\n';
        for (const auto& m : a.messages) {
            out << m.round << ',' << to_string(m.kind) << ',' << m.sender << ','
                << (m.receiver == kAllAgents ? std::string("ALL") : std::to_string(m.receiver)) << ','
                << m.slot << ',' << m.payload << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "polynomials.csv");
        out << kPolynomialsHeader << '\n';
        for (std::size_t l = 0; l < a.polynomials.size(); ++l) {
            const auto& p = a.polynomials[l];
            out << l << ',' << a.polynomial_agent << ",0," << p.degree() << ',';
            for (std::size_t c = 0; c < p.coeffs.size(); ++c) {
                out << (c ? " " : "") << p.coeffs[c].value();
            }
            out << '\n';
        }
        if (!out) throw IoError("failed writing results to " + dir.string());
    }
}

inline std::vector<AgentState> read_profiles(const std::filesystem::path& path) {
    const auto rows = detail::read_rows(path);
    if (rows.empty() || !detail::trim(rows.front().second).starts_with(kProfilesHeader)) {
        throw ParseError(1, "profiles.csv must start with '" + std::string(kProfilesHeader) + "'");
    }
    const std::size_t columns = detail::split(rows.front().second).size();
    std::vector<AgentState> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [row, line] = rows[r];
        const auto f = detail::split(line);
        if (f.size() != columns) {
            throw ParseError(row, "expected " + std::to_string(columns) + " columns, got " +
                                      std::to_string(f.size()));
        }
        if (detail::field_as<std::size_t>(f[0], row, "agent") != out.size()) {
            throw ParseError(row, "agents must be listed in order");
        }
        AgentState s;
        s.lambda = detail::field_as<double>(f[1], row, "lambda");
        for (std::size_t c = 2; c < f.size(); ++c) s.x.push_back(detail::field_as<double>(f[c], row, "x"));
        out.push_back(std::move(s));
    }
    return out;
}

struct TotalLoadRow {
    std::size_t slot = 0;
    double baseline = 0.0, ev = 0.0, total = 0.0;
};

inline std::vector<TotalLoadRow> read_total_load(const std::filesystem::path& path) {
    const auto rows = detail::read_rows(path);
    detail::expect_header(rows, kTotalLoadHeader, path);
    std::vector<TotalLoadRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [row, line] = rows[r];
        const auto f = detail::split(line);
        if (f.size() != 4) throw ParseError(row, "expected 4 columns");
        out.push_back({detail::field_as<std::size_t>(f[0], row, "slot"),
                       detail::field_as<double>(f[1], row, "baseline_kw"),
                       detail::field_as<double>(f[2], row, "ev_kw"),
                       detail::field_as<double>(f[3], row, "total_kw")});
    }
    return out;
}

inline std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
    const auto rows = detail::read_rows(path);
    detail::expect_header(rows, kTraceHeader, path);
    std::vector<TraceRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [row, line] = rows[r];
        const auto f = detail::split(line);
        if (f.size() != 5) throw ParseError(row, "expected 5 columns");
        out.push_back({detail::field_as<std::size_t>(f[0], row, "iteration"),
                       detail::field_as<std::size_t>(f[1], row, "agent"),
                       detail::field_as<double>(f[2], row, "eps"),
                       detail::field_as<double>(f[3], row, "lambda"),
                       detail::field_as<double>(f[4], row, "objective")});
    }
    return out;
}

inline MessageKind parse_kind(std::string_view s, std::size_t row) {
    for (auto k : {MessageKind::share, MessageKind::broadcast, MessageKind::barrier, MessageKind::status}) {
        if (s == to_string(k)) return k;
    }
    throw ParseError(row, "unknown message kind '" + std::string(s) + "'");
}

inline std::vector<RoundMessage> read_messages(const std::filesystem::path& path) {
    const auto rows = detail::read_rows(path);
    detail::expect_header(rows, kMessagesHeader, path);
    std::vector<RoundMessage> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [row, line] = rows[r];
        const auto f = detail::split(line);
        if (f.size() != 6) throw ParseError(row, "expected 6 columns");
        RoundMessage m;
        m.round = detail::field_as<std::uint32_t>(f[0], row, "round");
        m.kind = parse_kind(f[1], row);
        m.sender = detail::field_as<AgentId>(f[2], row, "sender");
        m.receiver = f[3] == "ALL" ? kAllAgents : detail::field_as<AgentId>(f[3], row, "receiver");
        m.slot = detail::field_as<std::uint16_t>(f[4], row, "slot");
        m.payload = detail::field_as<std::uint64_t>(f[5], row, "payload");
        out.push_back(m);
    }
    return out;
}

struct PolynomialRow {
    std::size_t round = 0, agent = 0, slot = 0;
    std::vector<std::uint64_t> coefficients;
};

inline std::vector<PolynomialRow> read_polynomials(const std::filesystem::path& path) {
    const auto rows = detail::read_rows(path);
    detail::expect_header(rows, kPolynomialsHeader, path);
    std::vector<PolynomialRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [row, line] = rows[r];
        const auto f = detail::split(line);
        if (f.size() != 5) throw ParseError(row, "expected 5 columns");
        PolynomialRow p;
        p.round = detail::field_as<std::size_t>(f[0], row, "round");
        p.agent = detail::field_as<std::size_t>(f[1], row, "agent");
        p.slot = detail::field_as<std::size_t>(f[2], row, "slot");
        const auto degree = detail::field_as<std::size_t>(f[3], row, "degree");
        std::istringstream coeffs{std::string(f[4])};
        std::string tok;
        while (coeffs >> tok) p.coefficients.push_back(detail::field_as<std::uint64_t>(tok, row, "coefficients"));
        if (p.coefficients.size() != degree + 1) {
            throw ParseError(row, "degree " + std::to_string(degree) + " needs " +
                                      std::to_string(degree + 1) + " coefficients");
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ssvf

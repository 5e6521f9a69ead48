// io.hpp
//
// File formats: router config and stream spec (JSON), recorded traces and
// trajectories (CSV).
#pragma once
#include "bpac/core.hpp"
#include "bpac/harness.hpp"
#include "bpac/simulation.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace bpac::io {

using json = nlohmann::json;

// A malformed document; key names the offending field.
class ParseError : public Error {
public:
    ParseError(std::string key, const std::string& msg) : Error(key + ": " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class TraceFormatError : public Error {
public:
    TraceFormatError(std::size_t row, const std::string& msg)
        : Error("trace row " + std::to_string(row) + ": " + msg), row_(row) {}
    // 1-based data row (the header is row 0).
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// ---------------------------------------------------------------------------
// Scalars
// ---------------------------------------------------------------------------

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<std::string_view> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (auto k : known) ok = ok || it.key() == k;
        if (!ok) throw ParseError(prefix + it.key(), "unknown key");
    }
}

inline double number(const json& obj, const std::string& key, const std::string& path, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ParseError(path + key, "expected a number");
    return v.get<double>();
}

inline std::uint64_t count(const json& obj, const std::string& key, const std::string& path, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ParseError(path + key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

inline std::string text(const json& obj, const std::string& key, const std::string& path, std::string fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ParseError(path + key, "expected a string");
    return v.get<std::string>();
}

inline const json& object(const json& obj, const std::string& key, const std::string& path) {
    const json& v = obj.at(key);
    if (!v.is_object()) throw ParseError(path + key, "expected an object");
    return v;
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw ParseError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ParseError(path + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Router config
// ---------------------------------------------------------------------------

// Missing keys take the default hyperparameters. Structural problems throw
// ParseError; invariant violations are left to validate_config.
inline RouterConfig config_from_json(const json& doc) {
    using namespace detail;
    if (!doc.is_object()) throw ParseError("<root>", "config must be a JSON object");
    reject_unknown(doc, "",
                   {"epsilon", "alpha", "betting_cap", "selection_mode", "prior", "grid", "schedule", "betting", "seed"});
    RouterConfig c;
    c.epsilon = number(doc, "epsilon", "", c.epsilon);
    c.alpha = number(doc, "alpha", "", c.alpha);
    c.betting_cap = number(doc, "betting_cap", "", c.betting_cap);
    c.seed = count(doc, "seed", "", c.seed);

    const std::string mode = text(doc, "selection_mode", "", "fixed_sequence");
    if (mode == "fixed_sequence" || mode == "FixedSequence")
        c.selection_mode = SelectionMode::FixedSequence;
    else if (mode == "mixture" || mode == "Mixture")
        c.selection_mode = SelectionMode::Mixture;
    else
        throw ParseError("selection_mode", "expected fixed_sequence or mixture");

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        if (g.is_array()) {
            c.grid = ThresholdGrid(numbers(g, "grid"));
        } else if (g.is_object()) {
            reject_unknown(g, "grid.", {"start", "stop", "step"});
            const double start = number(g, "start", "grid.", 0.0);
            const double stop = number(g, "stop", "grid.", 1.0);
            const double step = number(g, "step", "grid.", 0.001);
            auto grid = ThresholdGrid::stepped(start, stop, step);
            if (!grid) throw ParseError("grid.step", "step must evenly divide [start, stop]");
            c.grid = std::move(*grid);
        } else {
            throw ParseError("grid", "expected {start, stop, step} or an explicit list");
        }
    }

    if (doc.contains("schedule")) {
        const json& s = object(doc, "schedule", "");
        reject_unknown(s, "schedule.", {"kind", "rho", "rho_warm", "rho_deploy", "t_warm", "rho_min"});
        const std::string kind = text(s, "kind", "schedule.", "two_stage");
        if (kind == "constant" || kind == "Constant") {
            c.schedule = ExplorationSchedule::constant(number(s, "rho", "schedule.", 0.05));
        } else if (kind == "two_stage" || kind == "TwoStage") {
            c.schedule = ExplorationSchedule::two_stage(number(s, "rho_warm", "schedule.", 0.7),
                                                        number(s, "rho_deploy", "schedule.", 0.05),
                                                        count(s, "t_warm", "schedule.", 200));
        } else {
            throw ParseError("schedule.kind", "expected constant or two_stage");
        }
        c.schedule.declared_infimum = number(s, "rho_min", "schedule.", c.schedule.declared_infimum);
    }

    if (doc.contains("betting")) {
        const json& b = object(doc, "betting", "");
        reject_unknown(b, "betting.", {"kind", "lambda"});
        const std::string kind = text(b, "kind", "betting.", "adaptive");
        if (kind == "adaptive")
            c.betting.kind = BettingKind::Adaptive;
        else if (kind == "fixed")
            c.betting.kind = BettingKind::Fixed;
        else
            throw ParseError("betting.kind", "expected adaptive or fixed");
        c.betting.fixed_lambda = number(b, "lambda", "betting.", c.betting.fixed_lambda);
    }

    if (doc.contains("prior") && !doc.at("prior").is_null()) {
        const json& p = doc.at("prior");
        if (p.is_string()) {
            if (p.get<std::string>() != "uniform") throw ParseError("prior", "expected \"uniform\" or a list of masses");
            c.prior = Prior::uniform(c.grid.size());
        } else {
            c.prior = Prior{numbers(p, "prior")};
        }
    }
    return c;
}

inline json config_to_json(const RouterConfig& c) {
    json doc;
    doc["epsilon"] = c.epsilon;
    doc["alpha"] = c.alpha;
    doc["betting_cap"] = c.betting_cap;
    doc["selection_mode"] = c.selection_mode == SelectionMode::Mixture ? "mixture" : "fixed_sequence";
    doc["prior"] = c.prior ? json(c.prior->mass) : json(nullptr);
    doc["grid"] = std::vector<double>(c.grid.values().begin(), c.grid.values().end());
    json s;
    if (c.schedule.kind == ScheduleKind::Constant) {
        s["kind"] = "constant";
        s["rho"] = c.schedule.rho;
    } else {
        s["kind"] = "two_stage";
        s["rho_warm"] = c.schedule.rho_warm;
        s["rho_deploy"] = c.schedule.rho_deploy;
        s["t_warm"] = c.schedule.t_warm;
    }
    s["rho_min"] = c.schedule.declared_infimum;
    doc["schedule"] = s;
    json b;
    b["kind"] = c.betting.kind == BettingKind::Fixed ? "fixed" : "adaptive";
    if (c.betting.kind == BettingKind::Fixed) b["lambda"] = c.betting.fixed_lambda;
    doc["betting"] = b;
    doc["seed"] = c.seed;
    return doc;
}

// Hash of the canonical config document (seed excluded so per-seed files of
// one run share it).
inline std::string config_hash(const RouterConfig& c) {
    json doc = config_to_json(c);
    doc.erase("seed");
    return hex64(fnv1a(doc.dump()));
}

// ---------------------------------------------------------------------------
// Stream spec
// ---------------------------------------------------------------------------

inline SyntheticStreamSpec spec_from_json(const json& doc) {
    using namespace detail;
    if (!doc.is_object()) throw ParseError("<root>", "spec must be a JSON object");
    SyntheticStreamSpec spec;
    if (doc.contains("family")) {
        reject_unknown(doc, "", {"family", "kappa"});
        const std::string family = text(doc, "family", "", "");
        if (family != "uniform-linear") throw ParseError("family", "unknown family '" + family + "'");
        spec = SyntheticStreamSpec::uniform_linear(number(doc, "kappa", "", 1.0));
    } else {
        reject_unknown(doc, "", {"segments"});
        if (!doc.contains("segments") || !doc.at("segments").is_array())
            throw ParseError("segments", "expected an array of segments");
        const json& segs = doc.at("segments");
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const std::string path = "segments[" + std::to_string(i) + "].";
            const json& s = segs[i];
            if (!s.is_object()) throw ParseError(path.substr(0, path.size() - 1), "expected an object");
            reject_unknown(s, path, {"length", "uncertainty", "loss", "tokens"});
            Segment seg;
            seg.length = count(s, "length", path, kUnboundedLength);

            if (s.contains("uncertainty")) {
                const json& u = object(s, "uncertainty", path);
                const std::string upath = path + "uncertainty.";
                reject_unknown(u, upath, {"kind", "low", "high", "a", "b"});
                const std::string kind = text(u, "kind", upath, "uniform");
                if (kind == "uniform")
                    seg.uncertainty = UncertaintyLaw::uniform(number(u, "low", upath, 0.0), number(u, "high", upath, 1.0));
                else if (kind == "kumaraswamy")
                    seg.uncertainty = UncertaintyLaw::kumaraswamy(number(u, "a", upath, 1.0), number(u, "b", upath, 1.0));
                else
                    throw ParseError(upath + "kind", "expected uniform or kumaraswamy");
            }

            if (s.contains("loss")) {
                const json& l = object(s, "loss", path);
                const std::string lpath = path + "loss.";
                reject_unknown(l, lpath, {"kind", "kappa", "p", "coefficients"});
                const std::string kind = text(l, "kind", lpath, "linear");
                if (kind == "linear")
                    seg.loss = LossLaw::linear(number(l, "kappa", lpath, 1.0));
                else if (kind == "constant")
                    seg.loss = LossLaw::constant(number(l, "p", lpath, 0.0));
                else if (kind == "polynomial") {
                    if (!l.contains("coefficients")) throw ParseError(lpath + "coefficients", "missing");
                    seg.loss = LossLaw{numbers(l.at("coefficients"), lpath + "coefficients")};
                } else
                    throw ParseError(lpath + "kind", "expected linear, constant or polynomial");
            }

            if (s.contains("tokens")) {
                const json& tk = object(s, "tokens", path);
                const std::string tpath = path + "tokens.";
                reject_unknown(tk, tpath, {"cheap", "expensive"});
                auto range = [&](const char* key, std::uint64_t& lo, std::uint64_t& hi) {
                    if (!tk.contains(key)) return;
                    const json& v = tk.at(key);
                    if (v.is_array()) {
                        if (v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
                            throw ParseError(tpath + key, "expected [low, high] token counts");
                        lo = v[0].get<std::uint64_t>();
                        hi = v[1].get<std::uint64_t>();
                    } else {
                        lo = hi = count(tk, key, tpath, lo);
                    }
                };
                range("cheap", seg.tokens.cheap_low, seg.tokens.cheap_high);
                range("expensive", seg.tokens.expensive_low, seg.tokens.expensive_high);
            }
            spec.segments.push_back(std::move(seg));
        }
    }
    try {
        validate_stream_spec(spec);
    } catch (const InvalidStreamSpec& e) {
        throw ParseError(e.key(), e.what());
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct TraceRecord {
    std::uint64_t index = 0;
    double uncertainty = 0.0;
    double loss = 0.0;
    std::uint64_t tokens_cheap = 0;
    std::uint64_t tokens_expensive = 0;

    StreamObservation observation() const {
        return StreamObservation{index, uncertainty, loss, tokens_cheap, tokens_expensive};
    }
};

inline constexpr std::string_view kTraceHeader = "index,uncertainty,loss,tokens_cheap,tokens_expensive";

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view chomp(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

}  // namespace detail

// Header row is mandatory; indices must increase strictly; uncertainty and
// loss must lie in [0,1].
inline std::vector<TraceRecord> read_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::chomp(line) != kTraceHeader)
        throw TraceFormatError(0, "missing header '" + std::string(kTraceHeader) + "'");
    std::vector<TraceRecord> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        const std::string_view l = detail::chomp(line);
        if (l.empty()) continue;
        ++row;
        const auto cells = detail::split(l);
        if (cells.size() != 5) throw TraceFormatError(row, "expected 5 columns");
        TraceRecord r;
        auto idx = parse_uint(cells[0]);
        auto u = parse_double(cells[1]);
        auto loss = parse_double(cells[2]);
        auto hc = parse_uint(cells[3]);
        auto he = parse_uint(cells[4]);
        if (!idx || !u || !loss || !hc || !he) throw TraceFormatError(row, "unparsable field");
        r.index = *idx;
        r.uncertainty = *u;
        r.loss = *loss;
        r.tokens_cheap = *hc;
        r.tokens_expensive = *he;
        if (!(r.uncertainty >= 0.0 && r.uncertainty <= 1.0)) throw TraceFormatError(row, "uncertainty outside [0,1]");
        if (!(r.loss >= 0.0 && r.loss <= 1.0)) throw TraceFormatError(row, "loss outside [0,1]");
        if (!out.empty() && r.index <= out.back().index) throw TraceFormatError(row, "index not strictly increasing");
        out.push_back(r);
    }
    return out;
}

inline void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
    out << kTraceHeader << '\n';
    for (const auto& r : records)
        out << r.index << ',' << format_double(r.uncertainty) << ',' << format_double(r.loss) << ','
            << r.tokens_cheap << ',' << r.tokens_expensive << '\n';
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

// Comment lines ('#') before the header are kept verbatim so files survive
// read -> write unchanged.
struct CsvTable {
    std::vector<std::string> preamble;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        const std::string_view l = detail::chomp(line);
        if (!have_header) {
            if (!l.empty() && l.front() == '#') {
                t.preamble.emplace_back(l);
                continue;
            }
            for (auto c : detail::split(l)) t.header.emplace_back(c);
            have_header = true;
            continue;
        }
        std::vector<std::string> row;
        for (auto c : detail::split(l)) row.emplace_back(c);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
    for (const auto& p : t.preamble) out << p << '\n';
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    emit(t.header);
    for (const auto& r : t.rows) emit(r);
}

inline std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// Per-step trajectory: routing record, running metrics and evaluator risk.
inline CsvTable trajectory_table(const Trajectory& traj, const std::string& hash) {
    CsvTable t;
    t.preamble.push_back("# config_hash=" + hash + " method=" + std::string(to_string(traj.method)) +
                         " seed=" + std::to_string(traj.seed));
    t.header = {"t",  "method", "uncertainty", "rho", "pi", "xi", "threshold_used", "u_hat", "loss",
                "realized_loss", "ecp", "tp", "er", "risk", "unweighted_risk"};
    const std::string method(to_string(traj.method));
    t.rows.reserve(traj.steps.size());
    for (const auto& s : traj.steps) {
        t.rows.push_back({std::to_string(s.t), method, format_double(s.uncertainty), format_double(s.rho),
                          format_double(s.propensity), s.xi ? "1" : "0", format_double(s.threshold_used),
                          format_double(s.u_hat), format_double(s.latent_loss), format_double(s.realized_loss),
                          format_double(s.ecp), optional_cell(s.tp), format_double(s.er), optional_cell(s.risk),
                          optional_cell(s.unweighted_risk)});
    }
    return t;
}

// Log-wealth snapshots: one row per emitted step, one column per grid point.
inline CsvTable wealth_table(const Trajectory& traj, const ThresholdGrid& grid, const std::string& hash) {
    CsvTable t;
    t.preamble.push_back("# config_hash=" + hash + " method=" + std::string(to_string(traj.method)) +
                         " seed=" + std::to_string(traj.seed) + " quantity=log_wealth");
    t.header.push_back("t");
    for (double u : grid.values()) t.header.push_back("u=" + format_double(u));
    for (const auto& snap : traj.wealth) {
        std::vector<std::string> row{std::to_string(snap.t)};
        for (double w : snap.log_wealth) row.push_back(format_double(w));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace bpac::io

// commands.hpp
//
// Command implementations behind the bpac binary. Each command reads its
// inputs, fans seeds out over worker threads, writes per-seed files and then
// aggregates after the join.
#pragma once
#include "bpac/harness.hpp"
#include "bpac/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace bpac::cli {

namespace fs = std::filesystem;
using io::json;

enum ExitCode : int { kOk = 0, kValidation = 2, kRuntime = 3 };

class UsageError : public Error {
public:
    using Error::Error;
};

class UnknownMethod : public Error {
public:
    explicit UnknownMethod(const std::string& name) : Error("unknown method '" + name + "'"), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

struct Options {
    std::optional<std::string> config_path;
    std::optional<std::string> spec_path;
    std::optional<std::string> trace_path;
    std::optional<std::uint64_t> horizon;
    std::vector<std::uint64_t> seeds;     // explicit --seeds
    std::optional<std::uint64_t> n_seeds; // --n-seeds
    std::uint64_t base_seed = 0;
    std::string out_dir = "out";
    std::vector<std::string> methods;
    std::vector<double> epsilons;
    bool epsilons_given = false;
    std::uint64_t emit_wealth_every = 100;
    std::string preset;
    std::string hoeff_variant = "per-point";
};

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

inline json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw io::ParseError("<root>", std::string("malformed JSON in '") + path + "': " + e.what());
    }
}

inline RouterConfig load_config(const Options& o) {
    if (!o.config_path) return RouterConfig{};
    return io::config_from_json(parse_json_file(*o.config_path));
}

inline SyntheticStreamSpec load_spec(const Options& o) {
    if (!o.spec_path) return SyntheticStreamSpec::uniform_linear(1.0);
    return io::spec_from_json(parse_json_file(*o.spec_path));
}

inline std::vector<std::uint64_t> resolve_seeds(const Options& o) {
    if (!o.seeds.empty()) {
        if (o.n_seeds) throw UsageError("--seeds and --n-seeds are mutually exclusive");
        return o.seeds;
    }
    const std::uint64_t n = o.n_seeds.value_or(1);
    std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = o.base_seed + i;
    return s;
}

inline std::vector<Method> resolve_methods(const Options& o, Method fallback) {
    std::vector<Method> out;
    for (const auto& name : o.methods) {
        auto m = parse_method(name);
        if (!m) throw UnknownMethod(name);
        out.push_back(*m);
    }
    if (out.empty()) out.push_back(fallback);
    return out;
}

inline HoeffVariant resolve_variant(const Options& o) {
    if (o.hoeff_variant == "per-point") return HoeffVariant::PerPoint;
    if (o.hoeff_variant == "union") return HoeffVariant::UnionOverGrid;
    throw UsageError("--hoeff-variant must be per-point or union");
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline json seed_summary(const Trajectory& t) {
    json s;
    s["seed"] = t.seed;
    s["steps"] = t.metrics.t;
    s["final_u_hat"] = t.metrics.t ? json(t.final_u_hat) : json(nullptr);
    s["ecp"] = optional_number(t.metrics.ecp());
    s["tp"] = optional_number(t.metrics.tp());
    s["er"] = optional_number(t.metrics.er());
    s["violated"] = t.violated;
    s["first_violation"] = t.first_violation ? json(*t.first_violation) : json(nullptr);
    s["expert_calls"] = t.metrics.expert_calls;
    return s;
}

// Means over seeds; null when no steps were taken.
inline json aggregate(const std::vector<Trajectory>& runs) {
    json a;
    const bool empty = runs.empty() || runs.front().metrics.t == 0;
    auto mean = [&](auto get) -> json {
        if (empty) return nullptr;
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : runs) {
            if (auto v = get(r)) {
                s += *v;
                ++n;
            }
        }
        return n ? json(s / static_cast<double>(n)) : json(nullptr);
    };
    a["mean_ecp"] = mean([](const Trajectory& r) { return r.metrics.ecp(); });
    a["mean_tp"] = mean([](const Trajectory& r) { return r.metrics.tp(); });
    a["mean_er"] = mean([](const Trajectory& r) { return r.metrics.er(); });
    a["mean_u_hat"] = mean([](const Trajectory& r) { return std::optional<double>(r.final_u_hat); });
    if (empty) {
        a["median_u_hat"] = nullptr;
    } else {
        std::vector<double> u;
        for (const auto& r : runs) u.push_back(r.final_u_hat);
        a["median_u_hat"] = median(std::move(u));
    }
    std::size_t violations = 0;
    for (const auto& r : runs) violations += r.violated ? 1 : 0;
    a["violations"] = violations;
    a["violation_fraction"] = runs.empty() ? json(nullptr) : json(static_cast<double>(violations) / runs.size());
    return a;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string csv_text(const io::CsvTable& t) {
    std::ostringstream os;
    io::write_csv(os, t);
    return os.str();
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulationResult {
    std::vector<Trajectory> runs;
    json summary;
};

// Runs one method over all seeds and writes trajectory_seed<S>.csv
// (+ wealth_seed<S>.csv for B-PAC) and summary.json into dir.
inline SimulationResult simulate_into(const fs::path& dir, Method method, const ValidatedConfig& config,
                                      const SyntheticStreamSpec& spec, std::uint64_t horizon,
                                      const std::vector<std::uint64_t>& seeds, const Options& o,
                                      const std::string& command = "simulate") {
    fs::create_directories(dir);
    const std::string hash = io::config_hash(config.get());
    RunOptions ro;
    ro.emit_wealth_every = o.emit_wealth_every;
    ro.hoeff_variant = resolve_variant(o);

    SimulationResult res;
    res.runs.resize(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t k) {
        Trajectory traj = run_replication(method, config, spec, horizon, seeds[k], ro);
        const std::string tag = std::to_string(seeds[k]);
        write_file(dir / ("trajectory_seed" + tag + ".csv"), csv_text(io::trajectory_table(traj, hash)));
        if (method == Method::BPac && o.emit_wealth_every > 0)
            write_file(dir / ("wealth_seed" + tag + ".csv"), csv_text(io::wealth_table(traj, config->grid, hash)));
        traj.steps.clear();
        traj.steps.shrink_to_fit();
        traj.wealth.clear();
        res.runs[k] = std::move(traj);
    });

    json s;
    s["command"] = command;
    s["method"] = std::string(to_string(method));
    s["config_hash"] = hash;
    s["config"] = io::config_to_json(config.get());
    s["horizon"] = horizon;
    s["seeds"] = seeds;
    json per_seed = json::array();
    for (const auto& r : res.runs) per_seed.push_back(seed_summary(r));
    s["per_seed"] = per_seed;
    s["aggregate"] = aggregate(res.runs);
    write_file(dir / "summary.json", dump(s));
    res.summary = std::move(s);
    return res;
}

inline int cmd_simulate(const Options& o) {
    const ValidatedConfig config = validated(load_config(o));
    const SyntheticStreamSpec spec = load_spec(o);
    const auto methods = resolve_methods(o, Method::BPac);
    if (methods.size() != 1) throw UsageError("simulate takes a single --method; use compare for several");
    simulate_into(o.out_dir, methods.front(), config, spec, o.horizon.value_or(2000), resolve_seeds(o), o);
    return kOk;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

inline int cmd_replay(const Options& o) {
    if (!o.trace_path) throw UsageError("replay requires --trace");
    RouterConfig raw = load_config(o);
    if (!o.seeds.empty()) raw.seed = o.seeds.front();
    const ValidatedConfig config = validated(raw);
    const auto methods = resolve_methods(o, Method::BPac);
    if (methods.size() != 1) throw UsageError("replay takes a single --method");

    std::vector<io::TraceRecord> trace;
    {
        std::ifstream in(*o.trace_path, std::ios::binary);
        if (!in) throw UsageError("cannot open '" + *o.trace_path + "'");
        trace = io::read_trace(in);
    }
    std::uint64_t horizon = trace.size();
    if (o.horizon) horizon = std::min<std::uint64_t>(horizon, *o.horizon);

    // Router steps are numbered 1..n; the trace's own index is kept alongside.
    auto observation = [&](std::uint64_t t) {
        StreamObservation obs = trace[static_cast<std::size_t>(t - 1)].observation();
        obs.index = t;
        return obs;
    };
    RunOptions ro;
    ro.emit_wealth_every = o.emit_wealth_every;
    ro.hoeff_variant = resolve_variant(o);
    const Trajectory traj = run_stream(methods.front(), config, horizon, observation, nullptr, ro);

    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    const std::string hash = io::config_hash(config.get());
    write_file(dir / "trajectory.csv", csv_text(io::trajectory_table(traj, hash)));
    if (methods.front() == Method::BPac && o.emit_wealth_every > 0)
        write_file(dir / "wealth.csv", csv_text(io::wealth_table(traj, config->grid, hash)));

    io::CsvTable log;
    log.preamble.push_back("# config_hash=" + hash + " quantity=loss_access_log");
    log.header = {"t", "trace_index"};
    for (std::uint64_t t : traj.loss_access_log)
        log.rows.push_back({std::to_string(t), std::to_string(trace[static_cast<std::size_t>(t - 1)].index)});
    write_file(dir / "loss_access_log.csv", csv_text(log));

    json s;
    s["command"] = "replay";
    s["method"] = std::string(to_string(traj.method));
    s["config_hash"] = hash;
    s["config"] = io::config_to_json(config.get());
    s["trace_rows"] = trace.size();
    s["horizon"] = horizon;
    s["loss_accesses"] = traj.loss_access_log.size();
    s["result"] = seed_summary(traj);
    write_file(dir / "summary.json", dump(s));
    return kOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

inline std::string eps_dir(double eps) { return "eps_" + io::format_double(eps); }

inline int cmd_sweep(const Options& o) {
    if (o.epsilons.empty()) throw UsageError("sweep requires a non-empty --epsilons list");
    const RouterConfig base = load_config(o);
    const SyntheticStreamSpec spec = load_spec(o);
    const auto methods = resolve_methods(o, Method::BPac);
    if (methods.size() != 1) throw UsageError("sweep takes a single --method");
    const auto seeds = resolve_seeds(o);
    const std::uint64_t horizon = o.horizon.value_or(2000);

    // Validate every point before running any of them.
    std::vector<ValidatedConfig> configs;
    for (double eps : o.epsilons) {
        RouterConfig c = base;
        c.epsilon = eps;
        configs.push_back(validated(c));
    }
    json rows = json::array();
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const double eps = o.epsilons[k];
        const auto res = simulate_into(fs::path(o.out_dir) / eps_dir(eps), methods.front(), configs[k], spec,
                                       horizon, seeds, o);
        json row;
        row["epsilon"] = eps;
        row["dir"] = eps_dir(eps);
        row["config_hash"] = res.summary["config_hash"];
        row["aggregate"] = res.summary["aggregate"];
        rows.push_back(row);
    }
    json s;
    s["command"] = "sweep";
    s["method"] = std::string(to_string(methods.front()));
    s["horizon"] = horizon;
    s["seeds"] = seeds;
    s["points"] = rows;
    write_file(fs::path(o.out_dir) / "sweep.json", dump(s));
    return kOk;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

inline int cmd_compare(const Options& o) {
    const ValidatedConfig config = validated(load_config(o));
    const SyntheticStreamSpec spec = load_spec(o);
    std::vector<Method> methods = o.methods.empty()
                                      ? std::vector<Method>{Method::BPac, Method::ONaive, Method::IpsHoeff}
                                      : resolve_methods(o, Method::BPac);
    const auto seeds = resolve_seeds(o);
    const std::uint64_t horizon = o.horizon.value_or(2000);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    const std::string hash = io::config_hash(config.get());

    // Per-step means over seeds, read back from the per-seed trajectories.
    io::CsvTable table;
    table.preamble.push_back("# config_hash=" + hash + " quantity=seed_mean_trajectory");
    table.header = {"t", "method", "ecp", "tp", "er", "u_hat"};
    json summary;
    summary["command"] = "compare";
    summary["config_hash"] = hash;
    summary["horizon"] = horizon;
    summary["seeds"] = seeds;
    json per_method = json::object();

    for (Method m : methods) {
        const std::string name(to_string(m));
        const auto res = simulate_into(dir / name, m, config, spec, horizon, seeds, o, "compare");
        std::vector<double> ecp(horizon, 0.0), tp(horizon, 0.0), er(horizon, 0.0), uh(horizon, 0.0);
        std::vector<std::size_t> tp_n(horizon, 0);
        for (std::uint64_t seed : seeds) {
            std::ifstream in(dir / name / ("trajectory_seed" + std::to_string(seed) + ".csv"), std::ios::binary);
            const io::CsvTable traj = io::read_csv(in);
            for (std::size_t k = 0; k < traj.rows.size(); ++k) {
                const auto& r = traj.rows[k];
                ecp[k] += *io::parse_double(r[10]);
                if (!r[11].empty()) {
                    tp[k] += *io::parse_double(r[11]);
                    ++tp_n[k];
                }
                er[k] += *io::parse_double(r[12]);
                uh[k] += *io::parse_double(r[7]);
            }
        }
        const double n = static_cast<double>(seeds.size());
        for (std::size_t k = 0; k < horizon && !seeds.empty(); ++k) {
            table.rows.push_back({std::to_string(k + 1), name, io::format_double(ecp[k] / n),
                                  tp_n[k] ? io::format_double(tp[k] / static_cast<double>(tp_n[k])) : std::string(),
                                  io::format_double(er[k] / n), io::format_double(uh[k] / n)});
        }
        json entry = res.summary["aggregate"];
        entry["per_seed"] = res.summary["per_seed"];
        per_method[name] = entry;
    }
    summary["methods"] = per_method;
    write_file(dir / "compare.csv", csv_text(table));
    write_file(dir / "compare.json", dump(summary));
    return kOk;
}

// ---------------------------------------------------------------------------
// mc-safety
// ---------------------------------------------------------------------------

inline int cmd_mc_safety(const Options& o) {
    if (!o.seeds.empty()) throw UsageError("mc-safety takes --n-seeds and --base-seed");
    const ValidatedConfig config = validated(load_config(o));
    const SyntheticStreamSpec spec = load_spec(o);
    const auto methods = resolve_methods(o, Method::BPac);
    const std::uint64_t horizon = o.horizon.value_or(2000);
    const std::size_t n = static_cast<std::size_t>(o.n_seeds.value_or(500));

    json s;
    s["command"] = "mc-safety";
    s["config_hash"] = io::config_hash(config.get());
    s["epsilon"] = config->epsilon;
    s["alpha"] = config->alpha;
    s["base_seed"] = o.base_seed;
    json reports = json::array();
    for (Method m : methods) {
        const CoverageReport r = mc_safety(m, config, spec, horizon, n, o.base_seed, resolve_variant(o));
        json j;
        j["method"] = std::string(to_string(m));
        j["n_reps"] = r.n_reps;
        j["horizon"] = r.horizon;
        j["violations"] = r.violations;
        j["frequency"] = r.frequency;
        j["ci95_low"] = r.ci_low;
        j["ci95_high"] = r.ci_high;
        reports.push_back(j);
    }
    s["reports"] = reports;
    fs::create_directories(o.out_dir);
    write_file(fs::path(o.out_dir) / "coverage.json", dump(s));
    return kOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblationVariant {
    std::string name;
    RouterConfig config;
};

inline std::vector<AblationVariant> ablation_variants(const std::string& preset, const RouterConfig& base) {
    std::vector<AblationVariant> out;
    if (preset == "lambda") {
        out.push_back({"adaptive", base});
        RouterConfig fixed = base;
        fixed.betting = BettingStrategy{BettingKind::Fixed, 0.05};
        out.push_back({"fixed_0.05", fixed});
    } else if (preset == "rho") {
        out.push_back({"two_stage", base});
        for (double rho : {0.05, 0.2, 0.3, 0.7}) {
            RouterConfig c = base;
            c.schedule = ExplorationSchedule::constant(rho);
            out.push_back({"constant_" + io::format_double(rho), c});
        }
    } else if (preset == "twarm") {
        for (std::uint64_t tw : {10, 50, 100, 200, 300, 500}) {
            RouterConfig c = base;
            const ExplorationSchedule& s = base.schedule;
            const bool two = s.kind == ScheduleKind::TwoStage;
            c.schedule = ExplorationSchedule::two_stage(two ? s.rho_warm : 0.7, two ? s.rho_deploy : 0.05, tw);
            out.push_back({"t_warm_" + std::to_string(tw), c});
        }
    } else {
        throw UsageError("--preset must be lambda, rho or twarm");
    }
    return out;
}

inline int cmd_ablate(const Options& o) {
    const RouterConfig base = load_config(o);
    const SyntheticStreamSpec spec = load_spec(o);
    const auto variants = ablation_variants(o.preset, base);
    const auto seeds = resolve_seeds(o);
    const std::uint64_t horizon = o.horizon.value_or(2000);

    std::vector<ValidatedConfig> configs;
    for (const auto& v : variants) configs.push_back(validated(v.config));

    json rows = json::array();
    for (std::size_t k = 0; k < variants.size(); ++k) {
        const auto res = simulate_into(fs::path(o.out_dir) / variants[k].name, Method::BPac, configs[k], spec, horizon,
                                       seeds, o, "ablate");
        json row;
        row["variant"] = variants[k].name;
        row["config_hash"] = res.summary["config_hash"];
        row["aggregate"] = res.summary["aggregate"];
        rows.push_back(row);
    }
    json s;
    s["command"] = "ablate";
    s["preset"] = o.preset;
    s["horizon"] = horizon;
    s["seeds"] = seeds;
    s["variants"] = rows;
    write_file(fs::path(o.out_dir) / "ablate.json", dump(s));
    return kOk;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

inline json error_document(const std::string& type, const std::string& message, int code) {
    json e;
    e["type"] = type;
    e["message"] = message;
    e["exit_code"] = code;
    return e;
}

// Maps an in-flight exception to (exit code, error JSON).
inline std::pair<int, json> describe_current_exception() {
    try {
        throw;
    } catch (const InvalidConfig& e) {
        json doc = error_document("InvalidConfig", e.what(), kValidation);
        json v = json::array();
        for (const auto& x : e.violations())
            v.push_back(json{{"kind", to_string(x.kind)}, {"key", x.key}, {"message", x.message}});
        doc["violations"] = v;
        doc["key"] = e.violations().empty() ? "" : e.violations().front().key;
        return {kValidation, json{{"error", doc}}};
    } catch (const io::ParseError& e) {
        json doc = error_document("ParseError", e.what(), kValidation);
        doc["key"] = e.key();
        return {kValidation, json{{"error", doc}}};
    } catch (const io::TraceFormatError& e) {
        json doc = error_document("TraceFormatError", e.what(), kValidation);
        doc["row"] = e.row();
        return {kValidation, json{{"error", doc}}};
    } catch (const UnknownMethod& e) {
        json doc = error_document("UnknownMethod", e.what(), kValidation);
        doc["method"] = e.name();
        return {kValidation, json{{"error", doc}}};
    } catch (const UsageError& e) {
        return {kValidation, json{{"error", error_document("UsageError", e.what(), kValidation)}}};
    } catch (const Error& e) {
        return {kRuntime, json{{"error", error_document("RuntimeError", e.what(), kRuntime)}}};
    } catch (const std::exception& e) {
        return {kRuntime, json{{"error", error_document("RuntimeError", e.what(), kRuntime)}}};
    }
}

}  // namespace bpac::cli

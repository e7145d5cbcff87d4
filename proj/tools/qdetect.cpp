#include "qd/anomaly.hpp"
#include "qd/asymptotics.hpp"
#include "qd/design.hpp"
#include "qd/detectors.hpp"
#include "qd/errors.hpp"
#include "qd/model.hpp"
#include "qd/oc_solver.hpp"
#include "qd/parallel.hpp"
#include "qd/reference.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace {

using qd::Procedure;
using Json = nlohmann::ordered_json;

constexpr int exit_usage = 2;
constexpr int exit_input = 3;
constexpr int exit_numerical = 4;

// Thrown for option combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest text that reads back as the same double.
std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

using Cell = std::variant<std::string, double, std::int64_t>;

std::string cell_text(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) {
        return *s;
    }
    if (const auto* d = std::get_if<double>(&c)) {
        return format_double(*d);
    }
    return std::to_string(std::get<std::int64_t>(c));
}

Json cell_json(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) {
        return *s;
    }
    if (const auto* d = std::get_if<double>(&c)) {
        return std::isfinite(*d) ? Json(*d) : Json(format_double(*d));
    }
    return std::get<std::int64_t>(c);
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> warnings;

    void add(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

// Resolved settings of one invocation, in option order.
struct RunConfig {
    std::string command;
    std::vector<std::pair<std::string, std::string>> entries;

    std::string header_line() const {
        std::string line = "# qdetect " + command;
        for (const auto& [k, v] : entries) {
            line += " " + k + "=" + v;
        }
        return line;
    }
};

void collect_options(const CLI::App& app, RunConfig& cfg) {
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) {
            continue;
        }
        std::string value;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            for (std::size_t i = 0; i < res.size(); ++i) {
                value += (i ? "," : "") + res[i];
            }
        } else {
            value = opt->get_default_str();
        }
        if (!value.empty()) {
            cfg.entries.emplace_back(name, value);
        }
    }
}

void render_csv(std::ostream& out, const RunConfig& cfg, const Table& t) {
    out << cfg.header_line() << '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        out << (i ? "," : "") << t.columns[i];
    }
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << cell_text(row[i]);
        }
        out << '\n';
    }
    for (const auto& w : t.warnings) {
        out << "# warning: " << w << '\n';
    }
}

void render_json(std::ostream& out, const RunConfig& cfg, const Table& t) {
    Json j;
    j["command"] = cfg.command;
    Json config = Json::object();
    for (const auto& [k, v] : cfg.entries) {
        config[k] = v;
    }
    j["config"] = config;
    Json rows = Json::array();
    for (const auto& row : t.rows) {
        Json r = Json::object();
        for (std::size_t i = 0; i < row.size() && i < t.columns.size(); ++i) {
            r[t.columns[i]] = cell_json(row[i]);
        }
        rows.push_back(r);
    }
    j["rows"] = rows;
    j["warnings"] = t.warnings;
    out << j.dump(2) << '\n';
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw qd::InputError("cannot open output file '" + path + "'");
    }
    return f;
}

// Options shared by all subcommands; they live on the root app and fall
// through, so they may appear before or after the subcommand name.
struct Common {
    std::optional<double> mu;
    std::optional<double> theta;
    std::optional<double> a;
    std::string procedure = "sr";
    std::optional<double> gamma;
    std::optional<double> threshold;
    double head_start = 0.0;
    std::size_t grid = 2000;
    std::uint64_t seed = 20120801;
    unsigned threads = 0;
    std::string format = "csv";
    std::string output;
    bool grid_check = true;

    qd::GaussianChangeModel model() const {
        if (!mu || !theta || !a) {
            throw UsageError("--mu, --theta and --a are required");
        }
        return qd::GaussianChangeModel(*mu, *theta, *a);
    }
    Procedure proc() const { return qd::parse_procedure(procedure); }
    void need_gamma_or_threshold() const {
        if (!gamma && !threshold) {
            throw UsageError("one of --gamma or --threshold is required");
        }
    }
};

void emit(const Common& c, const RunConfig& cfg, const Table& t) {
    for (const auto& w : t.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    auto render = [&](std::ostream& out) {
        if (c.format == "json") {
            render_json(out, cfg, t);
        } else {
            render_csv(out, cfg, t);
        }
    };
    render(std::cout);
    if (!c.output.empty()) {
        std::ofstream f = open_output(c.output);
        render(f);
    }
}

struct Operating {
    double threshold = 0.0;
    double head_start = 0.0;
    std::optional<qd::CalibrationResult> calibration;
};

Operating resolve_operating_point(const Common& c, const qd::GaussianChangeModel& model,
                                  Procedure p) {
    c.need_gamma_or_threshold();
    Operating op;
    op.head_start = p == Procedure::sr_r ? c.head_start : 0.0;
    if (c.threshold) {
        op.threshold = *c.threshold;
        return op;
    }
    qd::CalibrationOptions opts;
    opts.grid_size = c.grid;
    op.calibration = qd::calibrate_threshold(p, model, *c.gamma, op.head_start, opts);
    op.threshold = op.calibration->threshold;
    return op;
}

// ARL on N/2 and N panels; the relative change estimates the O(1/N) error.
void grid_check(const Common& c, const qd::GaussianChangeModel& model, Procedure p,
                const Operating& op, Table& t, bool quantity_rows) {
    if (!c.grid_check) {
        return;
    }
    const std::size_t half = std::max<std::size_t>(c.grid / 2, 50);
    const qd::GridConvergence g =
        qd::check_grid_convergence(model, p, op.threshold, half, [&](const qd::OcSolver& s) {
            return qd::solver_arl(s, op.head_start);
        });
    const double change = g.relative_change();
    if (quantity_rows) {
        t.add({std::string("grid_check_arl_rel_change"), change});
    }
    if (change > 0.005) {
        t.warnings.push_back("ARL changes by " + format_double(change) + " between " +
                             std::to_string(half) + " and " + std::to_string(2 * half) +
                             " panels; increase --grid");
    }
}

// ---------------------------------------------------------------------------

Table cmd_calibrate(const Common& c) {
    const auto model = c.model();
    const Procedure p = c.proc();
    const Operating op = resolve_operating_point(c, model, p);
    Table t;
    t.columns = {"quantity", "value"};
    t.add({std::string("procedure"), std::string(qd::to_string(p))});
    t.add({std::string("threshold"), op.threshold});
    t.add({std::string("head_start"), op.head_start});
    if (op.calibration) {
        t.add({std::string("gamma"), op.calibration->gamma_target});
        t.add({std::string("achieved_arl"), op.calibration->achieved_arl});
        t.add({std::string("solver_evaluations"),
               static_cast<std::int64_t>(op.calibration->iterations)});
        if (op.calibration->quasi_stationary_mean) {
            t.add({std::string("mu_q"), *op.calibration->quasi_stationary_mean});
        }
    } else {
        const qd::OcSolver solver(model, p, op.threshold, c.grid);
        t.add({std::string("achieved_arl"), qd::solver_arl(solver, op.head_start)});
    }
    const qd::KlNumbers kl = model.kl_numbers();
    t.add({std::string("i_f"), kl.i_f});
    t.add({std::string("i_g"), kl.i_g});
    grid_check(c, model, p, op, t, true);
    return t;
}

struct OcArgs {
    std::vector<std::uint64_t> nus{0, 50, 100, 150, 200};
    std::string plot;
};

Table cmd_oc(const Common& c, const OcArgs& args, const RunConfig& cfg) {
    const auto model = c.model();
    const Procedure p = c.proc();
    const Operating op = resolve_operating_point(c, model, p);
    const qd::OcSolver solver(model, p, op.threshold, c.grid);
    Table t;
    t.columns = {"quantity", "nu", "value"};
    auto scalar = [&](const std::string& name, double v) { t.add({name, std::string(), v}); };
    scalar("threshold", op.threshold);
    scalar("head_start", op.head_start);

    std::uint64_t nu_last = 0;
    for (auto nu : args.nus) {
        nu_last = std::max(nu_last, nu);
    }
    std::vector<double> curve;
    if (p == Procedure::srp) {
        const qd::QuasiStationary qs = solver.quasi_stationary();
        const qd::SrpCharacteristics ch = solver.srp_characteristics(qs);
        scalar("arl", ch.arl_geometric);
        scalar("arl_quasi_stationary_average", ch.arl_bar);
        scalar("lambda", qs.lambda);
        scalar("mu_q", qs.mean);
        for (auto nu : args.nus) {
            t.add({std::string("add"), static_cast<std::int64_t>(nu), ch.add_bar});
        }
        scalar("add_inf", ch.add_bar);
        scalar("sadd", ch.add_bar);
        scalar("stadd", ch.stadd_bar);
        curve.assign(nu_last + 1, ch.add_bar);
    } else {
        const double x0 = p == Procedure::sr_r ? op.head_start : solver.default_start();
        scalar("arl", solver.arl(x0));
        const qd::QuasiStationary qs = solver.quasi_stationary();
        scalar("lambda", qs.lambda);
        const qd::DelayProfile profile = solver.delay_profile(x0, {nu_last, 1e-6, nu_last}, &qs);
        for (auto nu : args.nus) {
            if (nu < profile.add.size()) {
                t.add({std::string("add"), static_cast<std::int64_t>(nu), profile.add[nu]});
            } else {
                t.warnings.push_back("ADD_" + std::to_string(nu) +
                                     " unavailable: survival probability vanished");
            }
        }
        scalar("add_inf", profile.add_inf);
        scalar("sadd", profile.supremum);
        scalar("stadd", solver.stadd(x0));
        if (p != Procedure::cusum) {
            scalar("lower_bound", solver.lower_bound(x0));
        }
        curve = profile.add;
    }
    grid_check(c, model, p, op, t, false);

    if (!args.plot.empty()) {
        std::ofstream f = open_output(args.plot);
        f << cfg.header_line() << '\n';
        qd::write_profile_curves(f, {{p, curve}});
    }
    return t;
}

struct ConstantsArgs {
    std::size_t paths = 1000000;
    std::size_t horizon = 10000;
    std::size_t batches = 100;
    bool smoke = false;
    bool r_star = false;
    std::optional<double> c_head_start;
};

Table cmd_constants(const Common& c, const ConstantsArgs& args) {
    const auto model = c.model();
    qd::MonteCarloBudget budget{args.paths, args.horizon, c.seed, args.batches};
    if (args.smoke) {
        budget = qd::smoke_budget(c.seed);
    }
    const qd::AsymptoticConstants k =
        qd::estimate_asymptotic_constants(model, budget, args.c_head_start);
    Table t;
    t.columns = {"constant", "value", "std_error"};
    auto row = [&](const std::string& name, const qd::Estimate& e) {
        t.add({name, e.value, e.std_error});
    };
    row("zeta", k.zeta);
    row("varkappa", k.varkappa);
    row("beta0", k.beta0);
    row("beta_inf", k.beta_inf);
    row("c0", k.c0);
    row("c_inf", k.c_inf);
    if (k.c_r) {
        row("c_r", *k.c_r);
    }
    const qd::KlNumbers kl = model.kl_numbers();
    t.add({std::string("i_f"), kl.i_f, 0.0});
    t.add({std::string("i_g"), kl.i_g, 0.0});
    t.warnings = k.warnings;
    if (args.r_star) {
        const qd::RStarPractical r = qd::find_r_star_practical(k);
        t.add({std::string("r_star_practical"), r.head_start, std::nan("")});
        for (const auto& w : r.warnings) {
            t.warnings.push_back(w);
        }
    }
    return t;
}

struct DetectArgs {
    std::string trace;
    std::optional<std::uint64_t> surrogate;
    std::optional<std::size_t> onset;
    std::optional<double> diminish;
    bool fit = false;
    bool keep_head_start = false;
    std::string alarms;
    std::string trajectory;
    std::string gof;
    std::string write_trace;
};

Table cmd_detect(const Common& c, const DetectArgs& args, const RunConfig& cfg) {
    if (args.trace.empty() == !args.surrogate) {
        throw UsageError("exactly one of --trace or --surrogate is required");
    }
    qd::TraceSeries series =
        args.surrogate ? qd::make_surrogate_trace(*args.surrogate) : qd::load_trace(args.trace);
    if (args.onset) {
        series.onset = *args.onset;
    }
    const std::size_t onset = series.onset.value_or(series.size());
    const std::size_t offset = series.offset.value_or(series.size());
    if (onset > series.size() || offset > series.size() || offset < onset) {
        throw qd::InputError("onset/offset labels outside the trace");
    }
    std::optional<qd::WindowStats> pre;
    if (onset >= 2) {
        pre = qd::window_stats(series, 0, onset);
    }
    if (args.diminish) {
        if (!pre || !series.onset) {
            throw UsageError("--diminish needs a labeled onset with at least 2 pre-change samples");
        }
        series = qd::diminish_attack(series, onset, offset, *pre, *args.diminish);
    }

    Common mc = c;
    if (args.fit) {
        if (!pre) {
            throw UsageError("--fit needs at least 2 pre-change samples");
        }
        mc.mu = pre->mean;
        mc.a = pre->a_hat;
        if (!mc.theta && args.diminish) {
            mc.theta = *args.diminish;
        }
    }
    const auto model = mc.model();
    const Procedure p = c.proc();
    c.need_gamma_or_threshold();

    qd::AnomalyOptions opts;
    opts.grid_size = c.grid;
    opts.threshold = c.threshold;
    opts.seed = c.seed;
    opts.head_start = c.head_start;
    opts.redraw_head_start = !args.keep_head_start;
    opts.record_trajectory = !args.trajectory.empty();
    const double gamma = c.gamma.value_or(0.0);
    const qd::AnomalyReport rep = qd::detect_anomaly(series, model, p, gamma, opts);

    Table t;
    t.columns = {"quantity", "value"};
    t.add({std::string("procedure"), std::string(qd::to_string(p))});
    t.add({std::string("mu"), model.mu()});
    t.add({std::string("theta"), model.theta()});
    t.add({std::string("a"), model.a()});
    t.add({std::string("threshold"), rep.threshold});
    if (rep.solver_arl) {
        t.add({std::string("solver_arl"), *rep.solver_arl});
    }
    t.add({std::string("samples"), static_cast<std::int64_t>(series.size())});
    t.add({std::string("alarms"), static_cast<std::int64_t>(rep.run.log.alarm_times.size())});
    t.add({std::string("false_alarms"), static_cast<std::int64_t>(rep.run.false_alarms)});
    if (rep.change_point) {
        t.add({std::string("change_point"), static_cast<std::int64_t>(*rep.change_point)});
    }
    if (rep.run.detection_delay) {
        t.add({std::string("delay_samples"), static_cast<std::int64_t>(*rep.run.detection_delay)});
        t.add({std::string("delay_seconds"), *rep.delay_seconds});
    } else if (rep.change_point) {
        t.warnings.push_back("no alarm after the onset");
    }

    std::cerr << qd::to_string(p) << ": threshold " << format_double(rep.threshold) << ", "
              << rep.run.log.alarm_times.size() << " alarm(s), " << rep.run.false_alarms
              << " false";
    if (rep.run.detection_delay) {
        std::cerr << ", delay " << *rep.run.detection_delay << " samples ("
                  << format_double(*rep.delay_seconds) << " s)";
    }
    std::cerr << '\n';

    if (!args.alarms.empty()) {
        std::ofstream f = open_output(args.alarms);
        f << cfg.header_line() << '\n';
        qd::write_alarm_log(f, rep.run.log, rep.change_point);
    }
    if (!args.trajectory.empty()) {
        std::ofstream f = open_output(args.trajectory);
        f << cfg.header_line() << '\n' << "index,statistic\n";
        const auto& traj = rep.run.log.statistic_trajectory;
        for (std::size_t i = 0; i < traj.size(); ++i) {
            f << i + 1 << ',' << format_double(traj[i]) << '\n';
        }
    }
    if (!args.gof.empty()) {
        auto write = [&](const std::string& suffix, std::size_t lo, std::size_t hi) {
            if (hi - lo < 20) {
                t.warnings.push_back("goodness-of-fit skipped for " + suffix + ": fewer than 20 samples");
                return;
            }
            std::ofstream f = open_output(args.gof + "_" + suffix + ".csv");
            f << cfg.header_line() << '\n';
            qd::write_gof(f, qd::gof_report(series, lo, hi));
        };
        write("pre", 0, onset);
        write("attack", onset, offset);
    }
    if (!args.write_trace.empty()) {
        std::ofstream f = open_output(args.write_trace);
        f << cfg.header_line() << '\n';
        qd::write_trace(f, series);
    }
    return t;
}

struct SimulateArgs {
    std::int64_t replications = 10000;
    std::string measure = "arl";
    std::optional<std::uint64_t> nu;
    std::uint64_t max_steps = 100000000;
};

Table cmd_simulate(const Common& c, const SimulateArgs& args) {
    if (args.replications <= 0) {
        throw UsageError("--replications must be positive");
    }
    if (args.measure != "arl" && args.measure != "add" && args.measure != "stadd") {
        throw UsageError("--measure must be arl, add or stadd");
    }
    if (args.measure != "arl" && !args.nu) {
        throw UsageError("--measure " + args.measure + " needs --nu");
    }
    const auto model = c.model();
    const Procedure p = c.proc();
    const Operating op = resolve_operating_point(c, model, p);
    const qd::OcSolver solver(model, p, op.threshold, c.grid);

    qd::DetectorSpec spec;
    std::optional<qd::QuasiStationary> qs;
    switch (p) {
        case Procedure::cusum: spec = qd::DetectorSpec::cusum(op.threshold); break;
        case Procedure::sr: spec = qd::DetectorSpec::sr(op.threshold); break;
        case Procedure::sr_r: spec = qd::DetectorSpec::sr_r(op.threshold, op.head_start); break;
        case Procedure::srp:
            qs = solver.quasi_stationary();
            spec = qd::DetectorSpec::srp(op.threshold, qs->distribution);
            break;
    }

    const std::size_t n = static_cast<std::size_t>(args.replications);
    std::vector<double> value(n, std::nan(""));
    qd::parallel_for(n, [&](std::size_t i) {
        const std::uint64_t seed = qd::derive_seed(c.seed, i);
        if (args.measure == "stadd") {
            const auto d = qd::simulate_multicyclic_delay(spec, model, *args.nu, seed, args.max_steps);
            if (d) {
                value[i] = static_cast<double>(*d);
            }
            return;
        }
        const std::optional<std::uint64_t> cp =
            args.measure == "arl" ? std::nullopt : std::optional<std::uint64_t>(*args.nu);
        const auto stop = qd::simulate_stopping_time(spec, model, cp, seed, args.max_steps);
        if (!stop) {
            return;
        }
        if (args.measure == "arl") {
            value[i] = static_cast<double>(*stop);
        } else if (*stop > *args.nu) {
            value[i] = static_cast<double>(*stop - *args.nu);
        }
    });

    qd::CompensatedSum sum;
    qd::CompensatedSum sum_sq;
    std::size_t used = 0;
    for (double v : value) {
        if (std::isfinite(v)) {
            sum.add(v);
            sum_sq.add(v * v);
            ++used;
        }
    }
    Table t;
    t.columns = {"quantity", "value"};
    t.add({std::string("measure"), args.measure});
    t.add({std::string("threshold"), op.threshold});
    t.add({std::string("head_start"), op.head_start});
    if (args.nu) {
        t.add({std::string("nu"), static_cast<std::int64_t>(*args.nu)});
    }
    t.add({std::string("replications"), static_cast<std::int64_t>(n)});
    t.add({std::string("used"), static_cast<std::int64_t>(used)});
    if (used >= 2) {
        const double mean = sum.value() / static_cast<double>(used);
        const double var = std::max(0.0, (sum_sq.value() - static_cast<double>(used) * mean * mean) /
                                              static_cast<double>(used - 1));
        t.add({std::string("mean"), mean});
        t.add({std::string("std_error"), std::sqrt(var / static_cast<double>(used))});
    } else {
        t.warnings.push_back("fewer than 2 usable replications");
    }

    double reference = 0.0;
    const double x0 = p == Procedure::sr_r ? op.head_start : solver.default_start();
    if (p == Procedure::srp) {
        const qd::SrpCharacteristics ch = solver.srp_characteristics(*qs);
        reference = args.measure == "arl" ? ch.arl_geometric
                    : args.measure == "add" ? ch.add_bar
                                            : ch.stadd_bar;
    } else if (args.measure == "arl") {
        reference = solver.arl(x0);
    } else if (args.measure == "add") {
        const qd::QuasiStationary q = solver.quasi_stationary();
        const qd::DelayProfile prof = solver.delay_profile(x0, {*args.nu, 1e-6, *args.nu}, &q);
        reference = *args.nu < prof.add.size() ? prof.add[*args.nu] : std::nan("");
    } else {
        reference = solver.stadd(x0);
    }
    t.add({std::string("solver_value"), reference});
    if (n - used > 0) {
        t.warnings.push_back(std::to_string(n - used) + " replication(s) excluded (no alarm within "
                             "--max-steps, or stopped before nu)");
    }
    return t;
}

struct TablesArgs {
    std::string scenario = "all";
    bool r_star = false;
    std::string plot_dir;
    std::optional<std::size_t> grid;
};

Table cmd_tables(const Common& c, const TablesArgs& args, const RunConfig& cfg) {
    std::vector<std::pair<std::string, qd::ReferenceScenario>> scenarios;
    if (args.scenario == "low" || args.scenario == "all") {
        scenarios.emplace_back("low_noise", qd::low_noise_scenario());
    }
    if (args.scenario == "high" || args.scenario == "all") {
        scenarios.emplace_back("high_noise", qd::high_noise_scenario());
    }
    if (scenarios.empty()) {
        throw UsageError("--scenario must be low, high or all");
    }
    (void)c;
    Table t;
    t.columns = {"scenario", "group", "quantity", "reference", "computed", "rel_error",
                 "rel_tolerance", "status"};
    std::size_t passed = 0;
    std::size_t total = 0;
    for (const auto& [tag, sc] : scenarios) {
        qd::ReproductionOptions opts;
        opts.grid_size = args.grid;
        opts.search_r_star = args.r_star;
        const qd::ScenarioReproduction rep = qd::reproduce_scenario(sc, opts);
        for (const auto* rows : {&rep.arl_rows, &rep.delay_rows}) {
            for (const auto& r : *rows) {
                t.add({tag, r.group, r.quantity, r.reference, r.computed, r.rel_error(),
                       r.rel_tolerance, std::string(r.pass() ? "pass" : "FAIL")});
                passed += r.pass() ? 1 : 0;
                ++total;
            }
        }
        for (const auto& w : rep.warnings) {
            t.warnings.push_back(tag + ": " + w);
        }
        if (!args.plot_dir.empty()) {
            std::filesystem::create_directories(args.plot_dir);
            std::ofstream f = open_output(args.plot_dir + "/profile_" + tag + ".csv");
            f << cfg.header_line() << " curves=" << tag << '\n';
            qd::write_profile_curves(f, rep.curves);
        }
    }
    std::cerr << passed << "/" << total << " reference rows within tolerance\n";
    return t;
}

bool on_command_line(int argc, char** argv, const std::string& flag) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == flag || arg.rfind(flag + "=", 0) == 0) {
            return true;
        }
    }
    return false;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quickest change-point detection for N(mu, a mu) -> N(theta, a theta) data"};
    app.set_config("--config", "", "Read options from a 'key = value' file (flags win)");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();

    Common c;
    app.add_option("--mu", c.mu, "Pre-change mean");
    app.add_option("--theta", c.theta, "Post-change mean");
    app.add_option("--a", c.a, "Variance-to-mean ratio");
    app.add_option("--procedure", c.procedure, "cusum, sr, srp or sr_r")->capture_default_str();
    app.add_option("--gamma", c.gamma, "Target ARL to false alarm (excludes --threshold)");
    app.add_option("--threshold", c.threshold, "Explicit threshold A (excludes --gamma)");
    app.add_option("--head-start", c.head_start, "SR-r head start r")->capture_default_str();
    app.add_option("--grid", c.grid, "Collocation panels N")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{10}, std::size_t{20000}));
    app.add_option("--seed", c.seed, "Random seed (falls back to $QD_SEED)")
        ->envname("QD_SEED")
        ->capture_default_str();
    app.add_option("--threads", c.threads, "Worker cap, 0 = all cores")->capture_default_str();
    app.add_option("--format", c.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    app.add_option("--output", c.output, "Also write the output to this file");
    app.add_flag("!--no-grid-check", c.grid_check,
                 "Skip the N/2 vs N panel comparison of the ARL");

    auto* calibrate = app.add_subcommand("calibrate", "Threshold A with ARL(A) = gamma");

    OcArgs oc_args;
    auto* oc = app.add_subcommand("oc", "Operating characteristics at one threshold");
    oc->add_option("--nu", oc_args.nus, "Change points for ADD_nu")->delimiter(',')->capture_default_str();
    oc->add_option("--plot", oc_args.plot, "Write nu,ADD_nu plot data to this file");

    ConstantsArgs k_args;
    auto* constants = app.add_subcommand("constants", "Monte-Carlo asymptotic constants");
    constants->add_option("--paths", k_args.paths, "Monte-Carlo paths")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    constants->add_option("--horizon", k_args.horizon, "Walk horizon")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    constants->add_option("--batches", k_args.batches, "Batches for standard errors")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    constants->add_flag("--smoke", k_args.smoke, "Use the 1e4 x 1e3 smoke budget");
    constants->add_option("--c-head-start", k_args.c_head_start, "Also estimate C_r at this r");
    constants->add_flag("--r-star", k_args.r_star, "Solve C_r = C_inf for the practical head start");

    DetectArgs d_args;
    auto* detect = app.add_subcommand("detect", "Multi-cyclic detection on a packet-rate trace");
    detect->add_option("--trace", d_args.trace, "CSV with header time_s,packets_per_s");
    detect->add_option("--surrogate", d_args.surrogate, "Generate a surrogate trace with this seed");
    detect->add_option("--onset", d_args.onset, "Index of the first attack sample");
    detect->add_option("--diminish", d_args.diminish,
                       "Rescale the labeled attack window to this post-change mean");
    detect->add_flag("--fit", d_args.fit, "Estimate mu and a from the pre-change window");
    detect->add_flag("--keep-head-start", d_args.keep_head_start,
                     "SRP: draw the head start once instead of at every restart");
    detect->add_option("--alarms", d_args.alarms, "Write the alarm log to this file");
    detect->add_option("--trajectory", d_args.trajectory, "Write the statistic trajectory");
    detect->add_option("--gof", d_args.gof, "Write Q-Q data to <prefix>_pre.csv and _attack.csv");
    detect->add_option("--write-trace", d_args.write_trace, "Write the (transformed) trace");

    SimulateArgs s_args;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo operating characteristics");
    simulate->add_option("--replications", s_args.replications, "Independent runs")
        ->capture_default_str();
    simulate->add_option("--measure", s_args.measure, "arl, add (conditional ADD_nu) or stadd")
        ->capture_default_str();
    simulate->add_option("--nu", s_args.nu, "Change point for add / stadd");
    simulate->add_option("--max-steps", s_args.max_steps, "Per-run step cap")->capture_default_str();

    TablesArgs t_args;
    auto* tables = app.add_subcommand("tables", "Reproduce the reference operating-point tables");
    tables->add_option("--scenario", t_args.scenario, "low, high or all")->capture_default_str();
    tables->add_flag("--r-star", t_args.r_star, "Also run the r* search (several minutes)");
    tables->add_option("--plot-dir", t_args.plot_dir, "Write nu,ADD_nu curves here");
    tables->add_option("--panels", t_args.grid, "Override the scenario panel counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        // A command-line --gamma or --threshold overrides the other one
        // coming from the config file; both on one level is an error.
        if (c.gamma && c.threshold) {
            const bool cli_gamma = on_command_line(argc, argv, "--gamma");
            const bool cli_threshold = on_command_line(argc, argv, "--threshold");
            if (cli_gamma == cli_threshold) {
                throw UsageError("--gamma and --threshold are mutually exclusive");
            }
            (cli_gamma ? c.threshold : c.gamma).reset();
            app.get_option(cli_gamma ? "--threshold" : "--gamma")->clear();
        }
        qd::thread_cap() = c.threads;
        RunConfig cfg;
        cfg.command = app.get_subcommands().front()->get_name();
        collect_options(app, cfg);
        collect_options(*app.get_subcommands().front(), cfg);

        Table t;
        if (calibrate->parsed()) {
            t = cmd_calibrate(c);
        } else if (oc->parsed()) {
            t = cmd_oc(c, oc_args, cfg);
        } else if (constants->parsed()) {
            t = cmd_constants(c, k_args);
        } else if (detect->parsed()) {
            t = cmd_detect(c, d_args, cfg);
        } else if (simulate->parsed()) {
            t = cmd_simulate(c, s_args);
        } else if (tables->parsed()) {
            t = cmd_tables(c, t_args, cfg);
        }
        emit(c, cfg, t);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nrun with --help for options\n";
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return exit_usage;
    } catch (const qd::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_input;
    } catch (const qd::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

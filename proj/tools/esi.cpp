// Command-line front end: esi <subcommand> [options].

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "esi/config.hpp"
#include "esi/harness.hpp"
#include "esi/io.hpp"
#include "esi/oracle.hpp"

namespace {

using namespace esi;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out_dir;
    bool analytic = false;
    bool monte_carlo = false;

    void attach(CLI::App* app, bool config_required) {
        auto* c = app->add_option("--config", config, "scenario INI file");
        if (config_required) c->required();
        app->add_option("--seed", seed, "master seed (overrides [run] seed)");
        app->add_option("--threads", threads, "worker threads (0: hardware concurrency)");
        app->add_option("--out-dir", out_dir, "artifact directory (overrides [run] out_dir)");
        auto* a = app->add_flag("--analytic", analytic, "closed-form evaluation");
        auto* m = app->add_flag("--monte-carlo", monte_carlo, "sampled evaluation");
        a->excludes(m);
    }

    harness::RunOptions options() const {
        harness::RunOptions o;
        o.seed = seed;
        o.threads = threads;
        o.out_dir = out_dir;
        if (analytic) o.monte_carlo = false;
        if (monte_carlo) o.monte_carlo = true;
        return o;
    }

    config::ScenarioConfig load() const {
        if (config.empty()) return {};
        return config::load_scenario(config);
    }
};

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return harness::kConfigError;
    } catch (const estimation::LowStatisticsError& e) {
        std::cerr << "low statistics: " << e.what() << '\n';
        return harness::kLowStatistics;
    } catch (const sensitivity::InfeasibleBudgetError& e) {
        std::cerr << "infeasible budget: " << e.what() << '\n';
        return harness::kInfeasibleBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return harness::kError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entanglement-assisted stellar interferometry simulator"};
    app.require_subcommand(1);

    Common run_opts, sim_opts, est_opts, rep_opts, sen_opts, rec_opts, orc_opts;

    auto* run = app.add_subcommand("run", "run every stage listed in the scenario pipeline");
    run_opts.attach(run, true);

    auto* sim = app.add_subcommand("simulate", "sample an event log and fit visibilities");
    sim_opts.attach(sim, true);

    std::string events_path;
    auto* est = app.add_subcommand("estimate", "fit visibilities from an event log");
    est_opts.attach(est, false);
    est->add_option("--events", events_path, "event log (JSON lines); without it the scenario is simulated first");

    auto* rep = app.add_subcommand("repeater", "repeater chain rate and fidelity");
    rep_opts.attach(rep, true);

    std::string budget_name = "default";
    auto* sen = app.add_subcommand("sensitivity", "photon budget and limiting magnitude");
    sen_opts.attach(sen, false);
    sen->add_option("--budget", budget_name, "preset when no config is given")
        ->check(CLI::IsMember({"default", "improved"}));

    std::string source_path;
    double pixel_scale = 0.0;
    std::size_t grid = 16;
    auto* rec = app.add_subcommand("reconstruct", "forward-model a source on a full baseline grid and invert it");
    rec_opts.attach(rec, false);
    rec->add_option("--source", source_path, "point list or graymap (instead of a config)");
    rec->add_option("--pixel-scale", pixel_scale, "radians per pixel");
    rec->add_option("--grid", grid, "image size for point sources");

    auto* orc = app.add_subcommand("oracle-check", "closed forms against exact circuits");
    orc_opts.attach(orc, false);

    CLI11_PARSE(app, argc, argv);

    if (*run)
        return guarded([&] {
            const auto cfg = run_opts.load();
            harness::run_scenario(harness::Context(cfg, run_opts.options(), std::cout));
            return harness::kOk;
        });
    if (*sim)
        return guarded([&] {
            const auto cfg = sim_opts.load();
            harness::simulate_stage(harness::Context(cfg, sim_opts.options(), std::cout));
            return harness::kOk;
        });
    if (*est)
        return guarded([&] {
            const auto cfg = est_opts.load();
            const harness::Context ctx(cfg, est_opts.options(), std::cout);
            if (events_path.empty()) {
                if (est_opts.config.empty()) throw config::ConfigError("estimate needs --events or --config");
                harness::estimate_stage(ctx, harness::simulate(cfg, ctx.seed(), ctx.threads()));
            } else {
                std::ifstream in(events_path);
                if (!in) throw std::runtime_error("cannot open '" + events_path + "'");
                harness::estimate_stage(ctx, io::read_event_log(in));
            }
            return harness::kOk;
        });
    if (*rep)
        return guarded([&] {
            const auto cfg = rep_opts.load();
            harness::repeater_stage(harness::Context(cfg, rep_opts.options(), std::cout));
            return harness::kOk;
        });
    if (*sen)
        return guarded([&] {
            auto cfg = sen_opts.load();
            if (!cfg.budget)
                cfg.budget = budget_name == "improved" ? sensitivity::SensitivityBudget::improved()
                                                       : sensitivity::SensitivityBudget{};
            harness::sensitivity_stage(harness::Context(cfg, sen_opts.options(), std::cout));
            return harness::kOk;
        });
    if (*rec)
        return guarded([&] {
            auto cfg = rec_opts.load();
            if (!source_path.empty()) {
                cfg.source = sky::load_source(source_path, pixel_scale);
                cfg.image_pixel_scale = pixel_scale;
                cfg.image_grid = grid;
            }
            if (!cfg.source) throw config::ConfigError("reconstruct needs --config or --source");
            if (!cfg.source->is_grid() && !(cfg.image_pixel_scale > 0.0))
                throw config::ConfigError("reconstruct: --pixel-scale required for point sources");
            harness::reconstruct_stage(harness::Context(cfg, rec_opts.options(), std::cout));
            return harness::kOk;
        });
    if (*orc)
        return guarded([&] {
            const config::ScenarioConfig cfg;
            const harness::Context ctx(cfg, orc_opts.options(), std::cout);
            const auto rows = oracle::full_suite();
            const auto groups = oracle::summarize(rows);
            oracle::write_summary_text(std::cout, groups);
            ctx.write("oracle.csv", [&](std::ostream& o) { oracle::write_rows_csv(o, rows); });
            for (const auto& g : groups)
                if (g.failures) return static_cast<int>(harness::kOracleFailure);
            return static_cast<int>(harness::kOk);
        });
    return harness::kError;
}

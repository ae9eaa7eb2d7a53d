/**
 * @file harness.hpp
 * @brief Scenario orchestration shared by the command line and the acceptance suite.
 *
 * Stages and their artifacts (every file starts with a schema line; graymaps
 * carry it as the comment after the magic number):
 *   simulate    events.jsonl, summary.csv, fits.csv, fringe_<i>_<j>.csv
 *               (analytic mode: expected.csv instead of sampled events)
 *   repeater    chain.csv
 *   sensitivity budget.csv, budget.txt
 *   reconstruct image.pgm, image.csv
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "esi/config.hpp"
#include "esi/estimation.hpp"
#include "esi/io.hpp"
#include "esi/repeater.hpp"
#include "esi/schemes.hpp"
#include "esi/sensitivity.hpp"

namespace esi::harness {

enum ExitCode : int {
    kOk = 0,
    kError = 1,
    kConfigError = 2,
    kLowStatistics = 3,
    kInfeasibleBudget = 4,
    kOracleFailure = 5,
};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out_dir;
    std::optional<bool> monte_carlo;  // unset: per-stage default
};

class Context {
public:
    Context(const config::ScenarioConfig& cfg, const RunOptions& opt, std::ostream& log)
        : cfg_(cfg), log_(log) {
        seed_ = opt.seed ? opt.seed : cfg.seed;
        threads_ = opt.threads.value_or(cfg.threads);
        out_ = opt.out_dir.value_or(cfg.out_dir);
        monte_carlo_ = opt.monte_carlo;
    }

    const config::ScenarioConfig& config() const { return cfg_; }
    std::ostream& log() const { return log_; }
    unsigned threads() const { return threads_; }
    const std::filesystem::path& out_dir() const { return out_; }
    std::optional<bool> monte_carlo() const { return monte_carlo_; }

    std::uint64_t seed() const {
        if (!seed_) throw config::ConfigError("[run] seed: required (or pass --seed)");
        return *seed_;
    }

    std::filesystem::path write(const std::string& name, const std::function<void(std::ostream&)>& body) const {
        std::filesystem::create_directories(out_);
        const auto path = out_ / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
        body(f);
        if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
        log_ << "wrote " << path.string() << '\n';
        return path;
    }

private:
    const config::ScenarioConfig& cfg_;
    std::ostream& log_;
    std::optional<std::uint64_t> seed_;
    unsigned threads_ = 1;
    std::filesystem::path out_;
    std::optional<bool> monte_carlo_;
};

/// Event log of the scenario's scheme; a pure function of (config, seed).
inline schemes::EventLog simulate(const config::ScenarioConfig& cfg, std::uint64_t seed, unsigned threads = 1) {
    if (!cfg.scheme || !cfg.source || cfg.baselines.empty())
        throw config::ConfigError("simulation needs [scheme], [source] and [geometry] sections");
    return schemes::simulate_run(*cfg.scheme, *cfg.source, cfg.baselines, cfg.slots, seed, threads);
}

inline std::vector<std::pair<std::size_t, std::size_t>> telescope_pairs(const schemes::EventLog& log) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (log.scheme != schemes::SchemeKind::w_state) return {{0, 1}};
    for (std::size_t i = 0; i < log.telescopes; ++i)
        for (std::size_t j = i + 1; j < log.telescopes; ++j) out.emplace_back(i, j);
    return out;
}

/// Fits every telescope pair of the log and writes fits.csv and per-pair fringe tables.
/// Pairs with too few events are reported; if no pair can be fitted a LowStatisticsError propagates.
inline void estimate_stage(const Context& ctx, const schemes::EventLog& log) {
    std::vector<std::tuple<std::size_t, std::size_t, estimation::FringeFit>> fits;
    std::string last_error;
    for (auto [i, j] : telescope_pairs(log)) {
        try {
            fits.emplace_back(i, j, estimation::estimate_visibility(log, i, j));
        } catch (const estimation::LowStatisticsError& e) {
            last_error = e.what();
            ctx.log() << "pair (" << i << ',' << j << "): " << e.what() << '\n';
        }
    }
    if (fits.empty()) throw estimation::LowStatisticsError(last_error);
    ctx.write("fits.csv", [&](std::ostream& o) {
        o << "# esi.fits v1\n";
        o << "i,j,re,im,re_stderr,im_stderr,amplitude,amplitude_stderr,phase,phase_stderr,accepted\n";
        o << std::setprecision(17);
        for (const auto& [i, j, f] : fits)
            o << i << ',' << j << ',' << f.v.real() << ',' << f.v.imag() << ',' << f.re_stderr << ',' << f.im_stderr
              << ',' << std::abs(f.v) << ',' << f.amplitude_stderr << ',' << std::arg(f.v) << ',' << f.phase_stderr
              << ',' << f.accepted << '\n';
    });
    for (const auto& [i, j, f] : fits) {
        ctx.write("fringe_" + std::to_string(i) + "_" + std::to_string(j) + ".csv",
                  [&](std::ostream& o) { io::write_fringe_csv(o, f); });
        ctx.log() << "V(" << i << ',' << j << ") = " << std::setprecision(6) << f.v.real() << (f.v.imag() < 0 ? " - " : " + ")
                  << std::abs(f.v.imag()) << "i  (|V| = " << std::abs(f.v) << " +- " << f.amplitude_stderr
                  << ", accepted " << f.accepted << ")\n";
    }
}

inline void simulate_stage(const Context& ctx) {
    const auto& cfg = ctx.config();
    if (ctx.monte_carlo().value_or(true)) {
        const auto log = simulate(cfg, ctx.seed(), ctx.threads());
        ctx.log() << "simulated " << log.slots << " slots, " << log.records.size() << " click records, discard fraction "
                  << schemes::discard_fraction(log) << '\n';
        ctx.write("events.jsonl", [&](std::ostream& o) { io::write_event_log(o, log); });
        ctx.write("summary.csv", [&](std::ostream& o) { io::write_summary_csv(o, log); });
        estimate_stage(ctx, log);
        return;
    }
    // Analytic: expected correlated fraction per pair and delay.
    if (!cfg.scheme || !cfg.source || cfg.baselines.empty())
        throw config::ConfigError("simulation needs [scheme], [source] and [geometry] sections");
    const auto& s = *cfg.scheme;
    ctx.write("expected.csv", [&](std::ostream& o) {
        o << "# esi.expected v1\n";
        o << "i,j,delta,acceptance,correlated_fraction\n";
        o << std::setprecision(17);
        const double overlap = s.temporal.factor();
        if (s.kind == schemes::SchemeKind::w_state) {
            const auto vm = schemes::visibility_matrix(*cfg.source, cfg.baselines);
            for (std::size_t i = 0; i < s.telescopes; ++i)
                for (std::size_t j = i + 1; j < s.telescopes; ++j)
                    for (double d : s.delta_schedule) {
                        auto phase = [&](std::size_t k) {
                            return (s.w_phases.empty() ? 0.0 : s.w_phases[k]) + static_cast<double>(k) * d;
                        };
                        const auto p =
                            schemes::w_state_probs(s.telescopes, i, j, vm[i][j] * overlap, phase(i), phase(j));
                        o << i << ',' << j << ',' << phase(i) - phase(j) << ',' << 1.0 - p.same_site_discard << ','
                          << p.correlated << '\n';
                    }
        } else {
            const auto v = sky::visibility(*cfg.source, cfg.baselines[0]) * overlap;
            for (double d : s.delta_schedule) {
                if (s.kind == schemes::SchemeKind::direct) {
                    o << "0,1," << d << ",1," << schemes::direct_detection_probs(v, d).port1 << '\n';
                } else if (s.photons == schemes::PhotonModel::coherent) {
                    const auto w = schemes::weak_coherent_stats(s.p_astro, s.p_lab, v, d);
                    o << "0,1," << d << ',' << w.total_coincidence << ',' << w.correlated / w.total_coincidence << '\n';
                } else {
                    const auto p = schemes::entangled_coincidence_probs(v, d);
                    o << "0,1," << d << ',' << (s.full_bell ? 1.0 : p.one_each_side) << ',' << p.correlated << '\n';
                }
            }
        }
    });
}

inline repeater::ChainResult chain_result(const Context& ctx) {
    const auto& cfg = ctx.config();
    if (!cfg.chain) throw config::ConfigError("repeater stage needs a [repeater] section");
    const bool mc = ctx.monte_carlo().value_or(cfg.chain_monte_carlo);
    if (!mc) return repeater::chain_simulate(*cfg.chain);
    auto rng = CounterRng(ctx.seed(), 0x72657065ULL);
    return repeater::chain_simulate(*cfg.chain, &rng, cfg.chain_trials);
}

inline sensitivity::SensitivityBudget effective_budget(const config::ScenarioConfig& cfg,
                                                       const std::optional<repeater::ChainResult>& chain) {
    auto b = cfg.budget.value_or(sensitivity::SensitivityBudget{});
    if (cfg.r_from_chain && chain) b.r = chain->rate;
    return b;
}

inline repeater::ChainResult repeater_stage(const Context& ctx) {
    const auto& cfg = ctx.config();
    const auto r = chain_result(ctx);
    const bool mc = ctx.monte_carlo().value_or(cfg.chain_monte_carlo);
    const auto b = effective_budget(cfg, r);
    const double s = repeater::figure_of_merit(r.rate, b.p, b.bandwidth_nm);
    ctx.write("chain.csv", [&](std::ostream& o) {
        o << "# esi.chain v1\n";
        o << "segments,policy,method,link_transmission,r,r_stderr,F,distillation_rounds,p,bandwidth_nm,s_nm\n";
        std::string policy = cfg.chain->policy.memoryless ? "memoryless" : "memory";
        for (int k : cfg.chain->policy.rounds_per_level) policy += ":" + std::to_string(k);
        o << std::setprecision(12) << cfg.chain->segments << ',' << policy << ',' << (mc ? "monte-carlo" : "analytic")
          << ',' << cfg.chain->link.transmission() << ',' << r.rate << ',' << r.rate_stderr << ',' << r.fidelity << ','
          << r.distillation_rounds << ',' << b.p << ',' << b.bandwidth_nm << ',' << s << '\n';
    });
    ctx.log() << "chain: r = " << r.rate << " per slot, F = " << r.fidelity << ", s = " << s << " nm\n";
    return r;
}

inline sensitivity::LimitingMagnitude sensitivity_stage(const Context& ctx,
                                                        std::optional<repeater::ChainResult> chain = {}) {
    if (ctx.config().r_from_chain && !chain) chain = chain_result(ctx);
    const auto b = effective_budget(ctx.config(), chain);
    const auto lim = sensitivity::limiting_magnitude(b);
    ctx.write("budget.csv", [&](std::ostream& o) {
        sensitivity::write_budget_header(o);
        sensitivity::write_budget_row(o, b);
    });
    ctx.write("budget.txt", [&](std::ostream& o) {
        o << "# esi.budget_text v1\n";
        sensitivity::write_budget_text(o, b);
    });
    sensitivity::write_budget_text(ctx.log(), b);
    return lim;
}

/// Noiseless forward model on the full grid, inverted back to an image.
inline estimation::Image reconstruct(const config::ScenarioConfig& cfg) {
    if (!cfg.source) throw config::ConfigError("reconstruct needs a [source] section");
    std::size_t n = cfg.image_grid;
    double scale = cfg.image_pixel_scale;
    if (cfg.source->is_grid()) {
        const auto& g = cfg.source->grid();
        if (g.nx != g.ny) throw config::ConfigError("[source] graymap must be square for reconstruction");
        n = g.nx;
        scale = g.pixel_scale;
    }
    const double lambda = cfg.baselines.empty() ? 800e-9 : cfg.baselines[0].wavelength;
    const auto set = estimation::BaselineSet::full_grid(*cfg.source, n, scale, lambda);
    return estimation::reconstruct_image(set, n, scale);
}

inline estimation::Image reconstruct_stage(const Context& ctx) {
    const auto img = reconstruct(ctx.config());
    ctx.write("image.pgm", [&](std::ostream& o) { sky::write_graymap(o, img.nx, img.ny, img.pixels); });
    ctx.write("image.csv", [&](std::ostream& o) { io::write_image_csv(o, img); });
    return img;
}

/// Runs every stage listed in [run] pipeline, in the canonical order.
inline void run_scenario(const Context& ctx) {
    const auto& cfg = ctx.config();
    if (cfg.pipeline.empty()) throw config::ConfigError("[run] pipeline: no stages requested");
    std::optional<repeater::ChainResult> chain;
    if (cfg.wants("simulate")) simulate_stage(ctx);
    if (cfg.wants("repeater")) chain = repeater_stage(ctx);
    if (cfg.wants("sensitivity")) sensitivity_stage(ctx, chain);
    if (cfg.wants("reconstruct")) reconstruct_stage(ctx);
}

}  // namespace esi::harness

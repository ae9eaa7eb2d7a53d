/**
 * @file config.hpp
 * @brief Scenario configuration: INI sections parsed into module configs.
 *
 * Format (';' starts a comment, lists are comma-separated):
 *
 *   [run]        name, seed (required), pipeline = simulate | repeater | sensitivity | reconstruct
 *                (comma list), slots, threads, out_dir
 *   [scheme]     kind = direct | entangled | w_state, photons = single | coherent, p_astro, p_lab,
 *                telescopes, deltas (list) or delta_steps (uniform sweep), w_phases (list),
 *                double_pair_prob, full_bell, delay_slots (list)
 *   [detector]   efficiency, dark_prob, jitter_sigma, coincidence_window, pnr (all telescopes)
 *   [temporal]   coherence_time, jitter_sigma, arrival_offset
 *   [source]     type = point | binary | file; theta_x, theta_y; separation, intensity1,
 *                intensity2; file (relative to the config), pixel_scale
 *   [geometry]   wavelength, baseline = bx, by; or positions_x / positions_y (lists, W state)
 *   [repeater]   segments, length_km, attenuation_db_per_km, extra_transmission,
 *                phase_noise_sigma, attempt_rate, rounds_per_level (list), memoryless,
 *                heralded, success_probability, double_pair_prob, trials, method = analytic | monte-carlo
 *   [sensitivity] budget = default | improved, then any SensitivityBudget field as an override,
 *                r_from_chain (use the repeater rate as r)
 *   [imaging]    grid, pixel_scale
 *
 * Unknown sections or keys are errors, so typos are reported with their field name.
 */
#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "esi/estimation.hpp"
#include "esi/repeater.hpp"
#include "esi/schemes.hpp"
#include "esi/sensitivity.hpp"
#include "esi/sky.hpp"

namespace esi::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::filesystem::path path;
    std::vector<std::string> pipeline;
    std::optional<std::uint64_t> seed;
    std::uint64_t slots = 100000;
    unsigned threads = 1;
    std::string out_dir = "out";

    std::optional<schemes::SchemeConfig> scheme;
    std::optional<sky::SourceModel> source;
    std::vector<sky::Baseline> baselines;

    std::optional<repeater::ChainConfig> chain;
    std::uint64_t chain_trials = 20000;
    bool chain_monte_carlo = false;

    std::optional<sensitivity::SensitivityBudget> budget;
    bool r_from_chain = false;

    std::size_t image_grid = 16;
    double image_pixel_scale = 0.0;

    bool wants(const std::string& stage) const {
        return std::find(pipeline.begin(), pipeline.end(), stage) != pipeline.end();
    }
};

namespace detail {

namespace pt = boost::property_tree;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class Section {
public:
    Section(const std::string& file, const std::string& name, const pt::ptree* tree)
        : file_(file), name_(name), tree_(tree) {}

    bool present() const { return tree_ != nullptr; }
    bool has(const std::string& key) const { return raw(key).has_value(); }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(file_ + ": [" + name_ + "] " + key + ": " + msg);
    }

    std::string str(const std::string& key, const std::string& def) const { return raw(key).value_or(def); }

    std::string require_str(const std::string& key) const {
        auto v = raw(key);
        if (!v) fail(key, "required field is missing");
        return *v;
    }

    double num(const std::string& key, double def) const {
        auto v = raw(key);
        return v ? parse_double(key, *v) : def;
    }

    std::optional<double> opt_num(const std::string& key) const {
        auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_double(key, *v);
    }

    std::uint64_t count(const std::string& key, std::uint64_t def) const {
        auto v = raw(key);
        return v ? parse_u64(key, *v) : def;
    }

    bool flag(const std::string& key, bool def) const {
        auto v = raw(key);
        if (!v) return def;
        if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
        if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
        fail(key, "expected a boolean (got '" + *v + "')");
    }

    std::vector<double> list(const std::string& key) const {
        std::vector<double> out;
        if (auto v = raw(key))
            for (const auto& item : split_list(*v)) out.push_back(parse_double(key, item));
        return out;
    }

    std::vector<std::int64_t> int_list(const std::string& key) const {
        std::vector<std::int64_t> out;
        if (auto v = raw(key))
            for (const auto& item : split_list(*v)) {
                std::size_t pos = 0;
                long long x = 0;
                try {
                    x = std::stoll(item, &pos);
                } catch (const std::exception&) {
                    pos = 0;
                }
                if (pos != item.size()) fail(key, "expected an integer (got '" + item + "')");
                out.push_back(x);
            }
        return out;
    }

    /// Rejects keys that were never read.
    void finish() const {
        if (!tree_) return;
        for (const auto& [k, v] : *tree_)
            if (!used_.count(k)) fail(k, "unknown field");
    }

private:
    std::optional<std::string> raw(const std::string& key) const {
        used_.insert(key);
        if (!tree_) return std::nullopt;
        auto it = tree_->find(key);
        if (it == tree_->not_found()) return std::nullopt;
        return trim(it->second.data());
    }

    double parse_double(const std::string& key, const std::string& s) const {
        std::size_t pos = 0;
        double x = 0.0;
        try {
            x = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty()) fail(key, "expected a number (got '" + s + "')");
        return x;
    }

    std::uint64_t parse_u64(const std::string& key, const std::string& s) const {
        std::size_t pos = 0;
        unsigned long long x = 0;
        try {
            x = std::stoull(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty() || s[0] == '-') fail(key, "expected a non-negative integer (got '" + s + "')");
        return x;
    }

    std::string file_;
    std::string name_;
    const pt::ptree* tree_;
    mutable std::set<std::string> used_;
};

inline const std::set<std::string>& known_sections() {
    static const std::set<std::string> s{"run",    "scheme",   "detector",    "temporal", "source",
                                         "geometry", "repeater", "sensitivity", "imaging"};
    return s;
}

}  // namespace detail

/// Parses INI text; `base` resolves relative file references, `label` names the input in errors.
inline ScenarioConfig parse_scenario(std::istream& in, const std::string& label,
                                     const std::filesystem::path& base = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(label + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [k, v] : tree) {
        if (v.empty() && !v.data().empty()) throw ConfigError(label + ": key '" + k + "' outside any section");
        if (!detail::known_sections().count(k)) throw ConfigError(label + ": [" + k + "]: unknown section");
    }
    auto section = [&](const std::string& name) {
        auto it = tree.find(name);
        return detail::Section(label, name, it == tree.not_found() ? nullptr : &it->second);
    };

    ScenarioConfig cfg;
    cfg.path = base;

    auto run = section("run");
    cfg.name = run.str("name", cfg.name);
    if (run.has("seed")) cfg.seed = run.count("seed", 0);
    cfg.slots = run.count("slots", cfg.slots);
    if (cfg.slots == 0) run.fail("slots", "must be positive");
    cfg.threads = static_cast<unsigned>(run.count("threads", 1));
    cfg.out_dir = run.str("out_dir", cfg.out_dir);
    for (const auto& stage : detail::split_list(run.str("pipeline", ""))) {
        if (stage != "simulate" && stage != "repeater" && stage != "sensitivity" && stage != "reconstruct")
            run.fail("pipeline", "unknown stage '" + stage + "' (expected simulate, repeater, sensitivity or reconstruct)");
        cfg.pipeline.push_back(stage);
    }
    run.finish();

    auto sch = section("scheme");
    auto det = section("detector");
    auto tmp = section("temporal");
    if (sch.present()) {
        schemes::SchemeConfig s;
        try {
            s.kind = schemes::scheme_from_string(sch.str("kind", "entangled"));
        } catch (const std::invalid_argument& e) {
            sch.fail("kind", e.what());
        }
        const auto photons = sch.str("photons", "single");
        if (photons == "single")
            s.photons = schemes::PhotonModel::single;
        else if (photons == "coherent")
            s.photons = schemes::PhotonModel::coherent;
        else
            sch.fail("photons", "expected single or coherent (got '" + photons + "')");
        s.p_astro = sch.num("p_astro", s.p_astro);
        s.p_lab = sch.num("p_lab", s.p_lab);
        s.telescopes = static_cast<std::size_t>(sch.count("telescopes", 2));
        if (sch.has("deltas") && sch.has("delta_steps")) sch.fail("deltas", "give either deltas or delta_steps");
        if (sch.has("deltas"))
            s.delta_schedule = sch.list("deltas");
        else if (sch.has("delta_steps")) {
            const auto n = sch.count("delta_steps", 8);
            if (n == 0) sch.fail("delta_steps", "must be positive");
            s.delta_schedule = estimation::uniform_schedule(n);
        }
        s.w_phases = sch.list("w_phases");
        s.double_pair_prob = sch.num("double_pair_prob", 0.0);
        s.full_bell = sch.flag("full_bell", false);
        s.delay_slots = sch.int_list("delay_slots");
        if (det.present()) {
            fock::DetectorModel d;
            d.efficiency = det.num("efficiency", d.efficiency);
            d.dark_prob_per_window = det.num("dark_prob", d.dark_prob_per_window);
            d.timing_jitter_sigma = det.num("jitter_sigma", d.timing_jitter_sigma);
            d.coincidence_window = det.num("coincidence_window", d.coincidence_window);
            d.photon_number_resolving = det.flag("pnr", d.photon_number_resolving);
            s.detectors.assign(s.telescope_count(), d);
        }
        s.temporal.coherence_time = tmp.num("coherence_time", 0.0);
        s.temporal.jitter_sigma = tmp.num("jitter_sigma", 0.0);
        s.temporal.arrival_offset = tmp.num("arrival_offset", 0.0);
        try {
            s.validate();
        } catch (const std::exception& e) {
            throw ConfigError(label + ": [scheme] " + e.what());
        }
        cfg.scheme = s;
    } else if (det.present() || tmp.present()) {
        throw ConfigError(label + ": [detector]/[temporal] need a [scheme] section");
    }
    sch.finish();
    det.finish();
    tmp.finish();

    auto src = section("source");
    if (src.present()) {
        const auto type = src.str("type", "point");
        try {
            if (type == "point") {
                cfg.source = sky::SourceModel::point(src.num("theta_x", 0.0), src.num("theta_y", 0.0));
            } else if (type == "binary") {
                cfg.source = sky::SourceModel::binary(src.num("separation", 0.0), src.num("intensity1", 1.0),
                                                      src.num("intensity2", 1.0));
            } else if (type == "file") {
                std::filesystem::path f = src.require_str("file");
                if (f.is_relative()) f = base / f;
                if (!std::filesystem::exists(f)) src.fail("file", "referenced file does not exist: " + f.string());
                cfg.source = sky::load_source(f.string(), src.num("pixel_scale", 0.0));
            } else {
                src.fail("type", "expected point, binary or file (got '" + type + "')");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(label + ": [source] " + e.what());
        }
    }
    src.finish();

    auto geo = section("geometry");
    if (geo.present()) {
        const double lambda = geo.num("wavelength", 800e-9);
        if (!(lambda > 0.0)) geo.fail("wavelength", "must be positive");
        if (geo.has("baseline")) {
            const auto b = geo.list("baseline");
            if (b.size() != 2) geo.fail("baseline", "expected 'bx, by'");
            cfg.baselines.push_back({b[0], b[1], lambda});
        }
        const auto xs = geo.list("positions_x");
        const auto ys = geo.list("positions_y");
        if (xs.size() != ys.size()) geo.fail("positions_y", "must have as many entries as positions_x");
        if (!xs.empty() && !cfg.baselines.empty()) geo.fail("positions_x", "give either baseline or positions");
        for (std::size_t k = 0; k < xs.size(); ++k) cfg.baselines.push_back({xs[k], ys[k], lambda});
    }
    geo.finish();

    auto rep = section("repeater");
    if (rep.present()) {
        repeater::ChainConfig c;
        c.segments = static_cast<std::size_t>(rep.count("segments", 1));
        const double total_km = rep.num("length_km", 0.0);
        c.link.length_km = c.segments > 0 ? total_km / static_cast<double>(c.segments) / 2.0 : 0.0;
        c.link.attenuation_db_per_km = rep.num("attenuation_db_per_km", 0.2);
        c.link.extra_transmission = rep.num("extra_transmission", 1.0);
        c.link.phase_noise_sigma = rep.num("phase_noise_sigma", 0.0);
        c.link.attempt_rate = rep.num("attempt_rate", 1.0);
        for (auto r : rep.int_list("rounds_per_level")) c.policy.rounds_per_level.push_back(static_cast<int>(r));
        c.policy.memoryless = rep.flag("memoryless", false);
        c.heralded = rep.flag("heralded", true);
        c.success_probability = rep.opt_num("success_probability");
        c.double_pair_prob = rep.num("double_pair_prob", 0.0);
        cfg.chain_trials = rep.count("trials", cfg.chain_trials);
        const auto method = rep.str("method", "analytic");
        if (method != "analytic" && method != "monte-carlo")
            rep.fail("method", "expected analytic or monte-carlo (got '" + method + "')");
        cfg.chain_monte_carlo = method == "monte-carlo";
        try {
            c.validate();
        } catch (const std::exception& e) {
            throw ConfigError(label + ": [repeater] " + e.what());
        }
        cfg.chain = c;
    }
    rep.finish();

    auto sen = section("sensitivity");
    if (sen.present()) {
        const auto preset = sen.str("budget", "default");
        sensitivity::SensitivityBudget b;
        if (preset == "improved")
            b = sensitivity::SensitivityBudget::improved();
        else if (preset != "default")
            sen.fail("budget", "expected default or improved (got '" + preset + "')");
        b.name = sen.str("name", b.name);
        b.wavelength = sen.num("wavelength", b.wavelength);
        b.bandwidth_nm = sen.num("bandwidth_nm", b.bandwidth_nm);
        b.aperture_diameter = sen.num("aperture_diameter", b.aperture_diameter);
        b.r = sen.num("r", b.r);
        b.p = sen.num("p", b.p);
        b.dark_rate = sen.num("dark_rate", b.dark_rate);
        b.detectors_per_telescope = static_cast<int>(sen.count("detectors_per_telescope", 2));
        b.timing_fwhm = sen.num("timing_fwhm", b.timing_fwhm);
        b.atmospheric_coherence_time = sen.num("atmospheric_coherence_time", b.atmospheric_coherence_time);
        b.min_events = static_cast<int>(sen.count("min_events", 5));
        b.zero_point = sen.num("zero_point", b.zero_point);
        cfg.r_from_chain = sen.flag("r_from_chain", false);
        try {
            b.validate();
        } catch (const std::exception& e) {
            throw ConfigError(label + ": [sensitivity] " + e.what());
        }
        cfg.budget = b;
    }
    sen.finish();

    auto img = section("imaging");
    cfg.image_grid = static_cast<std::size_t>(img.count("grid", cfg.image_grid));
    cfg.image_pixel_scale = img.num("pixel_scale", 0.0);
    img.finish();

    // Cross-section requirements per pipeline stage.
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(label + ": " + what);
    };
    if (cfg.wants("simulate")) {
        need(cfg.scheme.has_value(), "pipeline 'simulate' needs a [scheme] section");
        need(cfg.source.has_value(), "pipeline 'simulate' needs a [source] section");
        need(!cfg.baselines.empty(), "pipeline 'simulate' needs [geometry] baseline or positions");
    }
    if (cfg.wants("repeater")) need(cfg.chain.has_value(), "pipeline 'repeater' needs a [repeater] section");
    if (cfg.wants("sensitivity")) need(cfg.budget.has_value(), "pipeline 'sensitivity' needs a [sensitivity] section");
    if (cfg.r_from_chain) need(cfg.chain.has_value(), "[sensitivity] r_from_chain: needs a [repeater] section");
    if (cfg.wants("reconstruct")) {
        need(cfg.source.has_value(), "pipeline 'reconstruct' needs a [source] section");
        if (cfg.image_grid < 2) throw ConfigError(label + ": [imaging] grid: must be >= 2");
        if (!(cfg.image_pixel_scale > 0.0) && !cfg.source->is_grid())
            throw ConfigError(label + ": [imaging] pixel_scale: required for point sources");
    }
    return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse_scenario(in, path.string(), path.parent_path());
}

}  // namespace esi::config

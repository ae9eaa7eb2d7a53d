/**
 * @file io.hpp
 * @brief Event-log JSON lines, summary and fit CSV tables.
 *
 * Event log (JSON lines). Line 1 is the header
 *   {"schema":"esi.eventlog","version":1,"scheme":"entangled","telescopes":2,
 *    "slots":N,"seed":S,"delay_slots":[...]}
 * followed by one object per click, ordered by emission slot:
 *   {"slot":12,"tel":0,"det":1,"acc":true,"delta":0.0}
 *
 * Summary CSV: "# esi.summary v1" then
 *   delta,accepted,correlated,anticorrelated,discarded_clicks
 * where delta is the pair delay and discarded_clicks counts rejected click records.
 */
#pragma once

#include <nlohmann/json.hpp>

#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "esi/estimation.hpp"
#include "esi/schemes.hpp"

namespace esi::io {

inline constexpr const char* kEventLogSchema = "esi.eventlog";
inline constexpr int kEventLogVersion = 1;

inline void write_event_log(std::ostream& out, const schemes::EventLog& log) {
    nlohmann::ordered_json h;
    h["schema"] = kEventLogSchema;
    h["version"] = kEventLogVersion;
    h["scheme"] = schemes::to_string(log.scheme);
    h["telescopes"] = log.telescopes;
    h["slots"] = log.slots;
    h["seed"] = log.seed;
    h["delay_slots"] = log.delay_slots;
    out << h.dump() << '\n';
    for (const auto& r : log.records) {
        nlohmann::ordered_json j;
        j["slot"] = r.slot;
        j["tel"] = r.telescope;
        j["det"] = r.detector;
        j["acc"] = r.accepted;
        j["delta"] = r.delta;
        out << j.dump() << '\n';
    }
}

inline std::string event_log_string(const schemes::EventLog& log) {
    std::ostringstream s;
    write_event_log(s, log);
    return s.str();
}

inline schemes::EventLog read_event_log(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("event log line " + std::to_string(lineno) + ": " + msg);
    };
    schemes::EventLog log;
    if (!std::getline(in, line)) throw std::runtime_error("event log: empty input");
    ++lineno;
    try {
        const auto h = nlohmann::json::parse(line);
        if (h.value("schema", std::string{}) != kEventLogSchema) fail("missing esi.eventlog schema header");
        if (h.value("version", 0) != kEventLogVersion) fail("unsupported version");
        log.scheme = schemes::scheme_from_string(h.at("scheme").get<std::string>());
        log.telescopes = h.at("telescopes").get<std::size_t>();
        log.slots = h.at("slots").get<std::uint64_t>();
        log.seed = h.at("seed").get<std::uint64_t>();
        log.delay_slots = h.at("delay_slots").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        fail(e.what());
    }
    std::uint64_t last = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        schemes::ClickRecord r{};
        try {
            const auto j = nlohmann::json::parse(line);
            r.slot = j.at("slot").get<std::uint64_t>();
            r.telescope = j.at("tel").get<std::uint32_t>();
            r.detector = j.at("det").get<std::uint8_t>();
            r.accepted = j.at("acc").get<bool>();
            r.delta = j.at("delta").get<double>();
        } catch (const nlohmann::json::exception& e) {
            fail(e.what());
        }
        if (r.telescope >= log.telescopes) fail("tel out of range");
        if (r.detector != 1 && r.detector != 2) fail("det must be 1 or 2");
        const auto emission = log.emission_slot(r);
        if (emission < last) fail("emission slots must be non-decreasing");
        last = emission;
        log.records.push_back(r);
    }
    return log;
}

inline void write_summary_csv(std::ostream& out, const schemes::EventLog& log) {
    out << "# esi.summary v1\n";
    out << "delta,accepted,correlated,anticorrelated,discarded_clicks\n";
    std::map<double, std::uint64_t> discarded;
    std::map<double, estimation::DeltaCounts> counts;
    if (log.telescopes >= 2 || log.scheme == schemes::SchemeKind::direct)
        for (const auto& c : estimation::delta_counts(log)) counts[c.delta] = c;
    for (const auto& r : log.records)
        if (!r.accepted && (log.scheme == schemes::SchemeKind::direct || r.telescope == 0)) ++discarded[r.delta];
    for (const auto& [d, n] : discarded) counts.try_emplace(d, estimation::DeltaCounts{d, 0, 0});
    out << std::setprecision(17);
    for (const auto& [d, c] : counts)
        out << d << ',' << c.accepted << ',' << c.correlated << ',' << (c.accepted - c.correlated) << ','
            << (discarded.count(d) ? discarded.at(d) : 0) << '\n';
}

/// Fringe plot data: measured and fitted correlation fraction per delay.
inline void write_fringe_csv(std::ostream& out, const estimation::FringeFit& fit) {
    out << "# esi.fringe v1\n";
    out << "delta,accepted,correlated,fraction,model\n";
    out << std::setprecision(17);
    for (const auto& t : fit.table) {
        const double f = t.accepted ? static_cast<double>(t.correlated) / static_cast<double>(t.accepted) : 0.0;
        const double model = 0.5 * (1.0 + fit.v.real() * std::cos(t.delta) + fit.v.imag() * std::sin(t.delta));
        out << t.delta << ',' << t.accepted << ',' << t.correlated << ',' << f << ',' << model << '\n';
    }
}

inline void write_fit_csv(std::ostream& out, const estimation::FringeFit& fit) {
    out << "# esi.fit v1\n";
    out << "re,im,re_stderr,im_stderr,amplitude,amplitude_stderr,phase,phase_stderr,accepted\n";
    out << std::setprecision(17) << fit.v.real() << ',' << fit.v.imag() << ',' << fit.re_stderr << ','
        << fit.im_stderr << ',' << std::abs(fit.v) << ',' << fit.amplitude_stderr << ',' << std::arg(fit.v) << ','
        << fit.phase_stderr << ',' << fit.accepted << '\n';
}

inline void write_image_csv(std::ostream& out, const estimation::Image& img) {
    out << "# esi.image_csv v1\n";
    out << "ix,iy,theta_x,theta_y,intensity\n";
    out << std::setprecision(17);
    const auto half = static_cast<double>(img.nx / 2);
    for (std::size_t iy = 0; iy < img.ny; ++iy)
        for (std::size_t ix = 0; ix < img.nx; ++ix)
            out << ix << ',' << iy << ',' << (static_cast<double>(ix) - half) * img.pixel_scale << ','
                << (static_cast<double>(iy) - half) * img.pixel_scale << ',' << img.at(ix, iy) << '\n';
}

}  // namespace esi::io

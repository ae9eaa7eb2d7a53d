/**
 * @file repeater.hpp
 * @brief Single-rail entanglement distribution: lossy links, heralded generation,
 *        two-pair distillation with unbalanced splitters, entanglement swapping,
 *        and nested repeater chains.
 *
 * A pair lives on two modes (L, R). Its single-photon sector is
 * (|0,1><0,1| + |1,0><1,0|)/2 + (c e^{i psi}|1,0><0,1| + h.c.)/2 scaled by w1,
 * the vacuum carries w0 and the spurious two-photon component |1,1> carries w2.
 * Fidelity is measured against (|0,1> + |1,0>)/sqrt(2).
 */
#pragma once

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "esi/fock.hpp"
#include "esi/rng.hpp"

namespace esi::repeater {

using Complex = std::complex<double>;
using fock::DensityOperator;
using fock::ModeIndex;

inline constexpr int kPairCutoff = 2;

struct LinkModel {
    double length_km = 0.0;             // distance travelled by each photon
    double attenuation_db_per_km = 0.0;
    double extra_transmission = 1.0;    // e.g. 0.01 for a satellite downlink
    double phase_noise_sigma = 0.0;     // radians per transit
    double attempt_rate = 1.0;          // attempts per slot

    static LinkModel fiber(double km, double db_per_km = 0.2) { return {km, db_per_km, 1.0, 0.0, 1.0}; }
    static LinkModel satellite() { return {0.0, 0.0, 0.01, 0.0, 1.0}; }

    void validate() const {
        if (!(length_km >= 0.0)) throw std::invalid_argument("link length must be non-negative");
        if (!(attenuation_db_per_km >= 0.0)) throw std::invalid_argument("attenuation must be non-negative");
        if (!(extra_transmission > 0.0 && extra_transmission <= 1.0))
            throw std::invalid_argument("extra transmission must lie in (0, 1]");
        if (!(phase_noise_sigma >= 0.0)) throw std::invalid_argument("phase noise must be non-negative");
        if (!(attempt_rate > 0.0)) throw std::invalid_argument("attempt rate must be positive");
    }

    double transmission() const {
        return std::pow(10.0, -attenuation_db_per_km * length_km / 10.0) * extra_transmission;
    }
};

struct EntangledPairState {
    double w0 = 0.0;
    double w1 = 1.0;
    double c = 1.0;
    double psi = 0.0;
    double w2 = 0.0;

    static EntangledPairState ideal() { return {}; }
    static EntangledPairState vacuum() { return {1.0, 0.0, 0.0, 0.0, 0.0}; }
    /// Mixture of the ideal pair with vacuum (weight w0) and dephasing c.
    static EntangledPairState lossy(double w0, double c = 1.0) { return {w0, 1.0 - w0, c, 0.0, 0.0}; }

    void validate() const {
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) throw std::invalid_argument("pair weights must be non-negative");
        if (std::abs(w0 + w1 + w2 - 1.0) > 1e-12) throw std::invalid_argument("pair weights must sum to 1");
        if (c < -1e-12 || c > 1.0 + 1e-12) throw std::invalid_argument("pair coherence must lie in [0, 1]");
    }

    double fidelity() const { return w1 * (1.0 + c * std::cos(psi)) / 2.0; }
};

inline DensityOperator to_density(const EntangledPairState& p, int cutoff = kPairCutoff) {
    p.validate();
    auto rho = DensityOperator::zero(2, cutoff);
    fock::Matrix m = rho.matrix();
    const auto& b = rho.basis();
    auto at = [&](const fock::Occupation& o) { return static_cast<Eigen::Index>(b.require_index(o)); };
    m(at({0, 0}), at({0, 0})) = p.w0;
    m(at({0, 1}), at({0, 1})) = p.w1 / 2;
    m(at({1, 0}), at({1, 0})) = p.w1 / 2;
    m(at({1, 0}), at({0, 1})) = std::polar(p.w1 * p.c / 2, p.psi);
    m(at({0, 1}), at({1, 0})) = std::polar(p.w1 * p.c / 2, -p.psi);
    m(at({1, 1}), at({1, 1})) = p.w2;
    return DensityOperator(rho.basis_ptr(), std::move(m));
}

inline double fidelity_to_target(const DensityOperator& rho) {
    const auto target = fock::FockRegister::superposition(
        2, rho.cutoff(), {{{0, 1}, Complex{1.0, 0.0}}, {{1, 0}, Complex{1.0, 0.0}}});
    return rho.expectation(target);
}

struct PairProjection {
    EntangledPairState pair;
    double off_form;  // largest matrix entry the pair form cannot represent
};

/// Reads the pair parameters off a normalized two-mode state. Everything with
/// two or more photons is counted in w2; off_form collects coherences between
/// sectors, unbalanced one-photon diagonals and two-photon content beyond |1,1>.
inline PairProjection from_density(const DensityOperator& rho) {
    if (rho.mode_count() != 2) throw std::invalid_argument("from_density: expected two modes");
    const auto& b = rho.basis();
    const double p00 = rho.element({0, 0}, {0, 0}).real();
    const double p01 = rho.element({0, 1}, {0, 1}).real();
    const double p10 = rho.element({1, 0}, {1, 0}).real();
    const Complex coh = rho.element({1, 0}, {0, 1});
    PairProjection r{};
    r.pair.w0 = p00;
    r.pair.w1 = p01 + p10;
    r.pair.w2 = std::max(0.0, 1.0 - r.pair.w0 - r.pair.w1);
    r.pair.c = r.pair.w1 > 0.0 ? std::min(1.0, 2.0 * std::abs(coh) / r.pair.w1) : 0.0;
    r.pair.psi = std::abs(coh) > 0.0 ? std::arg(coh) : 0.0;
    double off = std::abs(p01 - p10) / 2.0;
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            const auto& si = b.state(i);
            const auto& sj = b.state(j);
            const int ni = si[0] + si[1];
            const int nj = sj[0] + sj[1];
            const Complex v = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (ni != nj) {
                off = std::max(off, std::abs(v));
            } else if (ni >= 2 && (si != fock::Occupation{1, 1} || sj != fock::Occupation{1, 1})) {
                off = std::max(off, std::abs(v));
            }
        }
    r.off_form = off;
    return r;
}

inline EntangledPairState rotate(EntangledPairState p, double phase) {
    p.psi = std::remainder(p.psi + phase, 2.0 * std::numbers::pi);
    return p;
}

/// Sends both photons of `pair` through `link`. Loss acts on both arms; phase
/// noise acts on the relative phase. Without an rng the noise is averaged
/// (c scaled by exp(-sigma^2/2)); with one, a phase offset is drawn.
inline EntangledPairState transmit_pair(const EntangledPairState& pair, const LinkModel& link,
                                        CounterRng* rng = nullptr) {
    link.validate();
    const double eta = link.transmission();
    auto rho = to_density(pair);
    rho = fock::apply_loss(rho, ModeIndex{0}, eta);
    rho = fock::apply_loss(rho, ModeIndex{1}, eta);
    auto out = from_density(rho).pair;
    if (link.phase_noise_sigma > 0.0) {
        if (rng)
            out = rotate(out, rng->normal(0.0, link.phase_noise_sigma));
        else
            out.c *= std::exp(-link.phase_noise_sigma * link.phase_noise_sigma / 2.0);
    }
    return out;
}

/// Attempts until the first heralded success. Without an rng returns the mean 1/q.
inline double heralded_generate(double q, CounterRng* rng = nullptr) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("success probability must lie in (0, 1]");
    return rng ? static_cast<double>(rng->geometric(q)) : 1.0 / q;
}

struct HeraldedPair {
    double p_success;
    EntangledPairState output;
    double off_form;
};

namespace detail {

/// Sum over heralds of p_h * R_h(rho_h), with R_h the known phase correction on mode 0.
inline HeraldedPair combine(const DensityOperator& rho, const std::vector<fock::Detection>& dets,
                            const std::vector<std::pair<fock::ClickPattern, double>>& heralds) {
    DensityOperator acc = DensityOperator::zero(rho.mode_count() - dets.size(), rho.cutoff());
    double p = 0.0;
    for (const auto& [pattern, correction] : heralds) {
        const auto h = fock::condition_on(rho, dets, [&](const fock::ClickPattern& c) { return c == pattern; });
        if (h.probability <= 0.0) continue;
        acc = acc + h.probability * fock::apply_phase(*h.state, ModeIndex{0}, correction);
        p += h.probability;
    }
    if (!(p > 0.0)) return {0.0, EntangledPairState::vacuum(), 0.0};
    const auto proj = from_density((1.0 / p) * acc);
    return {p, proj.pair, proj.off_form};
}

}  // namespace detail

/// Two pairs (a on modes a_L, a_R; b on b_L, b_R) mixed on an unbalanced splitter
/// t1 (phase pi) across the L modes and t2 (phase 0) across the R modes. The b
/// outputs are monitored; success is exactly one photon between them. The two
/// heralds differ by a known pi phase, undone before the outputs are averaged.
/// Monitors are photon-number resolving unless `threshold` is set.
inline HeraldedPair sscg_distill(const EntangledPairState& a, const EntangledPairState& b, double t1 = 0.15,
                                 double t2 = 0.85, bool threshold = false) {
    fock::detail::check_unit_interval(t1, "t1");
    fock::detail::check_unit_interval(t2, "t2");
    // Register order (a_L, a_R, b_L, b_R).
    auto rho = fock::tensor(to_density(a), to_density(b), 2 * kPairCutoff);
    rho = fock::apply_beam_splitter(rho, ModeIndex{0}, ModeIndex{2}, t1, std::numbers::pi);
    rho = fock::apply_beam_splitter(rho, ModeIndex{1}, ModeIndex{3}, t2, 0.0);
    const auto det = threshold ? fock::DetectorModel::ideal() : fock::DetectorModel::ideal_pnr();
    const std::vector<fock::Detection> dets{{ModeIndex{2}, det}, {ModeIndex{3}, det}};
    return detail::combine(rho, dets, {{{1, 0}, std::numbers::pi}, {{0, 1}, 0.0}});
}

/// Pair a on nodes (1, 2), pair b on nodes (2, 3). The two node-2 modes meet on a
/// 50/50 splitter (phase pi/2); exactly one photon between its outputs heralds
/// success. The second herald carries a pi phase that is corrected on node 1.
inline HeraldedPair entanglement_swap(const EntangledPairState& a, const EntangledPairState& b,
                                      bool threshold = false) {
    // Register order (A1, A2, B2, B3); the pair L mode is the first of each.
    auto rho = fock::tensor(to_density(a), to_density(b), 2 * kPairCutoff);
    rho = fock::apply_beam_splitter(rho, ModeIndex{1}, ModeIndex{2}, 0.5, std::numbers::pi / 2);
    const auto det = threshold ? fock::DetectorModel::ideal() : fock::DetectorModel::ideal_pnr();
    const std::vector<fock::Detection> dets{{ModeIndex{1}, det}, {ModeIndex{2}, det}};
    return detail::combine(rho, dets, {{{1, 0}, 0.0}, {{0, 1}, std::numbers::pi}});
}

/// Golden-section search over t1 (with t2 = 1 - t1) maximizing output fidelity.
inline double optimal_sscg_transmissivity(const EntangledPairState& a, const EntangledPairState& b,
                                          double lo = 0.01, double hi = 0.49, double tol = 1e-7) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double t) { return sscg_distill(a, b, t, 1.0 - t).output.fidelity(); };
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    return (lo + hi) / 2.0;
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

/// Distillation rounds per nesting level (level 0: elementary links; level k:
/// pairs spanning up to 2^k segments). Memoryless schedules need every step of
/// a slot to succeed together; otherwise finished halves wait in memory.
struct ChainPolicy {
    std::vector<int> rounds_per_level;
    bool memoryless = false;

    int rounds(std::size_t level) const {
        return level < rounds_per_level.size() ? rounds_per_level[level] : 0;
    }

    void validate() const {
        for (int r : rounds_per_level)
            if (r < 0 || r > 6) throw std::invalid_argument("distillation rounds per level must lie in [0, 6]");
    }
};

struct ChainConfig {
    std::size_t segments = 1;
    LinkModel link;
    ChainPolicy policy;
    /// Heralded links deliver only arrived pairs, so loss costs attempts and the
    /// success probability defaults to the link transmission. Otherwise every
    /// attempt delivers the lossy state.
    bool heralded = true;
    std::optional<double> success_probability;  // per attempt, overrides the default
    double double_pair_prob = 0.0;              // |1,1> admixture of each elementary pair

    void validate() const {
        if (segments < 1) throw std::invalid_argument("segments: must be >= 1");
        link.validate();
        policy.validate();
        if (success_probability && !(*success_probability > 0.0 && *success_probability <= 1.0))
            throw std::invalid_argument("success_probability: must lie in (0, 1]");
        if (!(double_pair_prob >= 0.0 && double_pair_prob < 1.0))
            throw std::invalid_argument("double_pair_prob: must lie in [0, 1)");
    }

    /// Success probability per slot of one elementary link.
    double slot_success() const {
        const double q = success_probability.value_or(heralded ? link.transmission() : 1.0);
        return 1.0 - std::pow(1.0 - q, link.attempt_rate);
    }

    EntangledPairState elementary_pair() const {
        EntangledPairState p = EntangledPairState::ideal();
        p.w1 = 1.0 - double_pair_prob;
        p.w2 = double_pair_prob;
        if (heralded) {
            LinkModel noise_only = link;
            noise_only.attenuation_db_per_km = 0.0;
            noise_only.extra_transmission = 1.0;
            return transmit_pair(p, noise_only);
        }
        return transmit_pair(p, link);
    }
};

struct ChainResult {
    double rate = 0.0;        // delivered pairs per slot
    double rate_stderr = 0.0; // Monte Carlo only
    double fidelity = 0.0;
    int distillation_rounds = 0;
    std::uint64_t trials = 0;
};

namespace detail {

struct Node {
    std::size_t segments;
    std::size_t level;
    int left = -1;
    int right = -1;
};

inline int build_tree(std::size_t segments, std::vector<Node>& nodes) {
    std::size_t level = 0;
    while ((std::size_t{1} << level) < segments) ++level;
    Node n{segments, level};
    if (segments > 1) {
        n.left = build_tree((segments + 1) / 2, nodes);
        n.right = build_tree(segments / 2, nodes);
    }
    nodes.push_back(n);
    return static_cast<int>(nodes.size() - 1);
}

/// States and success probabilities along the tree (deterministic composition).
struct NodePlan {
    EntangledPairState joined;                 // after the swap (or elementary)
    double p_swap = 1.0;
    std::vector<double> p_distill;             // per round
    std::vector<EntangledPairState> after;     // state after each round
    const EntangledPairState& final_state() const { return after.empty() ? joined : after.back(); }
};

inline void plan(const ChainConfig& cfg, const std::vector<Node>& nodes, int id, std::vector<NodePlan>& out) {
    const Node& n = nodes[static_cast<std::size_t>(id)];
    NodePlan p;
    if (n.segments == 1) {
        p.joined = cfg.elementary_pair();
    } else {
        plan(cfg, nodes, n.left, out);
        plan(cfg, nodes, n.right, out);
        const auto s = entanglement_swap(out[static_cast<std::size_t>(n.left)].final_state(),
                                         out[static_cast<std::size_t>(n.right)].final_state());
        p.joined = s.output;
        p.p_swap = s.p_success;
    }
    EntangledPairState cur = p.joined;
    for (int r = 0; r < cfg.policy.rounds(n.level); ++r) {
        const auto d = sscg_distill(cur, cur);
        p.p_distill.push_back(d.p_success);
        cur = d.output;
        p.after.push_back(cur);
    }
    out[static_cast<std::size_t>(id)] = p;
}

/// Probability mass over completion slot t = 0..N-1 (t = 0 unused).
using Pmf = std::vector<double>;

inline Pmf geometric_pmf(double q, std::size_t n) {
    Pmf f(n, 0.0);
    double s = q;
    for (std::size_t t = 1; t < n; ++t) {
        f[t] = s;
        s *= 1.0 - q;
    }
    return f;
}

inline Pmf max_pmf(const Pmf& x, const Pmf& y) {
    Pmf f(x.size(), 0.0);
    double cx = 0.0, cy = 0.0, prev = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        cx += x[t];
        cy += y[t];
        const double c = cx * cy;
        f[t] = c - prev;
        prev = c;
    }
    return f;
}

/// T = X_1 + ... + X_K with K ~ Geometric(p): F = p X / (1 - (1-p) X) in the
/// transform domain (circular; the caller sizes N so wrap-around is negligible).
inline Pmf retry_pmf(const Pmf& x, double p) {
    if (p >= 1.0) return x;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> X, F(x.size());
    fft.fwd(X, x);
    for (std::size_t k = 0; k < X.size(); ++k) F[k] = p * X[k] / (1.0 - (1.0 - p) * X[k]);
    Pmf f;
    fft.inv(f, F);
    for (auto& v : f) v = std::max(0.0, v);
    return f;
}

inline Pmf node_pmf(const std::vector<Node>& nodes, const std::vector<NodePlan>& plans, int id, double q,
                    std::size_t n) {
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    const NodePlan& p = plans[static_cast<std::size_t>(id)];
    Pmf f;
    if (nd.segments == 1) {
        f = geometric_pmf(q, n);
    } else {
        f = retry_pmf(max_pmf(node_pmf(nodes, plans, nd.left, q, n), node_pmf(nodes, plans, nd.right, q, n)),
                      p.p_swap);
    }
    for (double pd : p.p_distill) f = retry_pmf(max_pmf(f, f), pd);
    return f;
}

inline double sample_node(const std::vector<Node>& nodes, const std::vector<NodePlan>& plans, int id, double q,
                          CounterRng& rng) {
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    const NodePlan& p = plans[static_cast<std::size_t>(id)];
    auto make = [&]() -> double {
        if (nd.segments == 1) return static_cast<double>(rng.geometric(q));
        double t = 0.0;
        do {
            t += std::max(sample_node(nodes, plans, nd.left, q, rng), sample_node(nodes, plans, nd.right, q, rng));
        } while (!rng.bernoulli(p.p_swap));
        return t;
    };
    std::function<double(std::size_t)> distilled = [&](std::size_t round) -> double {
        if (round == 0) return make();
        double t = 0.0;
        do {
            t += std::max(distilled(round - 1), distilled(round - 1));
        } while (!rng.bernoulli(p.p_distill[round - 1]));
        return t;
    };
    return distilled(p.p_distill.size());
}

inline double memoryless_success(const std::vector<Node>& nodes, const std::vector<NodePlan>& plans, int id,
                                 double q) {
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    const NodePlan& p = plans[static_cast<std::size_t>(id)];
    double s = nd.segments == 1 ? q
                                : memoryless_success(nodes, plans, nd.left, q) *
                                      memoryless_success(nodes, plans, nd.right, q) * p.p_swap;
    for (double pd : p.p_distill) s = s * s * pd;
    return s;
}

inline int total_rounds(const std::vector<Node>& nodes, const ChainPolicy& policy) {
    int r = 0;
    for (const auto& n : nodes) r += policy.rounds(n.level);
    return r;
}

}  // namespace detail

/// Expected delivery rate and final fidelity. Rate is 1 / E[slots per delivered
/// end-to-end pair] for a schedule that restarts after delivery. With `rng`
/// set, completion times are sampled over `trials` deliveries instead.
inline ChainResult chain_simulate(const ChainConfig& cfg, CounterRng* rng = nullptr, std::uint64_t trials = 20000) {
    cfg.validate();
    std::vector<detail::Node> nodes;
    const int root = detail::build_tree(cfg.segments, nodes);
    std::vector<detail::NodePlan> plans(nodes.size());
    detail::plan(cfg, nodes, root, plans);
    const double q = cfg.slot_success();

    ChainResult r;
    r.fidelity = plans[static_cast<std::size_t>(root)].final_state().fidelity();
    r.distillation_rounds = detail::total_rounds(nodes, cfg.policy);

    if (cfg.policy.memoryless) {
        const double s = detail::memoryless_success(nodes, plans, root, q);
        if (!rng) {
            r.rate = s;
            return r;
        }
        double sum = 0.0, sum2 = 0.0;
        for (std::uint64_t k = 0; k < trials; ++k) {
            const double t = s > 0.0 ? static_cast<double>(rng->geometric(s)) : 0.0;
            sum += t;
            sum2 += t * t;
        }
        const double mean = sum / static_cast<double>(trials);
        const double var = sum2 / static_cast<double>(trials) - mean * mean;
        r.rate = 1.0 / mean;
        r.rate_stderr = r.rate * r.rate * std::sqrt(var / static_cast<double>(trials));
        r.trials = trials;
        return r;
    }

    if (rng) {
        double sum = 0.0, sum2 = 0.0;
        for (std::uint64_t k = 0; k < trials; ++k) {
            const double t = detail::sample_node(nodes, plans, root, q, *rng);
            sum += t;
            sum2 += t * t;
        }
        const double mean = sum / static_cast<double>(trials);
        const double var = sum2 / static_cast<double>(trials) - mean * mean;
        r.rate = 1.0 / mean;
        r.rate_stderr = r.rate * r.rate * std::sqrt(var / static_cast<double>(trials));
        r.trials = trials;
        return r;
    }

    // Exact completion-time distribution on a grid long enough that the tail is negligible.
    std::size_t n = 1024;
    for (;;) {
        const auto f = detail::node_pmf(nodes, plans, root, q, n);
        double mass = 0.0, mean = 0.0, tail = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            mass += f[t];
            mean += static_cast<double>(t) * f[t];
            if (t >= n / 2) tail += f[t];
        }
        if ((tail < 1e-13 && std::abs(mass - 1.0) < 1e-9) || n >= (std::size_t{1} << 24)) {
            r.rate = 1.0 / (mean / mass);
            return r;
        }
        n *= 2;
    }
}

/// s = r * p * delta_lambda (nm).
inline double figure_of_merit(double r, double p, double delta_lambda_nm) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::domain_error("rate per slot must lie in [0, 1]");
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("efficiency must lie in [0, 1]");
    if (!(delta_lambda_nm >= 0.0)) throw std::domain_error("bandwidth must be non-negative");
    return r * p * delta_lambda_nm;
}

/// Rate of spurious double-pair events (per second) for a source emitting
/// `mode_rate` modes per second with double-pair probability per mode.
inline double double_pair_rate(double double_pair_prob, double mode_rate) {
    return double_pair_prob * mode_rate;
}

/// Largest double-pair probability per mode keeping that rate at or below `dark_rate`.
inline double max_double_pair_prob(double dark_rate, double mode_rate) {
    if (!(mode_rate > 0.0)) throw std::domain_error("mode rate must be positive");
    return std::min(1.0, dark_rate / mode_rate);
}

}  // namespace esi::repeater

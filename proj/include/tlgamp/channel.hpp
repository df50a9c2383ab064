#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "tlgamp/markov.hpp"
#include "tlgamp/rng.hpp"

namespace tlgamp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Uniform linear arrays at both ends, half-wavelength spacing.
struct ArrayGeometry {
    int n_rx = 256;
    int n_tx = 16;
    double carrier_hz = 30e9;

    double wavelength() const { return kSpeedOfLight / carrier_hz; }
    double spacing() const { return wavelength() / 2.0; }

    void validate() const {
        if (n_tx <= 0 || n_rx <= n_tx)
            throw std::invalid_argument("ArrayGeometry: require n_rx > n_tx > 0");
        if (carrier_hz <= 0.0)
            throw std::invalid_argument("ArrayGeometry: carrier_hz must be positive");
    }
};

/// Binary per-antenna visibility mask of one path.
struct VisibilityVector {
    Eigen::ArrayXd mask;   // entries in {0,1}
    double fraction = 1.0; // ones count / n_rx

    static VisibilityVector all_ones(int n_rx) {
        VisibilityVector v;
        v.mask = Eigen::ArrayXd::Ones(n_rx);
        v.fraction = 1.0;
        return v;
    }
};

struct PathParams {
    std::complex<double> gain{1.0, 0.0};
    double aoa_rad = 0.0;
    double distance_m = 10.0;
    double aod_rad = 0.0;
    VisibilityVector visibility;
};

struct ChannelRealization {
    Eigen::MatrixXcd matrix;                 // n_rx x n_tx
    std::vector<PathParams> paths;
    std::vector<Eigen::VectorXcd> subchannels; // per-path receive-side vectors
};

/// Transmit (far-field) steering vector, unit norm.
inline Eigen::VectorXcd steer_tx(double aod_rad, const ArrayGeometry& g) {
    Eigen::VectorXcd a(g.n_tx);
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.n_tx));
    const double step = -2.0 * kPi / g.wavelength() * g.spacing() * std::sin(aod_rad);
    for (int n = 0; n < g.n_tx; ++n)
        a[n] = std::polar(scale, step * n);
    return a;
}

/// Receive steering vector under the Fresnel (second-order) wavefront model.
///
/// Wave-path difference of antenna n (0-based) relative to the reference
/// element:  delta_n = -d*n*sin(aoa) + d^2*n^2*cos^2(aoa) / (2*r).
/// The quadratic term vanishes as r -> inf, recovering the plane-wave vector.
inline Eigen::VectorXcd steer_rx_nf(double aoa_rad, double distance_m, const ArrayGeometry& g) {
    if (!(distance_m > 0.0))
        throw std::invalid_argument("steer_rx_nf: distance must be positive");
    Eigen::VectorXcd a(g.n_rx);
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.n_rx));
    const double d = g.spacing();
    const double k = 2.0 * kPi / g.wavelength();
    const double s = std::sin(aoa_rad);
    const double c2 = std::cos(aoa_rad) * std::cos(aoa_rad);
    for (int n = 0; n < g.n_rx; ++n) {
        const double dn = static_cast<double>(n);
        const double delta = -d * dn * s + d * d * dn * dn * c2 / (2.0 * distance_m);
        a[n] = std::polar(scale, k * delta);
    }
    return a;
}

enum class VisibilityModel { contiguous_block, markov };

/// Draw one visibility mask.
///
/// contiguous_block: a run of round(fraction * n_rx) ones with uniformly
/// random start. markov: a stationary draw of the chain conditioned to be
/// non-empty.
inline VisibilityVector sample_visibility(double fraction, VisibilityModel model,
                                          const MarkovPrior& prior, int n_rx, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("sample_visibility: fraction must lie in (0,1]");
    VisibilityVector v;
    v.mask = Eigen::ArrayXd::Zero(n_rx);
    if (model == VisibilityModel::contiguous_block) {
        const int len = std::min(n_rx, static_cast<int>(std::lround(fraction * n_rx)));
        const int start = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_rx - len + 1)));
        v.mask.segment(start, len).setOnes();
    } else {
        Eigen::ArrayXi s;
        do {
            s = markov_sample(prior, n_rx, rng);
        } while ((s == 0).all());
        v.mask = s.cast<double>();
    }
    v.fraction = v.mask.sum() / static_cast<double>(n_rx);
    return v;
}

/// Receive-side contribution of one path: sqrt(n_tx*n_rx) * g * (s .* a_rx).
inline Eigen::VectorXcd subchannel_of(const PathParams& p, const ArrayGeometry& g) {
    const Eigen::VectorXcd a = steer_rx_nf(p.aoa_rad, p.distance_m, g);
    const double amp = std::sqrt(static_cast<double>(g.n_tx) * static_cast<double>(g.n_rx));
    return (amp * p.gain) * (p.visibility.mask * a.array()).matrix();
}

/// Sum of per-path rank-one terms; also returns the per-path subchannels.
inline ChannelRealization assemble_channel(const std::vector<PathParams>& paths,
                                           const ArrayGeometry& g) {
    if (paths.empty())
        throw std::invalid_argument("assemble_channel: need at least one path");
    ChannelRealization ch;
    ch.paths = paths;
    ch.matrix = Eigen::MatrixXcd::Zero(g.n_rx, g.n_tx);
    ch.subchannels.reserve(paths.size());
    for (const PathParams& p : paths) {
        if (p.visibility.mask.size() != g.n_rx)
            throw std::invalid_argument("assemble_channel: visibility length != n_rx");
        Eigen::VectorXcd h = subchannel_of(p, g);
        ch.matrix.noalias() += h * steer_tx(p.aod_rad, g).adjoint();
        ch.subchannels.push_back(std::move(h));
    }
    return ch;
}

enum class ScenarioKind { nf_sns, nf_ss, ff_ss };

struct ScenarioConfig {
    ArrayGeometry geometry;
    ScenarioKind kind = ScenarioKind::nf_sns;
    int n_paths = 4;
    double distance_min_m = 2.0;
    double distance_max_m = 10.0;
    double ff_distance_m = 200.0;
    double vr_fraction = 0.25;
    VisibilityModel vr_model = VisibilityModel::contiguous_block;
    MarkovPrior vr_prior{0.25, 0.05};
};

namespace detail {

/// Overlap of two binary masks relative to the smaller support.
inline double mask_overlap(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    const double inter = (a * b).sum();
    const double denom = std::min(a.sum(), b.sum());
    return denom > 0.0 ? inter / denom : 0.0;
}

/// Sample a mask that overlaps every accepted mask by at most 50%.
/// For large fractions that bound is unattainable (two long blocks must
/// overlap), so after a fixed budget the most distinct candidate wins.
inline VisibilityVector sample_distinct_visibility(const ScenarioConfig& cfg,
                                                   const std::vector<VisibilityVector>& taken,
                                                   Rng& rng) {
    VisibilityVector best;
    double best_overlap = 2.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
        VisibilityVector cand = sample_visibility(cfg.vr_fraction, cfg.vr_model, cfg.vr_prior,
                                                  cfg.geometry.n_rx, rng);
        double worst = 0.0;
        for (const VisibilityVector& t : taken)
            worst = std::max(worst, mask_overlap(cand.mask, t.mask));
        if (worst < best_overlap) {
            best_overlap = worst;
            best = cand;
        }
        if (worst <= 0.5) break;
    }
    return best;
}

} // namespace detail

/// Draw a full channel realization for one of the three scenario families.
///
/// nf_sns: near-field distances, per-path partial visibility with distinct
/// regions across paths. nf_ss: near-field distances, full visibility.
/// ff_ss: far-field distance, full visibility.
inline ChannelRealization make_scenario(const ScenarioConfig& cfg, std::uint64_t rng_seed) {
    cfg.geometry.validate();
    if (cfg.n_paths < 1)
        throw std::invalid_argument("make_scenario: need n_paths >= 1");
    if (cfg.kind == ScenarioKind::nf_sns && !(cfg.vr_fraction > 0.0 && cfg.vr_fraction <= 1.0))
        throw std::invalid_argument("make_scenario: vr_fraction outside (0,1]");
    if (cfg.kind == ScenarioKind::ff_ss && cfg.ff_distance_m < 200.0)
        throw std::invalid_argument("make_scenario: ff_ss requires distance >= 200 m");

    Rng rng(rng_seed);
    std::vector<PathParams> paths;
    std::vector<VisibilityVector> masks;
    paths.reserve(cfg.n_paths);
    for (int l = 0; l < cfg.n_paths; ++l) {
        PathParams p;
        p.gain = rng.cgaussian(); // unit-variance Rayleigh fading
        p.aoa_rad = rng.uniform(-kPi / 2 * 0.999, kPi / 2 * 0.999);
        p.aod_rad = rng.uniform(-kPi / 2 * 0.999, kPi / 2 * 0.999);
        switch (cfg.kind) {
        case ScenarioKind::nf_sns:
            p.distance_m = rng.uniform(cfg.distance_min_m, cfg.distance_max_m);
            if (cfg.vr_fraction >= 1.0) {
                p.visibility = VisibilityVector::all_ones(cfg.geometry.n_rx);
            } else {
                p.visibility = detail::sample_distinct_visibility(cfg, masks, rng);
                masks.push_back(p.visibility);
            }
            break;
        case ScenarioKind::nf_ss:
            p.distance_m = rng.uniform(cfg.distance_min_m, cfg.distance_max_m);
            p.visibility = VisibilityVector::all_ones(cfg.geometry.n_rx);
            break;
        case ScenarioKind::ff_ss:
            p.distance_m = cfg.ff_distance_m;
            p.visibility = VisibilityVector::all_ones(cfg.geometry.n_rx);
            break;
        }
        paths.push_back(std::move(p));
    }
    return assemble_channel(paths, cfg.geometry);
}

} // namespace tlgamp

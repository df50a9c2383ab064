#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tlgamp/baselines.hpp"
#include "tlgamp/channel.hpp"
#include "tlgamp/gamp.hpp"
#include "tlgamp/pilot.hpp"

namespace tlgamp {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double nmse(const Eigen::MatrixXcd& h_hat, const Eigen::MatrixXcd& h) {
    if (h_hat.rows() != h.rows() || h_hat.cols() != h.cols())
        throw std::invalid_argument("nmse: dimension mismatch");
    const double denom = h.squaredNorm();
    if (!(denom > 0.0))
        throw std::invalid_argument("nmse: zero-norm reference");
    return (h_hat - h).squaredNorm() / denom;
}

/// NMSE in dB, floored at -100 dB (exact recovery) and capped at +100 dB.
inline double nmse_db(const Eigen::MatrixXcd& h_hat, const Eigen::MatrixXcd& h) {
    const double v = nmse(h_hat, h);
    return std::clamp(10.0 * std::log10(std::max(v, 1e-30)), -100.0, 100.0);
}

struct VrMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

inline VrMetrics vr_metrics(const Eigen::ArrayXd& belief, const Eigen::ArrayXd& mask,
                            double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("vr_metrics: threshold outside (0,1)");
    if (belief.size() != mask.size())
        throw std::invalid_argument("vr_metrics: length mismatch");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < belief.size(); ++i) {
        const bool pred = belief[i] > threshold;
        const bool truth = mask[i] > 0.5;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
        else ++tn;
    }
    VrMetrics m;
    m.accuracy = (tp + tn) / static_cast<double>(belief.size());
    m.precision = (tp + fp) > 0 ? tp / (tp + fp) : 1.0;
    m.recall = (tp + fn) > 0 ? tp / (tp + fn) : 1.0;
    return m;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    ScenarioConfig scenario;
    int k_slots = 16;          // K time slots per subframe
    int n_rf = 8;
    int pilot_len = 128;       // M, must equal k_slots * n_rf
    int phase1_subframes = 12; // P0 (three subframes per path by default)
    int aod_grid_size = 64;    // Phase-I correlation grid (4 * n_tx)
    int q_size = 512;          // angular dictionary size (2 * n_rx)
    std::vector<double> snr_db_list = {10.0};
    std::vector<double> vr_fraction_list = {0.25};
    std::vector<int> pilot_len_list = {48, 96, 128, 160, 192};
    std::vector<double> distance_list_m = {3.0, 5.0, 10.0, 15.0, 30.0, 60.0, 120.0, 200.0};
    GampConfig gamp;
    std::vector<BaselineKind> baselines = {BaselineKind::ls, BaselineKind::oracle_vr,
                                           BaselineKind::oracle_aod};
    int n_trials = 100;
    std::uint64_t base_seed = 1;
    int calib_noise_draws = 16;

    void validate() const {
        scenario.geometry.validate();
        gamp.validate();
        if (pilot_len != k_slots * n_rf)
            throw std::invalid_argument("ExperimentConfig: pilot_len must equal k_slots * n_rf");
        if (pilot_len > scenario.geometry.n_rx)
            throw std::invalid_argument("ExperimentConfig: pilot_len must not exceed n_rx");
        if (q_size < scenario.geometry.n_rx)
            throw std::invalid_argument("ExperimentConfig: q_size must be >= n_rx");
        if (phase1_subframes < scenario.n_paths)
            throw std::invalid_argument("ExperimentConfig: phase1_subframes < n_paths");
        if (n_trials < 1) throw std::invalid_argument("ExperimentConfig: n_trials < 1");
        if (snr_db_list.empty() || vr_fraction_list.empty() || pilot_len_list.empty() ||
            distance_list_m.empty())
            throw std::invalid_argument("ExperimentConfig: sweep lists must be non-empty");
        for (double f : vr_fraction_list)
            if (!(f > 0.0 && f <= 1.0))
                throw std::invalid_argument("ExperimentConfig: vr fraction outside (0,1]");
        for (int m : pilot_len_list)
            if (m % n_rf != 0 || m <= 0 || m > scenario.geometry.n_rx)
                throw std::invalid_argument(
                    "ExperimentConfig: pilot_len_list entries must be multiples of n_rf in "
                    "(0, n_rx]");
    }
};

/// Settings of one sweep point, resolved against the base configuration.
struct TrialSettings {
    double snr_db = 10.0;
    double vr_fraction = 0.25;
    int pilot_len = 128;
    std::optional<double> fixed_distance_m;
    double axis_value = 0.0;
};

struct TrialResult {
    std::map<std::string, double> nmse_db;
    std::map<std::string, bool> diverged;
    std::vector<double> vr_accuracy, vr_precision, vr_recall; // per path, main estimator
    std::vector<double> trace_nmse_db;                        // per-iteration, padded
    std::vector<TraceRow> first_path_trace;
    double sigma2 = 0.0;
    double wall_time_s = 0.0;
    int aod_warnings = 0;
};

// ---------------------------------------------------------------------------
// Noise calibration
// ---------------------------------------------------------------------------

/// Bisection on the per-antenna noise variance until the realized receive SNR
/// (signal power over the mean energy of the scaled reference noise draws)
/// hits the target within 0.01 dB.
inline double calibrate_sigma2(double signal_power, const std::vector<double>& unit_noise_energy,
                               double target_snr_db) {
    if (!(signal_power > 0.0))
        throw std::invalid_argument("calibrate_sigma2: zero signal power");
    double mean_unit = 0.0;
    for (double e : unit_noise_energy) mean_unit += e;
    mean_unit /= static_cast<double>(unit_noise_energy.size());

    auto snr_of = [&](double log_s2) {
        return 10.0 * std::log10(signal_power / (std::exp(log_s2) * mean_unit));
    };
    double lo = -120.0, hi = 120.0; // log sigma^2 bracket
    if (snr_of(lo) < target_snr_db || snr_of(hi) > target_snr_db)
        throw std::runtime_error("calibrate_sigma2: target SNR outside bracket");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (snr_of(mid) > target_snr_db)
            lo = mid;
        else
            hi = mid;
        if (std::abs(snr_of(mid) - target_snr_db) < 0.01) return std::exp(mid);
    }
    return std::exp(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Single trial
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t double_bits(double x) { return std::bit_cast<std::uint64_t>(x); }

/// Greedy nearest-angle matching of estimated departure angles to true paths.
inline std::vector<int> match_paths(const std::vector<double>& est_aods,
                                    const std::vector<PathParams>& paths) {
    std::vector<int> match(est_aods.size(), -1);
    std::vector<bool> used(paths.size(), false);
    for (std::size_t e = 0; e < est_aods.size(); ++e) {
        double best = 1e300;
        int arg = -1;
        for (std::size_t t = 0; t < paths.size(); ++t) {
            if (used[t]) continue;
            const double d = std::abs(std::sin(est_aods[e]) - std::sin(paths[t].aod_rad));
            if (d < best) {
                best = d;
                arg = static_cast<int>(t);
            }
        }
        if (arg >= 0) {
            match[e] = arg;
            used[arg] = true;
        }
    }
    return match;
}

inline Eigen::MatrixXcd dft_codebook(int n_tx) {
    Eigen::MatrixXcd f(n_tx, n_tx);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_tx));
    for (int j = 0; j < n_tx; ++j)
        for (int n = 0; n < n_tx; ++n)
            f(n, j) = std::polar(scale, -2.0 * kPi * n * j / n_tx);
    return f;
}

} // namespace detail

/// Optional per-path payload of one trial, for inspection dumps.
struct TrialCapture {
    std::vector<SubchannelEstimate> estimates; // main estimator, per estimated path
    std::vector<Eigen::VectorXcd> truths;      // matched true subchannels
    std::vector<Eigen::ArrayXd> masks;         // matched true visibility masks
    std::vector<double> aods_rad;              // estimated departure angles
};

inline TrialResult run_trial(const ExperimentConfig& cfg, const TrialSettings& s,
                             int trial_index, TrialCapture* capture = nullptr) {
    const auto t_start = std::chrono::steady_clock::now();
    const ArrayGeometry& g = cfg.scenario.geometry;
    const std::uint64_t trial_seed =
        hash_seed(hash_seed(cfg.base_seed, static_cast<std::uint64_t>(trial_index)),
                  detail::double_bits(s.axis_value));

    // Scenario resolved for this sweep point.
    ScenarioConfig sc = cfg.scenario;
    sc.vr_fraction = s.vr_fraction;
    if (sc.vr_fraction < 1.0)
        sc.vr_prior = MarkovPrior(sc.vr_fraction, sc.vr_prior.p10);
    if (s.fixed_distance_m) {
        sc.distance_min_m = *s.fixed_distance_m;
        sc.distance_max_m = *s.fixed_distance_m;
        if (*s.fixed_distance_m >= 200.0 && sc.kind == ScenarioKind::nf_sns && s.vr_fraction >= 1.0)
            sc.kind = ScenarioKind::ff_ss;
    }
    const ChannelRealization ch = make_scenario(sc, hash_seed(trial_seed, 1));
    const int n_paths = static_cast<int>(ch.paths.size());

    const int k_slots = s.pilot_len / cfg.n_rf;
    const CombinerSet w = gen_combiners(k_slots, cfg.n_rf, g, hash_seed(trial_seed, 2));

    // Noise calibration against the aligned transmit beams of the true paths.
    double signal_power = 0.0;
    for (const PathParams& p : ch.paths)
        signal_power += (w.stacked.adjoint() * (ch.matrix * steer_tx(p.aod_rad, g))).squaredNorm();
    signal_power /= n_paths;
    Rng calib_rng(hash_seed(trial_seed, 3));
    std::vector<double> unit_energy(cfg.calib_noise_draws);
    for (double& e : unit_energy)
        e = draw_combined_noise(w, 1.0, calib_rng).squaredNorm();
    const double sigma2 = calibrate_sigma2(signal_power, unit_energy, s.snr_db);

    // Phase I: random DFT beams, grid AoD estimation.
    const Eigen::MatrixXcd codebook = detail::dft_codebook(g.n_tx);
    Rng beam_rng(hash_seed(trial_seed, 4));
    Eigen::MatrixXcd f_mat(g.n_tx, cfg.phase1_subframes);
    for (int p = 0; p < cfg.phase1_subframes; ++p)
        f_mat.col(p) = codebook.col(beam_rng.uniform_index(g.n_tx));
    Rng phase1_rng(hash_seed(trial_seed, 5));
    Eigen::MatrixXcd y0(w.m(), cfg.phase1_subframes);
    for (int p = 0; p < cfg.phase1_subframes; ++p)
        y0.col(p) = simulate_subframe(ch.matrix, f_mat.col(p), w, sigma2, phase1_rng);
    const AodEstimate aods = estimate_aods_grid(y0, f_mat, n_paths, g, cfg.aod_grid_size);

    std::vector<double> true_aods(n_paths);
    for (int l = 0; l < n_paths; ++l) true_aods[l] = ch.paths[l].aod_rad;
    std::sort(true_aods.begin(), true_aods.end());

    // Phase II: shared noise draws, one beam set per AoD source.
    Rng phase2_rng(hash_seed(trial_seed, 6));
    const int n_est = static_cast<int>(aods.aods_rad.size());
    std::vector<Eigen::VectorXcd> noise2(n_paths);
    for (auto& n : noise2) n = draw_combined_noise(w, sigma2, phase2_rng);
    auto observe = [&](const std::vector<double>& beams) {
        std::vector<Eigen::VectorXcd> ys;
        ys.reserve(beams.size());
        for (std::size_t l = 0; l < beams.size(); ++l)
            ys.push_back(w.stacked.adjoint() * (ch.matrix * steer_tx(beams[l], g)) +
                         noise2[std::min(l, noise2.size() - 1)]);
        return ys;
    };
    const std::vector<Eigen::VectorXcd> y_grid = observe(aods.aods_rad);
    const std::vector<Eigen::VectorXcd> y_true = observe(true_aods);

    // Pre-whitening + unitary transform (one SVD per trial).
    const NoiseModel nm = make_noise_model(w, sigma2);
    const PilotTransform pt = make_pilot_transform(nm.whitened_operator(w));
    const AngularDictionary dict = build_dictionary(g, cfg.q_size);
    auto transform_all = [&](const std::vector<Eigen::VectorXcd>& ys) {
        std::vector<WhitenedObservation> obs;
        obs.reserve(ys.size());
        for (const auto& y : ys)
            obs.push_back(apply_transform(pt, nm.whiten(y), dict, s.snr_db));
        return obs;
    };
    const std::vector<WhitenedObservation> obs_grid = transform_all(y_grid);
    const std::vector<WhitenedObservation> obs_true = transform_all(y_true);

    // Truth pairing for per-path metrics (estimated angle -> nearest true path).
    const std::vector<int> match = detail::match_paths(aods.aods_rad, ch.paths);
    auto matched_truth = [&](int l) -> const Eigen::VectorXcd& {
        return ch.subchannels[match[l] >= 0 ? match[l] : 0];
    };
    auto matched_mask = [&](int l) -> const Eigen::ArrayXd& {
        return ch.paths[match[l] >= 0 ? match[l] : 0].visibility.mask;
    };
    // True-angle observations are already index-aligned with the sorted paths.
    std::vector<int> order(n_paths);
    for (int l = 0; l < n_paths; ++l) {
        const auto it = std::find_if(ch.paths.begin(), ch.paths.end(), [&](const PathParams& p) {
            return p.aod_rad == true_aods[l];
        });
        order[l] = static_cast<int>(it - ch.paths.begin());
    }

    TrialResult res;
    res.sigma2 = sigma2;
    res.aod_warnings = aods.missing_peaks;

    auto record = [&](const std::string& name, const Eigen::MatrixXcd& h_hat, bool diverged) {
        res.nmse_db[name] = nmse_db(h_hat, ch.matrix);
        res.diverged[name] = diverged;
    };

    // Main estimator.
    {
        std::vector<SubchannelEstimate> ests;
        bool div = false;
        double err_num = 0.0, err_den = 0.0;
        std::vector<std::vector<double>> per_path_err;
        for (int l = 0; l < n_est; ++l) {
            const Eigen::VectorXcd& truth = matched_truth(l);
            SubchannelEstimate e = run_subchannel_estimation(obs_grid[l], cfg.gamp, &truth);
            div = div || e.diverged;
            const VrMetrics vm = vr_metrics(e.s_belief, matched_mask(l));
            res.vr_accuracy.push_back(vm.accuracy);
            res.vr_precision.push_back(vm.precision);
            res.vr_recall.push_back(vm.recall);
            const double tn = truth.squaredNorm();
            err_den += tn;
            std::vector<double> errs(cfg.gamp.max_iter, tn); // zero estimate = 0 dB
            for (int it = 0; it < cfg.gamp.max_iter && !e.trace.empty(); ++it) {
                const std::size_t idx = std::min<std::size_t>(it, e.trace.size() - 1);
                errs[it] = std::pow(10.0, e.trace[idx].nmse_db / 10.0) * tn;
            }
            per_path_err.push_back(std::move(errs));
            if (l == 0) res.first_path_trace = e.trace;
            if (capture) {
                capture->truths.push_back(truth);
                capture->masks.push_back(matched_mask(l));
            }
            ests.push_back(std::move(e));
        }
        if (capture) {
            capture->estimates = ests;
            capture->aods_rad = aods.aods_rad;
        }
        res.trace_nmse_db.assign(cfg.gamp.max_iter, 0.0);
        for (int it = 0; it < cfg.gamp.max_iter && err_den > 0.0; ++it) {
            err_num = 0.0;
            for (const auto& pe : per_path_err) err_num += pe[it];
            res.trace_nmse_db[it] =
                std::clamp(10.0 * std::log10(std::max(err_num / err_den, 1e-30)), -100.0, 100.0);
        }
        record("tl_gamp", assemble_full_channel(ests, aods.aods_rad, g), div);
    }

    for (BaselineKind kind : cfg.baselines) {
        switch (kind) {
        case BaselineKind::ls: {
            Eigen::MatrixXcd h_hat = Eigen::MatrixXcd::Zero(g.n_rx, g.n_tx);
            for (int l = 0; l < n_est; ++l)
                h_hat.noalias() +=
                    ls_estimate(y_grid[l], w).h_hat * steer_tx(aods.aods_rad[l], g).adjoint();
            record("ls", h_hat, false);
            break;
        }
        case BaselineKind::oracle_vr: {
            std::vector<SubchannelEstimate> ests;
            bool div = false;
            for (int l = 0; l < n_est; ++l) {
                const Eigen::VectorXcd& truth = matched_truth(l);
                SubchannelEstimate e = oracle_vr_run(obs_grid[l], cfg.gamp, matched_mask(l), &truth);
                div = div || e.diverged;
                ests.push_back(std::move(e));
            }
            record("oracle_vr", assemble_full_channel(ests, aods.aods_rad, g), div);
            break;
        }
        case BaselineKind::oracle_aod: {
            std::vector<SubchannelEstimate> ests;
            bool div = false;
            for (int l = 0; l < n_paths; ++l) {
                const Eigen::VectorXcd& truth = ch.subchannels[order[l]];
                SubchannelEstimate e = run_subchannel_estimation(obs_true[l], cfg.gamp, &truth);
                div = div || e.diverged;
                ests.push_back(std::move(e));
            }
            record("oracle_aod", assemble_full_channel(ests, true_aods, g), div);
            break;
        }
        case BaselineKind::oracle_both: {
            std::vector<SubchannelEstimate> ests;
            bool div = false;
            for (int l = 0; l < n_paths; ++l) {
                const Eigen::VectorXcd& truth = ch.subchannels[order[l]];
                SubchannelEstimate e = oracle_vr_run(obs_true[l], cfg.gamp,
                                                     ch.paths[order[l]].visibility.mask, &truth);
                div = div || e.diverged;
                ests.push_back(std::move(e));
            }
            record("oracle_both", assemble_full_channel(ests, true_aods, g), div);
            break;
        }
        case BaselineKind::frozen_phi: {
            std::vector<SubchannelEstimate> ests;
            bool div = false;
            for (int l = 0; l < n_est; ++l) {
                const Eigen::VectorXcd& truth = matched_truth(l);
                SubchannelEstimate e =
                    frozen_phi_run(obs_grid[l], cfg.gamp, s.vr_fraction, &truth);
                div = div || e.diverged;
                ests.push_back(std::move(e));
            }
            record("frozen_phi", assemble_full_channel(ests, aods.aods_rad, g), div);
            break;
        }
        }
    }

    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { snr, vr_size, pilot_len, distance, iterations };

inline const char* axis_name(SweepAxis a) {
    switch (a) {
    case SweepAxis::snr: return "snr";
    case SweepAxis::vr_size: return "vr";
    case SweepAxis::pilot_len: return "pilot";
    case SweepAxis::distance: return "distance";
    case SweepAxis::iterations: return "iterations";
    }
    return "?";
}

struct SweepCell {
    double axis_value;
    std::string estimator;
    double median_db;
    double p10_db;
    double p90_db;
    int n;
    double mean_db;
};

struct SweepResult {
    SweepAxis axis;
    std::vector<double> axis_values;
    std::vector<SweepCell> cells;
    double wall_time_s = 0.0;
};

namespace detail {

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double idx = p * (static_cast<double>(v.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(idx));
    const double w = idx - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : s / static_cast<double>(v.size());
}

template <typename Fn>
inline void parallel_for(int count, int workers, Fn&& fn) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

/// Runs the requested sweep. Trials of one axis point are independent work
/// items; the aggregation is an ordered reduction over trial indices, so the
/// result does not depend on the worker count.
inline SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis, int workers = 1) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<TrialSettings> points;
    switch (axis) {
    case SweepAxis::snr:
        for (double snr : cfg.snr_db_list) {
            TrialSettings s;
            s.snr_db = snr;
            s.vr_fraction = cfg.vr_fraction_list.front();
            s.pilot_len = cfg.pilot_len;
            s.axis_value = snr;
            points.push_back(s);
        }
        break;
    case SweepAxis::vr_size:
        for (double f : cfg.vr_fraction_list) {
            TrialSettings s;
            s.snr_db = cfg.snr_db_list.front();
            s.vr_fraction = f;
            s.pilot_len = cfg.pilot_len;
            s.axis_value = f;
            points.push_back(s);
        }
        break;
    case SweepAxis::pilot_len:
        for (int m : cfg.pilot_len_list) {
            TrialSettings s;
            s.snr_db = cfg.snr_db_list.front();
            s.vr_fraction = cfg.vr_fraction_list.front();
            s.pilot_len = m;
            s.axis_value = static_cast<double>(m);
            points.push_back(s);
        }
        break;
    case SweepAxis::distance:
        for (double d : cfg.distance_list_m) {
            TrialSettings s;
            s.snr_db = cfg.snr_db_list.front();
            s.vr_fraction = cfg.vr_fraction_list.front();
            s.pilot_len = cfg.pilot_len;
            s.fixed_distance_m = d;
            s.axis_value = d;
            points.push_back(s);
        }
        break;
    case SweepAxis::iterations:
        for (double snr : cfg.snr_db_list) {
            TrialSettings s;
            s.snr_db = snr;
            s.vr_fraction = cfg.vr_fraction_list.front();
            s.pilot_len = cfg.pilot_len;
            s.axis_value = snr; // expanded into per-iteration rows below
            points.push_back(s);
        }
        break;
    }

    SweepResult out;
    out.axis = axis;

    for (const TrialSettings& point : points) {
        std::vector<TrialResult> results(cfg.n_trials);
        detail::parallel_for(cfg.n_trials, workers,
                             [&](int t) { results[t] = run_trial(cfg, point, t); });

        if (axis == SweepAxis::iterations) {
            std::string est = "tl_gamp_snr" + std::to_string(static_cast<int>(point.snr_db));
            for (int it = 0; it < cfg.gamp.max_iter; ++it) {
                std::vector<double> vals;
                vals.reserve(cfg.n_trials);
                for (const TrialResult& r : results) vals.push_back(r.trace_nmse_db[it]);
                SweepCell c;
                c.axis_value = static_cast<double>(it + 1);
                c.estimator = est;
                c.median_db = detail::percentile(vals, 0.5);
                c.p10_db = detail::percentile(vals, 0.1);
                c.p90_db = detail::percentile(vals, 0.9);
                c.mean_db = detail::mean_of(vals);
                c.n = static_cast<int>(vals.size());
                out.cells.push_back(c);
                if (static_cast<int>(out.axis_values.size()) < cfg.gamp.max_iter)
                    out.axis_values.push_back(c.axis_value);
            }
            continue;
        }

        out.axis_values.push_back(point.axis_value);
        std::vector<std::string> names;
        for (const auto& kv : results.front().nmse_db) names.push_back(kv.first);
        for (const std::string& name : names) {
            std::vector<double> vals;
            vals.reserve(cfg.n_trials);
            for (const TrialResult& r : results) {
                const auto it = r.nmse_db.find(name);
                if (it != r.nmse_db.end() && std::isfinite(it->second)) vals.push_back(it->second);
            }
            SweepCell c;
            c.axis_value = point.axis_value;
            c.estimator = name;
            c.median_db = detail::percentile(vals, 0.5);
            c.p10_db = detail::percentile(vals, 0.1);
            c.p90_db = detail::percentile(vals, 0.9);
            c.mean_db = detail::mean_of(vals);
            c.n = static_cast<int>(vals.size());
            out.cells.push_back(c);
        }
    }

    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

} // namespace tlgamp

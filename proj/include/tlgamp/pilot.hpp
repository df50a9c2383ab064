#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tlgamp/channel.hpp"
#include "tlgamp/rng.hpp"

namespace tlgamp {

/// Per-slot analog combining matrices and their horizontal stacking.
/// Entries are +-1/sqrt(n_rx) (constant modulus).
struct CombinerSet {
    std::vector<Eigen::MatrixXcd> per_slot; // K matrices, n_rx x n_rf
    Eigen::MatrixXcd stacked;               // n_rx x M, M = K*n_rf
    int n_rf = 0;

    int slots() const { return static_cast<int>(per_slot.size()); }
    int m() const { return static_cast<int>(stacked.cols()); }
};

inline CombinerSet gen_combiners(int k_slots, int n_rf, const ArrayGeometry& g,
                                 std::uint64_t rng_seed) {
    if (k_slots < 1 || n_rf < 1)
        throw std::invalid_argument("gen_combiners: need K >= 1 and n_rf >= 1");
    Rng rng(rng_seed);
    CombinerSet w;
    w.n_rf = n_rf;
    w.per_slot.reserve(k_slots);
    const double a = 1.0 / std::sqrt(static_cast<double>(g.n_rx));
    for (int k = 0; k < k_slots; ++k) {
        Eigen::MatrixXcd wk(g.n_rx, n_rf);
        for (int j = 0; j < n_rf; ++j)
            for (int i = 0; i < g.n_rx; ++i)
                wk(i, j) = rng.flip() ? a : -a;
        w.per_slot.push_back(std::move(wk));
    }
    w.stacked.resize(g.n_rx, k_slots * n_rf);
    for (int k = 0; k < k_slots; ++k)
        w.stacked.middleCols(k * n_rf, n_rf) = w.per_slot[k];
    return w;
}

/// Combined-noise statistics for one subframe: covariance
/// R = blkdiag(sigma^2 W_k^H W_k) and its Cholesky factor, stored per slot.
struct NoiseModel {
    double variance = 1.0;                      // per-antenna sigma^2
    std::vector<Eigen::MatrixXcd> chol_blocks;  // lower-triangular, includes sigma
    int n_rf = 0;

    int m() const { return static_cast<int>(chol_blocks.size()) * n_rf; }

    Eigen::MatrixXcd covariance() const {
        const int mm = m();
        Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(mm, mm);
        for (std::size_t k = 0; k < chol_blocks.size(); ++k) {
            const auto& b = chol_blocks[k];
            r.block(static_cast<int>(k) * n_rf, static_cast<int>(k) * n_rf, n_rf, n_rf) =
                b * b.adjoint();
        }
        return r;
    }

    /// Applies the pre-whitening transform B^{-1} by per-slot triangular solves.
    Eigen::VectorXcd whiten(const Eigen::VectorXcd& y) const {
        if (y.size() != m())
            throw std::invalid_argument("NoiseModel::whiten: length mismatch");
        Eigen::VectorXcd out(y.size());
        for (std::size_t k = 0; k < chol_blocks.size(); ++k) {
            const int off = static_cast<int>(k) * n_rf;
            out.segment(off, n_rf) = chol_blocks[k]
                                         .triangularView<Eigen::Lower>()
                                         .solve(y.segment(off, n_rf));
        }
        return out;
    }

    /// B^{-1} W^H, the whitened measurement operator.
    Eigen::MatrixXcd whitened_operator(const CombinerSet& w) const {
        Eigen::MatrixXcd p(m(), w.stacked.rows());
        for (std::size_t k = 0; k < chol_blocks.size(); ++k) {
            const int off = static_cast<int>(k) * n_rf;
            p.middleRows(off, n_rf) = chol_blocks[k]
                                          .triangularView<Eigen::Lower>()
                                          .solve(w.per_slot[k].adjoint());
        }
        return p;
    }
};

inline NoiseModel make_noise_model(const CombinerSet& w, double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("make_noise_model: sigma2 must be positive");
    NoiseModel nm;
    nm.variance = sigma2;
    nm.n_rf = w.n_rf;
    nm.chol_blocks.reserve(w.per_slot.size());
    for (const auto& wk : w.per_slot) {
        Eigen::MatrixXcd block = sigma2 * (wk.adjoint() * wk);
        Eigen::LLT<Eigen::MatrixXcd> llt(block);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("make_noise_model: covariance block not positive definite "
                                     "(ill-formed combiner set)");
        nm.chol_blocks.push_back(llt.matrixL());
    }
    return nm;
}

/// Combined noise of one subframe: stack of W_k^H n_k with n_k ~ CN(0, sigma2 I).
inline Eigen::VectorXcd draw_combined_noise(const CombinerSet& w, double sigma2, Rng& rng) {
    const double sigma = std::sqrt(sigma2);
    Eigen::VectorXcd out(w.m());
    Eigen::VectorXcd n(w.stacked.rows());
    for (int k = 0; k < w.slots(); ++k) {
        for (int i = 0; i < n.size(); ++i)
            n[i] = sigma * rng.cgaussian();
        out.segment(k * w.n_rf, w.n_rf) = w.per_slot[k].adjoint() * n;
    }
    return out;
}

/// One pilot subframe: y = W^H H f + combined noise (unit pilot symbol).
inline Eigen::VectorXcd simulate_subframe(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& f,
                                          const CombinerSet& w, double sigma2, Rng& rng) {
    if (h.rows() != w.stacked.rows() || h.cols() != f.size())
        throw std::invalid_argument("simulate_subframe: dimension mismatch");
    return w.stacked.adjoint() * (h * f) + draw_combined_noise(w, sigma2, rng);
}

/// Receive SNR in dB for pilot beam f against a batch of combined-noise draws.
inline double receive_snr_db(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& f,
                             const CombinerSet& w,
                             const std::vector<Eigen::VectorXcd>& noise_draws) {
    const double sig = (w.stacked.adjoint() * (h * f)).squaredNorm();
    if (!(sig > 0.0))
        throw std::invalid_argument("receive_snr_db: zero signal power");
    if (noise_draws.empty())
        throw std::invalid_argument("receive_snr_db: need at least one noise draw");
    double np = 0.0;
    for (const auto& n : noise_draws)
        np += n.squaredNorm();
    np /= static_cast<double>(noise_draws.size());
    return 10.0 * std::log10(sig / np);
}

/// Grid of far-field array responses over uniform spatial frequencies in [-1, 1).
struct AngularDictionary {
    Eigen::MatrixXcd columns;   // n_rx x Q
    Eigen::VectorXd frequencies; // grid f_q = -1 + 2q/Q

    int q_size() const { return static_cast<int>(columns.cols()); }
};

inline AngularDictionary build_dictionary(const ArrayGeometry& g, int q) {
    if (q < g.n_rx)
        throw std::invalid_argument("build_dictionary: Q < n_rx under-represents the array");
    AngularDictionary d;
    d.columns.resize(g.n_rx, q);
    d.frequencies.resize(q);
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.n_rx));
    for (int j = 0; j < q; ++j) {
        const double f = -1.0 + 2.0 * static_cast<double>(j) / q;
        d.frequencies[j] = f;
        for (int n = 0; n < g.n_rx; ++n)
            d.columns(n, j) = std::polar(scale, -kPi * n * f);
    }
    return d;
}

/// Measurement after pre-whitening and the divergence-mitigating rotation:
/// r = U^H B^{-1} y with P = B^{-1} W^H = U diag(sv) V^H and A = diag(sv) V^H.
struct WhitenedObservation {
    Eigen::VectorXcd r;          // length M
    Eigen::MatrixXcd a_matrix;   // M x n_rx
    Eigen::MatrixXcd dictionary; // n_rx x Q
    double snr_db = 0.0;
    bool rank_deficient = false;
};

/// Cached SVD of the whitened operator P = U diag(sv) V^H. Depends only on
/// the combiners and the noise statistics, so one factorization serves every
/// path of a trial (and could be reused across coherence blocks).
struct PilotTransform {
    Eigen::MatrixXcd u;        // M x M
    Eigen::MatrixXcd a_matrix; // diag(sv) V^H, M x n_rx
    bool rank_deficient = false;
};

inline PilotTransform make_pilot_transform(const Eigen::MatrixXcd& p) {
    if (p.rows() > p.cols())
        throw std::invalid_argument("make_pilot_transform: need M <= n_rx");
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(p, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sv = svd.singularValues();
    PilotTransform t;
    const double floor_sv = 1e-12 * sv[0];
    for (int i = 0; i < sv.size(); ++i) {
        if (sv[i] < floor_sv) {
            sv[i] = floor_sv;
            t.rank_deficient = true;
        }
    }
    t.u = svd.matrixU();
    t.a_matrix = sv.asDiagonal() * svd.matrixV().adjoint();
    return t;
}

inline WhitenedObservation apply_transform(const PilotTransform& t,
                                           const Eigen::VectorXcd& ytilde,
                                           const AngularDictionary& dict, double snr_db) {
    WhitenedObservation obs;
    obs.r = t.u.adjoint() * ytilde;
    obs.a_matrix = t.a_matrix;
    obs.dictionary = dict.columns;
    obs.snr_db = snr_db;
    obs.rank_deficient = t.rank_deficient;
    return obs;
}

inline WhitenedObservation unitary_transform(const Eigen::VectorXcd& ytilde,
                                             const Eigen::MatrixXcd& p,
                                             const AngularDictionary& dict, double snr_db) {
    if (p.rows() != ytilde.size())
        throw std::invalid_argument("unitary_transform: length mismatch");
    return apply_transform(make_pilot_transform(p), ytilde, dict, snr_db);
}

struct AodEstimate {
    std::vector<double> aods_rad;
    int missing_peaks = 0; // >0 when fewer than the requested peaks were resolvable
};

/// Grid-correlation estimate of the departure angles from the random-beam
/// phase. For each candidate angle the normalized transmit signature
/// F^H a_T(psi) is correlated against the stacked observations; peaks are
/// taken greedily with a main-lobe exclusion window.
inline AodEstimate estimate_aods_grid(const Eigen::MatrixXcd& y0, const Eigen::MatrixXcd& f,
                                      int n_paths, const ArrayGeometry& g, int grid_size) {
    if (y0.cols() != f.cols())
        throw std::invalid_argument("estimate_aods_grid: subframe count mismatch");
    if (grid_size < 2 * g.n_tx)
        throw std::invalid_argument("estimate_aods_grid: grid too coarse");

    Eigen::VectorXd metric(grid_size);
    Eigen::VectorXd grid_u(grid_size);
    for (int i = 0; i < grid_size; ++i) {
        const double u = -1.0 + 2.0 * (i + 0.5) / grid_size;
        grid_u[i] = u;
        const Eigen::VectorXcd sig = f.adjoint() * steer_tx(std::asin(u), g);
        const double nrm = sig.norm();
        metric[i] = nrm > 0.0 ? (y0 * sig).squaredNorm() / (nrm * nrm) : 0.0;
    }

    AodEstimate est;
    const double exclude_u = 2.0 / g.n_tx; // first-null distance in sin space
    std::vector<bool> excluded(grid_size, false);
    for (int p = 0; p < n_paths; ++p) {
        int best = -1;
        for (int i = 0; i < grid_size; ++i)
            if (!excluded[i] && (best < 0 || metric[i] > metric[best])) best = i;
        if (best < 0) {
            est.missing_peaks = n_paths - p;
            break;
        }
        est.aods_rad.push_back(std::asin(grid_u[best]));
        for (int i = 0; i < grid_size; ++i)
            if (std::abs(grid_u[i] - grid_u[best]) < exclude_u) excluded[i] = true;
    }
    std::sort(est.aods_rad.begin(), est.aods_rad.end());
    return est;
}

/// Phase-II observations: one subframe per path with the transmit beam
/// aligned to its (estimated) departure angle.
inline std::vector<Eigen::VectorXcd> beam_align_observe(const Eigen::MatrixXcd& h,
                                                        const std::vector<double>& aods_rad,
                                                        const CombinerSet& w, double sigma2,
                                                        const ArrayGeometry& g, Rng& rng) {
    std::vector<Eigen::VectorXcd> out;
    out.reserve(aods_rad.size());
    for (double aod : aods_rad)
        out.push_back(simulate_subframe(h, steer_tx(aod, g), w, sigma2, rng));
    return out;
}

} // namespace tlgamp

#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "tlgamp/gamp.hpp"
#include "tlgamp/pilot.hpp"

namespace tlgamp {

enum class BaselineKind { ls, oracle_vr, oracle_aod, oracle_both, frozen_phi };

inline const char* baseline_name(BaselineKind k) {
    switch (k) {
    case BaselineKind::ls: return "ls";
    case BaselineKind::oracle_vr: return "oracle_vr";
    case BaselineKind::oracle_aod: return "oracle_aod";
    case BaselineKind::oracle_both: return "oracle_both";
    case BaselineKind::frozen_phi: return "frozen_phi";
    }
    return "?";
}

struct LsResult {
    Eigen::VectorXcd h_hat;
    bool regularized = false; // Gram matrix was numerically singular
};

/// Least-squares subchannel estimate from y = W^H h + n.
///
/// For M >= n_rx this is the normal-equation solution; for M < n_rx the
/// system is underdetermined and the minimum-norm solution through the
/// pseudo-inverse is returned. A numerically singular Gram matrix is
/// ridge-regularized and flagged.
inline LsResult ls_estimate(const Eigen::VectorXcd& y, const CombinerSet& w) {
    const Eigen::Index m = w.stacked.cols();
    const Eigen::Index n = w.stacked.rows();
    if (y.size() != m)
        throw std::invalid_argument("ls_estimate: length mismatch");
    LsResult res;
    if (m >= n) {
        Eigen::MatrixXcd gram = w.stacked * w.stacked.adjoint(); // n x n
        Eigen::LDLT<Eigen::MatrixXcd> ldlt(gram);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            gram.diagonal().array() += 1e-10;
            ldlt.compute(gram);
            res.regularized = true;
        }
        res.h_hat = ldlt.solve(w.stacked * y);
    } else {
        Eigen::MatrixXcd gram = w.stacked.adjoint() * w.stacked; // m x m
        Eigen::LDLT<Eigen::MatrixXcd> ldlt(gram);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            gram.diagonal().array() += 1e-10;
            ldlt.compute(gram);
            res.regularized = true;
        }
        res.h_hat = w.stacked * ldlt.solve(y);
    }
    return res;
}

/// Estimation with the visibility layer pinned to the true mask
/// (performance lower bound).
inline SubchannelEstimate oracle_vr_run(const WhitenedObservation& obs, const GampConfig& cfg,
                                        const Eigen::ArrayXd& true_mask,
                                        const Eigen::VectorXcd* truth = nullptr) {
    SupportOverride ov;
    ov.kind = SupportOverride::Kind::mask;
    ov.mask = true_mask;
    return run_subchannel_estimation(obs, cfg, truth, &ov);
}

/// Ablation: visibility layer disabled, flat support probability.
inline SubchannelEstimate frozen_phi_run(const WhitenedObservation& obs, const GampConfig& cfg,
                                         double phi, const Eigen::VectorXcd* truth = nullptr) {
    SupportOverride ov;
    ov.kind = SupportOverride::Kind::fraction;
    ov.fraction = phi;
    return run_subchannel_estimation(obs, cfg, truth, &ov);
}

} // namespace tlgamp

#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "tlgamp/rng.hpp"

namespace tlgamp {

/// Two-state stationary Markov chain prior over a binary visibility mask.
///
/// The chain is fully determined by the stationary ones-fraction `phi` and
/// the 1->0 transition probability `p10`; the remaining transition
/// probabilities follow from stationarity:
///   p01 = phi * p10 / (1 - phi),  p00 = 1 - p01,  p11 = 1 - p10.
struct MarkovPrior {
    double phi = 0.25;
    double p10 = 0.05;
    double p01 = 0.0;
    double p00 = 0.0;
    double p11 = 0.0;

    MarkovPrior() { derive(); }
    MarkovPrior(double phi_, double p10_) : phi(phi_), p10(p10_) { derive(); }

    void derive() {
        if (!(phi > 0.0 && phi < 1.0))
            throw std::invalid_argument("MarkovPrior: phi must lie in (0,1)");
        if (!(p10 > 0.0 && p10 < 1.0))
            throw std::invalid_argument("MarkovPrior: p10 must lie in (0,1)");
        p01 = phi * p10 / (1.0 - phi);
        if (p01 >= 1.0)
            throw std::invalid_argument("MarkovPrior: implied p01 >= 1, lower p10 or phi");
        p00 = 1.0 - p01;
        p11 = 1.0 - p10;
    }
};

/// Forward/backward support messages along the visibility chain.
///
/// `pi_out` carries the per-antenna likelihood ratio messages; `psi_f0` seeds
/// the forward pass (acts as P(s_0 = 1) of a pseudo-node with uninformative
/// observation) and the backward pass starts uninformative at the last
/// antenna. Both outputs hold P(s_n = 1)-normalized messages.
struct ChainMessages {
    Eigen::ArrayXd psi_f;
    Eigen::ArrayXd psi_b;
};

inline ChainMessages markov_forward_backward(const Eigen::ArrayXd& pi_out,
                                             const MarkovPrior& prior, double psi_f0) {
    const Eigen::Index n = pi_out.size();
    ChainMessages msg;
    msg.psi_f.resize(n);
    msg.psi_b.resize(n);

    const double p01 = prior.p01, p10 = prior.p10, p00 = prior.p00, p11 = prior.p11;
    const double p0 = p10 + p00, p1 = p11 + p01;

    msg.psi_f[0] = p01 * (1.0 - psi_f0) + p11 * psi_f0;
    for (Eigen::Index i = 1; i < n; ++i) {
        const double f = msg.psi_f[i - 1], po = pi_out[i - 1];
        const double num = p01 * (1.0 - f) * (1.0 - po) + p11 * f * po;
        const double den = (1.0 - f) * (1.0 - po) + f * po;
        msg.psi_f[i] = num / den;
    }

    msg.psi_b[n - 1] = 0.5;
    for (Eigen::Index i = n - 2; i >= 0; --i) {
        const double b = msg.psi_b[i + 1], po = pi_out[i + 1];
        const double num = p10 * (1.0 - b) * (1.0 - po) + p11 * b * po;
        const double den = p0 * (1.0 - b) * (1.0 - po) + p1 * b * po;
        msg.psi_b[i] = num / den;
    }
    return msg;
}

/// Extrinsic support probability: chain evidence excluding the local observation.
inline Eigen::ArrayXd markov_pi_in(const ChainMessages& msg) {
    const Eigen::ArrayXd num = msg.psi_f * msg.psi_b;
    const Eigen::ArrayXd den = num + (1.0 - msg.psi_f) * (1.0 - msg.psi_b);
    return num / den;
}

/// Posterior support belief combining chain messages with the local observation.
inline Eigen::ArrayXd visibility_belief(const ChainMessages& msg, const Eigen::ArrayXd& pi_out) {
    const Eigen::ArrayXd num = msg.psi_f * msg.psi_b * pi_out;
    const Eigen::ArrayXd den =
        num + (1.0 - msg.psi_f) * (1.0 - msg.psi_b) * (1.0 - pi_out);
    return num / den;
}

/// One stationary draw of the chain (no conditioning).
inline Eigen::ArrayXi markov_sample(const MarkovPrior& prior, int n, Rng& rng) {
    Eigen::ArrayXi s(n);
    s[0] = rng.uniform() < prior.phi ? 1 : 0;
    for (int i = 1; i < n; ++i) {
        const double p_one = s[i - 1] ? prior.p11 : prior.p01;
        s[i] = rng.uniform() < p_one ? 1 : 0;
    }
    return s;
}

} // namespace tlgamp

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tlgamp/channel.hpp"
#include "tlgamp/markov.hpp"
#include "tlgamp/pilot.hpp"

namespace tlgamp {

enum class GampMode { vectorized_approx, edge_exact };

struct GampConfig {
    double xi = 1e-3;         // Gamma hyperprior shape (near-Jeffreys)
    double eta = 1e-6;        // Gamma hyperprior rate (near-noninformative)
    double p10 = 0.05;        // visibility chain 1->0 transition probability
    double phi_init = 0.5;    // initial sparsity level / forward-chain seed
    int max_iter = 20;
    double tol = 1e-5;        // relative change of t_hat
    double prob_clamp = 1e-12;
    double var_floor = 1e-14;
    double var_max = 1e12;
    GampMode mode = GampMode::vectorized_approx;
    double damping = 0.7;     // on extrinsic means and variances
    bool onsager = true;      // memory term in the z/x output updates

    void validate() const {
        if (!(damping > 0.0 && damping <= 1.0))
            throw std::invalid_argument("GampConfig: damping outside (0,1]");
        if (!(p10 > 0.0 && p10 < 1.0))
            throw std::invalid_argument("GampConfig: p10 outside (0,1)");
        if (!(prob_clamp > 0.0 && var_floor > 0.0))
            throw std::invalid_argument("GampConfig: clamps must be positive");
        if (max_iter < 1) throw std::invalid_argument("GampConfig: max_iter < 1");
    }
};

/// Replaces the adaptive visibility layer: either the true mask (oracle runs)
/// or a flat support probability (layer-2-disabled ablation).
struct SupportOverride {
    enum class Kind { mask, fraction };
    Kind kind = Kind::fraction;
    Eigen::ArrayXd mask;
    double fraction = 1.0;
};

// ---------------------------------------------------------------------------
// Scalar/vector moment kernels. All densities are circularly symmetric
// complex Gaussians CN(x; m, v) = exp(-|x-m|^2/v) / (pi*v); ratios are formed
// in the log domain.
// ---------------------------------------------------------------------------

inline double log_cn(std::complex<double> x, std::complex<double> m, double v) {
    return -std::norm(x - m) / v - std::log(kPi * v);
}

/// Posterior mean of the per-coefficient precision under the Gamma belief
/// Ga(xi + 1, eta + |c|^2 + var).
inline double gamma_posterior(std::complex<double> c_hat, double c_var, double xi, double eta,
                              double var_floor = 1e-14) {
    double den = eta + std::norm(c_hat) + c_var;
    if (den < var_floor) den = var_floor;
    return (xi + 1.0) / den;
}

/// Support likelihood message: probability that the local observation pair
/// (t message, x message) is explained by s = 1 rather than s = 0.
inline Eigen::ArrayXd pi_out_compute(const Eigen::ArrayXcd& t_ext_mean,
                                     const Eigen::ArrayXd& t_ext_var,
                                     const Eigen::ArrayXcd& x_out_mean,
                                     const Eigen::ArrayXd& x_out_var, double prob_clamp) {
    const Eigen::Index n = t_ext_mean.size();
    Eigen::ArrayXd pi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double l0 = log_cn(0.0, t_ext_mean[i], t_ext_var[i]);
        const double l1 = log_cn(t_ext_mean[i], x_out_mean[i], t_ext_var[i] + x_out_var[i]);
        const double p = 1.0 / (1.0 + std::exp(l0 - l1));
        pi[i] = std::clamp(p, prob_clamp, 1.0 - prob_clamp);
    }
    return pi;
}

struct SpikeSlabMoments {
    std::complex<double> t_hat;
    double t_var;
    double omega;
};

/// Moments of (1-pi)*delta(t) + pi*CN(t; x, xv) multiplied by CN(t; m, mv).
inline SpikeSlabMoments spike_slab_posterior(double pi_in, std::complex<double> x_mean,
                                             double x_var, std::complex<double> t_mean,
                                             double t_var, double prob_clamp = 1e-12,
                                             double var_floor = 1e-14) {
    pi_in = std::clamp(pi_in, prob_clamp, 1.0 - prob_clamp);
    const double nu_tmp = t_var * x_var / (t_var + x_var);
    const std::complex<double> t_tmp = nu_tmp * (t_mean / t_var + x_mean / x_var);
    const double log_slab = std::log(pi_in) + log_cn(t_mean, x_mean, t_var + x_var);
    const double log_spike = std::log(1.0 - pi_in) + log_cn(0.0, t_mean, t_var);
    const double omega = 1.0 / (1.0 + std::exp(log_spike - log_slab));
    SpikeSlabMoments m;
    m.omega = omega;
    m.t_hat = omega * t_tmp;
    m.t_var = std::max(omega * ((1.0 - omega) * std::norm(t_tmp) + nu_tmp), var_floor);
    return m;
}

// ---------------------------------------------------------------------------
// Per-layer state
// ---------------------------------------------------------------------------

struct Layer1State {
    Eigen::ArrayXcd c_hat;      // posterior mean of angular coefficients
    Eigen::ArrayXd c_var;
    Eigen::ArrayXd gamma_hat;   // precision posterior means
    Eigen::ArrayXcd c_ext_mean; // combined message from the mixing nodes
    Eigen::ArrayXd c_ext_var;
    Eigen::ArrayXcd x_out_mean; // output message towards the visibility layer
    Eigen::ArrayXd x_out_var;
    Eigen::ArrayXcd resid;      // cached scaled residual for the memory term
};

struct Layer2State {
    Eigen::ArrayXd pi_out;
    Eigen::ArrayXd pi_in;
    Eigen::ArrayXd psi_f;
    Eigen::ArrayXd psi_b;
    Eigen::ArrayXd s_belief;
    Eigen::ArrayXcd x_in_mean; // message handed down to the first layer
    Eigen::ArrayXd x_in_var;
    double psi_f0 = 0.5;
};

struct Layer3State {
    Eigen::ArrayXcd t_hat;
    Eigen::ArrayXd t_var;
    Eigen::ArrayXcd t_ext_mean;
    Eigen::ArrayXd t_ext_var;
    Eigen::ArrayXcd z_ext_mean;
    Eigen::ArrayXd z_ext_var;
    Eigen::ArrayXcd z_hat;
    Eigen::ArrayXd z_var;
    Eigen::ArrayXd omega;
    Eigen::ArrayXcd resid;
    double beta_hat = 1.0;
};

struct TraceRow {
    int iteration;
    double nmse_db;     // NaN when no truth was supplied
    double beta_hat;
    double mean_belief;
};

struct SubchannelEstimate {
    Eigen::VectorXcd t_hat;
    Eigen::ArrayXd s_belief;
    Eigen::VectorXcd c_hat;
    std::vector<TraceRow> trace;
    int iters_run = 0;
    bool converged = false;
    bool diverged = false;
};

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

class GampWorker {
public:
    GampWorker(const WhitenedObservation& obs, const GampConfig& cfg,
               const SupportOverride* support = nullptr)
        : a_(obs.a_matrix), d_(obs.dictionary), r_(obs.r), cfg_(cfg), support_(support),
          prior_(cfg.phi_init, cfg.p10) {
        cfg_.validate();
        if (a_.cols() != d_.rows() || a_.rows() != r_.size())
            throw std::invalid_argument("GampWorker: inconsistent observation dimensions");
        m_ = static_cast<int>(a_.rows());
        n_ = static_cast<int>(a_.cols());
        q_ = static_cast<int>(d_.cols());
        a_abs2_ = a_.cwiseAbs2();
        d_abs2_ = d_.cwiseAbs2();
        init_state();
    }

    const Layer1State& layer1() const { return l1_; }
    const Layer2State& layer2() const { return l2_; }
    const Layer3State& layer3() const { return l3_; }

    /// Angular layer: precision posteriors, coefficient posteriors, and the
    /// two outgoing message sets of the mixing nodes.
    void layer1_update() {
        for (int qi = 0; qi < q_; ++qi)
            l1_.gamma_hat[qi] =
                gamma_posterior(l1_.c_hat[qi], l1_.c_var[qi], cfg_.xi, cfg_.eta, cfg_.var_floor);

        l1_.c_var = (l1_.c_ext_var / (1.0 + l1_.c_ext_var * l1_.gamma_hat)).max(cfg_.var_floor);
        l1_.c_hat = l1_.c_ext_mean / (1.0 + l1_.gamma_hat * l1_.c_ext_var);

        if (cfg_.mode == GampMode::vectorized_approx)
            layer1_output_vectorized();
        else
            layer1_output_edges();
        check_finite(l1_.c_hat.matrix().norm() + l1_.x_out_mean.matrix().norm() +
                     l1_.c_ext_var.sum());
    }

    /// Visibility layer: chain messages, beliefs, and the messages handed to
    /// the neighbouring layers.
    void layer2_update() {
        l2_.pi_out = pi_out_compute(l3_.t_ext_mean, l3_.t_ext_var, l1_.x_out_mean, l1_.x_out_var,
                                    cfg_.prob_clamp);
        if (support_ == nullptr) {
            const ChainMessages msg = markov_forward_backward(l2_.pi_out, prior_, l2_.psi_f0);
            l2_.psi_f = msg.psi_f;
            l2_.psi_b = msg.psi_b;
            l2_.pi_in = markov_pi_in(msg).min(1.0 - cfg_.prob_clamp).max(cfg_.prob_clamp);
            l2_.s_belief = visibility_belief(msg, l2_.pi_out);
            l2_.psi_f0 = l2_.s_belief.mean();
        } else if (support_->kind == SupportOverride::Kind::mask) {
            l2_.pi_in = support_->mask.min(1.0 - cfg_.prob_clamp).max(cfg_.prob_clamp);
            l2_.s_belief = l2_.pi_in;
        } else {
            const double f =
                std::clamp(support_->fraction, cfg_.prob_clamp, 1.0 - cfg_.prob_clamp);
            l2_.pi_in.setConstant(n_, f);
            const Eigen::ArrayXd num = f * l2_.pi_out;
            l2_.s_belief = num / (num + (1.0 - f) * (1.0 - l2_.pi_out));
        }
    }

    /// Mixing layer: noise-precision posterior, transform-domain posteriors,
    /// the extrinsic towards t, and the spike-and-slab posterior of t.
    void layer3_update() {
        if (cfg_.mode == GampMode::vectorized_approx)
            layer3_input_vectorized();
        else
            layer3_input_edges();

        for (int i = 0; i < n_; ++i) {
            const SpikeSlabMoments mo = spike_slab_posterior(
                l2_.pi_in[i], l1_.x_out_mean[i], l1_.x_out_var[i], l3_.t_ext_mean[i],
                l3_.t_ext_var[i], cfg_.prob_clamp, cfg_.var_floor);
            l3_.t_hat[i] = mo.t_hat;
            l3_.t_var[i] = mo.t_var;
            l3_.omega[i] = mo.omega;
        }
        check_finite(l3_.t_hat.matrix().norm() + l3_.t_var.sum() + l3_.beta_hat);
    }

    SubchannelEstimate run(const Eigen::VectorXcd* truth = nullptr) {
        SubchannelEstimate est;
        Eigen::ArrayXcd t_prev = l3_.t_hat;
        double best_metric = std::numeric_limits<double>::infinity();
        double init_metric = std::numeric_limits<double>::quiet_NaN();
        Eigen::VectorXcd best_t = l3_.t_hat.matrix();
        Eigen::ArrayXd best_belief = Eigen::ArrayXd::Constant(n_, cfg_.phi_init);
        Eigen::VectorXcd best_c = l1_.c_hat.matrix();

        for (int it = 1; it <= cfg_.max_iter; ++it) {
            bool ok = true;
            try {
                layer1_update();
                layer2_update();
                layer3_update();
            } catch (const std::runtime_error&) {
                ok = false;
            }
            if (!ok) {
                est.diverged = true;
                est.iters_run = it;
                break;
            }

            const double metric = truth ? nmse_linear(l3_.t_hat.matrix(), *truth)
                                        : residual_ratio();
            if (std::isnan(init_metric)) init_metric = metric;
            if (metric <= best_metric) {
                best_metric = metric;
                best_t = l3_.t_hat.matrix();
                best_belief = l2_.s_belief;
                best_c = l1_.c_hat.matrix();
            }

            TraceRow row;
            row.iteration = it;
            row.nmse_db = truth ? to_db(nmse_linear(l3_.t_hat.matrix(), *truth))
                                : std::numeric_limits<double>::quiet_NaN();
            row.beta_hat = l3_.beta_hat;
            row.mean_belief = l2_.s_belief.mean();
            est.trace.push_back(row);
            est.iters_run = it;

            if (metric > 10.0 * init_metric && it > 1) {
                est.diverged = true;
                break;
            }
            const double denom = std::max(t_prev.matrix().norm(), 1e-300);
            const double rel = (l3_.t_hat - t_prev).matrix().norm() / denom;
            t_prev = l3_.t_hat;
            if (rel < cfg_.tol) {
                est.converged = true;
                break;
            }
        }

        if (est.diverged) {
            est.t_hat = best_t;
            est.s_belief = best_belief;
            est.c_hat = best_c;
        } else {
            est.t_hat = l3_.t_hat.matrix();
            est.s_belief = l2_.s_belief;
            est.c_hat = l1_.c_hat.matrix();
        }
        return est;
    }

    static double nmse_linear(const Eigen::VectorXcd& est, const Eigen::VectorXcd& truth) {
        return (est - truth).squaredNorm() / truth.squaredNorm();
    }

    static double to_db(double x) { return 10.0 * std::log10(std::max(x, 1e-30)); }

private:
    void init_state() {
        l1_.c_hat = Eigen::ArrayXcd::Zero(q_);
        l1_.c_var = Eigen::ArrayXd::Ones(q_);
        l1_.gamma_hat = Eigen::ArrayXd::Ones(q_);
        l1_.c_ext_mean = Eigen::ArrayXcd::Zero(q_);
        l1_.c_ext_var = Eigen::ArrayXd::Ones(q_);
        l1_.x_out_mean = Eigen::ArrayXcd::Zero(n_);
        l1_.x_out_var = Eigen::ArrayXd::Ones(n_);
        l1_.resid = Eigen::ArrayXcd::Zero(n_);

        l2_.pi_out = Eigen::ArrayXd::Constant(n_, 0.5);
        l2_.pi_in = Eigen::ArrayXd::Constant(n_, cfg_.phi_init);
        l2_.psi_f = Eigen::ArrayXd::Constant(n_, cfg_.phi_init);
        l2_.psi_b = Eigen::ArrayXd::Constant(n_, 0.5);
        l2_.s_belief = Eigen::ArrayXd::Constant(n_, cfg_.phi_init);
        l2_.x_in_mean = Eigen::ArrayXcd::Zero(n_);
        l2_.x_in_var = Eigen::ArrayXd::Ones(n_);
        l2_.psi_f0 = cfg_.phi_init;

        l3_.t_hat = Eigen::ArrayXcd::Zero(n_);
        l3_.t_var = Eigen::ArrayXd::Ones(n_);
        l3_.t_ext_mean = Eigen::ArrayXcd::Zero(n_);
        l3_.t_ext_var = Eigen::ArrayXd::Ones(n_);
        l3_.z_ext_mean = r_.array();
        l3_.z_ext_var = Eigen::ArrayXd::Ones(m_);
        l3_.z_hat = Eigen::ArrayXcd::Zero(m_);
        l3_.z_var = Eigen::ArrayXd::Zero(m_);
        l3_.omega = Eigen::ArrayXd::Constant(n_, cfg_.phi_init);
        l3_.resid = Eigen::ArrayXcd::Zero(m_);
        l3_.beta_hat = static_cast<double>(m_) / std::max(r_.squaredNorm(), 1e-300);

        if (cfg_.mode == GampMode::edge_exact) {
            edge_c_mean_ = Eigen::MatrixXcd::Zero(n_, q_);
            edge_c_var_ = Eigen::MatrixXd::Constant(n_, q_, cfg_.var_max);
            edge_t_mean_ = Eigen::MatrixXcd::Zero(m_, n_);
            edge_t_var_ = Eigen::MatrixXd::Constant(m_, n_, cfg_.var_max);
            edge_ext_c_mean_ = Eigen::MatrixXcd::Zero(n_, q_);
            edge_ext_c_var_ = Eigen::MatrixXd::Constant(n_, q_, cfg_.var_max);
            edge_ext_t_mean_ = Eigen::MatrixXcd::Zero(m_, n_);
            edge_ext_t_var_ = Eigen::MatrixXd::Constant(m_, n_, cfg_.var_max);
        }
    }

    void damp(Eigen::ArrayXcd& mean, Eigen::ArrayXd& var, const Eigen::ArrayXcd& mean_new,
              const Eigen::ArrayXd& var_new) const {
        const double rho = cfg_.damping;
        mean = rho * mean_new + (1.0 - rho) * mean;
        var = rho * var_new + (1.0 - rho) * var;
    }

    void layer1_output_vectorized() {
        // The second layer forwards the third-layer extrinsic unchanged
        // (x_in = t_ext), so the freshest copy is read here directly.
        l2_.x_in_mean = l3_.t_ext_mean;
        l2_.x_in_var = l3_.t_ext_var;

        Eigen::ArrayXd xv_new = (d_abs2_ * l1_.c_var.matrix()).array().max(cfg_.var_floor);
        Eigen::ArrayXcd xm_new = (d_ * l1_.c_hat.matrix()).array();
        if (cfg_.onsager) xm_new -= xv_new * l1_.resid;
        damp(l1_.x_out_mean, l1_.x_out_var, xm_new, xv_new);

        const Eigen::ArrayXd gden = l2_.x_in_var + l1_.x_out_var;
        l1_.resid = (l2_.x_in_mean - l1_.x_out_mean) / gden;

        Eigen::ArrayXd cv_new =
            (d_abs2_.transpose() * gden.inverse().matrix()).array().inverse().min(cfg_.var_max);
        Eigen::ArrayXcd cm_new =
            l1_.c_hat + cv_new * (d_.adjoint() * l1_.resid.matrix()).array();
        damp(l1_.c_ext_mean, l1_.c_ext_var, cm_new, cv_new);
    }

    void layer1_output_edges() {
        l2_.x_in_mean = l3_.t_ext_mean;
        l2_.x_in_var = l3_.t_ext_var;

        Eigen::ArrayXcd xm_new = Eigen::ArrayXcd::Zero(n_);
        Eigen::ArrayXd xv_new = Eigen::ArrayXd::Zero(n_);
        // extrinsic of each coefficient towards each mixing node
        for (int qi = 0; qi < q_; ++qi) {
            for (int ni = 0; ni < n_; ++ni) {
                const double inv_v = 1.0 / l1_.c_var[qi] - 1.0 / edge_c_var_(ni, qi);
                double v;
                std::complex<double> mu;
                if (inv_v > 1.0 / cfg_.var_max) {
                    v = 1.0 / inv_v;
                    mu = v * (l1_.c_hat[qi] / l1_.c_var[qi] -
                              edge_c_mean_(ni, qi) / edge_c_var_(ni, qi));
                } else {
                    v = cfg_.var_max;
                    mu = l1_.c_hat[qi];
                }
                const std::complex<double> dq = d_(ni, qi);
                xm_new[ni] += dq * mu;
                xv_new[ni] += std::norm(dq) * v;
                edge_ext_c_mean_(ni, qi) = mu;
                edge_ext_c_var_(ni, qi) = v;
            }
        }
        damp(l1_.x_out_mean, l1_.x_out_var, xm_new, xv_new.max(cfg_.var_floor));

        Eigen::ArrayXd prec_sum = Eigen::ArrayXd::Zero(q_);
        Eigen::ArrayXcd pm_sum = Eigen::ArrayXcd::Zero(q_);
        for (int ni = 0; ni < n_; ++ni) {
            const double base = l2_.x_in_var[ni] + l1_.x_out_var[ni];
            for (int qi = 0; qi < q_; ++qi) {
                const std::complex<double> dq = d_(ni, qi);
                const double a2 = std::norm(dq);
                double den = base - a2 * edge_ext_c_var_(ni, qi);
                if (den < cfg_.var_floor) den = cfg_.var_floor;
                const std::complex<double> num = l2_.x_in_mean[ni] - l1_.x_out_mean[ni] +
                                                 dq * edge_ext_c_mean_(ni, qi);
                prec_sum[qi] += a2 / den;
                pm_sum[qi] += std::conj(dq) * num / den;
                if (a2 > 0.0) {
                    edge_c_var_(ni, qi) = std::min(den / a2, cfg_.var_max);
                    edge_c_mean_(ni, qi) = num / dq;
                } else {
                    edge_c_var_(ni, qi) = cfg_.var_max;
                    edge_c_mean_(ni, qi) = 0.0;
                }
            }
        }
        Eigen::ArrayXd cv_new = prec_sum.inverse().min(cfg_.var_max);
        Eigen::ArrayXcd cm_new = cv_new * pm_sum;
        damp(l1_.c_ext_mean, l1_.c_ext_var, cm_new, cv_new);
    }

    void layer3_input_vectorized() {
        Eigen::ArrayXd zv_new = (a_abs2_ * l3_.t_var.matrix()).array().max(cfg_.var_floor);
        Eigen::ArrayXcd zm_new = (a_ * l3_.t_hat.matrix()).array();
        if (cfg_.onsager) zm_new -= zv_new * l3_.resid;
        damp(l3_.z_ext_mean, l3_.z_ext_var, zm_new, zv_new);

        update_beta_and_z_posterior();

        const Eigen::ArrayXd zden = 1.0 / l3_.beta_hat + l3_.z_ext_var;
        l3_.resid = (r_.array() - l3_.z_ext_mean) / zden;

        Eigen::ArrayXd tv_new =
            (a_abs2_.transpose() * zden.inverse().matrix()).array().inverse().min(cfg_.var_max);
        Eigen::ArrayXcd tm_new =
            l3_.t_hat + tv_new * (a_.adjoint() * l3_.resid.matrix()).array();
        damp(l3_.t_ext_mean, l3_.t_ext_var, tm_new, tv_new);
    }

    void layer3_input_edges() {
        Eigen::ArrayXcd zm_new = Eigen::ArrayXcd::Zero(m_);
        Eigen::ArrayXd zv_new = Eigen::ArrayXd::Zero(m_);
        for (int ni = 0; ni < n_; ++ni) {
            for (int mi = 0; mi < m_; ++mi) {
                const double inv_v = 1.0 / l3_.t_var[ni] - 1.0 / edge_t_var_(mi, ni);
                double v;
                std::complex<double> mu;
                if (inv_v > 1.0 / cfg_.var_max) {
                    v = 1.0 / inv_v;
                    mu = v * (l3_.t_hat[ni] / l3_.t_var[ni] -
                              edge_t_mean_(mi, ni) / edge_t_var_(mi, ni));
                } else {
                    v = cfg_.var_max;
                    mu = l3_.t_hat[ni];
                }
                const std::complex<double> am = a_(mi, ni);
                zm_new[mi] += am * mu;
                zv_new[mi] += std::norm(am) * v;
                edge_ext_t_mean_(mi, ni) = mu;
                edge_ext_t_var_(mi, ni) = v;
            }
        }
        damp(l3_.z_ext_mean, l3_.z_ext_var, zm_new, zv_new.max(cfg_.var_floor));

        update_beta_and_z_posterior();

        Eigen::ArrayXd prec_sum = Eigen::ArrayXd::Zero(n_);
        Eigen::ArrayXcd pm_sum = Eigen::ArrayXcd::Zero(n_);
        const double binv = 1.0 / l3_.beta_hat;
        for (int mi = 0; mi < m_; ++mi) {
            const double base = binv + l3_.z_ext_var[mi];
            for (int ni = 0; ni < n_; ++ni) {
                const std::complex<double> am = a_(mi, ni);
                const double a2 = std::norm(am);
                double den = base - a2 * edge_ext_t_var_(mi, ni);
                if (den < cfg_.var_floor) den = cfg_.var_floor;
                const std::complex<double> num =
                    r_[mi] - l3_.z_ext_mean[mi] + am * edge_ext_t_mean_(mi, ni);
                prec_sum[ni] += a2 / den;
                pm_sum[ni] += std::conj(am) * num / den;
                if (a2 > 0.0) {
                    edge_t_var_(mi, ni) = std::min(den / a2, cfg_.var_max);
                    edge_t_mean_(mi, ni) = num / am;
                } else {
                    edge_t_var_(mi, ni) = cfg_.var_max;
                    edge_t_mean_(mi, ni) = 0.0;
                }
            }
        }
        Eigen::ArrayXd tv_new = prec_sum.inverse().min(cfg_.var_max);
        Eigen::ArrayXcd tm_new = tv_new * pm_sum;
        damp(l3_.t_ext_mean, l3_.t_ext_var, tm_new, tv_new);
    }

    void update_beta_and_z_posterior() {
        const double res = (r_.array() - l3_.z_hat).matrix().squaredNorm() + l3_.z_var.sum();
        l3_.beta_hat = static_cast<double>(m_) / std::max(res, 1e-300);
        l3_.z_var = l3_.z_ext_var / (1.0 + l3_.beta_hat * l3_.z_ext_var);
        l3_.z_hat = l3_.z_var * (r_.array() * l3_.beta_hat + l3_.z_ext_mean / l3_.z_ext_var);
    }

    double residual_ratio() const {
        const double rn = std::max(r_.squaredNorm(), 1e-300);
        return (r_ - a_ * l3_.t_hat.matrix()).squaredNorm() / rn;
    }

    void check_finite(double probe) const {
        if (!std::isfinite(probe))
            throw std::runtime_error("tl-gamp: non-finite message");
    }

    Eigen::MatrixXcd a_;
    Eigen::MatrixXcd d_;
    Eigen::VectorXcd r_;
    Eigen::MatrixXd a_abs2_;
    Eigen::MatrixXd d_abs2_;
    GampConfig cfg_;
    const SupportOverride* support_;
    MarkovPrior prior_;
    int m_ = 0, n_ = 0, q_ = 0;

    Layer1State l1_;
    Layer2State l2_;
    Layer3State l3_;

    // edge-exact workspaces (allocated only in that mode)
    Eigen::MatrixXcd edge_c_mean_, edge_t_mean_;    // incoming per-edge means
    Eigen::MatrixXd edge_c_var_, edge_t_var_;
    Eigen::MatrixXcd edge_ext_c_mean_, edge_ext_t_mean_; // outgoing per-edge extrinsics
    Eigen::MatrixXd edge_ext_c_var_, edge_ext_t_var_;
};

inline SubchannelEstimate run_subchannel_estimation(const WhitenedObservation& obs,
                                                    const GampConfig& cfg,
                                                    const Eigen::VectorXcd* truth = nullptr,
                                                    const SupportOverride* support = nullptr) {
    GampWorker w(obs, cfg, support);
    return w.run(truth);
}

/// Final channel: sum of per-path outer products with the transmit steering
/// vectors of the (estimated) departure angles.
inline Eigen::MatrixXcd assemble_full_channel(const std::vector<SubchannelEstimate>& estimates,
                                              const std::vector<double>& aods_rad,
                                              const ArrayGeometry& g) {
    if (estimates.size() != aods_rad.size())
        throw std::invalid_argument("assemble_full_channel: list length mismatch");
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(g.n_rx, g.n_tx);
    for (std::size_t l = 0; l < estimates.size(); ++l)
        h.noalias() += estimates[l].t_hat * steer_tx(aods_rad[l], g).adjoint();
    return h;
}

} // namespace tlgamp

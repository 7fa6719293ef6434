#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "emix/design.hpp"
#include "emix/mcmc.hpp"
#include "emix/models.hpp"

namespace emix {

// Design matrices flattened into contiguous row arrays, complete rows
// (normal likelihood part) and all rows (Bernoulli part) grouped by subject.
struct FlatPanel {
    int n_subjects = 0, p = 0, pv = 0, q = 0;
    int n_complete = 0, n_all = 0;

    Eigen::MatrixXd X, W; // complete rows only
    Eigen::VectorXd y;
    std::vector<int> subj_of;
    std::vector<std::pair<int, int>> rows_of; // per subject [begin,end) into complete arrays

    Eigen::MatrixXd T; // all rows
    std::vector<std::uint8_t> miss;
    std::vector<int> subj_of_all;
    std::vector<std::pair<int, int>> rows_all_of;

    std::vector<std::string> x_names, w_names, t_names, subject_ids;
};

inline FlatPanel flatten(const DesignMatrices& d) {
    FlatPanel f;
    f.n_subjects = static_cast<int>(d.subjects.size());
    f.p = d.p_mean();
    f.pv = d.p_var();
    f.q = d.p_miss();
    f.x_names = d.x_names;
    f.w_names = d.w_names;
    f.t_names = d.t_names;
    f.n_complete = static_cast<int>(d.n_complete);
    f.n_all = static_cast<int>(d.total_rows);

    f.X.resize(f.n_complete, f.p);
    f.W.resize(f.n_complete, f.pv);
    f.y.resize(f.n_complete);
    f.subj_of.resize(f.n_complete);
    f.T.resize(f.n_all, f.q);
    f.miss.resize(f.n_all);
    f.subj_of_all.resize(f.n_all);

    int rc = 0, ra = 0;
    for (int i = 0; i < f.n_subjects; ++i) {
        const auto& sd = d.subjects[i];
        f.subject_ids.push_back(sd.subject_id);
        const int c0 = rc, a0 = ra;
        for (int r = 0; r < sd.y.size(); ++r) {
            if (sd.complete[r]) {
                f.X.row(rc) = sd.X.row(r);
                f.W.row(rc) = sd.W.row(r);
                f.y(rc) = sd.y(r);
                f.subj_of[rc] = i;
                ++rc;
            }
            f.T.row(ra) = sd.T.row(r);
            f.miss[ra] = sd.y_missing[r];
            f.subj_of_all[ra] = i;
            ++ra;
        }
        f.rows_of.emplace_back(c0, rc);
        f.rows_all_of.emplace_back(a0, ra);
    }
    return f;
}

namespace detail {

// OLS of y on [1 X] over complete rows; also returns log residual variance
inline void ols_init(const FlatPanel& f, Eigen::VectorXd& beta_full, double& log_res_var) {
    const int p = f.p;
    Eigen::MatrixXd A(f.n_complete, p + 1);
    A.col(0).setOnes();
    if (p > 0) A.rightCols(p) = f.X;
    beta_full = (A.transpose() * A).ldlt().solve(A.transpose() * f.y);
    const Eigen::VectorXd res = f.y - A * beta_full;
    const double rv = std::max(res.squaredNorm() / std::max(1, f.n_complete - p - 1), 1e-6);
    log_res_var = std::log(rv);
}

inline double normal_prior_lpdf(double x, double sd) {
    return -0.5 * (kLog2Pi + 2.0 * std::log(sd) + x * x / (sd * sd));
}

// half-normal on (0, inf); -inf below 0
inline double halfnormal_prior_lpdf(double x, double sd) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(2.0) + normal_prior_lpdf(x, sd);
}

} // namespace detail

// ---------------------------------------------------------------------------
// MELS posterior target on the Cholesky parameterization
//   state = (beta0, beta, alpha0, alpha, s11, s21, s22, {z1_i, z2_i})
// with v1_i = s11 z1_i, v2_i = s21 z1_i + s22 z2_i and z ~ N(0, I).
//
// Caches per complete row the conditional mean, log-variance and inverse
// variance so that a mean-side proposal needs no exponentials and every
// proposal touches only the rows it affects.
// ---------------------------------------------------------------------------
class MelsTarget {
  public:
    MelsTarget(const FlatPanel* data, PriorSpec priors) : d_(data), pr_(priors) {
        p_ = d_->p;
        pv_ = d_->pv;
        n_ = d_->n_subjects;
        off_alpha_ = 1 + p_;
        off_s_ = off_alpha_ + 1 + pv_;
        off_z_ = off_s_ + 3;
        state_.assign(off_z_ + 2 * n_, 0.0);

        Eigen::VectorXd bf;
        double lrv;
        detail::ols_init(*d_, bf, lrv);
        state_[0] = bf(0);
        for (int j = 0; j < p_; ++j) state_[1 + j] = bf(j + 1);
        state_[off_alpha_] = lrv;
        state_[off_s_ + 0] = 0.5;
        state_[off_s_ + 1] = 0.0;
        state_[off_s_ + 2] = 0.5;

        const int N = d_->n_complete;
        mu_.resize(N);
        lv_.resize(N);
        invv_.resize(N);
        s_mu_.resize(N);
        s_lv_.resize(N);
        s_invv_.resize(N);
        re_mu_.assign(n_, 0.0);
        re_lv_.assign(n_, 0.0);
        s_re_mu_.assign(n_, 0.0);
        s_re_lv_.assign(n_, 0.0);
        recompute_all();
    }

    int block_count() const { return n_globals() + n_; }

    std::pair<int, int> block_range(int b) const {
        if (b < n_globals()) return {b, 1};
        return {off_z_ + 2 * (b - n_globals()), 2};
    }

    std::string block_name(int b) const {
        if (b == 0) return "beta0";
        if (b <= p_) return "beta_" + d_->x_names[b - 1];
        if (b == off_alpha_) return "alpha0";
        if (b < off_s_) return "alpha_" + d_->w_names[b - off_alpha_ - 1];
        if (b == off_s_) return "s11";
        if (b == off_s_ + 1) return "s21";
        if (b == off_s_ + 2) return "s22";
        return "z[" + d_->subject_ids[b - n_globals()] + "]";
    }

    const std::vector<double>& state() const { return state_; }
    double log_target() const { return sum_lv_const_ - 0.5 * sum_quad_ + ll_z_ + lp_prior_; }

    double propose(int b, const double* vals);
    void accept_staged();

    std::vector<std::string> natural_names() const {
        std::vector<std::string> nm;
        nm.push_back("beta0");
        for (const auto& x : d_->x_names) nm.push_back("beta_" + x);
        nm.push_back("alpha0");
        for (const auto& w : d_->w_names) nm.push_back("alpha_" + w);
        nm.push_back("sigma_v1");
        nm.push_back("sigma_v2");
        nm.push_back("rho_v1v2");
        for (const auto& s : d_->subject_ids) nm.push_back("v1[" + s + "]");
        for (const auto& s : d_->subject_ids) nm.push_back("v2[" + s + "]");
        return nm;
    }

    std::vector<double> natural_draw() const {
        std::vector<double> v;
        v.reserve(3 + p_ + pv_ + 2 * n_ + 2);
        for (int j = 0; j <= p_; ++j) v.push_back(state_[j]);
        for (int j = 0; j <= pv_; ++j) v.push_back(state_[off_alpha_ + j]);
        const double s11 = state_[off_s_], s21 = state_[off_s_ + 1], s22 = state_[off_s_ + 2];
        const double sv2 = std::hypot(s21, s22);
        v.push_back(s11);
        v.push_back(sv2);
        v.push_back(sv2 > 0 ? s21 / sv2 : 0.0);
        for (int i = 0; i < n_; ++i) v.push_back(re_mu_[i]);
        for (int i = 0; i < n_; ++i) v.push_back(re_lv_[i]);
        return v;
    }

    void fill_layout(PosteriorDrawSet& set) const {
        set.kind = ModelKind::Mels;
        set.p = p_;
        set.pv = pv_;
        set.q = 0;
        set.n_subjects = n_;
    }

  private:
    int n_globals() const { return off_s_ + 3; }

    double prior_scalar(int idx, double v) const {
        if (idx < off_s_) return detail::normal_prior_lpdf(v, pr_.coefficient_sd);
        if (idx == off_s_ || idx == off_s_ + 2) return detail::halfnormal_prior_lpdf(v, pr_.scale_sd);
        return detail::normal_prior_lpdf(v, pr_.scale_sd); // s21
    }

    void recompute_all() {
        for (int i = 0; i < n_; ++i) {
            const double z1 = state_[off_z_ + 2 * i], z2 = state_[off_z_ + 2 * i + 1];
            re_mu_[i] = state_[off_s_] * z1;
            re_lv_[i] = state_[off_s_ + 1] * z1 + state_[off_s_ + 2] * z2;
        }
        sum_lv_const_ = 0.0;
        sum_quad_ = 0.0;
        for (int r = 0; r < d_->n_complete; ++r) {
            const int i = d_->subj_of[r];
            double m = state_[0] + re_mu_[i];
            for (int j = 0; j < p_; ++j) m += d_->X(r, j) * state_[1 + j];
            double l = state_[off_alpha_] + re_lv_[i];
            for (int j = 0; j < pv_; ++j) l += d_->W(r, j) * state_[off_alpha_ + 1 + j];
            mu_[r] = m;
            lv_[r] = l;
            invv_[r] = std::exp(-l);
            const double res = d_->y(r) - m;
            sum_lv_const_ += -0.5 * (kLog2Pi + l);
            sum_quad_ += res * res * invv_[r];
        }
        ll_z_ = 0.0;
        for (int i = 0; i < 2 * n_; ++i) {
            const double z = state_[off_z_ + i];
            ll_z_ += -0.5 * (kLog2Pi + z * z);
        }
        lp_prior_ = 0.0;
        for (int idx = 0; idx < n_globals(); ++idx) lp_prior_ += prior_scalar(idx, state_[idx]);
    }

    const FlatPanel* d_;
    PriorSpec pr_;
    int p_ = 0, pv_ = 0, n_ = 0;
    int off_alpha_ = 0, off_s_ = 0, off_z_ = 0;
    std::vector<double> state_;

    std::vector<double> mu_, lv_, invv_, re_mu_, re_lv_;
    double sum_lv_const_ = 0.0, sum_quad_ = 0.0, ll_z_ = 0.0, lp_prior_ = 0.0;

    // staged proposal
    std::vector<double> s_mu_, s_lv_, s_invv_, s_re_mu_, s_re_lv_;
    struct Staged {
        int block = -1;
        double sum_lv_const = 0, sum_quad = 0, ll_z = 0, lp_prior = 0;
        int r0 = 0, r1 = 0;
        bool mu_changed = false, lv_changed = false;
        int i0 = 0, i1 = 0;
        bool re_changed = false;
        double v0 = 0, v1v = 0;
    } st_;
};

inline double MelsTarget::propose(int b, const double* vals) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    st_.block = b;
    st_.ll_z = ll_z_;
    st_.lp_prior = lp_prior_;
    st_.mu_changed = st_.lv_changed = st_.re_changed = false;

    if (b < n_globals()) {
        const double nv = vals[0];
        const double old = state_[b];
        const double dlt = nv - old;
        st_.v0 = nv;
        st_.lp_prior = lp_prior_ - prior_scalar(b, old) + prior_scalar(b, nv);
        if (!std::isfinite(st_.lp_prior)) return neg_inf;

        const bool is_mean = b <= p_;
        const bool is_var = b >= off_alpha_ && b < off_s_;

        if (is_mean || b == off_s_) {
            // mean-side shift: through a coefficient column or s11 (via z1)
            st_.r0 = 0;
            st_.r1 = d_->n_complete;
            st_.mu_changed = true;
            double quad = 0.0;
            if (b == off_s_) {
                st_.re_changed = true;
                st_.i0 = 0;
                st_.i1 = n_;
                for (int i = 0; i < n_; ++i)
                    s_re_mu_[i] = re_mu_[i] + dlt * state_[off_z_ + 2 * i];
                for (int r = 0; r < d_->n_complete; ++r) {
                    const double m = mu_[r] + dlt * state_[off_z_ + 2 * d_->subj_of[r]];
                    s_mu_[r] = m;
                    const double res = d_->y(r) - m;
                    quad += res * res * invv_[r];
                }
            } else if (b == 0) {
                for (int r = 0; r < d_->n_complete; ++r) {
                    const double m = mu_[r] + dlt;
                    s_mu_[r] = m;
                    const double res = d_->y(r) - m;
                    quad += res * res * invv_[r];
                }
            } else {
                const int j = b - 1;
                for (int r = 0; r < d_->n_complete; ++r) {
                    const double m = mu_[r] + dlt * d_->X(r, j);
                    s_mu_[r] = m;
                    const double res = d_->y(r) - m;
                    quad += res * res * invv_[r];
                }
            }
            st_.sum_quad = quad;
            st_.sum_lv_const = sum_lv_const_;
        } else if (is_var || b == off_s_ + 1 || b == off_s_ + 2) {
            // log-variance shift: alpha coefficient, s21 (via z1) or s22 (via z2)
            st_.r0 = 0;
            st_.r1 = d_->n_complete;
            st_.lv_changed = true;
            double quad = 0.0, lvconst = 0.0;
            auto shift_of = [&](int r) {
                if (b == off_s_ + 1) return dlt * state_[off_z_ + 2 * d_->subj_of[r]];
                if (b == off_s_ + 2) return dlt * state_[off_z_ + 2 * d_->subj_of[r] + 1];
                if (b == off_alpha_) return dlt;
                return dlt * d_->W(r, b - off_alpha_ - 1);
            };
            if (b >= off_s_ + 1) {
                st_.re_changed = true;
                st_.i0 = 0;
                st_.i1 = n_;
                const int zc = (b == off_s_ + 1) ? 0 : 1;
                for (int i = 0; i < n_; ++i)
                    s_re_lv_[i] = re_lv_[i] + dlt * state_[off_z_ + 2 * i + zc];
            }
            for (int r = 0; r < d_->n_complete; ++r) {
                const double l = lv_[r] + shift_of(r);
                if (std::abs(l) > kMaxLogVariance) return neg_inf;
                s_lv_[r] = l;
                const double iv = std::exp(-l);
                s_invv_[r] = iv;
                const double res = d_->y(r) - mu_[r];
                quad += res * res * iv;
                lvconst += -0.5 * (kLog2Pi + l);
            }
            st_.sum_quad = quad;
            st_.sum_lv_const = lvconst;
        }
        return st_.sum_lv_const - 0.5 * st_.sum_quad + st_.ll_z + st_.lp_prior;
    }

    // per-subject z block
    const int i = b - n_globals();
    const double z1n = vals[0], z2n = vals[1];
    const double z1 = state_[off_z_ + 2 * i], z2 = state_[off_z_ + 2 * i + 1];
    st_.v0 = z1n;
    st_.v1v = z2n;
    st_.i0 = i;
    st_.i1 = i + 1;
    st_.re_changed = true;
    s_re_mu_[i] = state_[off_s_] * z1n;
    s_re_lv_[i] = state_[off_s_ + 1] * z1n + state_[off_s_ + 2] * z2n;
    st_.ll_z = ll_z_ - 0.5 * (z1n * z1n + z2n * z2n - z1 * z1 - z2 * z2);

    const auto [r0, r1] = d_->rows_of[i];
    st_.r0 = r0;
    st_.r1 = r1;
    st_.mu_changed = st_.lv_changed = true;
    const double dmu = s_re_mu_[i] - re_mu_[i];
    const double dlv = s_re_lv_[i] - re_lv_[i];
    double quad_old = 0.0, quad_new = 0.0, lvc_old = 0.0, lvc_new = 0.0;
    for (int r = r0; r < r1; ++r) {
        const double res_old = d_->y(r) - mu_[r];
        quad_old += res_old * res_old * invv_[r];
        lvc_old += -0.5 * (kLog2Pi + lv_[r]);
        const double l = lv_[r] + dlv;
        if (std::abs(l) > kMaxLogVariance) return neg_inf;
        const double m = mu_[r] + dmu;
        s_mu_[r] = m;
        s_lv_[r] = l;
        s_invv_[r] = std::exp(-l);
        const double res = d_->y(r) - m;
        quad_new += res * res * s_invv_[r];
        lvc_new += -0.5 * (kLog2Pi + l);
    }
    st_.sum_quad = sum_quad_ - quad_old + quad_new;
    st_.sum_lv_const = sum_lv_const_ - lvc_old + lvc_new;
    return st_.sum_lv_const - 0.5 * st_.sum_quad + st_.ll_z + st_.lp_prior;
}

inline void MelsTarget::accept_staged() {
    const int b = st_.block;
    if (b < n_globals()) {
        state_[b] = st_.v0;
    } else {
        const int i = b - n_globals();
        state_[off_z_ + 2 * i] = st_.v0;
        state_[off_z_ + 2 * i + 1] = st_.v1v;
    }
    if (st_.mu_changed)
        std::copy(s_mu_.begin() + st_.r0, s_mu_.begin() + st_.r1, mu_.begin() + st_.r0);
    if (st_.lv_changed) {
        std::copy(s_lv_.begin() + st_.r0, s_lv_.begin() + st_.r1, lv_.begin() + st_.r0);
        std::copy(s_invv_.begin() + st_.r0, s_invv_.begin() + st_.r1, invv_.begin() + st_.r0);
    }
    if (st_.re_changed) {
        if (st_.mu_changed)
            std::copy(s_re_mu_.begin() + st_.i0, s_re_mu_.begin() + st_.i1, re_mu_.begin() + st_.i0);
        if (st_.lv_changed)
            std::copy(s_re_lv_.begin() + st_.i0, s_re_lv_.begin() + st_.i1, re_lv_.begin() + st_.i0);
    }
    sum_lv_const_ = st_.sum_lv_const;
    sum_quad_ = st_.sum_quad;
    ll_z_ = st_.ll_z;
    lp_prior_ = st_.lp_prior;
}

// ---------------------------------------------------------------------------
// SPLSME posterior target
//   state = (beta0, beta, alpha0, alpha, tau0, tau, gamma, delta,
//            s11, s21, s22, s33, {z1_i, z2_i, z3_i})
// with eta1 = s11 z1, eta2 = s21 z1 + s22 z2, lambda = s33 z3. The normal
// part runs over complete rows; the Bernoulli missingness part over all rows.
// ---------------------------------------------------------------------------
class SplsmeTarget {
  public:
    SplsmeTarget(const FlatPanel* data, PriorSpec priors) : d_(data), pr_(priors) {
        p_ = d_->p;
        pv_ = d_->pv;
        q_ = d_->q;
        n_ = d_->n_subjects;
        off_alpha_ = 1 + p_;
        off_tau_ = off_alpha_ + 1 + pv_;
        off_gamma_ = off_tau_ + 1 + q_;
        off_delta_ = off_gamma_ + 1;
        off_s_ = off_delta_ + 1;
        off_z_ = off_s_ + 4;
        state_.assign(off_z_ + 3 * n_, 0.0);

        Eigen::VectorXd bf;
        double lrv;
        detail::ols_init(*d_, bf, lrv);
        state_[0] = bf(0);
        for (int j = 0; j < p_; ++j) state_[1 + j] = bf(j + 1);
        state_[off_alpha_] = lrv;
        state_[off_s_ + 0] = 0.5;
        state_[off_s_ + 2] = 0.5;
        state_[off_s_ + 3] = 0.5;

        mu_.resize(d_->n_complete);
        lv_.resize(d_->n_complete);
        invv_.resize(d_->n_complete);
        s_mu_.resize(d_->n_complete);
        s_lv_.resize(d_->n_complete);
        s_invv_.resize(d_->n_complete);
        lp_.resize(d_->n_all);
        s_lp_.resize(d_->n_all);
        eta1_.assign(n_, 0.0);
        eta2_.assign(n_, 0.0);
        lam_.assign(n_, 0.0);
        s_eta1_.assign(n_, 0.0);
        s_eta2_.assign(n_, 0.0);
        s_lam_.assign(n_, 0.0);
        recompute_all();
    }

    int block_count() const { return n_globals() + n_; }

    std::pair<int, int> block_range(int b) const {
        if (b < n_globals()) return {b, 1};
        return {off_z_ + 3 * (b - n_globals()), 3};
    }

    std::string block_name(int b) const {
        if (b == 0) return "beta0";
        if (b <= p_) return "beta_" + d_->x_names[b - 1];
        if (b == off_alpha_) return "alpha0";
        if (b < off_tau_) return "alpha_" + d_->w_names[b - off_alpha_ - 1];
        if (b == off_tau_) return "tau0";
        if (b < off_gamma_) return "tau_" + d_->t_names[b - off_tau_ - 1];
        if (b == off_gamma_) return "gamma";
        if (b == off_delta_) return "delta";
        if (b == off_s_) return "s11";
        if (b == off_s_ + 1) return "s21";
        if (b == off_s_ + 2) return "s22";
        if (b == off_s_ + 3) return "s33";
        return "z[" + d_->subject_ids[b - n_globals()] + "]";
    }

    const std::vector<double>& state() const { return state_; }
    double log_target() const { return sum_lv_const_ - 0.5 * sum_quad_ + ll_m_ + ll_z_ + lp_prior_; }

    double propose(int b, const double* vals);
    void accept_staged();

    std::vector<std::string> natural_names() const {
        std::vector<std::string> nm;
        nm.push_back("beta0");
        for (const auto& x : d_->x_names) nm.push_back("beta_" + x);
        nm.push_back("alpha0");
        for (const auto& w : d_->w_names) nm.push_back("alpha_" + w);
        nm.push_back("tau0");
        for (const auto& t : d_->t_names) nm.push_back("tau_" + t);
        nm.push_back("gamma");
        nm.push_back("delta");
        nm.push_back("sigma_eta1");
        nm.push_back("sigma_eta2");
        nm.push_back("rho_eta");
        nm.push_back("sigma_lambda");
        for (const auto& s : d_->subject_ids) nm.push_back("eta1[" + s + "]");
        for (const auto& s : d_->subject_ids) nm.push_back("eta2[" + s + "]");
        for (const auto& s : d_->subject_ids) nm.push_back("lambda[" + s + "]");
        return nm;
    }

    std::vector<double> natural_draw() const {
        std::vector<double> v;
        v.reserve(off_s_ + 4 + 3 * n_);
        for (int j = 0; j < off_s_; ++j) v.push_back(state_[j]);
        const double s11 = state_[off_s_], s21 = state_[off_s_ + 1], s22 = state_[off_s_ + 2], s33 = state_[off_s_ + 3];
        const double se2 = std::hypot(s21, s22);
        v.push_back(s11);
        v.push_back(se2);
        v.push_back(se2 > 0 ? s21 / se2 : 0.0);
        v.push_back(s33);
        for (int i = 0; i < n_; ++i) v.push_back(eta1_[i]);
        for (int i = 0; i < n_; ++i) v.push_back(eta2_[i]);
        for (int i = 0; i < n_; ++i) v.push_back(lam_[i]);
        return v;
    }

    void fill_layout(PosteriorDrawSet& set) const {
        set.kind = ModelKind::Splsme;
        set.p = p_;
        set.pv = pv_;
        set.q = q_;
        set.n_subjects = n_;
    }

  private:
    int n_globals() const { return off_s_ + 4; }

    double prior_scalar(int idx, double v) const {
        if (idx < off_gamma_) return detail::normal_prior_lpdf(v, pr_.coefficient_sd);
        if (idx == off_gamma_ || idx == off_delta_) return detail::normal_prior_lpdf(v, pr_.loading_sd);
        if (idx == off_s_ + 1) return detail::normal_prior_lpdf(v, pr_.scale_sd);
        return detail::halfnormal_prior_lpdf(v, pr_.scale_sd); // s11, s22, s33
    }

    void recompute_all() {
        const double s11 = state_[off_s_], s21 = state_[off_s_ + 1], s22 = state_[off_s_ + 2], s33 = state_[off_s_ + 3];
        const double gam = state_[off_gamma_], dlt = state_[off_delta_];
        for (int i = 0; i < n_; ++i) {
            const double z1 = state_[off_z_ + 3 * i], z2 = state_[off_z_ + 3 * i + 1], z3 = state_[off_z_ + 3 * i + 2];
            eta1_[i] = s11 * z1;
            eta2_[i] = s21 * z1 + s22 * z2;
            lam_[i] = s33 * z3;
        }
        sum_lv_const_ = 0.0;
        sum_quad_ = 0.0;
        for (int r = 0; r < d_->n_complete; ++r) {
            const int i = d_->subj_of[r];
            double m = state_[0] + eta1_[i] + gam * lam_[i];
            for (int j = 0; j < p_; ++j) m += d_->X(r, j) * state_[1 + j];
            double l = state_[off_alpha_] + eta2_[i] + dlt * lam_[i];
            for (int j = 0; j < pv_; ++j) l += d_->W(r, j) * state_[off_alpha_ + 1 + j];
            mu_[r] = m;
            lv_[r] = l;
            invv_[r] = std::exp(-l);
            const double res = d_->y(r) - m;
            sum_lv_const_ += -0.5 * (kLog2Pi + l);
            sum_quad_ += res * res * invv_[r];
        }
        ll_m_ = 0.0;
        for (int r = 0; r < d_->n_all; ++r) {
            const int i = d_->subj_of_all[r];
            double t = state_[off_tau_] + lam_[i];
            for (int j = 0; j < q_; ++j) t += d_->T(r, j) * state_[off_tau_ + 1 + j];
            lp_[r] = t;
            ll_m_ += bernoulli_logit_lpdf(d_->miss[r] != 0, t);
        }
        ll_z_ = 0.0;
        for (int i = 0; i < 3 * n_; ++i) {
            const double z = state_[off_z_ + i];
            ll_z_ += -0.5 * (kLog2Pi + z * z);
        }
        lp_prior_ = 0.0;
        for (int idx = 0; idx < n_globals(); ++idx) lp_prior_ += prior_scalar(idx, state_[idx]);
    }

    const FlatPanel* d_;
    PriorSpec pr_;
    int p_ = 0, pv_ = 0, q_ = 0, n_ = 0;
    int off_alpha_ = 0, off_tau_ = 0, off_gamma_ = 0, off_delta_ = 0, off_s_ = 0, off_z_ = 0;
    std::vector<double> state_;

    std::vector<double> mu_, lv_, invv_, lp_, eta1_, eta2_, lam_;
    double sum_lv_const_ = 0.0, sum_quad_ = 0.0, ll_m_ = 0.0, ll_z_ = 0.0, lp_prior_ = 0.0;

    std::vector<double> s_mu_, s_lv_, s_invv_, s_lp_, s_eta1_, s_eta2_, s_lam_;
    struct Staged {
        int block = -1;
        double sum_lv_const = 0, sum_quad = 0, ll_m = 0, ll_z = 0, lp_prior = 0;
        int r0 = 0, r1 = 0;
        bool mu_changed = false, lv_changed = false;
        int a0 = 0, a1 = 0;
        bool lp_changed = false;
        int i0 = 0, i1 = 0;
        bool eta1_changed = false, eta2_changed = false, lam_changed = false;
        double v0 = 0, v1v = 0, v2v = 0;
    } st_;
};

inline double SplsmeTarget::propose(int b, const double* vals) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    st_ = Staged{};
    st_.block = b;
    st_.ll_z = ll_z_;
    st_.ll_m = ll_m_;
    st_.lp_prior = lp_prior_;
    st_.sum_lv_const = sum_lv_const_;
    st_.sum_quad = sum_quad_;

    const double s33 = state_[off_s_ + 3];
    const double gam = state_[off_gamma_], dl = state_[off_delta_];

    auto mean_shift_all = [&](auto shift_of) {
        st_.r0 = 0;
        st_.r1 = d_->n_complete;
        st_.mu_changed = true;
        double quad = 0.0;
        for (int r = 0; r < d_->n_complete; ++r) {
            const double m = mu_[r] + shift_of(r);
            s_mu_[r] = m;
            const double res = d_->y(r) - m;
            quad += res * res * invv_[r];
        }
        st_.sum_quad = quad;
    };
    auto var_shift_all = [&](auto shift_of) -> bool {
        st_.r0 = 0;
        st_.r1 = d_->n_complete;
        st_.lv_changed = true;
        double quad = 0.0, lvc = 0.0;
        for (int r = 0; r < d_->n_complete; ++r) {
            const double l = lv_[r] + shift_of(r);
            if (std::abs(l) > kMaxLogVariance) return false;
            s_lv_[r] = l;
            const double iv = std::exp(-l);
            s_invv_[r] = iv;
            const double res = d_->y(r) - mu_[r];
            quad += res * res * iv;
            lvc += -0.5 * (kLog2Pi + l);
        }
        st_.sum_quad = quad;
        st_.sum_lv_const = lvc;
        return true;
    };
    auto miss_shift_all = [&](auto shift_of) {
        st_.a0 = 0;
        st_.a1 = d_->n_all;
        st_.lp_changed = true;
        double llm = 0.0;
        for (int r = 0; r < d_->n_all; ++r) {
            const double t = lp_[r] + shift_of(r);
            s_lp_[r] = t;
            llm += bernoulli_logit_lpdf(d_->miss[r] != 0, t);
        }
        st_.ll_m = llm;
    };

    if (b < n_globals()) {
        const double nv = vals[0];
        const double old = state_[b];
        const double dlt = nv - old;
        st_.v0 = nv;
        st_.lp_prior = lp_prior_ - prior_scalar(b, old) + prior_scalar(b, nv);
        if (!std::isfinite(st_.lp_prior)) return neg_inf;

        if (b == 0) {
            mean_shift_all([&](int) { return dlt; });
        } else if (b <= p_) {
            const int j = b - 1;
            mean_shift_all([&](int r) { return dlt * d_->X(r, j); });
        } else if (b == off_alpha_) {
            if (!var_shift_all([&](int) { return dlt; })) return neg_inf;
        } else if (b < off_tau_) {
            const int j = b - off_alpha_ - 1;
            if (!var_shift_all([&](int r) { return dlt * d_->W(r, j); })) return neg_inf;
        } else if (b == off_tau_) {
            miss_shift_all([&](int) { return dlt; });
        } else if (b < off_gamma_) {
            const int j = b - off_tau_ - 1;
            miss_shift_all([&](int r) { return dlt * d_->T(r, j); });
        } else if (b == off_gamma_) {
            mean_shift_all([&](int r) { return dlt * lam_[d_->subj_of[r]]; });
        } else if (b == off_delta_) {
            if (!var_shift_all([&](int r) { return dlt * lam_[d_->subj_of[r]]; })) return neg_inf;
        } else if (b == off_s_) {
            st_.eta1_changed = true;
            st_.i0 = 0;
            st_.i1 = n_;
            for (int i = 0; i < n_; ++i) s_eta1_[i] = eta1_[i] + dlt * state_[off_z_ + 3 * i];
            mean_shift_all([&](int r) { return dlt * state_[off_z_ + 3 * d_->subj_of[r]]; });
        } else if (b == off_s_ + 1 || b == off_s_ + 2) {
            const int zc = b - off_s_ - 1;
            st_.eta2_changed = true;
            st_.i0 = 0;
            st_.i1 = n_;
            for (int i = 0; i < n_; ++i) s_eta2_[i] = eta2_[i] + dlt * state_[off_z_ + 3 * i + zc];
            if (!var_shift_all([&](int r) { return dlt * state_[off_z_ + 3 * d_->subj_of[r] + zc]; })) return neg_inf;
        } else { // s33: lambda changes; mean, variance and missing parts all shift
            st_.lam_changed = true;
            st_.i0 = 0;
            st_.i1 = n_;
            for (int i = 0; i < n_; ++i) s_lam_[i] = lam_[i] + dlt * state_[off_z_ + 3 * i + 2];
            st_.r0 = 0;
            st_.r1 = d_->n_complete;
            st_.mu_changed = st_.lv_changed = true;
            double quad = 0.0, lvc = 0.0;
            for (int r = 0; r < d_->n_complete; ++r) {
                const double zl = dlt * state_[off_z_ + 3 * d_->subj_of[r] + 2];
                const double l = lv_[r] + dl * zl;
                if (std::abs(l) > kMaxLogVariance) return neg_inf;
                const double m = mu_[r] + gam * zl;
                s_mu_[r] = m;
                s_lv_[r] = l;
                s_invv_[r] = std::exp(-l);
                const double res = d_->y(r) - m;
                quad += res * res * s_invv_[r];
                lvc += -0.5 * (kLog2Pi + l);
            }
            st_.sum_quad = quad;
            st_.sum_lv_const = lvc;
            miss_shift_all([&](int r) { return dlt * state_[off_z_ + 3 * d_->subj_of_all[r] + 2]; });
        }
        return st_.sum_lv_const - 0.5 * st_.sum_quad + st_.ll_m + st_.ll_z + st_.lp_prior;
    }

    // per-subject z block
    const int i = b - n_globals();
    const double z1n = vals[0], z2n = vals[1], z3n = vals[2];
    const double z1 = state_[off_z_ + 3 * i], z2 = state_[off_z_ + 3 * i + 1], z3 = state_[off_z_ + 3 * i + 2];
    st_.v0 = z1n;
    st_.v1v = z2n;
    st_.v2v = z3n;
    st_.i0 = i;
    st_.i1 = i + 1;
    st_.eta1_changed = st_.eta2_changed = st_.lam_changed = true;
    const double s11 = state_[off_s_], s21 = state_[off_s_ + 1], s22 = state_[off_s_ + 2];
    s_eta1_[i] = s11 * z1n;
    s_eta2_[i] = s21 * z1n + s22 * z2n;
    s_lam_[i] = s33 * z3n;
    st_.ll_z = ll_z_ - 0.5 * (z1n * z1n + z2n * z2n + z3n * z3n - z1 * z1 - z2 * z2 - z3 * z3);

    const double dmu = (s_eta1_[i] - eta1_[i]) + gam * (s_lam_[i] - lam_[i]);
    const double dlv = (s_eta2_[i] - eta2_[i]) + dl * (s_lam_[i] - lam_[i]);
    const double dlp = s_lam_[i] - lam_[i];

    const auto [r0, r1] = d_->rows_of[i];
    st_.r0 = r0;
    st_.r1 = r1;
    st_.mu_changed = st_.lv_changed = true;
    double quad_old = 0.0, quad_new = 0.0, lvc_old = 0.0, lvc_new = 0.0;
    for (int r = r0; r < r1; ++r) {
        const double res_old = d_->y(r) - mu_[r];
        quad_old += res_old * res_old * invv_[r];
        lvc_old += -0.5 * (kLog2Pi + lv_[r]);
        const double l = lv_[r] + dlv;
        if (std::abs(l) > kMaxLogVariance) return neg_inf;
        const double m = mu_[r] + dmu;
        s_mu_[r] = m;
        s_lv_[r] = l;
        s_invv_[r] = std::exp(-l);
        const double res = d_->y(r) - m;
        quad_new += res * res * s_invv_[r];
        lvc_new += -0.5 * (kLog2Pi + l);
    }
    st_.sum_quad = sum_quad_ - quad_old + quad_new;
    st_.sum_lv_const = sum_lv_const_ - lvc_old + lvc_new;

    const auto [a0, a1] = d_->rows_all_of[i];
    st_.a0 = a0;
    st_.a1 = a1;
    st_.lp_changed = true;
    double llm_old = 0.0, llm_new = 0.0;
    for (int r = a0; r < a1; ++r) {
        llm_old += bernoulli_logit_lpdf(d_->miss[r] != 0, lp_[r]);
        const double t = lp_[r] + dlp;
        s_lp_[r] = t;
        llm_new += bernoulli_logit_lpdf(d_->miss[r] != 0, t);
    }
    st_.ll_m = ll_m_ - llm_old + llm_new;

    return st_.sum_lv_const - 0.5 * st_.sum_quad + st_.ll_m + st_.ll_z + st_.lp_prior;
}

inline void SplsmeTarget::accept_staged() {
    const int b = st_.block;
    if (b < n_globals()) {
        state_[b] = st_.v0;
    } else {
        const int i = b - n_globals();
        state_[off_z_ + 3 * i] = st_.v0;
        state_[off_z_ + 3 * i + 1] = st_.v1v;
        state_[off_z_ + 3 * i + 2] = st_.v2v;
    }
    if (st_.mu_changed)
        std::copy(s_mu_.begin() + st_.r0, s_mu_.begin() + st_.r1, mu_.begin() + st_.r0);
    if (st_.lv_changed) {
        std::copy(s_lv_.begin() + st_.r0, s_lv_.begin() + st_.r1, lv_.begin() + st_.r0);
        std::copy(s_invv_.begin() + st_.r0, s_invv_.begin() + st_.r1, invv_.begin() + st_.r0);
    }
    if (st_.lp_changed)
        std::copy(s_lp_.begin() + st_.a0, s_lp_.begin() + st_.a1, lp_.begin() + st_.a0);
    if (st_.eta1_changed)
        std::copy(s_eta1_.begin() + st_.i0, s_eta1_.begin() + st_.i1, eta1_.begin() + st_.i0);
    if (st_.eta2_changed)
        std::copy(s_eta2_.begin() + st_.i0, s_eta2_.begin() + st_.i1, eta2_.begin() + st_.i0);
    if (st_.lam_changed)
        std::copy(s_lam_.begin() + st_.i0, s_lam_.begin() + st_.i1, lam_.begin() + st_.i0);
    sum_lv_const_ = st_.sum_lv_const;
    sum_quad_ = st_.sum_quad;
    ll_m_ = st_.ll_m;
    ll_z_ = st_.ll_z;
    lp_prior_ = st_.lp_prior;
}

} // namespace emix

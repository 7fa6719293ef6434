#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

#include "emix/errors.hpp"

namespace emix {

struct NelderMeadOptions {
    int max_iters = 2000;
    double xtol = 1e-9;
    double ftol = 1e-12;
    double initial_step = 0.5;
    int restarts = 2; // re-seed the simplex at the incumbent to escape flat collapses
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double fval = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Derivative-free simplex minimizer; dimensions here are small (<= ~12).
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    Eigen::VectorXd x0, const NelderMeadOptions& opt = {}) {
    const int n = static_cast<int>(x0.size());
    NelderMeadResult res;
    res.x = x0;
    res.fval = f(x0);

    for (int attempt = 0; attempt <= opt.restarts; ++attempt) {
        std::vector<Eigen::VectorXd> xs(n + 1, res.x);
        std::vector<double> fs(n + 1);
        const double step = opt.initial_step / (attempt + 1.0);
        for (int i = 1; i <= n; ++i)
            xs[i](i - 1) += (xs[i](i - 1) != 0.0 ? step * std::abs(xs[i](i - 1)) : step);
        for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

        int it = 0;
        for (; it < opt.max_iters; ++it) {
            std::vector<int> order(n + 1);
            for (int i = 0; i <= n; ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
            const int best = order[0], worst = order[n], second = order[n - 1];

            double spread = 0.0;
            for (int i = 1; i <= n; ++i)
                spread = std::max(spread, (xs[order[i]] - xs[best]).cwiseAbs().maxCoeff());
            if (spread < opt.xtol && std::abs(fs[worst] - fs[best]) < opt.ftol) {
                res.converged = true;
                break;
            }

            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (int i = 0; i <= n; ++i)
                if (i != worst) centroid += xs[i];
            centroid /= n;

            const Eigen::VectorXd refl = centroid + (centroid - xs[worst]);
            const double frefl = f(refl);
            if (frefl < fs[best]) {
                const Eigen::VectorXd exp_ = centroid + 2.0 * (centroid - xs[worst]);
                const double fexp = f(exp_);
                if (fexp < frefl) {
                    xs[worst] = exp_;
                    fs[worst] = fexp;
                } else {
                    xs[worst] = refl;
                    fs[worst] = frefl;
                }
            } else if (frefl < fs[second]) {
                xs[worst] = refl;
                fs[worst] = frefl;
            } else {
                const Eigen::VectorXd contr = centroid + 0.5 * (xs[worst] - centroid);
                const double fcontr = f(contr);
                if (fcontr < fs[worst]) {
                    xs[worst] = contr;
                    fs[worst] = fcontr;
                } else {
                    for (int i = 0; i <= n; ++i) {
                        if (i == best) continue;
                        xs[i] = xs[best] + 0.5 * (xs[i] - xs[best]);
                        fs[i] = f(xs[i]);
                    }
                }
            }
        }
        res.iterations += it;
        int best = 0;
        for (int i = 1; i <= n; ++i)
            if (fs[i] < fs[best]) best = i;
        if (fs[best] < res.fval) {
            res.fval = fs[best];
            res.x = xs[best];
        }
        if (res.converged) break;
    }
    return res;
}

// Central finite-difference Hessian.
inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h = 1e-4) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd H(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            Eigen::VectorXd a = x, b = x, c = x, d = x;
            a(i) += h; a(j) += h;
            b(i) += h; b(j) -= h;
            c(i) -= h; c(j) += h;
            d(i) -= h; d(j) -= h;
            H(i, j) = H(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4.0 * h * h);
        }
    }
    return H;
}

} // namespace emix

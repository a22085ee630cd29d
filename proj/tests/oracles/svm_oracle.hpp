#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>

namespace amc::oracle {

// Euclidean projection onto {0 <= a <= C, y^T a = 0}: clip(v - lambda*y) with
// lambda found by bisection on the monotone constraint residual.
inline Eigen::VectorXd project_box_hyperplane(const Eigen::VectorXd& v, std::span<const int> y, double c) {
    auto residual = [&](double lambda) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += y[i] * std::clamp(v(i) - lambda * y[i], 0.0, c);
        return s;
    };
    double lo = -1.0, hi = 1.0;
    while (residual(lo) < 0.0) lo *= 2.0;
    while (residual(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) > 0.0 ? lo : hi) = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = std::clamp(v(i) - lambda * y[i], 0.0, c);
    return out;
}

// Maximizes sum(a) - 1/2 a^T Q a by projected gradient ascent with step 1/L.
inline double projected_gradient_dual(const Eigen::MatrixXd& kernel, std::span<const int> y, double c,
                                      long iterations = 1'000'000) {
    const Eigen::Index n = kernel.rows();
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * kernel(i, j);
    }
    const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().maxCoeff();
    const double step = 1.0 / std::max(lipschitz, 1e-12);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (long it = 0; it < iterations; ++it) {
        const Eigen::VectorXd next = project_box_hyperplane(a + step * (Eigen::VectorXd::Ones(n) - q * a), y, c);
        const double moved = (next - a).lpNorm<Eigen::Infinity>();
        a = next;
        if (moved < 1e-13) break;
    }
    return a.sum() - 0.5 * a.dot(q * a);
}

}  // namespace amc::oracle

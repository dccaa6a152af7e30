#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "musim/error.hpp"

namespace musim {

/// Fractional (average) ranks, 1-based: ties share the mean of the ranks
/// they span.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

namespace spearman_detail {

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace spearman_detail

/// Two-sided p-value of the t statistic with `dof` degrees of freedom,
/// via p = I_{dof/(dof+t^2)}(dof/2, 1/2). Clamped into (0, 1].
inline double student_t_two_sided_p(double t, double dof) {
    if (!std::isfinite(t)) return std::numeric_limits<double>::min();
    const double x = dof / (dof + t * t);
    const double p = spearman_detail::reg_incomplete_beta(dof / 2.0, 0.5, x);
    return std::min(1.0, std::max(p, std::numeric_limits<double>::min()));
}

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;
};

/// Spearman rank correlation with average-rank tie handling.
///
/// rho is the Pearson correlation of the two rank vectors (two-pass,
/// centered). The p-value uses the t approximation
/// t = rho * sqrt((n-2) / (1-rho^2)), two-sided. A constant input has no
/// defined rank correlation and raises ConstantInput.
inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw Error(Errc::length_mismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    const std::size_t n = x.size();
    if (n < 3) throw Error(Errc::too_short, "need at least 3 observations");

    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double mean_rank = (static_cast<double>(n) + 1.0) / 2.0;  // ranks always sum to n(n+1)/2
    double num = 0.0, den_x = 0.0, den_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mean_rank;
        const double dy = ry[i] - mean_rank;
        num += dx * dy;
        den_x += dx * dx;
        den_y += dy * dy;
    }
    if (den_x == 0.0 || den_y == 0.0)
        throw Error(Errc::constant_input, den_x == 0.0 ? "first input is constant"
                                                       : "second input is constant");
    SpearmanResult result;
    result.rho = num / std::sqrt(den_x * den_y);
    if (result.rho == 0.0) {
        result.p_value = 1.0;
        return result;
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double denom = 1.0 - result.rho * result.rho;
    const double t = denom <= 0.0 ? std::numeric_limits<double>::infinity()
                                  : result.rho * std::sqrt(dof / denom);
    result.p_value = student_t_two_sided_p(t, dof);
    return result;
}

}  // namespace musim

#pragma once

// Draws valid sampling configurations from the designed parameter space and
// converts between structured parameters and flat [0,1] feature vectors for
// the regressor.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "quadmix/errors.hpp"
#include "quadmix/params.hpp"
#include "quadmix/rng.hpp"

namespace quadmix {

// Raw U(0,1) coordinates of one draw, kept for diagnostics and tests.
struct UniformDraw {
    std::vector<double> global_weights;               // N
    std::vector<std::vector<double>> domain_weights;  // M x N
    std::vector<std::array<double, 4>> beta_raw;      // M x (lambda, omega, eta, epsilon)
};

// Per-criterion global weights are drawn once and multiplied into every
// domain's weights before renormalizing; without them the average weight of
// each criterion across domains would be pinned at 1/N and no criterion could
// dominate overall. lambda is drawn log-uniform over [1, 1000], omega uniform
// over [0, 0.1], eta uniform over [0, 1], epsilon uniform over [0, 0.001].
inline std::pair<UniformDraw, QuaDMixParams> draw_params(int n_criteria, int n_domains, Rng& rng) {
    if (n_criteria < 1 || n_domains < 1) throw DataError("draw_params: need at least one criterion and one domain");
    const std::size_t N = static_cast<std::size_t>(n_criteria);
    const std::size_t M = static_cast<std::size_t>(n_domains);
    UniformDraw draw;
    draw.global_weights.resize(N);
    double a_sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        draw.global_weights[n] = rng.next_double();
        a_sum += draw.global_weights[n];
    }
    std::vector<double> a_tilde(N);
    const double a_denom = std::max(a_sum, 1e-12);
    for (std::size_t n = 0; n < N; ++n) a_tilde[n] = draw.global_weights[n] / a_denom;

    QuaDMixParams params;
    params.alpha.resize(M);
    params.beta.resize(M);
    draw.domain_weights.resize(M);
    draw.beta_raw.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        draw.domain_weights[m].resize(N);
        double b_sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            draw.domain_weights[m][n] = rng.next_double();
            b_sum += a_tilde[n] * draw.domain_weights[m][n];
        }
        auto& row = params.alpha[m];
        row.resize(N);
        if (b_sum < 1e-9) {
            // only reachable when every product underflows; keep the row valid
            for (std::size_t n = 0; n < N; ++n) row[n] = 1.0 / static_cast<double>(N);
        } else {
            const double denom = std::max(b_sum, 1e-12);
            double row_sum = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                row[n] = a_tilde[n] * draw.domain_weights[m][n] / denom;
                row_sum += row[n];
            }
            for (std::size_t n = 0; n < N; ++n) row[n] /= row_sum;
        }
        auto& raw = draw.beta_raw[m];
        for (auto& r : raw) r = rng.next_double();
        params.beta[m].lambda = std::pow(10.0, 3.0 * raw[0]);
        params.beta[m].omega = 0.1 * raw[1];
        params.beta[m].eta = raw[2];
        params.beta[m].epsilon = raw[3] / 1000.0;
    }
    return {std::move(draw), std::move(params)};
}

// Flat layout per domain: [alpha_1..alpha_N, log10(lambda)/3, omega/0.1, eta,
// epsilon*1000]. All coordinates land in [0,1], which is the scale the
// candidates were drawn on; tree splits and top-k averaging both happen here.
inline std::vector<double> flatten(const QuaDMixParams& params) {
    params.validate();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(params.flat_size()));
    for (int m = 0; m < params.n_domains(); ++m) {
        const auto& row = params.alpha[static_cast<std::size_t>(m)];
        out.insert(out.end(), row.begin(), row.end());
        const BetaParams& b = params.beta[static_cast<std::size_t>(m)];
        out.push_back(std::log10(b.lambda) / 3.0);
        out.push_back(b.omega / 0.1);
        out.push_back(b.eta);
        out.push_back(b.epsilon * 1000.0);
    }
    return out;
}

inline QuaDMixParams unflatten(std::span<const double> flat, int n_criteria, int n_domains) {
    if (n_criteria < 1 || n_domains < 1) throw DataError("unflatten: bad dimensions");
    const std::size_t N = static_cast<std::size_t>(n_criteria);
    const std::size_t M = static_cast<std::size_t>(n_domains);
    if (flat.size() != (N + 4) * M) {
        throw DataError("unflatten: expected length " + std::to_string((N + 4) * M) + ", got " +
                        std::to_string(flat.size()));
    }
    for (double c : flat) {
        if (!(c >= 0.0 && c <= 1.0)) {
            throw DataError("unflatten: coordinate " + std::to_string(c) + " outside [0, 1]");
        }
    }
    QuaDMixParams params;
    params.alpha.resize(M);
    params.beta.resize(M);
    std::size_t pos = 0;
    for (std::size_t m = 0; m < M; ++m) {
        auto& row = params.alpha[m];
        row.assign(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                   flat.begin() + static_cast<std::ptrdiff_t>(pos + N));
        pos += N;
        double sum = 0.0;
        for (double a : row) sum += a;
        if (std::abs(sum - 1.0) > 1e-6) {
            throw DataError("unflatten: alpha row " + std::to_string(m) + " sums to " + std::to_string(sum) +
                            "; vector looks corrupted");
        }
        for (double& a : row) a /= sum;
        params.beta[m].lambda = std::pow(10.0, 3.0 * flat[pos + 0]);
        params.beta[m].omega = 0.1 * flat[pos + 1];
        params.beta[m].eta = flat[pos + 2];
        params.beta[m].epsilon = flat[pos + 3] / 1000.0;
        pos += 4;
    }
    params.validate();
    return params;
}

}  // namespace quadmix

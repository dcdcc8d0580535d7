#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "adenorm/encoder.hpp"
#include "adenorm/error.hpp"

namespace adenorm {

struct PairLoss {
    double loss = 0.0;
    Matrix grad_a;
    Matrix grad_b;
};

/// Symmetric in-batch InfoNCE. With S = A * B^T / temperature,
/// loss = 0.5 * (mean_i CE(S[i,:], i) + mean_j CE(S[:,j], j)).
/// Row i of A and row i of B form the positive pair; every other row is a negative.
inline PairLoss info_nce_loss(const Matrix& a, const Matrix& b, double temperature) {
    const std::size_t n = a.rows();
    if (n < 2) throw Error("info_nce_loss needs a batch of at least 2 pairs");
    if (b.rows() != n || a.cols() != b.cols()) throw Error("info_nce_loss shape mismatch");
    if (!(temperature > 0.0)) throw Error("temperature must be positive");

    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = dot(a.row(i), b.row(j)) / temperature;
            if (!std::isfinite(v)) throw Error("non-finite similarity in info_nce_loss");
            s(i, j) = v;
        }

    // Row and column softmaxes, accumulated in ascending index order on both
    // axes so that swapping A and B yields the identical loss.
    Matrix row_p(n, n), col_p(n, n);
    double row_ce = 0.0, col_ce = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, s(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(s(i, j) - mx);
        row_ce += std::log(sum) + (mx - s(i, i));
        for (std::size_t j = 0; j < n; ++j) row_p(i, j) = std::exp(s(i, j) - mx) / sum;
    }
    for (std::size_t j = 0; j < n; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, s(i, j));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += std::exp(s(i, j) - mx);
        col_ce += std::log(sum) + (mx - s(j, j));
        for (std::size_t i = 0; i < n; ++i) col_p(i, j) = std::exp(s(i, j) - mx) / sum;
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    PairLoss out;
    out.loss = 0.5 * (row_ce * inv_n + col_ce * inv_n);

    // dL/dS = (P_row + P_col - 2I) / (2n); chain through S = A B^T / t.
    const std::size_t d = a.cols();
    out.grad_a = Matrix(n, d);
    out.grad_b = Matrix(n, d);
    const double scale = 0.5 * inv_n / temperature;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double g = row_p(i, j) + col_p(i, j) - (i == j ? 2.0 : 0.0);
            g *= scale;
            auto ar = a.row(i);
            auto br = b.row(j);
            auto ga = out.grad_a.row(i);
            auto gb = out.grad_b.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                ga[k] += g * br[k];
                gb[k] += g * ar[k];
            }
        }
    return out;
}

struct StsLoss {
    double loss = 0.0;
    std::vector<double> grad;  // w.r.t. each predicted cosine
};

/// Mean squared error between (cos + 1) / 2 and gold scores in [0, 1].
inline StsLoss sts_loss(std::span<const double> pred_cosines, std::span<const double> gold_scores) {
    if (pred_cosines.size() != gold_scores.size())
        throw Error("sts_loss length mismatch: " + std::to_string(pred_cosines.size()) + " vs " +
                    std::to_string(gold_scores.size()));
    if (pred_cosines.empty()) throw Error("sts_loss needs at least one pair");

    constexpr double kSlack = 1e-9;
    const double inv_n = 1.0 / static_cast<double>(pred_cosines.size());
    StsLoss out;
    out.grad.resize(pred_cosines.size());
    for (std::size_t i = 0; i < pred_cosines.size(); ++i) {
        const double c = pred_cosines[i];
        const double g = gold_scores[i];
        if (!(c >= -1.0 - kSlack && c <= 1.0 + kSlack)) throw Error("predicted cosine outside [-1, 1]");
        if (!(g >= 0.0 && g <= 1.0)) throw Error("gold score outside [0, 1]");
        const double diff = 0.5 * (c + 1.0) - g;
        out.loss += diff * diff * inv_n;
        out.grad[i] = diff * inv_n;
    }
    return out;
}

}  // namespace adenorm

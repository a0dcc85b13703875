#include "dalc/projection.hpp"

#include <cmath>
#include <stdexcept>

#include "dalc/geometry.hpp"

namespace dalc {

namespace {

void require_tau(double tau) {
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("tau must lie in (0, 1]");
}

// Relative cutoff below which a singular component is treated as absent.
// The Gram-matrix route squares the conditioning, so true zeros surface as
// sigma around sqrt(eps) times sigma_max; the cutoff sits above that floor
// to keep tau < 1 from amplifying noise directions.
constexpr double kSpectrumCutoff = 1e-7;

}  // namespace

std::string to_string(ProjectionVariant variant) {
    switch (variant) {
        case ProjectionVariant::Identity: return "identity";
        case ProjectionVariant::GramSchmidt: return "gram-schmidt";
        case ProjectionVariant::SvdReshape: return "svd-reshape";
    }
    throw std::logic_error("unknown projection variant");
}

Matrix project_identity(const Matrix& embeddings) { return embeddings; }

Projected project_gram_schmidt(const Matrix& embeddings) {
    const std::size_t n = embeddings.rows();
    const std::size_t d = embeddings.cols();
    Projected out{Matrix(n, d, 0.0), std::vector<bool>(n, false)};

    // Orthonormal basis of the accepted rows so far, used to strip each new
    // row. Two subtraction passes keep the residual orthogonal even when a
    // row is nearly inside the span.
    std::vector<std::vector<double>> basis;
    std::vector<double> v(d);

    for (std::size_t i = 0; i < n; ++i) {
        const auto row = embeddings.row(i);
        const double orig_norm = l2_norm(row);
        if (orig_norm < kZeroRowTolerance) {
            out.degenerate[i] = true;
            continue;
        }
        v.assign(row.begin(), row.end());
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double proj = dot(v, b);
                for (std::size_t j = 0; j < d; ++j) v[j] -= proj * b[j];
            }
        }
        const double residual = l2_norm(v);
        if (residual < kGramSchmidtResidualTol * orig_norm) {
            out.degenerate[i] = true;
            continue;
        }
        if (basis.empty()) {
            // Nothing to subtract: keep the row bit for bit.
            for (std::size_t j = 0; j < d; ++j) out.embeddings(i, j) = row[j];
        } else {
            const double rescale = orig_norm / residual;
            for (std::size_t j = 0; j < d; ++j) out.embeddings(i, j) = v[j] * rescale;
        }
        auto& b = basis.emplace_back(d);
        for (std::size_t j = 0; j < d; ++j) b[j] = v[j] / residual;
    }
    return out;
}

std::vector<double> reshape_spectrum(const std::vector<double>& sigma, double tau) {
    require_tau(tau);
    double sum_sq = 0.0;
    for (double s : sigma) {
        if (s < 0.0) throw std::invalid_argument("singular values must be nonnegative");
        sum_sq += s * s;
    }
    if (sum_sq == 0.0) return sigma;

    std::vector<double> powered(sigma.size());
    double powered_sq = 0.0;
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        powered[k] = sigma[k] > 0.0 ? std::pow(sigma[k], tau) : 0.0;
        powered_sq += powered[k] * powered[k];
    }
    const double c = std::sqrt(sum_sq / powered_sq);
    for (double& s : powered) s *= c;
    return powered;
}

Matrix project_svd_reshape(const Matrix& embeddings, double tau) {
    require_tau(tau);
    const std::size_t n = embeddings.rows();
    const std::size_t d = embeddings.cols();

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += embeddings(i, j);
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix centered(n, d);
    double frob_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = embeddings(i, j) - mean[j];
            centered(i, j) = c;
            frob_sq += c * c;
        }
    if (std::sqrt(frob_sq) < kZeroRowTolerance) return embeddings;

    // Spectrum of the centered rows via the small Gram matrix.
    Matrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            gram(i, j) = gram(j, i) = dot(centered.row(i), centered.row(j));
    const SymmetricEigen eig = jacobi_eigen(gram);

    std::vector<double> sigma;
    sigma.reserve(n);
    for (double lambda : eig.values) sigma.push_back(std::sqrt(std::max(lambda, 0.0)));
    std::size_t kept = 0;
    while (kept < sigma.size() && sigma[kept] > kSpectrumCutoff * sigma[0]) ++kept;
    sigma.resize(kept);

    const std::vector<double> reshaped = reshape_spectrum(sigma, tau);

    // Reconstruct as U * diag(sigma'/sigma) * U^T * centered; the right
    // singular vectors never need to be formed.
    Matrix mixed(kept, d, 0.0);
    for (std::size_t k = 0; k < kept; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const double u = eig.vectors(i, k);
            for (std::size_t j = 0; j < d; ++j) mixed(k, j) += u * centered(i, j);
        }
        const double scale = reshaped[k] / sigma[k];
        for (std::size_t j = 0; j < d; ++j) mixed(k, j) *= scale;
    }

    Matrix out(n, d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < kept; ++k) {
            const double u = eig.vectors(i, k);
            for (std::size_t j = 0; j < d; ++j) out(i, j) += u * mixed(k, j);
        }
        if (kSvdReshapeAddsMeanBack)
            for (std::size_t j = 0; j < d; ++j) out(i, j) += mean[j];
    }
    return out;
}

Projected apply_projection(const Matrix& embeddings, const ProjectionKind& kind) {
    switch (kind.variant) {
        case ProjectionVariant::Identity:
            return {project_identity(embeddings), std::vector<bool>(embeddings.rows(), false)};
        case ProjectionVariant::GramSchmidt:
            return project_gram_schmidt(embeddings);
        case ProjectionVariant::SvdReshape:
            return {project_svd_reshape(embeddings, kind.tau),
                    std::vector<bool>(embeddings.rows(), false)};
    }
    throw std::logic_error("unknown projection variant");
}

}  // namespace dalc

#pragma once

#include <string>
#include <vector>

#include "dalc/matrix.hpp"

namespace dalc {

// Residuals below this fraction of the original row norm collapse to zero.
inline constexpr double kGramSchmidtResidualTol = 1e-8;

// Whether the SVD reshape adds the mean row back after reconstruction.
// Kept as a single switch so the alternative reading is one edit away.
inline constexpr bool kSvdReshapeAddsMeanBack = true;

enum class ProjectionVariant { Identity, GramSchmidt, SvdReshape };

struct ProjectionKind {
    ProjectionVariant variant = ProjectionVariant::Identity;
    double tau = 0.5;  // SvdReshape only; tau = 1 makes it a no-op
};

std::string to_string(ProjectionVariant variant);

struct Projected {
    Matrix embeddings;
    std::vector<bool> degenerate;  // rows zeroed by the projection
};

// Returns the embeddings untouched.
Matrix project_identity(const Matrix& embeddings);

// Sequential orthogonalization of rows in agent order. Row 0 is preserved
// exactly; each later row has its projection onto the span of the previous
// non-degenerate rows removed and is then rescaled to its original norm.
// Rows whose residual falls below kGramSchmidtResidualTol times their
// original norm become zero rows and are flagged instead of rescaled.
// The result depends on row order; callers fix the order by agent index.
Projected project_gram_schmidt(const Matrix& embeddings);

// Centers the rows on their mean, rescales the centered singular values as
// sigma' = c * sigma^tau with c chosen to preserve the squared Frobenius
// energy, reconstructs, and adds the mean row back. An all-equal-rows input
// (centered matrix zero) is returned unchanged.
Matrix project_svd_reshape(const Matrix& embeddings, double tau);

// The spectrum map used by project_svd_reshape, exposed on its own:
// sigma must be descending nonnegative; preserves sum of squares.
std::vector<double> reshape_spectrum(const std::vector<double>& sigma, double tau);

Projected apply_projection(const Matrix& embeddings, const ProjectionKind& kind);

}  // namespace dalc

#pragma once

#include <span>
#include <vector>

#include "dalc/matrix.hpp"

namespace dalc {

// Rows with l2 norm below this are treated as zero rows.
inline constexpr double kZeroRowTolerance = 1e-12;

// Collapse statistics of one committee's embedding matrix.
struct DiversityReport {
    std::vector<double> singular_values;        // descending, >= 0
    double effective_rank = 0.0;                // in [1, min(N, d)]
    double mean_cosine = 0.0;                   // mean of the strict upper triangle
    std::vector<double> per_agent_mean_cosine;  // one entry per agent
};

struct NormalizedRows {
    Matrix matrix;
    std::vector<bool> degenerate;  // true where the input row was (near) zero
    bool any_degenerate() const;
};

// Unit-normalizes every row. Zero rows (norm < kZeroRowTolerance) pass
// through as zero rows and are flagged rather than treated as errors.
NormalizedRows normalize_rows(const Matrix& embeddings);

// N x N matrix of pairwise cosines between rows. Entries are clamped to
// [-1, 1] and the diagonal is exactly 1. Any pair involving a zero row is
// reported as 1.0: a row with no direction carries no distinct evidence, so
// it is scored as maximally redundant and gets weight 0 downstream.
Matrix cosine_matrix(const Matrix& embeddings);

// Mean of the strict upper triangle of a symmetric N x N matrix, N >= 2.
double mean_pairwise_cosine(const Matrix& cosine);

// Mean of row `agent` excluding the diagonal.
double per_agent_mean_cosine(const Matrix& cosine, std::size_t agent);

// Eigendecomposition of a small symmetric matrix by cyclic Jacobi sweeps.
// Eigenvalues are returned in descending order; `vectors` holds the
// corresponding eigenvectors as columns.
struct SymmetricEigen {
    std::vector<double> values;
    Matrix vectors;
};
SymmetricEigen jacobi_eigen(const Matrix& symmetric);

// The min(N, d) singular values of `embeddings`, descending. Computed from
// the N x N Gram matrix E E^T: committees are tiny (N <= 10), so a Jacobi
// eigensolve beats a general SVD. Slightly negative eigenvalues from
// round-off clamp to zero before the square root.
std::vector<double> singular_values(const Matrix& embeddings);

// exp of the Shannon entropy (natural log) of the normalized singular value
// distribution p_j = sigma_j / sum(sigma). 1 when a single direction carries
// everything, k when k equal directions share it. Throws if all values are
// zero.
double effective_rank(std::span<const double> sigma);

// Bundles the collapse statistics for one embedding matrix. Rows are
// unit-normalized first so the report is invariant to per-row scale; all
// fields derive from that one normalized view.
DiversityReport diversity_report(const Matrix& embeddings);

}  // namespace dalc

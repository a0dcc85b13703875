#include "dalc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dalc {

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": matrix not square");
}

}  // namespace

bool NormalizedRows::any_degenerate() const {
    return std::find(degenerate.begin(), degenerate.end(), true) != degenerate.end();
}

NormalizedRows normalize_rows(const Matrix& embeddings) {
    require_finite(embeddings, "normalize_rows");
    NormalizedRows out{embeddings, std::vector<bool>(embeddings.rows(), false)};
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        auto row = out.matrix.row(i);
        const double norm = l2_norm(row);
        if (norm < kZeroRowTolerance) {
            std::fill(row.begin(), row.end(), 0.0);
            out.degenerate[i] = true;
        } else {
            for (double& v : row) v /= norm;
        }
    }
    return out;
}

Matrix cosine_matrix(const Matrix& embeddings) {
    const NormalizedRows nr = normalize_rows(embeddings);
    const std::size_t n = embeddings.rows();
    Matrix s(n, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double c = 1.0;  // zero-row convention: maximally redundant
            if (!nr.degenerate[i] && !nr.degenerate[j]) {
                c = std::clamp(dot(nr.matrix.row(i), nr.matrix.row(j)), -1.0, 1.0);
            }
            s(i, j) = c;
            s(j, i) = c;
        }
    }
    return s;
}

double mean_pairwise_cosine(const Matrix& cosine) {
    require_square(cosine, "mean_pairwise_cosine");
    const std::size_t n = cosine.rows();
    if (n < 2) throw std::invalid_argument("mean_pairwise_cosine: need at least 2 agents");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) total += cosine(i, j);
    return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double per_agent_mean_cosine(const Matrix& cosine, std::size_t agent) {
    require_square(cosine, "per_agent_mean_cosine");
    const std::size_t n = cosine.rows();
    if (n < 2) throw std::invalid_argument("per_agent_mean_cosine: need at least 2 agents");
    if (agent >= n) throw std::out_of_range("per_agent_mean_cosine: agent index out of range");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j != agent) total += cosine(agent, j);
    }
    return total / static_cast<double>(n - 1);
}

SymmetricEigen jacobi_eigen(const Matrix& symmetric) {
    require_square(symmetric, "jacobi_eigen");
    require_finite(symmetric, "jacobi_eigen");
    const std::size_t n = symmetric.rows();

    Matrix a = symmetric;
    Matrix v(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double frob = 0.0;
    for (double x : a.data()) frob += x * x;
    frob = std::sqrt(frob);
    const double stop = std::max(frob, 1.0) * 1e-15;

    constexpr int kMaxSweeps = 64;
    for (int sweep = 0; sweep < kMaxSweeps && n > 1; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) <= stop) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= stop / (static_cast<double>(n) * n)) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = diag[order[k]];
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

std::vector<double> singular_values(const Matrix& embeddings) {
    require_finite(embeddings, "singular_values");
    const std::size_t n = embeddings.rows();
    const std::size_t d = embeddings.cols();
    if (n == 0 || d == 0) return {};

    Matrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double g = dot(embeddings.row(i), embeddings.row(j));
            gram(i, j) = g;
            gram(j, i) = g;
        }
    }
    auto eig = jacobi_eigen(gram);
    std::vector<double> sigma;
    sigma.reserve(std::min(n, d));
    for (std::size_t k = 0; k < std::min(n, d); ++k) {
        sigma.push_back(std::sqrt(std::max(eig.values[k], 0.0)));
    }
    return sigma;
}

double effective_rank(std::span<const double> sigma) {
    double sum = 0.0;
    for (double s : sigma) {
        if (s < 0.0) throw std::invalid_argument("effective_rank: negative singular value");
        sum += s;
    }
    if (sum <= 0.0) throw std::invalid_argument("effective_rank: all singular values are zero");
    double entropy = 0.0;
    for (double s : sigma) {
        if (s > 0.0) {
            const double p = s / sum;
            entropy -= p * std::log(p);
        }
    }
    return std::exp(entropy);
}

DiversityReport diversity_report(const Matrix& embeddings) {
    const NormalizedRows nr = normalize_rows(embeddings);
    const Matrix s = cosine_matrix(embeddings);

    DiversityReport report;
    report.singular_values = singular_values(nr.matrix);
    report.effective_rank = effective_rank(report.singular_values);
    report.mean_cosine = mean_pairwise_cosine(s);
    report.per_agent_mean_cosine.reserve(embeddings.rows());
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        report.per_agent_mean_cosine.push_back(per_agent_mean_cosine(s, i));
    }
    return report;
}

}  // namespace dalc

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace floquet_kam {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

// Bad input: malformed config, invalid parameters, violated schedule inequality.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operands that cannot be combined (different grids, mismatched shapes).
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A series or constant that is infinite for the requested parameters.
struct DivergenceError : std::domain_error {
    using std::domain_error::domain_error;
};

// Index triple (k, n, m): Fourier mode k, row level n, column level m.
struct BlockIndex {
    int k = 0;
    int n = 0;
    int m = 0;

    auto operator<=>(const BlockIndex&) const = default;

    BlockIndex adjoint() const { return {-k, m, n}; }
    bool is_diagonal() const { return k == 0 && n == m; }
};

inline std::string to_string(const BlockIndex& b) {
    return "(" + std::to_string(b.k) + "," + std::to_string(b.n) + "," + std::to_string(b.m) + ")";
}

inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() == 1 || a.cols() == 1) return a.norm();
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

struct HermitianEig {
    RealVector values;  // ascending
    Matrix vectors;     // columns
};

inline HermitianEig hermitian_eig(const Matrix& h) {
    if (h.rows() != h.cols()) throw UsageError("hermitian_eig: matrix is not square");
    if (h.rows() == 0) return {};
    if (h.rows() == 1) {
        return {RealVector::Constant(1, h(0, 0).real()), Matrix::Identity(1, 1)};
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("hermitian_eig: solver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

inline RealVector hermitian_eigenvalues(const Matrix& h) {
    if (h.rows() <= 1) return hermitian_eig(h).values;
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("hermitian_eigenvalues: solver did not converge");
    return es.eigenvalues();
}

inline double hermitian_defect(const Matrix& a) {
    return spectral_norm(a - a.adjoint());
}

// Padé scaling-and-squaring from Eigen's MatrixFunctions module.
inline Matrix expm(const Matrix& a) {
    if (a.size() == 0) return a;
    return a.exp();
}

// Distance between two ascending real sequences: min |a_i - b_j|.
inline double sorted_distance(const RealVector& a, const RealVector& b) {
    if (a.size() == 0 || b.size() == 0) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        best = std::min(best, std::abs(a(i) - b(j)));
        if (a(i) < b(j)) ++i; else ++j;
    }
    return best;
}

inline double max_abs(const RealVector& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace floquet_kam

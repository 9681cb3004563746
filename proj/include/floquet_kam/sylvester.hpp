#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "floquet_kam/linalg.hpp"

namespace floquet_kam {

// Raised when a divisor in the commutation equation is too small: either the
// spectra overlap, or a stage-wise non-resonance test failed.
class ResonanceError : public std::runtime_error {
public:
    ResonanceError(const std::string& what, double distance, double psi = 0.0,
                   std::optional<BlockIndex> witness = std::nullopt, int stage = -1)
        : std::runtime_error(what), distance_(distance), psi_(psi), witness_(witness), stage_(stage) {}

    double distance() const { return distance_; }
    double psi() const { return psi_; }
    const std::optional<BlockIndex>& witness() const { return witness_; }
    int stage() const { return stage_; }

private:
    double distance_;
    double psi_;
    std::optional<BlockIndex> witness_;
    int stage_;
};

enum class Interlacing { NonInterlaced, Interlaced, Overlapping };

inline const char* to_string(Interlacing c) {
    switch (c) {
        case Interlacing::NonInterlaced: return "NonInterlaced";
        case Interlacing::Interlaced: return "Interlaced";
        case Interlacing::Overlapping: return "Overlapping";
    }
    return "?";
}

inline double overlap_tolerance(const RealVector& a, const RealVector& b) {
    return 1e-12 * std::max({1.0, max_abs(a), max_abs(b)});
}

inline Interlacing interlacing_class(const RealVector& eigA, const RealVector& eigB) {
    if (eigA.size() == 0 || eigB.size() == 0) return Interlacing::NonInterlaced;
    if (sorted_distance(eigA, eigB) < overlap_tolerance(eigA, eigB)) return Interlacing::Overlapping;
    if (eigA.maxCoeff() < eigB.minCoeff() || eigB.maxCoeff() < eigA.minCoeff()) return Interlacing::NonInterlaced;
    return Interlacing::Interlaced;
}

class HermitianPair {
public:
    HermitianPair(Matrix a, Matrix b, double tol = 1e-10) : A_(std::move(a)), B_(std::move(b)) {
        check(A_, tol, "A");
        check(B_, tol, "B");
        eigA_ = hermitian_eig(A_);
        eigB_ = hermitian_eig(B_);
    }

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }
    const HermitianEig& eigA() const { return eigA_; }
    const HermitianEig& eigB() const { return eigB_; }
    double distance() const { return sorted_distance(eigA_.values, eigB_.values); }
    Interlacing interlacing() const { return interlacing_class(eigA_.values, eigB_.values); }

private:
    static void check(const Matrix& m, double tol, const char* name) {
        if (m.rows() != m.cols()) throw UsageError(std::string("HermitianPair: ") + name + " is not square");
        if (hermitian_defect(m) > tol * std::max(1.0, spectral_norm(m)))
            throw UsageError(std::string("HermitianPair: ") + name + " is not Hermitian");
    }

    Matrix A_, B_;
    HermitianEig eigA_, eigB_;
};

// Solves (A + shift)W − WB = V from eigendecompositions of A and B.
inline Matrix solve_commutation(const HermitianEig& eA, const HermitianEig& eB, const Matrix& V, double shift = 0.0) {
    if (V.rows() != eA.values.size() || V.cols() != eB.values.size())
        throw UsageError("solve_commutation: V has the wrong shape");
    const RealVector a = eA.values.array() + shift;
    if (interlacing_class(a, eB.values) == Interlacing::Overlapping) {
        const double d = sorted_distance(a, eB.values);
        throw ResonanceError("solve_commutation: spectra overlap (dist = " + std::to_string(d) + ")", d);
    }
    Matrix Vt = eA.vectors.adjoint() * V * eB.vectors;
    for (Eigen::Index i = 0; i < Vt.rows(); ++i)
        for (Eigen::Index j = 0; j < Vt.cols(); ++j) Vt(i, j) /= (a(i) - eB.values(j));
    return eA.vectors * Vt * eB.vectors.adjoint();
}

inline Matrix solve_commutation(const HermitianPair& pair, const Matrix& V) {
    return solve_commutation(pair.eigA(), pair.eigB(), V);
}

struct NormCertificate {
    double bound = 0.0;
    Interlacing cls = Interlacing::NonInterlaced;
    double distance = 0.0;
};

inline NormCertificate norm_certificate(const HermitianPair& pair, const Matrix& V) {
    const Interlacing cls = pair.interlacing();
    const double d = pair.distance();
    if (cls == Interlacing::Overlapping) throw ResonanceError("norm_certificate: spectra overlap", d);
    double bound = spectral_norm(V) / d;
    if (cls == Interlacing::Interlaced)
        bound *= std::sqrt(static_cast<double>(std::min(pair.A().rows(), pair.B().rows())));
    return {bound, cls, d};
}

}  // namespace floquet_kam

#include "fhnet/numerics.hpp"

#include "fhnet/errors.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace fhnet::numerics {

double max_abs(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return a.cwiseAbs().maxCoeff();
}

double max_abs(const Vector& v) {
    if (v.size() == 0) return 0.0;
    return v.cwiseAbs().maxCoeff();
}

bool all_finite(const Matrix& a) { return a.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) {
        throw NumericalError(std::string("numerics: non-finite entries in ") + what);
    }
}

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) {
        throw NumericalError(std::string("numerics: non-finite entries in ") + what);
    }
}

double symmetry_defect(const Matrix& a) {
    if (a.rows() != a.cols()) throw NumericalError("numerics: symmetry_defect on non-square matrix");
    return max_abs(Matrix(a - a.transpose()));
}

double relative_symmetry_defect(const Matrix& a) {
    return symmetry_defect(a) / std::max(1.0, max_abs(a));
}

void require_symmetric(const Matrix& a, const char* what) {
    if (a.rows() != a.cols()) {
        throw NumericalError(std::string("numerics: ") + what + " is not square");
    }
    require_finite(a, what);
    const double defect = symmetry_defect(a);
    const double bound = 1e-12 * std::max(1.0, max_abs(a));
    if (defect > bound) {
        std::ostringstream msg;
        msg << "numerics: " << what << " is not symmetric (defect " << defect
            << " > " << bound << ")";
        throw NumericalError(msg.str());
    }
}

EigenDecomposition sym_eig(const Matrix& a) {
    require_symmetric(a, "sym_eig input");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "numerics: sym_eig failed to converge for " << a.rows() << "x" << a.cols()
            << " matrix (implicit QR budget 30*n sweeps exhausted)";
        throw NumericalError(msg.str());
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

Matrix sqrt_psd(const Matrix& a) {
    auto eig = sym_eig(a);
    Vector lam = eig.eigenvalues;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-10) {
            std::ostringstream msg;
            msg << "numerics: sqrt_psd input is not PSD (eigenvalue " << lam[i]
                << " at index " << i << ")";
            throw NumericalError(msg.str());
        }
        if (lam[i] < 0.0) lam[i] = 0.0;  // roundoff-scale negatives
    }
    Matrix s = eig.eigenvectors * lam.cwiseSqrt().asDiagonal() * eig.eigenvectors.transpose();
    return Matrix(0.5 * (s + s.transpose()));
}

namespace {

Eigen::FullPivLU<Matrix> checked_lu(const Matrix& a, SolveReport* report, const char* op) {
    if (a.rows() != a.cols()) {
        throw NumericalError(std::string("numerics: ") + op + " needs a square matrix");
    }
    require_finite(a, op);
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) {
        throw NumericalError(std::string("numerics: ") + op + ": matrix is singular");
    }
    const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double cond = pivots.maxCoeff() / pivots.minCoeff();
    const bool near_singular = cond > 1e12;
    if (report) {
        report->condition_estimate = cond;
        report->near_singular = near_singular;
    } else if (near_singular) {
        std::cerr << "[fhnet] warning: " << op << ": near-singular matrix, condition estimate "
                  << cond << "\n";
    }
    return lu;
}

}  // namespace

Vector solve(const Matrix& a, const Vector& b, SolveReport* report) {
    if (a.rows() != b.size()) throw NumericalError("numerics: solve: dimension mismatch");
    require_finite(b, "solve rhs");
    auto lu = checked_lu(a, report, "solve");
    return lu.solve(b);
}

Matrix inverse(const Matrix& a, SolveReport* report) {
    auto lu = checked_lu(a, report, "inverse");
    return lu.inverse();
}

}  // namespace fhnet::numerics

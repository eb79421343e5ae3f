#pragma once

// Skew-gradient FitzHugh-Nagumo dynamics on a graph.
//
// Conventions (every downstream module depends on these):
//   * Graph Laplacians are PSD (L = B^T Y B); diffusion enters the dynamics
//     dissipatively as -coef * L * x.
//   * The reaction is the exact skew gradient of the free energy density
//       F(u, v) = u^2/2 - u^4/4 - u v + alpha v^2/2 + beta v,
//     i.e. (fu, fv) = (dF/du, -dF/dv) = (u - u^3 - v, u - alpha v - beta).
//   * epsilon is the inhibitor reaction rate: the v-equation advances with
//     eps * fv, so a single isolated node integrates
//       du/dt = u - u^3 - v,   dv/dt = eps (u - alpha v - beta),
//     and the stationary inhibitor balance on a graph is
//       d2 L2 v = eps (u - alpha v - beta).
//   * The activator diffusion coefficient is d1 (Classic) or delta^2
//     (SpatialDelta); everything else is identical between formulations.

#include "fhnet/errors.hpp"
#include "fhnet/numerics.hpp"

#include <cstddef>
#include <sstream>
#include <utility>

namespace fhnet::core {

using numerics::Matrix;
using numerics::Vector;

enum class Formulation { Classic, SpatialDelta };

struct FhnParams {
    double delta = 0.75;
    double epsilon = 0.85;
    double alpha = 1.08;
    double beta = 0.0;
    double d1 = 1.0;
    double d2 = 1.0;
    double tau1 = 1.0;
    double tau2 = 1.0;
    Formulation formulation = Formulation::Classic;

    void validate() const;
    /// d1 for Classic, delta^2 for SpatialDelta.
    double activator_diffusion() const {
        return formulation == Formulation::SpatialDelta ? delta * delta : d1;
    }
};

struct NetworkState {
    Vector u;
    Vector v;
    bool converged = false;

    static NetworkState zero(Eigen::Index n) {
        return {Vector::Zero(n), Vector::Zero(n), false};
    }
};

struct InputCurrent {
    Vector i_u;  // activator injection, constant in time

    static InputCurrent zero(Eigen::Index n) { return {Vector::Zero(n)}; }
};

/// Sum over nodes of the free energy density F(u, v).
double free_energy(const NetworkState& s, const FhnParams& p);

/// (fu, fv) = Q grad F, componentwise.
std::pair<Vector, Vector> reaction(const NetworkState& s, const FhnParams& p);

/// Diagonals of the dynamics Jacobian's reaction part:
/// fprime_i = 1 - 3 u_i^2 (activator), gamma_i = eps * alpha (inhibitor,
/// the v-derivative of the realized inhibitor velocity eps * fv).
std::pair<Vector, Vector> jacobian_blocks(const NetworkState& s, const FhnParams& p);

struct RelaxOptions {
    double dt = 0.1;
    double tol = 1e-8;        // per-step displacement rate threshold
    std::size_t max_steps = 20000;
};

struct RelaxInfo {
    std::size_t steps = 0;
    double last_delta = 0.0;  // ||du||_inf + ||dv||_inf at the final step
};

/// One explicit-Euler step:
///   u += (dt/tau1) (-du_c L1 u + fu - I_u)
///   v += (dt/tau2) (-d2   L2 v + eps fv)
/// Op1/Op2 need only support operator*(Vector) (dense or sparse Laplacians).
template <typename Op1, typename Op2>
NetworkState step(const NetworkState& s, const FhnParams& p, const Op1& l1, const Op2& l2,
                  const InputCurrent& input, double dt) {
    if (dt <= 0.0) throw NumericalError("fhn: step requires dt > 0");
    auto [fu, fv] = reaction(s, p);
    const double du_c = p.activator_diffusion();
    NetworkState out;
    out.u = s.u + (dt / p.tau1) * (-du_c * (l1 * s.u) + fu - input.i_u);
    out.v = s.v + (dt / p.tau2) * (-p.d2 * (l2 * s.v) + p.epsilon * fv);
    if (!out.u.allFinite() || !out.v.allFinite()) {
        throw NumericalError("fhn: divergence (non-finite state after step)");
    }
    return out;
}

/// Iterate step() until ||du||_inf + ||dv||_inf <= tol * dt, tagging the
/// result converged; otherwise return the last state tagged unconverged.
template <typename Op1, typename Op2>
NetworkState relax(const NetworkState& s0, const FhnParams& p, const Op1& l1, const Op2& l2,
                   const InputCurrent& input, const RelaxOptions& opts,
                   RelaxInfo* info = nullptr) {
    NetworkState s = s0;
    s.converged = false;
    double delta = 0.0;
    for (std::size_t k = 0; k < opts.max_steps; ++k) {
        NetworkState next;
        try {
            next = step(s, p, l1, l2, input, opts.dt);
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << e.what() << " at relaxation step " << k;
            throw NumericalError(msg.str());
        }
        delta = numerics::max_abs(Vector(next.u - s.u)) + numerics::max_abs(Vector(next.v - s.v));
        s = std::move(next);
        if (delta <= opts.tol * opts.dt) {
            s.converged = true;
            if (info) *info = {k + 1, delta};
            return s;
        }
    }
    if (info) *info = {opts.max_steps, delta};
    return s;
}

/// Stationarity residual of the activator equation: -du_c L1 u + fu - I_u.
template <typename Op1>
Vector activator_residual(const NetworkState& s, const FhnParams& p, const Op1& l1,
                          const InputCurrent& input) {
    auto [fu, fv] = reaction(s, p);
    (void)fv;
    return -p.activator_diffusion() * (l1 * s.u) + fu - input.i_u;
}

/// Stationarity residual of the inhibitor equation: -d2 L2 v + eps fv.
template <typename Op2>
Vector inhibitor_residual(const NetworkState& s, const FhnParams& p, const Op2& l2) {
    auto [fu, fv] = reaction(s, p);
    (void)fu;
    return -p.d2 * (l2 * s.v) + p.epsilon * fv;
}

struct ResponseResult {
    Matrix response;               // M^{-1}, the linearized activator response d u_s / d I_u
    double symmetry_defect_rel;    // ||M^{-1} - M^{-1T}||_max / ||M^{-1}||_max
};

/// Linearized steady-state response of the activator to injected current.
/// Differentiating the stationary system
///   -du_c L1 u + fu(u, v) = I_u,   -d2 L2 v + eps fv(u, v) = 0
/// and eliminating dv gives the Schur complement
///   M = (-du_c L1 + diag(fprime)) - eps (d2 L2 + diag(gamma))^{-1},
/// which is symmetric whenever L1, L2 are. Returns M^{-1}.
ResponseResult response_matrix(const NetworkState& steady, const FhnParams& p, const Matrix& l1,
                               const Matrix& l2);

/// Finite-difference probe of the same response: column j is
/// (u_s(I + eps e_j) - u_s(I - eps e_j)) / (2 eps), each steady state found
/// by re-relaxation warm-started from `steady`. Throws (naming the column)
/// if any probe relaxation fails to converge.
Matrix response_probe(const NetworkState& steady, const FhnParams& p, const Matrix& l1,
                      const Matrix& l2, const InputCurrent& input, double eps,
                      const RelaxOptions& opts, int threads = 1);

}  // namespace fhnet::core

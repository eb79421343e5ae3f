#pragma once

// Layer-wise inference for deep Hopfield-type energy-based models.
// The change of variables v = rho(u) moves the nonlinearity into a local
// term f(v) = rho^{-1}(v)/rho'(rho^{-1}(v)) - b, after which the stationarity
// condition dE/dv^{l+1} = 0 can be solved forward:
//   v^{l+1} = v^l + p^l
//   p^{l+1} = M^l f(v^{l+1}) + N^l p^l - (N^l + I) v^{l+1},
//   M^l = (W^{l+1})^{-1},  N^l = (W^{l+1})^{-1} (W^l)^T.

#include "fhnet/errors.hpp"
#include "fhnet/numerics.hpp"

#include <cstddef>
#include <vector>

namespace fhnet::ebm {

using numerics::Matrix;
using numerics::Vector;

enum class Activation { Sigmoid, TanhShifted };

double rho(double u, Activation a);
double rho_prime(double u, Activation a);
/// Inverse of rho; throws NumericalError if v is at or beyond the range edge.
double rho_inverse(double v, Activation a);
/// Open range of rho as (lo, hi).
std::pair<double, double> rho_range(Activation a);

Vector rho(const Vector& u, Activation a);
Vector rho_prime(const Vector& u, Activation a);

/// Constant-width deep EBM: weights[l] couples layer l to layer l+1 and must
/// be square and invertible; biases[l] is the per-layer bias.
struct HopfieldEbm {
    std::size_t depth = 0;
    std::size_t width = 0;
    std::vector<Matrix> weights;  // depth-1 square matrices
    std::vector<Vector> biases;   // depth vectors
    Activation activation = Activation::Sigmoid;

    void validate() const;
    Eigen::Index nodes() const { return static_cast<Eigen::Index>(depth * width); }
};

/// E = sum u_i^2 / 2 - sum_l rho(u^l)^T W^l rho(u^{l+1}) - sum_l b_l . rho(u^l),
/// layers sliced out of the flat activation vector (layer-major).
double energy(const HopfieldEbm& net, const Vector& u);

/// dE/du_i = u_i - rho'(u_i) ([W rho]_i + b_i), derived from the implemented
/// energy (the finite-difference tests pin all signs).
Vector energy_gradient(const HopfieldEbm& net, const Vector& u);

struct EbmRelaxResult {
    Vector u;
    bool converged = false;
    bool energy_monotone = true;  // nonincreasing within 1e-12 per step
    std::size_t steps = 0;
    double final_gradient_norm = 0.0;
};

/// Gradient descent on E with layer-0 activations clamped to `input`.
/// Converged when ||dE/du||_inf <= tol on the free nodes.
EbmRelaxResult relax_ebm(const HopfieldEbm& net, const Vector& input, double dt, double tol,
                         std::size_t max_steps);

/// f(v) = rho^{-1}(v)/rho'(rho^{-1}(v)) - b.
double local_nonlinearity(double v, Activation a, double b);
Vector local_nonlinearity(const Vector& v, Activation a, const Vector& b);

struct EbmRecursionMatrices {
    Matrix m;  // (W^{l+1})^{-1}
    Matrix n;  // (W^{l+1})^{-1} (W^l)^T
};

/// Throws (naming the layer) if W^{l+1} is singular or has condition
/// estimate above 1e12.
EbmRecursionMatrices ebm_recursion_matrices(const Matrix& w_l, const Matrix& w_lp1,
                                            std::size_t layer = 0);

struct EbmPhasePoint {
    Vector v;  // transformed activations rho(u)
    Vector p;  // v^{l+1} - v^l (zero at the final layer, where it is unused)
};

/// One step l -> l+1; throws if any component of v^{l+1} leaves rho's range.
EbmPhasePoint ebm_layer_step(const EbmPhasePoint& ph, const EbmRecursionMatrices& mats,
                             const HopfieldEbm& net, std::size_t next_layer);

/// Full forward recursion from (v^0, p^0); returns one phase point per layer.
std::vector<EbmPhasePoint> ebm_integrate(const HopfieldEbm& net, const Vector& v0,
                                         const Vector& p0);

struct EbmReconstructionReport {
    bool relax_converged = false;
    std::vector<double> layer_deviation;     // max |v_rec - rho(u_relax)| per layer
    std::vector<double> balance_residual;    // stationarity closure per interior layer
    double max_deviation = 0.0;
};

/// Relax to equilibrium, seed (v^0, p^0) from its first two layers, rerun the
/// recursion and report per-layer deviations plus the layer-wise balance
/// 0 = f(v^{l+1}) - W^{l+1} p^{l+1} + (W^l)^T p^l - ((W^l)^T + W^{l+1}) v^{l+1}.
EbmReconstructionReport verify_ebm_reconstruction(const HopfieldEbm& net, const Vector& input,
                                                  double dt, double tol, std::size_t max_steps);

}  // namespace fhnet::ebm

#pragma once

// Spatial-Hamiltonian view of stationary FHN solutions on coupled paths:
// the square-root-of-Laplacian velocity, the conserved functional, and the
// layer-wise forward recursion that recomputes a steady state depth-first.
//
// The recursion is the nodal current balance solved for the next drop. At
// node k of layer i+1, with backbone conductance delta^2, couplings G and
// diode (reaction) current fu flowing into the node:
//   delta^2 (p^{i+1} - p^i) + coupling terms + fu^{i+1} = 0
// which, after eliminating u^i and u^{i+2} via the drops, becomes
//   p^{i+1} = M^i (N^i p^i - O^i u^{i+1} - fu^{i+1}).
// The inhibitor balance d2 (q^{i+1} - q^i) + eps fv^{i+1} = 0 gives the
// conservative drop update; the direct-assignment variant
// q^{i+1} = eps fv^{i+1} is kept selectable for comparison.

#include "fhnet/fhn_core.hpp"
#include "fhnet/graph.hpp"
#include "fhnet/numerics.hpp"

#include <cstddef>
#include <vector>

namespace fhnet::ham {

using core::FhnParams;
using core::NetworkState;
using numerics::Matrix;
using numerics::Vector;

/// Per-layer phase-space coordinates: activator/inhibitor values and their
/// forward drops p^i := u^{i+1} - u^i, q^i := v^{i+1} - v^i.
struct PhasePoint {
    Vector u;
    Vector p;
    Vector v;
    Vector q;
};

struct RecursionMatrices {
    Matrix m;  // (G^{i+1} + delta^2 I)^{-1}
    Matrix n;  // (G^i)^T + delta^2 I
    Matrix o;  // (G^i)^T + G^{i+1} - diag(ghat^i + gtilde^{i+1})
};

/// ghat^i = column sums of G^i, gtilde^{i+1} = row sums of G^{i+1}.
/// Throws (naming the layer) if G^{i+1} + delta^2 I is singular.
RecursionMatrices recursion_matrices(const Matrix& g_i, const Matrix& g_ip1, double delta,
                                     std::size_t layer = 0);

enum class InhibitorMode {
    Conservative,  // q^{i+1} = q^i - (eps/d2) fv^{i+1}  (drop update from the balance)
    AsPrinted,     // q^{i+1} = eps fv^{i+1}             (direct assignment)
};

struct HamOptions {
    InhibitorMode inhibitor_mode = InhibitorMode::Conservative;
    /// Halve p^1 and q^1 on the first recursion step. Off by default: with the
    /// ghost-boosted Laplacian used here, the interior balance already holds at
    /// layer 1 and halving breaks the time-dynamics equivalence (see tests).
    bool half_first_step = false;
};

/// One recursion step: layer i -> layer i+1. fu is evaluated at the freshly
/// updated (u^{i+1}, v^{i+1}).
PhasePoint layer_step(const PhasePoint& ph, const RecursionMatrices& mats, const FhnParams& p,
                      bool first_layer, const HamOptions& opts, std::size_t layer = 0);

/// e := L^{1/2} u for a grounded (positive definite) Laplacian.
Vector spatial_velocity(const Vector& u, const Matrix& grounded_laplacian);

/// H = (d_u ||e_u||^2 - d2 ||e_v||^2) / 2 + F(u, v), where d_u is the
/// activator diffusion coefficient of the formulation.
double spatial_hamiltonian(const Vector& u, const Vector& v, const Vector& e_u,
                           const Vector& e_v, const FhnParams& p);

/// Interior nodal current residuals of a single ghost-boundary path at a
/// candidate stationary state: delta_sq (p^i - p^{i-1}) + fu^i for
/// i = 1..n-2. Zero (to relaxation tolerance) iff the state is stationary.
Vector path_current_residuals(const Vector& u, const Vector& v, double delta_sq,
                              const FhnParams& p);

/// Forward recursion over `depth` layers from the initial phase point.
/// Couplings and the backbone are taken from the topology and scaled by the
/// activator diffusion coefficient, so the recursion reproduces exactly the
/// network integrated by the time dynamics. Integration stops early (with a
/// short trajectory) if a non-finite value appears.
std::vector<PhasePoint> integrate_depth(const PhasePoint& initial,
                                        const graph::ResidualTopology& topology,
                                        const FhnParams& params, std::size_t depth,
                                        const HamOptions& opts = {});

/// Extract (u^0, p^0, v^0, q^0) from a converged steady state on the
/// layer-major residual topology.
PhasePoint seed_from_steady_state(const NetworkState& steady, std::size_t depth,
                                  std::size_t width);

struct LayerDeviation {
    std::size_t layer = 0;
    double max_abs_u_deviation = 0.0;
};

struct ComparisonReport {
    std::vector<LayerDeviation> deviations;      // one per layer actually reached
    std::size_t reached_depth = 0;               // layers produced by the recursion
    std::ptrdiff_t first_layer_exceeding = -1;   // -1 if none exceeds the threshold
    std::vector<PhasePoint> recursion;           // the recursion trajectory
    std::vector<Vector> time_layers_u;           // steady-state u, sliced per layer
    std::vector<Vector> time_layers_v;
};

/// Relax the residual network to a steady state, seed the recursion from its
/// first two layers, integrate in depth and report per-layer deviations.
ComparisonReport compare_to_time_dynamics(const graph::ResidualTopology& topology,
                                          const FhnParams& params, const NetworkState& init,
                                          const core::RelaxOptions& relax_opts,
                                          const HamOptions& opts, double threshold);

/// Uncoupled unit-conductance ghost paths for the inhibitor of a residual net.
Matrix inhibitor_laplacian(const graph::ResidualTopology& topology);

}  // namespace fhnet::ham

#pragma once

// Centered-difference Equilibrium Propagation for deep layered FHN networks.
//
// The network graph has coupling edges only between adjacent layers (the
// trainable conductances G^i, which may be negative) and no inhibitor
// coupling, so each node integrates
//   tau1 du/dt = -du_c (L1 u) + (u - u^3 - v) + injected current
//   tau2 dv/dt = eps (u - alpha v - beta)
// with du_c the activator diffusion coefficient (delta^2 for the
// SpatialDelta formulation used in training). Input-layer activators are
// hard-clamped to the sample throughout all phases.
//
// A conductance g between nodes a, b contributes du_c * g * (u_a - u_b)^2 / 2
// to the coupling energy; the centered-difference update is the derivative of
// that quadratic edge drop, measured at the +beta and -beta nudged states:
//   dg = -lr * du_c * (1/(2 beta)) * [ (drop+)^2 / 2 - (drop-)^2 / 2 ].

#include "fhnet/fhn_core.hpp"
#include "fhnet/numerics.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace fhnet::eqprop {

using numerics::Matrix;
using numerics::Vector;

struct DeepFhnNet {
    std::vector<std::size_t> layer_sizes;  // e.g. 784-128-10
    std::vector<Matrix> couplings;         // G^i: layer_sizes[i] x layer_sizes[i+1]
    core::FhnParams params;                // fixed during training

    std::size_t blocks() const { return layer_sizes.size() - 1; }
    std::size_t parameter_count() const;
    void validate() const;
};

struct TrainConfig {
    double beta_nudge = 0.9;
    std::vector<double> layer_lrs = {1e-2, 1e-3, 2e-4, 1e-4, 5e-5, 5e-5};
    std::size_t free_iters = 55;
    std::size_t nudge_iters = 14;
    double dt = 0.1;
    double init_scale = 0.014;
    std::uint64_t seed = 1234;
    std::size_t batch_size = 20;
    double momentum = 0.0;     // 0 = plain SGD on the EqProp estimate
    double update_clip = 0.0;  // per-entry cap on applied updates; 0 = off

    void validate(std::size_t blocks) const;
};

/// Per-layer state matrices; column s is sample s of the batch.
struct BatchState {
    std::vector<Matrix> u;
    std::vector<Matrix> v;
};

/// Draw every coupling entry from init_scale * N(0, 1), seeded; block by
/// block, row-major within a block.
void init_weights(DeepFhnNet& net, const TrainConfig& cfg);

/// Zero-initialized state for a batch of inputs (layer 0 = x, clamped).
BatchState initial_state(const DeepFhnNet& net, const Matrix& x);

/// One explicit-Euler step of all free layers. If y is non-null, the output
/// layer receives the live nudge current sign_beta * (y - u_out). Returns the
/// largest absolute state change.
double step_batch(BatchState& s, const DeepFhnNet& net, const Matrix& x, const Matrix* y,
                  double sign_beta, double dt);

/// Free relaxation for cfg.free_iters steps (inputs clamped throughout).
BatchState free_phase(const DeepFhnNet& net, const Matrix& x, const TrainConfig& cfg);

/// Continue from s_free for cfg.nudge_iters steps with the output nudge
/// sign * cfg.beta_nudge * (y - u_out).
BatchState nudged_phase(const DeepFhnNet& net, const BatchState& s_free, const Matrix& x,
                        const Matrix& y, int sign, const TrainConfig& cfg);

/// Centered-difference coupling updates, averaged over the batch. Entry (a,b)
/// of block i is -lr_i * du_c * (1/(2 beta)) * [d+^2 - d-^2]/2 with
/// d = u_a - u_b across the block.
std::vector<Matrix> eqprop_update(const BatchState& s_plus, const BatchState& s_minus,
                                  const DeepFhnNet& net, const TrainConfig& cfg);

struct EpochMetrics {
    double loss = 0.0;        // mean over samples of ||y - u_out||^2 / 2, free phase
    double error_rate = 0.0;  // argmax mismatch rate, free phase
    std::size_t samples = 0;
};

/// One pass over the dataset: shuffle (seeded by cfg.seed and epoch), then
/// per batch run free and +/- nudged phases and apply the updates. Divergence
/// is surfaced as NumericalError naming the batch. `velocity`, when non-null,
/// carries the per-block momentum buffers across epochs.
EpochMetrics train_epoch(DeepFhnNet& net, const std::vector<Vector>& images,
                         const std::vector<int>& labels, const TrainConfig& cfg,
                         std::size_t epoch, std::vector<Matrix>* velocity = nullptr);

/// Free-phase evaluation; prediction = argmax of the output activators.
EpochMetrics evaluate(const DeepFhnNet& net, const std::vector<Vector>& images,
                      const std::vector<int>& labels, const TrainConfig& cfg);

struct GradientCheckReport {
    std::vector<double> layer_cosine;             // per coupling block
    std::vector<double> layer_rel_magnitude_err;  // ||a-b||_1 / ||b||_1 per block
    std::vector<Matrix> eqprop_estimate;          // d loss / d g, EqProp route
    std::vector<Matrix> fd_gradient;              // d loss / d g, finite differences
};

/// Compare the EqProp gradient estimate at a small nudge against central
/// finite differences of the equilibrium loss (full re-relaxation per
/// perturbed coupling). Both routes converge their phases to `relax_tol`
/// displacement rate rather than using the fixed training iteration counts.
GradientCheckReport gradient_check(const DeepFhnNet& net, const Vector& x, const Vector& y,
                                   double beta_small, double eps_fd, double dt = 0.1,
                                   double relax_tol = 1e-11, std::size_t max_steps = 200000);

/// One-hot encode labels into a 10 x B (or n_out x B) matrix.
Matrix one_hot(const std::vector<int>& labels, std::size_t first, std::size_t count,
               std::size_t classes);

}  // namespace fhnet::eqprop

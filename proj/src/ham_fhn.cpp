#include "fhnet/ham_fhn.hpp"

#include "fhnet/errors.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <sstream>

namespace fhnet::ham {

RecursionMatrices recursion_matrices(const Matrix& g_i, const Matrix& g_ip1, double delta,
                                     std::size_t layer) {
    if (g_i.rows() != g_i.cols() || g_ip1.rows() != g_ip1.cols() || g_i.rows() != g_ip1.rows()) {
        throw NumericalError("ham: recursion_matrices needs square coupling matrices of equal size");
    }
    const Eigen::Index m = g_i.rows();
    const double dsq = delta * delta;

    Matrix forward = g_ip1 + dsq * Matrix::Identity(m, m);
    numerics::SolveReport report;
    Matrix m_inv;
    try {
        m_inv = numerics::inverse(forward, &report);
    } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "ham: recursion matrix (G^{i+1} + delta^2 I) singular at layer " << layer << ": "
            << e.what();
        throw NumericalError(msg.str());
    }

    Matrix n = g_i.transpose() + dsq * Matrix::Identity(m, m);
    Vector ghat = g_i.colwise().sum();     // column sums of G^i
    Vector gtilde = g_ip1.rowwise().sum(); // row sums of G^{i+1}
    Matrix o = g_i.transpose() + g_ip1;
    o.diagonal() -= ghat + gtilde;
    return {std::move(m_inv), std::move(n), std::move(o)};
}

PhasePoint layer_step(const PhasePoint& ph, const RecursionMatrices& mats, const FhnParams& p,
                      bool first_layer, const HamOptions& opts, std::size_t layer) {
    PhasePoint next;
    next.u = ph.u + ph.p;
    next.v = ph.v + ph.q;

    // Reaction at the freshly updated layer. The diode current drawn out of a
    // node is the negative of the reaction term, hence the -fu below.
    NetworkState s{next.u, next.v, false};
    auto [fu, fv] = core::reaction(s, p);

    next.p = mats.m * (mats.n * ph.p - mats.o * next.u - fu);
    switch (opts.inhibitor_mode) {
        case InhibitorMode::Conservative:
            next.q = ph.q - (p.epsilon / p.d2) * fv;
            break;
        case InhibitorMode::AsPrinted:
            next.q = p.epsilon * fv;
            break;
    }
    if (first_layer && opts.half_first_step) {
        next.p *= 0.5;
        next.q *= 0.5;
    }
    if (!next.u.allFinite() || !next.p.allFinite() || !next.v.allFinite() ||
        !next.q.allFinite()) {
        std::ostringstream msg;
        msg << "ham: divergence (non-finite phase point) at layer " << layer;
        throw NumericalError(msg.str());
    }
    return next;
}

Vector spatial_velocity(const Vector& u, const Matrix& grounded_laplacian) {
    const auto eig = numerics::sym_eig(grounded_laplacian);
    const double scale = std::max(1.0, numerics::max_abs(grounded_laplacian));
    if (eig.eigenvalues[0] <= 1e-12 * scale) {
        std::ostringstream msg;
        msg << "ham: spatial_velocity needs a positive definite Laplacian (min eigenvalue "
            << eig.eigenvalues[0] << ")";
        throw NumericalError(msg.str());
    }
    Matrix sqrt_l = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() *
                    eig.eigenvectors.transpose();
    return sqrt_l * u;
}

double spatial_hamiltonian(const Vector& u, const Vector& v, const Vector& e_u,
                           const Vector& e_v, const FhnParams& p) {
    if (u.size() != v.size() || e_u.size() != e_v.size()) {
        throw NumericalError("ham: spatial_hamiltonian dimension mismatch");
    }
    NetworkState s{u, v, false};
    return 0.5 * (p.activator_diffusion() * e_u.squaredNorm() - p.d2 * e_v.squaredNorm()) +
           core::free_energy(s, p);
}

Vector path_current_residuals(const Vector& u, const Vector& v, double delta_sq,
                              const FhnParams& p) {
    const Eigen::Index n = u.size();
    if (n < 3) throw NumericalError("ham: path_current_residuals needs at least 3 nodes");
    NetworkState s{u, v, false};
    auto [fu, fv] = core::reaction(s, p);
    (void)fv;
    Vector res(n - 2);
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double p_prev = u[i] - u[i - 1];
        const double p_cur = u[i + 1] - u[i];
        res[i - 1] = delta_sq * (p_cur - p_prev) + fu[i];
    }
    return res;
}

std::vector<PhasePoint> integrate_depth(const PhasePoint& initial,
                                        const graph::ResidualTopology& topology,
                                        const FhnParams& params, std::size_t depth,
                                        const HamOptions& opts) {
    topology.validate();
    if (depth == 0) return {};
    const Eigen::Index m = static_cast<Eigen::Index>(topology.width);
    if (initial.u.size() != m || initial.p.size() != m || initial.v.size() != m ||
        initial.q.size() != m) {
        throw NumericalError("ham: integrate_depth initial phase point has wrong width");
    }

    // Effective conductances as seen by the time dynamics: the activator
    // diffusion coefficient multiplies both the backbone and the couplings.
    const double du_c = params.activator_diffusion();
    const double delta_eff = std::sqrt(du_c * topology.backbone_conductance);
    const Matrix zero = Matrix::Zero(m, m);

    std::vector<PhasePoint> traj;
    traj.reserve(depth);
    traj.push_back(initial);
    for (std::size_t i = 0; i + 1 < depth; ++i) {
        const Matrix g_i = i < topology.couplings.size() ? Matrix(du_c * topology.couplings[i]) : zero;
        const Matrix g_ip1 =
            i + 1 < topology.couplings.size() ? Matrix(du_c * topology.couplings[i + 1]) : zero;
        auto mats = recursion_matrices(g_i, g_ip1, delta_eff, i);
        PhasePoint next;
        try {
            next = layer_step(traj.back(), mats, params, i == 0, opts, i + 1);
        } catch (const NumericalError&) {
            break;  // divergence past the instability depth: report what was reached
        }
        traj.push_back(std::move(next));
    }
    return traj;
}

PhasePoint seed_from_steady_state(const NetworkState& steady, std::size_t depth,
                                  std::size_t width) {
    if (!steady.converged) {
        throw NumericalError("ham: seed_from_steady_state requires a converged state");
    }
    const auto m = static_cast<Eigen::Index>(width);
    if (steady.u.size() != static_cast<Eigen::Index>(depth * width) || depth < 2) {
        throw NumericalError("ham: seed_from_steady_state state/topology mismatch");
    }
    PhasePoint ph;
    ph.u = steady.u.segment(0, m);
    ph.p = steady.u.segment(m, m) - ph.u;
    ph.v = steady.v.segment(0, m);
    ph.q = steady.v.segment(m, m) - ph.v;
    return ph;
}

Matrix inhibitor_laplacian(const graph::ResidualTopology& topology) {
    graph::ResidualTopology uncoupled;
    uncoupled.depth = topology.depth;
    uncoupled.width = topology.width;
    uncoupled.backbone_conductance = 1.0;
    uncoupled.couplings.assign(topology.depth - 1,
                               Matrix::Zero(static_cast<Eigen::Index>(topology.width),
                                            static_cast<Eigen::Index>(topology.width)));
    return graph::residual_laplacian(uncoupled);
}

ComparisonReport compare_to_time_dynamics(const graph::ResidualTopology& topology,
                                          const FhnParams& params, const NetworkState& init,
                                          const core::RelaxOptions& relax_opts,
                                          const HamOptions& opts, double threshold) {
    topology.validate();
    const auto n = topology.depth;
    const auto m = topology.width;

    const Matrix l1 = graph::residual_laplacian(topology);
    const Matrix l2 = inhibitor_laplacian(topology);
    const Eigen::SparseMatrix<double> l1s = l1.sparseView();
    const Eigen::SparseMatrix<double> l2s = l2.sparseView();

    const auto input = core::InputCurrent::zero(static_cast<Eigen::Index>(n * m));
    NetworkState steady = core::relax(init, params, l1s, l2s, input, relax_opts);
    if (!steady.converged) {
        throw NumericalError("ham: compare_to_time_dynamics: time dynamics did not converge");
    }

    ComparisonReport report;
    for (std::size_t i = 0; i < n; ++i) {
        report.time_layers_u.push_back(
            steady.u.segment(static_cast<Eigen::Index>(i * m), static_cast<Eigen::Index>(m)));
        report.time_layers_v.push_back(
            steady.v.segment(static_cast<Eigen::Index>(i * m), static_cast<Eigen::Index>(m)));
    }

    const PhasePoint seed = seed_from_steady_state(steady, n, m);
    report.recursion = integrate_depth(seed, topology, params, n, opts);
    report.reached_depth = report.recursion.size();

    for (std::size_t i = 0; i < report.recursion.size(); ++i) {
        const double dev =
            numerics::max_abs(Vector(report.recursion[i].u - report.time_layers_u[i]));
        report.deviations.push_back({i, dev});
        if (report.first_layer_exceeding < 0 && dev > threshold) {
            report.first_layer_exceeding = static_cast<std::ptrdiff_t>(i);
        }
    }
    return report;
}

}  // namespace fhnet::ham

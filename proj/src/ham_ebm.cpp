#include "fhnet/ham_ebm.hpp"

#include <cmath>
#include <sstream>

namespace fhnet::ebm {

double rho(double u, Activation a) {
    switch (a) {
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-u));
        case Activation::TanhShifted: return std::tanh(u);
    }
    throw NumericalError("ebm: unknown activation");
}

double rho_prime(double u, Activation a) {
    switch (a) {
        case Activation::Sigmoid: {
            const double s = rho(u, a);
            return s * (1.0 - s);
        }
        case Activation::TanhShifted: {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        }
    }
    throw NumericalError("ebm: unknown activation");
}

std::pair<double, double> rho_range(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return {0.0, 1.0};
        case Activation::TanhShifted: return {-1.0, 1.0};
    }
    throw NumericalError("ebm: unknown activation");
}

double rho_inverse(double v, Activation a) {
    const auto [lo, hi] = rho_range(a);
    if (!(v > lo && v < hi)) {
        std::ostringstream msg;
        msg << "ebm: value " << v << " is outside the open activation range (" << lo << ", "
            << hi << ")";
        throw NumericalError(msg.str());
    }
    switch (a) {
        case Activation::Sigmoid: return std::log(v / (1.0 - v));
        case Activation::TanhShifted: return std::atanh(v);
    }
    throw NumericalError("ebm: unknown activation");
}

Vector rho(const Vector& u, Activation a) {
    Vector out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = rho(u[i], a);
    return out;
}

Vector rho_prime(const Vector& u, Activation a) {
    Vector out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = rho_prime(u[i], a);
    return out;
}

void HopfieldEbm::validate() const {
    if (depth < 2 || width < 1) throw ConfigError("ebm: depth >= 2 and width >= 1 required");
    if (weights.size() != depth - 1) {
        throw ConfigError("ebm: expected depth-1 weight matrices");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != static_cast<Eigen::Index>(width) ||
            weights[l].cols() != static_cast<Eigen::Index>(width)) {
            std::ostringstream msg;
            msg << "ebm: weight block " << l << " is " << weights[l].rows() << "x"
                << weights[l].cols() << "; constant width " << width
                << " requires square blocks (non-square layers are not supported)";
            throw ConfigError(msg.str());
        }
    }
    if (biases.size() != depth) throw ConfigError("ebm: expected one bias vector per layer");
    for (std::size_t l = 0; l < biases.size(); ++l) {
        if (biases[l].size() != static_cast<Eigen::Index>(width)) {
            throw ConfigError("ebm: bias length mismatch");
        }
    }
}

namespace {

inline Eigen::Index layer_offset(const HopfieldEbm& net, std::size_t l) {
    return static_cast<Eigen::Index>(l * net.width);
}

}  // namespace

double energy(const HopfieldEbm& net, const Vector& u) {
    net.validate();
    if (u.size() != net.nodes()) throw NumericalError("ebm: energy state size mismatch");
    const auto w = static_cast<Eigen::Index>(net.width);
    double e = 0.5 * u.squaredNorm();
    Vector r = rho(u, net.activation);
    for (std::size_t l = 0; l + 1 < net.depth; ++l) {
        e -= r.segment(layer_offset(net, l), w).dot(net.weights[l] *
                                                    r.segment(layer_offset(net, l + 1), w));
    }
    for (std::size_t l = 0; l < net.depth; ++l) {
        e -= net.biases[l].dot(r.segment(layer_offset(net, l), w));
    }
    return e;
}

Vector energy_gradient(const HopfieldEbm& net, const Vector& u) {
    net.validate();
    if (u.size() != net.nodes()) throw NumericalError("ebm: gradient state size mismatch");
    const auto w = static_cast<Eigen::Index>(net.width);
    Vector r = rho(u, net.activation);
    Vector rp = rho_prime(u, net.activation);
    Vector grad = u;
    for (std::size_t l = 0; l < net.depth; ++l) {
        Vector field = net.biases[l];
        if (l > 0) field += net.weights[l - 1].transpose() * r.segment(layer_offset(net, l - 1), w);
        if (l + 1 < net.depth) field += net.weights[l] * r.segment(layer_offset(net, l + 1), w);
        grad.segment(layer_offset(net, l), w) -=
            rp.segment(layer_offset(net, l), w).cwiseProduct(field);
    }
    return grad;
}

EbmRelaxResult relax_ebm(const HopfieldEbm& net, const Vector& input, double dt, double tol,
                         std::size_t max_steps) {
    net.validate();
    const auto w = static_cast<Eigen::Index>(net.width);
    if (input.size() != w) throw NumericalError("ebm: relax input must fill the first layer");
    if (!(dt > 0.0)) throw NumericalError("ebm: relax needs dt > 0");

    EbmRelaxResult result;
    result.u = Vector::Zero(net.nodes());
    result.u.segment(0, w) = input;

    double previous_energy = energy(net, result.u);
    for (std::size_t k = 0; k < max_steps; ++k) {
        Vector grad = energy_gradient(net, result.u);
        grad.segment(0, w).setZero();  // clamped inputs
        result.final_gradient_norm = numerics::max_abs(grad);
        if (result.final_gradient_norm <= tol) {
            result.converged = true;
            result.steps = k;
            return result;
        }
        result.u -= dt * grad;
        if (!result.u.allFinite()) {
            throw NumericalError("ebm: relaxation diverged (non-finite state)");
        }
        const double e = energy(net, result.u);
        if (e > previous_energy + 1e-12) result.energy_monotone = false;
        previous_energy = e;
    }
    result.steps = max_steps;
    Vector grad = energy_gradient(net, result.u);
    grad.segment(0, w).setZero();
    result.final_gradient_norm = numerics::max_abs(grad);
    result.converged = result.final_gradient_norm <= tol;
    return result;
}

double local_nonlinearity(double v, Activation a, double b) {
    const double u = rho_inverse(v, a);
    return u / rho_prime(u, a) - b;
}

Vector local_nonlinearity(const Vector& v, Activation a, const Vector& b) {
    if (v.size() != b.size()) throw NumericalError("ebm: local_nonlinearity size mismatch");
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = local_nonlinearity(v[i], a, b[i]);
    return out;
}

EbmRecursionMatrices ebm_recursion_matrices(const Matrix& w_l, const Matrix& w_lp1,
                                            std::size_t layer) {
    numerics::SolveReport report;
    Matrix m;
    try {
        m = numerics::inverse(w_lp1, &report);
    } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "ebm: W^{l+1} singular at layer " << layer << ": " << e.what();
        throw NumericalError(msg.str());
    }
    if (report.near_singular) {
        std::ostringstream msg;
        msg << "ebm: W^{l+1} at layer " << layer << " is numerically singular (condition estimate "
            << report.condition_estimate << " > 1e12)";
        throw NumericalError(msg.str());
    }
    Matrix n = m * w_l.transpose();
    return {std::move(m), std::move(n)};
}

EbmPhasePoint ebm_layer_step(const EbmPhasePoint& ph, const EbmRecursionMatrices& mats,
                             const HopfieldEbm& net, std::size_t next_layer) {
    EbmPhasePoint next;
    next.v = ph.v + ph.p;
    const auto [lo, hi] = rho_range(net.activation);
    for (Eigen::Index i = 0; i < next.v.size(); ++i) {
        if (!(next.v[i] > lo && next.v[i] < hi)) {
            std::ostringstream msg;
            msg << "ebm: recursion left the activation range at layer " << next_layer
                << " (component " << i << " = " << next.v[i] << ")";
            throw NumericalError(msg.str());
        }
    }
    Vector f = local_nonlinearity(next.v, net.activation, net.biases[next_layer]);
    const Matrix& n = mats.n;
    next.p = mats.m * f + n * ph.p - (n + Matrix::Identity(n.rows(), n.cols())) * next.v;
    if (!next.p.allFinite()) {
        std::ostringstream msg;
        msg << "ebm: divergence at layer " << next_layer;
        throw NumericalError(msg.str());
    }
    return next;
}

std::vector<EbmPhasePoint> ebm_integrate(const HopfieldEbm& net, const Vector& v0,
                                         const Vector& p0) {
    net.validate();
    const auto w = static_cast<Eigen::Index>(net.width);
    if (v0.size() != w || p0.size() != w) throw NumericalError("ebm: seed size mismatch");

    std::vector<EbmPhasePoint> traj;
    traj.reserve(net.depth);
    traj.push_back({v0, p0});
    for (std::size_t l = 0; l + 1 < net.depth; ++l) {
        if (l + 1 <= net.depth - 2) {
            auto mats = ebm_recursion_matrices(net.weights[l], net.weights[l + 1], l);
            traj.push_back(ebm_layer_step(traj.back(), mats, net, l + 1));
        } else {
            // Final layer: only the value update remains; the balance there is
            // the boundary condition, not a new unknown.
            EbmPhasePoint last;
            last.v = traj.back().v + traj.back().p;
            last.p = Vector::Zero(w);
            traj.push_back(std::move(last));
        }
    }
    return traj;
}

EbmReconstructionReport verify_ebm_reconstruction(const HopfieldEbm& net, const Vector& input,
                                                  double dt, double tol, std::size_t max_steps) {
    net.validate();
    const auto w = static_cast<Eigen::Index>(net.width);

    EbmReconstructionReport report;
    const EbmRelaxResult eq = relax_ebm(net, input, dt, tol, max_steps);
    report.relax_converged = eq.converged;
    if (!eq.converged) return report;

    Vector r = rho(eq.u, net.activation);
    std::vector<Vector> v_layers(net.depth);
    for (std::size_t l = 0; l < net.depth; ++l) {
        v_layers[l] = r.segment(static_cast<Eigen::Index>(l * net.width), w);
    }

    const Vector v0 = v_layers[0];
    const Vector p0 = v_layers[1] - v_layers[0];
    const auto traj = ebm_integrate(net, v0, p0);

    for (std::size_t l = 0; l < traj.size(); ++l) {
        const double dev = numerics::max_abs(Vector(traj[l].v - v_layers[l]));
        report.layer_deviation.push_back(dev);
        report.max_deviation = std::max(report.max_deviation, dev);
    }

    // Stationarity closure at interior layers, evaluated on the relaxed state.
    for (std::size_t l = 0; l + 2 < net.depth; ++l) {
        const Vector& v_mid = v_layers[l + 1];
        const Vector p_l = v_layers[l + 1] - v_layers[l];
        const Vector p_lp1 = v_layers[l + 2] - v_layers[l + 1];
        Vector f = local_nonlinearity(v_mid, net.activation, net.biases[l + 1]);
        Vector residual = f - net.weights[l + 1] * p_lp1 + net.weights[l].transpose() * p_l -
                          (net.weights[l].transpose() + net.weights[l + 1]) * v_mid;
        report.balance_residual.push_back(numerics::max_abs(residual));
    }
    return report;
}

}  // namespace fhnet::ebm

#include "fhnet/eqprop.hpp"

#include "fhnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fhnet::eqprop {

std::size_t DeepFhnNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : couplings) n += static_cast<std::size_t>(g.size());
    return n;
}

void DeepFhnNet::validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("eqprop: need at least two layers");
    if (couplings.size() != layer_sizes.size() - 1) {
        throw ConfigError("eqprop: expected one coupling block per adjacent layer pair");
    }
    for (std::size_t i = 0; i < couplings.size(); ++i) {
        if (couplings[i].rows() != static_cast<Eigen::Index>(layer_sizes[i]) ||
            couplings[i].cols() != static_cast<Eigen::Index>(layer_sizes[i + 1])) {
            std::ostringstream msg;
            msg << "eqprop: coupling block " << i << " is " << couplings[i].rows() << "x"
                << couplings[i].cols() << ", expected " << layer_sizes[i] << "x"
                << layer_sizes[i + 1];
            throw ConfigError(msg.str());
        }
    }
    params.validate();
}

void TrainConfig::validate(std::size_t blocks) const {
    if (beta_nudge == 0.0) throw ConfigError("eqprop: beta_nudge must be nonzero");
    if (layer_lrs.size() < blocks) {
        std::ostringstream msg;
        msg << "eqprop: " << blocks << " coupling blocks need " << blocks
            << " learning rates, got " << layer_lrs.size();
        throw ConfigError(msg.str());
    }
    for (double lr : layer_lrs) {
        if (!(lr >= 0.0)) throw ConfigError("eqprop: learning rates must be nonnegative");
    }
    if (batch_size == 0) throw ConfigError("eqprop: batch_size must be positive");
}

void init_weights(DeepFhnNet& net, const TrainConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    net.couplings.clear();
    for (std::size_t i = 0; i + 1 < net.layer_sizes.size(); ++i) {
        Matrix g(static_cast<Eigen::Index>(net.layer_sizes[i]),
                 static_cast<Eigen::Index>(net.layer_sizes[i + 1]));
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = cfg.init_scale * normal(rng);
        }
        net.couplings.push_back(std::move(g));
    }
    net.validate();
}

BatchState initial_state(const DeepFhnNet& net, const Matrix& x) {
    net.validate();
    if (x.rows() != static_cast<Eigen::Index>(net.layer_sizes.front())) {
        throw ConfigError("eqprop: input row count does not match the input layer");
    }
    BatchState s;
    const Eigen::Index batch = x.cols();
    for (std::size_t l = 0; l < net.layer_sizes.size(); ++l) {
        const auto n = static_cast<Eigen::Index>(net.layer_sizes[l]);
        s.u.push_back(l == 0 ? x : Matrix::Zero(n, batch));
        s.v.push_back(Matrix::Zero(n, batch));
    }
    return s;
}

namespace {

/// Laplacian degree of each node: column sums of the backward block plus row
/// sums of the forward block.
std::vector<Vector> node_degrees(const DeepFhnNet& net) {
    std::vector<Vector> deg(net.layer_sizes.size());
    for (std::size_t l = 0; l < net.layer_sizes.size(); ++l) {
        Vector d = Vector::Zero(static_cast<Eigen::Index>(net.layer_sizes[l]));
        if (l > 0) d += net.couplings[l - 1].colwise().sum().transpose();
        if (l + 1 < net.layer_sizes.size()) d += net.couplings[l].rowwise().sum();
        deg[l] = d;
    }
    return deg;
}

}  // namespace

double step_batch(BatchState& s, const DeepFhnNet& net, const Matrix& x, const Matrix* y,
                  double sign_beta, double dt) {
    const double du_c = net.params.activator_diffusion();
    const double eps = net.params.epsilon;
    const double alpha = net.params.alpha;
    const double beta0 = net.params.beta;
    const double inv_tau1 = 1.0 / net.params.tau1;
    const double inv_tau2 = 1.0 / net.params.tau2;
    const std::size_t layers = net.layer_sizes.size();
    const auto deg = node_degrees(net);

    s.u[0] = x;  // clamped inputs
    double max_delta = 0.0;
    std::vector<Matrix> new_u(layers);
    for (std::size_t l = 1; l < layers; ++l) {
        const Matrix& u = s.u[l];
        const Matrix& v = s.v[l];

        // -(L1 u)_l = backward + forward coupling currents minus the degree term
        Matrix current = net.couplings[l - 1].transpose() * s.u[l - 1];
        if (l + 1 < layers) current += net.couplings[l] * s.u[l + 1];
        current -= deg[l].asDiagonal() * u;

        Matrix fu = u - u.array().cube().matrix() - v;
        Matrix du = inv_tau1 * dt * (du_c * current + fu);
        if (y && l == layers - 1) {
            du += inv_tau1 * dt * sign_beta * (*y - u);
        }
        Matrix fv = u - alpha * v;
        fv.array() -= beta0;
        Matrix dv = inv_tau2 * dt * eps * fv;

        new_u[l] = u + du;
        s.v[l] += dv;
        max_delta = std::max({max_delta, numerics::max_abs(du), numerics::max_abs(dv)});
    }
    for (std::size_t l = 1; l < layers; ++l) s.u[l] = std::move(new_u[l]);

    for (std::size_t l = 1; l < layers; ++l) {
        if (!s.u[l].allFinite() || !s.v[l].allFinite()) {
            throw NumericalError("eqprop: divergence (non-finite state)");
        }
    }
    return max_delta;
}

BatchState free_phase(const DeepFhnNet& net, const Matrix& x, const TrainConfig& cfg) {
    BatchState s = initial_state(net, x);
    for (std::size_t k = 0; k < cfg.free_iters; ++k) {
        step_batch(s, net, x, nullptr, 0.0, cfg.dt);
    }
    return s;
}

BatchState nudged_phase(const DeepFhnNet& net, const BatchState& s_free, const Matrix& x,
                        const Matrix& y, int sign, const TrainConfig& cfg) {
    if (y.rows() != static_cast<Eigen::Index>(net.layer_sizes.back()) ||
        y.cols() != s_free.u[0].cols()) {
        throw ConfigError("eqprop: target shape mismatch");
    }
    BatchState s = s_free;
    const double sign_beta = static_cast<double>(sign) * cfg.beta_nudge;
    for (std::size_t k = 0; k < cfg.nudge_iters; ++k) {
        step_batch(s, net, x, &y, sign_beta, cfg.dt);
    }
    return s;
}

namespace {

/// Half squared edge drops summed over the batch: block (a, b) entry is
/// sum_s (u_l(a,s) - u_{l+1}(b,s))^2 / 2.
Matrix half_square_drops(const Matrix& upper, const Matrix& lower) {
    const Vector rsq_a = upper.rowwise().squaredNorm();
    const Vector rsq_b = lower.rowwise().squaredNorm();
    Matrix e = -upper * lower.transpose();
    e.colwise() += 0.5 * rsq_a;
    e.rowwise() += 0.5 * rsq_b.transpose();
    return e;
}

}  // namespace

std::vector<Matrix> eqprop_update(const BatchState& s_plus, const BatchState& s_minus,
                                  const DeepFhnNet& net, const TrainConfig& cfg) {
    cfg.validate(net.blocks());
    const double du_c = net.params.activator_diffusion();
    const auto batch = static_cast<double>(s_plus.u[0].cols());
    std::vector<Matrix> deltas;
    deltas.reserve(net.blocks());
    for (std::size_t l = 0; l < net.blocks(); ++l) {
        Matrix grad = half_square_drops(s_plus.u[l], s_plus.u[l + 1]) -
                      half_square_drops(s_minus.u[l], s_minus.u[l + 1]);
        grad *= du_c / (2.0 * cfg.beta_nudge * batch);
        deltas.push_back(Matrix(-cfg.layer_lrs[l] * grad));
    }
    return deltas;
}

Matrix one_hot(const std::vector<int>& labels, std::size_t first, std::size_t count,
               std::size_t classes) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(count));
    for (std::size_t s = 0; s < count; ++s) {
        const int label = labels[first + s];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw ConfigError("eqprop: label out of range");
        }
        y(label, static_cast<Eigen::Index>(s)) = 1.0;
    }
    return y;
}

namespace {

Matrix batch_of_images(const std::vector<Vector>& images, const std::vector<std::size_t>& order,
                       std::size_t first, std::size_t count) {
    Matrix x(images[order[first]].size(), static_cast<Eigen::Index>(count));
    for (std::size_t s = 0; s < count; ++s) x.col(static_cast<Eigen::Index>(s)) = images[order[first + s]];
    return x;
}

void accumulate_metrics(EpochMetrics& m, const BatchState& s_free, const Matrix& y,
                        const std::vector<int>& labels, const std::vector<std::size_t>& order,
                        std::size_t first, std::size_t count) {
    const Matrix& out = s_free.u.back();
    for (std::size_t s = 0; s < count; ++s) {
        const auto col = static_cast<Eigen::Index>(s);
        m.loss += 0.5 * (y.col(col) - out.col(col)).squaredNorm();
        Eigen::Index pred = 0;
        out.col(col).maxCoeff(&pred);
        if (pred != labels[order[first + s]]) m.error_rate += 1.0;
    }
    m.samples += count;
}

void finalize_metrics(EpochMetrics& m) {
    if (m.samples > 0) {
        m.loss /= static_cast<double>(m.samples);
        m.error_rate /= static_cast<double>(m.samples);
    }
}

}  // namespace

EpochMetrics train_epoch(DeepFhnNet& net, const std::vector<Vector>& images,
                         const std::vector<int>& labels, const TrainConfig& cfg,
                         std::size_t epoch, std::vector<Matrix>* velocity) {
    net.validate();
    cfg.validate(net.blocks());
    if (images.size() != labels.size() || images.empty()) {
        throw ConfigError("eqprop: empty or mismatched dataset");
    }
    if (velocity && velocity->empty()) {
        for (std::size_t l = 0; l < net.blocks(); ++l) {
            velocity->push_back(Matrix::Zero(net.couplings[l].rows(), net.couplings[l].cols()));
        }
    }
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t classes = net.layer_sizes.back();
    EpochMetrics metrics;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < images.size(); first += cfg.batch_size, ++batch_index) {
        const std::size_t count = std::min(cfg.batch_size, images.size() - first);
        const Matrix x = batch_of_images(images, order, first, count);
        std::vector<int> batch_labels(count);
        for (std::size_t s = 0; s < count; ++s) batch_labels[s] = labels[order[first + s]];
        const Matrix y = one_hot(batch_labels, 0, count, classes);

        try {
            const BatchState s_free = free_phase(net, x, cfg);
            accumulate_metrics(metrics, s_free, y, labels, order, first, count);
            const BatchState s_plus = nudged_phase(net, s_free, x, y, +1, cfg);
            const BatchState s_minus = nudged_phase(net, s_free, x, y, -1, cfg);
            auto deltas = eqprop_update(s_plus, s_minus, net, cfg);
            if (cfg.update_clip > 0.0) {
                for (auto& d : deltas) {
                    d = d.cwiseMax(-cfg.update_clip).cwiseMin(cfg.update_clip);
                }
            }
            for (std::size_t l = 0; l < net.blocks(); ++l) {
                if (velocity && cfg.momentum != 0.0) {
                    (*velocity)[l] = cfg.momentum * (*velocity)[l] + deltas[l];
                    net.couplings[l] += (*velocity)[l];
                } else {
                    net.couplings[l] += deltas[l];
                }
            }
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << e.what() << " in batch " << batch_index << " of epoch " << epoch;
            throw NumericalError(msg.str());
        }
    }
    finalize_metrics(metrics);
    return metrics;
}

EpochMetrics evaluate(const DeepFhnNet& net, const std::vector<Vector>& images,
                      const std::vector<int>& labels, const TrainConfig& cfg) {
    net.validate();
    if (images.size() != labels.size()) throw ConfigError("eqprop: mismatched dataset");
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t classes = net.layer_sizes.back();
    EpochMetrics metrics;
    for (std::size_t first = 0; first < images.size(); first += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, images.size() - first);
        const Matrix x = batch_of_images(images, order, first, count);
        std::vector<int> batch_labels(count);
        for (std::size_t s = 0; s < count; ++s) batch_labels[s] = labels[first + s];
        const Matrix y = one_hot(batch_labels, 0, count, classes);
        const BatchState s_free = free_phase(net, x, cfg);
        accumulate_metrics(metrics, s_free, y, labels, order, first, count);
    }
    finalize_metrics(metrics);
    return metrics;
}

namespace {

/// Run the dynamics to a displacement-rate tolerance instead of a fixed
/// iteration count (used by the gradient oracle, which needs true equilibria).
BatchState converge_phase(const DeepFhnNet& net, const BatchState& start, const Matrix& x,
                          const Matrix* y, double sign_beta, double dt, double tol,
                          std::size_t max_steps) {
    BatchState s = start;
    for (std::size_t k = 0; k < max_steps; ++k) {
        const double delta = step_batch(s, net, x, y, sign_beta, dt);
        if (delta <= tol * dt) return s;
    }
    throw NumericalError("eqprop: phase failed to converge within the step budget");
}

double equilibrium_loss(const DeepFhnNet& net, const BatchState& warm, const Matrix& x,
                        const Matrix& y, double dt, double tol, std::size_t max_steps) {
    const BatchState s = converge_phase(net, warm, x, nullptr, 0.0, dt, tol, max_steps);
    return 0.5 * (y - s.u.back()).squaredNorm();
}

}  // namespace

GradientCheckReport gradient_check(const DeepFhnNet& net, const Vector& x, const Vector& y,
                                   double beta_small, double eps_fd, double dt, double relax_tol,
                                   std::size_t max_steps) {
    net.validate();
    if (beta_small == 0.0 || eps_fd <= 0.0) {
        throw ConfigError("eqprop: gradient_check needs beta_small != 0 and eps_fd > 0");
    }
    const Matrix xm = x;
    const Matrix ym = y;

    const BatchState s_zero = initial_state(net, xm);
    const BatchState s_free = converge_phase(net, s_zero, xm, nullptr, 0.0, dt, relax_tol, max_steps);
    const BatchState s_plus =
        converge_phase(net, s_free, xm, &ym, +beta_small, dt, relax_tol, max_steps);
    const BatchState s_minus =
        converge_phase(net, s_free, xm, &ym, -beta_small, dt, relax_tol, max_steps);

    // EqProp estimate of d loss / d g (the update without the learning rate).
    const double du_c = net.params.activator_diffusion();
    GradientCheckReport report;
    for (std::size_t l = 0; l < net.blocks(); ++l) {
        Matrix est = half_square_drops(s_plus.u[l], s_plus.u[l + 1]) -
                     half_square_drops(s_minus.u[l], s_minus.u[l + 1]);
        est *= du_c / (2.0 * beta_small);
        report.eqprop_estimate.push_back(std::move(est));
    }

    // Finite differences of the equilibrium loss, re-relaxed per coupling
    // (warm-started from the free state, which keeps the same basin).
    DeepFhnNet probe = net;
    for (std::size_t l = 0; l < net.blocks(); ++l) {
        Matrix grad(net.couplings[l].rows(), net.couplings[l].cols());
        for (Eigen::Index a = 0; a < grad.rows(); ++a) {
            for (Eigen::Index b = 0; b < grad.cols(); ++b) {
                const double saved = probe.couplings[l](a, b);
                probe.couplings[l](a, b) = saved + eps_fd;
                const double loss_plus =
                    equilibrium_loss(probe, s_free, xm, ym, dt, relax_tol, max_steps);
                probe.couplings[l](a, b) = saved - eps_fd;
                const double loss_minus =
                    equilibrium_loss(probe, s_free, xm, ym, dt, relax_tol, max_steps);
                probe.couplings[l](a, b) = saved;
                grad(a, b) = (loss_plus - loss_minus) / (2.0 * eps_fd);
            }
        }
        report.fd_gradient.push_back(std::move(grad));
    }

    for (std::size_t l = 0; l < net.blocks(); ++l) {
        const Matrix& a = report.eqprop_estimate[l];
        const Matrix& b = report.fd_gradient[l];
        const double denom = a.norm() * b.norm();
        report.layer_cosine.push_back(denom > 0.0 ? a.cwiseProduct(b).sum() / denom : 1.0);
        const double b1 = b.cwiseAbs().sum();
        report.layer_rel_magnitude_err.push_back(
            b1 > 0.0 ? (a - b).cwiseAbs().sum() / b1 : numerics::max_abs(Matrix(a - b)));
    }
    return report;
}

}  // namespace fhnet::eqprop

#include "fhnet/fhn_core.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>
#include <vector>

namespace fhnet::core {

void FhnParams::validate() const {
    if (!(d1 > 0.0) || !(d2 > 0.0) || !(tau1 > 0.0) || !(tau2 > 0.0)) {
        throw ConfigError("fhn: d1, d2, tau1, tau2 must be positive");
    }
    if (!(epsilon > 0.0)) throw ConfigError("fhn: epsilon must be positive");
}

double free_energy(const NetworkState& s, const FhnParams& p) {
    if (s.u.size() != s.v.size()) throw NumericalError("fhn: free_energy state size mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < s.u.size(); ++i) {
        const double u = s.u[i];
        const double v = s.v[i];
        total += 0.5 * u * u - 0.25 * u * u * u * u - u * v + 0.5 * p.alpha * v * v + p.beta * v;
    }
    return total;
}

std::pair<Vector, Vector> reaction(const NetworkState& s, const FhnParams& p) {
    if (s.u.size() != s.v.size()) throw NumericalError("fhn: reaction state size mismatch");
    Vector fu = s.u - s.u.array().cube().matrix() - s.v;
    Vector fv = s.u - p.alpha * s.v - Vector::Constant(s.v.size(), p.beta);
    return {std::move(fu), std::move(fv)};
}

std::pair<Vector, Vector> jacobian_blocks(const NetworkState& s, const FhnParams& p) {
    Vector fprime = Vector::Ones(s.u.size()) - 3.0 * s.u.array().square().matrix();
    Vector gamma = Vector::Constant(s.u.size(), p.epsilon * p.alpha);
    return {std::move(fprime), std::move(gamma)};
}

ResponseResult response_matrix(const NetworkState& steady, const FhnParams& p, const Matrix& l1,
                               const Matrix& l2) {
    if (!steady.converged) {
        throw NumericalError("fhn: response_matrix requires a converged steady state");
    }
    numerics::require_symmetric(l1, "response_matrix L1");
    numerics::require_symmetric(l2, "response_matrix L2");
    auto [fprime, gamma] = jacobian_blocks(steady, p);

    Matrix inner = p.d2 * l2;
    inner.diagonal() += gamma;
    numerics::SolveReport inner_report;
    Matrix inner_inv;
    try {
        inner_inv = numerics::inverse(inner, &inner_report);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("fhn: response_matrix inner matrix (d2 L2 + gamma): ") +
                             e.what());
    }

    Matrix m = -p.activator_diffusion() * l1;
    m.diagonal() += fprime;
    m -= p.epsilon * inner_inv;

    numerics::SolveReport outer_report;
    Matrix response;
    try {
        response = numerics::inverse(m, &outer_report);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("fhn: response_matrix outer matrix M: ") + e.what());
    }

    const double scale = numerics::max_abs(response);
    const double defect = scale > 0.0 ? numerics::symmetry_defect(response) / scale : 0.0;
    return {std::move(response), defect};
}

Matrix response_probe(const NetworkState& steady, const FhnParams& p, const Matrix& l1,
                      const Matrix& l2, const InputCurrent& input, double eps,
                      const RelaxOptions& opts, int threads) {
    if (!steady.converged) {
        throw NumericalError("fhn: response_probe requires a converged steady state");
    }
    if (!(eps > 0.0)) throw NumericalError("fhn: response_probe requires eps > 0");
    const Eigen::Index n = steady.u.size();
    Matrix probe(n, n);

    std::atomic<Eigen::Index> next_col{0};
    std::atomic<bool> failed{false};
    std::vector<std::string> errors(static_cast<std::size_t>(n));

    auto worker = [&]() {
        while (true) {
            const Eigen::Index j = next_col.fetch_add(1);
            if (j >= n || failed.load()) break;
            InputCurrent plus = input;
            InputCurrent minus = input;
            plus.i_u[j] += eps;
            minus.i_u[j] -= eps;
            NetworkState s_plus = relax(steady, p, l1, l2, plus, opts);
            NetworkState s_minus = relax(steady, p, l1, l2, minus, opts);
            if (!s_plus.converged || !s_minus.converged) {
                std::ostringstream msg;
                msg << "fhn: response_probe relaxation failed for column " << j;
                errors[static_cast<std::size_t>(j)] = msg.str();
                failed.store(true);
                break;
            }
            probe.col(j) = (s_plus.u - s_minus.u) / (2.0 * eps);
        }
    };

    const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) {
        for (const auto& e : errors) {
            if (!e.empty()) throw NumericalError(e);
        }
        throw NumericalError("fhn: response_probe relaxation failed");
    }
    return probe;
}

}  // namespace fhnet::core

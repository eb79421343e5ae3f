#include "fhnet/ham_fhn.hpp"

#include "fhnet/errors.hpp"
#include "fhnet/experiments.hpp"
#include "fhnet/graph.hpp"

#include <doctest.h>

#include <cmath>

using namespace fhnet;
using core::FhnParams;
using core::InputCurrent;
using core::NetworkState;
using numerics::Matrix;
using numerics::Vector;

namespace {

FhnParams turing_params() { return FhnParams{}; }  // classic defaults, d1 = 1

/// Residual topology in the trained regime: activator backbone delta^2,
/// small random couplings.
graph::ResidualTopology small_residual(std::size_t depth, std::size_t width, double scale,
                                       std::uint64_t seed) {
    const FhnParams p = turing_params();
    return experiments::make_residual_topology(depth, width, p.delta * p.delta, scale, seed);
}

NetworkState relax_residual(const graph::ResidualTopology& topo, const FhnParams& p,
                            const core::RelaxOptions& opts, std::uint64_t seed) {
    const Matrix l1 = graph::residual_laplacian(topo);
    const Matrix l2 = ham::inhibitor_laplacian(topo);
    NetworkState init;
    init.u = experiments::seeded_normal(l1.rows(), seed, 0.5);
    init.v = Vector::Zero(l1.rows());
    return core::relax(init, p, l1, l2, InputCurrent::zero(l1.rows()), opts);
}

}  // namespace

TEST_SUITE("ham_fhn") {

TEST_CASE("recursion matrices: uncoupled and identity cases") {
    const Matrix zero = Matrix::Zero(3, 3);
    const double delta = 0.75;
    const auto mats = ham::recursion_matrices(zero, zero, delta);
    CHECK(numerics::max_abs(Matrix(mats.m - Matrix::Identity(3, 3) / (delta * delta))) <= 1e-12);
    CHECK(numerics::max_abs(Matrix(mats.n - delta * delta * Matrix::Identity(3, 3))) <= 1e-12);
    CHECK(numerics::max_abs(mats.o) == 0.0);

    const auto unit = ham::recursion_matrices(zero, zero, 1.0);
    CHECK(numerics::max_abs(Matrix(unit.m - Matrix::Identity(3, 3))) <= 1e-12);
}

TEST_CASE("recursion matrices: random couplings satisfy the inverse contract") {
    Matrix gi(4, 4), gip1(4, 4);
    {
        const Vector a = experiments::seeded_normal(16, 5, 0.3);
        const Vector b = experiments::seeded_normal(16, 6, 0.3);
        gi = Eigen::Map<const Matrix>(a.data(), 4, 4);
        gip1 = Eigen::Map<const Matrix>(b.data(), 4, 4);
    }
    const double delta = 0.9;
    const auto mats = ham::recursion_matrices(gi, gip1, delta);
    const Matrix forward = gip1 + delta * delta * Matrix::Identity(4, 4);
    CHECK(numerics::max_abs(Matrix(mats.m * forward - Matrix::Identity(4, 4))) <= 1e-10);

    // ghat = column sums of G^i, gtilde = row sums of G^{i+1}
    Matrix o_expected = gi.transpose() + gip1;
    for (Eigen::Index k = 0; k < 4; ++k) {
        o_expected(k, k) -= gi.col(k).sum() + gip1.row(k).sum();
    }
    CHECK(numerics::max_abs(Matrix(mats.o - o_expected)) <= 1e-12);
}

TEST_CASE("recursion matrices: singular forward coupling names the layer") {
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = -0.25;  // G + delta^2 I singular for delta = 0.5
    bad(1, 1) = -0.25;
    CHECK_THROWS_WITH_AS(ham::recursion_matrices(Matrix::Zero(2, 2), bad, 0.5, 7),
                         doctest::Contains("layer 7"), NumericalError);
}

TEST_CASE("layer step holds a homogeneous fixed point with zero couplings") {
    FhnParams p = turing_params();
    // Solve fu = fv = 0: v = u/alpha, u(1 - u^2 - 1/alpha) = 0.
    const double ustar = std::sqrt(1.0 - 1.0 / p.alpha);
    const double vstar = ustar / p.alpha;

    const Matrix zero = Matrix::Zero(2, 2);
    const auto mats = ham::recursion_matrices(zero, zero, p.delta);
    ham::PhasePoint ph;
    ph.u = Vector::Constant(2, ustar);
    ph.v = Vector::Constant(2, vstar);
    ph.p = Vector::Zero(2);
    ph.q = Vector::Zero(2);

    const auto next = ham::layer_step(ph, mats, p, false, {});
    CHECK(numerics::max_abs(Vector(next.u - ph.u)) <= 1e-12);
    CHECK(numerics::max_abs(next.p) <= 1e-12);
    CHECK(numerics::max_abs(next.q) <= 1e-12);
}

TEST_CASE("uncoupled single path reduces to the scalar drop recursion") {
    FhnParams p = turing_params();
    const Matrix zero = Matrix::Zero(1, 1);
    const auto mats = ham::recursion_matrices(zero, zero, p.delta);
    ham::PhasePoint ph;
    ph.u = Vector::Constant(1, 0.4);
    ph.p = Vector::Constant(1, 0.1);
    ph.v = Vector::Constant(1, 0.2);
    ph.q = Vector::Constant(1, -0.05);

    const auto next = ham::layer_step(ph, mats, p, false, {});
    const double dsq = p.delta * p.delta;
    const double u1 = 0.4 + 0.1;
    const double v1 = 0.2 - 0.05;
    const double fu1 = u1 - u1 * u1 * u1 - v1;
    // delta^2 p' = delta^2 p - fu(u', v')
    CHECK(next.p[0] == doctest::Approx((dsq * 0.1 - fu1) / dsq).epsilon(1e-14));
    CHECK(next.u[0] == doctest::Approx(u1).epsilon(1e-15));
    // conservative inhibitor drop: q' = q - eps (u' - alpha v' - beta)
    CHECK(next.q[0] ==
          doctest::Approx(-0.05 - p.epsilon * (u1 - p.alpha * v1 - p.beta)).epsilon(1e-14));
}

TEST_CASE("spatial velocity: basics and multiply-back") {
    CHECK(numerics::max_abs(ham::spatial_velocity(Vector::Zero(4),
                                                  graph::path_laplacian_ghost(4))) == 0.0);
    const Vector u = experiments::seeded_normal(4, 55, 1.0);
    CHECK(numerics::max_abs(Vector(ham::spatial_velocity(u, Matrix::Identity(4, 4)) - u)) <=
          1e-12);

    const Matrix l = graph::path_laplacian_ghost(6);
    const Vector w = experiments::seeded_normal(6, 56, 1.0);
    const Vector e = ham::spatial_velocity(w, l);
    const Matrix sqrt_l = numerics::sqrt_psd(l);
    CHECK(numerics::max_abs(Vector(sqrt_l * e - l * w)) <= 1e-8);
}

TEST_CASE("spatial velocity rejects a singular grounded Laplacian") {
    graph::WeightedGraph g{3, {{0, 1, 1.0}, {1, 2, 1.0}}};
    CHECK_THROWS_AS(ham::spatial_velocity(Vector::Zero(3), graph::laplacian(g)), NumericalError);
}

TEST_CASE("spatial Hamiltonian: zero state and pure-activator reduction") {
    FhnParams p = turing_params();  // beta = 0
    CHECK(ham::spatial_hamiltonian(Vector::Zero(3), Vector::Zero(3), Vector::Zero(3),
                                   Vector::Zero(3), p) == 0.0);

    const Vector u = experiments::seeded_normal(3, 77, 0.5);
    const Vector e = experiments::seeded_normal(3, 78, 0.5);
    NetworkState s{u, Vector::Zero(3), false};
    const double expected = 0.5 * e.squaredNorm() + core::free_energy(s, p);
    CHECK(ham::spatial_hamiltonian(u, Vector::Zero(3), e, Vector::Zero(3), p) ==
          doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("relaxed ghost path satisfies the nodal current balance at every interior node") {
    FhnParams p = turing_params();
    const double dsq = p.delta * p.delta;
    const std::size_t n = 32;
    const Matrix l1 = dsq * graph::path_laplacian_ghost(n);
    const Matrix l2 = graph::path_laplacian_ghost(n);

    NetworkState init;
    init.u = experiments::seeded_normal(static_cast<Eigen::Index>(n), 13, 0.5);
    init.v = Vector::Zero(static_cast<Eigen::Index>(n));
    const core::RelaxOptions opts{0.1, 1e-10, 200000};
    const NetworkState s =
        core::relax(init, p, l1, l2, InputCurrent::zero(static_cast<Eigen::Index>(n)), opts);
    REQUIRE(s.converged);
    REQUIRE(numerics::max_abs(s.u) > 0.1);  // patterned, not the origin

    const Vector residuals = ham::path_current_residuals(s.u, s.v, dsq, p);
    CHECK(numerics::max_abs(residuals) <= 10.0 * opts.tol);
}

TEST_CASE("seed_from_steady_state: zero state and slicing consistency") {
    FhnParams p = turing_params();
    auto topo = small_residual(4, 3, 0.0, 1);

    NetworkState zero = NetworkState::zero(12);
    zero.converged = true;
    const auto seed0 = ham::seed_from_steady_state(zero, 4, 3);
    CHECK(numerics::max_abs(seed0.p) == 0.0);
    CHECK(numerics::max_abs(seed0.q) == 0.0);

    const core::RelaxOptions opts{0.1, 1e-10, 100000};
    const NetworkState s = relax_residual(topo, p, opts, 99);
    REQUIRE(s.converged);
    const auto seed = ham::seed_from_steady_state(s, 4, 3);
    CHECK(numerics::max_abs(Vector(seed.u + seed.p - s.u.segment(3, 3))) == 0.0);

    NetworkState unconverged = s;
    unconverged.converged = false;
    CHECK_THROWS_AS(ham::seed_from_steady_state(unconverged, 4, 3), NumericalError);
}

TEST_CASE("integrate_depth: depth one returns the seed; overflow truncates") {
    FhnParams p = turing_params();
    auto topo = small_residual(5, 2, 0.0, 2);
    ham::PhasePoint seed;
    seed.u = Vector::Constant(2, 0.1);
    seed.p = Vector::Constant(2, 0.01);
    seed.v = Vector::Zero(2);
    seed.q = Vector::Zero(2);
    const auto one = ham::integrate_depth(seed, topo, p, 1);
    CHECK(one.size() == 1);
    CHECK(numerics::max_abs(Vector(one[0].u - seed.u)) == 0.0);

    ham::PhasePoint huge = seed;
    huge.p = Vector::Constant(2, 1e150);  // cubic overflow on the next layer
    const auto traj = ham::integrate_depth(huge, topo, p, 5);
    CHECK(traj.size() < 5);
    for (const auto& ph : traj) CHECK(ph.u.allFinite());
}

TEST_CASE("equivalence: recursion reproduces the relaxed steady state layer by layer") {
    FhnParams p = turing_params();
    auto topo = small_residual(8, 4, 0.01, 31);
    core::NetworkState init;
    init.u = experiments::seeded_normal(32, 17, 0.5);
    init.v = Vector::Zero(32);
    const core::RelaxOptions opts{0.1, 1e-11, 300000};

    ham::HamOptions conservative;  // default mode, no first-step halving
    const auto report = ham::compare_to_time_dynamics(topo, p, init, opts, conservative, 1e-3);
    REQUIRE(report.reached_depth == 8);
    REQUIRE(numerics::max_abs(report.time_layers_u[0]) > 0.05);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(report.deviations[i].max_abs_u_deviation <= 1e-6);
    }
}

TEST_CASE("time-dynamics oracle adjudicates the inhibitor recursion mode") {
    // The drop-update (conservative) inhibitor recursion tracks the relaxed
    // steady state; the direct-assignment variant does not. This comparison
    // is what fixes the default mode.
    FhnParams p = turing_params();
    auto topo = small_residual(8, 4, 0.01, 31);
    core::NetworkState init;
    init.u = experiments::seeded_normal(32, 17, 0.5);
    init.v = Vector::Zero(32);
    const core::RelaxOptions opts{0.1, 1e-11, 300000};

    ham::HamOptions printed;
    printed.inhibitor_mode = ham::InhibitorMode::AsPrinted;
    const auto rep_printed = ham::compare_to_time_dynamics(topo, p, init, opts, printed, 1e-3);
    const auto rep_cons = ham::compare_to_time_dynamics(topo, p, init, opts, {}, 1e-3);

    const double cons_dev3 = rep_cons.deviations[3].max_abs_u_deviation;
    REQUIRE(rep_printed.reached_depth > 3);
    const double printed_dev3 = rep_printed.deviations[3].max_abs_u_deviation;
    CHECK(cons_dev3 <= 1e-6);
    CHECK(printed_dev3 > 100.0 * cons_dev3);
}

TEST_CASE("halving the first recursion step breaks the equivalence") {
    FhnParams p = turing_params();
    auto topo = small_residual(6, 3, 0.01, 41);
    core::NetworkState init;
    init.u = experiments::seeded_normal(18, 19, 0.5);
    init.v = Vector::Zero(18);
    const core::RelaxOptions opts{0.1, 1e-11, 300000};

    ham::HamOptions half;
    half.half_first_step = true;
    const auto rep_half = ham::compare_to_time_dynamics(topo, p, init, opts, half, 1e-3);
    const auto rep_full = ham::compare_to_time_dynamics(topo, p, init, opts, {}, 1e-3);

    REQUIRE(rep_half.reached_depth > 2);
    CHECK(rep_full.deviations[2].max_abs_u_deviation <= 1e-6);
    CHECK(rep_half.deviations[2].max_abs_u_deviation >
          100.0 * rep_full.deviations[2].max_abs_u_deviation);
}

TEST_CASE("zero couplings: integrate_depth equals the scalar recursion per path") {
    FhnParams p = turing_params();
    auto topo = small_residual(6, 3, 0.0, 3);
    ham::PhasePoint seed;
    seed.u = experiments::seeded_normal(3, 61, 0.3);
    seed.p = experiments::seeded_normal(3, 62, 0.05);
    seed.v = experiments::seeded_normal(3, 63, 0.1);
    seed.q = experiments::seeded_normal(3, 64, 0.02);

    const auto traj = ham::integrate_depth(seed, topo, p, 6);
    REQUIRE(traj.size() == 6);

    const double dsq = p.delta * p.delta;  // backbone delta^2 times du_c = 1
    for (Eigen::Index path = 0; path < 3; ++path) {
        double u = seed.u[path], pp = seed.p[path], v = seed.v[path], q = seed.q[path];
        for (std::size_t i = 1; i < 6; ++i) {
            const double u1 = u + pp;
            const double v1 = v + q;
            const double fu1 = u1 - u1 * u1 * u1 - v1;
            const double p1 = (dsq * pp - fu1) / dsq;
            const double q1 = q - p.epsilon * (u1 - p.alpha * v1 - p.beta);
            u = u1;
            v = v1;
            pp = p1;
            q = q1;
            CHECK(traj[i].u[path] == doctest::Approx(u).epsilon(1e-13));
            CHECK(traj[i].p[path] == doctest::Approx(pp).epsilon(1e-13));
            CHECK(traj[i].v[path] == doctest::Approx(v).epsilon(1e-13));
            CHECK(traj[i].q[path] == doctest::Approx(q).epsilon(1e-13));
        }
    }
}

TEST_CASE("depth-2 comparison deviation is at relaxation-tolerance level") {
    FhnParams p = turing_params();
    auto topo = small_residual(2, 3, 0.02, 8);
    core::NetworkState init;
    init.u = experiments::seeded_normal(6, 23, 0.5);
    init.v = Vector::Zero(6);
    const auto report =
        ham::compare_to_time_dynamics(topo, p, init, {0.1, 1e-10, 200000}, {}, 1e-3);
    REQUIRE(report.reached_depth == 2);
    CHECK(report.deviations[1].max_abs_u_deviation <= 1e-8);
}

}  // TEST_SUITE

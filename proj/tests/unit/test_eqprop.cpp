#include "fhnet/eqprop.hpp"

#include "fhnet/errors.hpp"
#include "fhnet/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fhnet;
using eqprop::BatchState;
using eqprop::DeepFhnNet;
using eqprop::TrainConfig;
using numerics::Matrix;
using numerics::Vector;

namespace {

DeepFhnNet make_net(std::vector<std::size_t> sizes, double init_scale, std::uint64_t seed) {
    DeepFhnNet net;
    net.layer_sizes = std::move(sizes);
    net.params.formulation = core::Formulation::SpatialDelta;  // du_c = delta^2
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.init_scale = init_scale;
    eqprop::init_weights(net, cfg);
    return net;
}

TrainConfig small_cfg() {
    TrainConfig cfg;
    cfg.layer_lrs = {1e-2, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3};
    return cfg;
}

}  // namespace

TEST_SUITE("eqprop") {

TEST_CASE("init_weights: zero scale, determinism, and empirical stddev") {
    DeepFhnNet zero = make_net({4, 3}, 0.0, 1);
    CHECK(numerics::max_abs(zero.couplings[0]) == 0.0);

    DeepFhnNet a = make_net({8, 8}, 0.02, 7);
    DeepFhnNet b = make_net({8, 8}, 0.02, 7);
    CHECK((a.couplings[0].array() == b.couplings[0].array()).all());

    DeepFhnNet big = make_net({512, 512}, 0.014, 11);
    const double stddev = std::sqrt(big.couplings[0].array().square().mean());
    CHECK(stddev == doctest::Approx(0.014).epsilon(0.05));
}

TEST_CASE("free phase: zero weights and zero input stay at the origin") {
    DeepFhnNet net = make_net({4, 6, 2}, 0.0, 3);  // beta = 0 regime
    TrainConfig cfg = small_cfg();
    const Matrix x = Matrix::Zero(4, 2);
    const BatchState s = eqprop::free_phase(net, x, cfg);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(numerics::max_abs(s.u[l]) == 0.0);
        CHECK(numerics::max_abs(s.v[l]) == 0.0);
    }
}

TEST_CASE("free phase clamps the input layer exactly at every step") {
    DeepFhnNet net = make_net({5, 7, 3}, 0.05, 5);
    TrainConfig cfg = small_cfg();
    Matrix x(5, 3);
    x = Eigen::Map<const Matrix>(experiments::seeded_normal(15, 9, 1.0).data(), 5, 3);

    BatchState s = eqprop::initial_state(net, x);
    for (int k = 0; k < 30; ++k) {
        eqprop::step_batch(s, net, x, nullptr, 0.0, cfg.dt);
        CHECK((s.u[0].array() == x.array()).all());
    }
}

TEST_CASE("free phase step displacement shrinks toward convergence") {
    DeepFhnNet net = make_net({4, 6, 2}, 0.05, 13);
    TrainConfig cfg = small_cfg();
    const Matrix x =
        Eigen::Map<const Matrix>(experiments::seeded_normal(4, 15, 0.5).data(), 4, 1);
    BatchState s = eqprop::initial_state(net, x);
    std::vector<double> deltas;
    for (int k = 0; k < 400; ++k) {
        deltas.push_back(eqprop::step_batch(s, net, x, nullptr, 0.0, cfg.dt));
    }
    // monotone (within slack) over the convergent tail
    for (std::size_t k = 320; k + 1 < deltas.size(); ++k) {
        CHECK(deltas[k + 1] <= deltas[k] * 1.05 + 1e-15);
    }
    CHECK(deltas.back() < deltas[300]);
}

TEST_CASE("nudged phase with zero beta equals continued free relaxation") {
    DeepFhnNet net = make_net({4, 6, 2}, 0.05, 21);
    TrainConfig cfg = small_cfg();
    cfg.beta_nudge = 0.0;  // allowed at the op level; rejected by validate()
    cfg.free_iters = 40;
    cfg.nudge_iters = 25;
    const Matrix x =
        Eigen::Map<const Matrix>(experiments::seeded_normal(4, 22, 0.5).data(), 4, 1);
    const Matrix y = Matrix::Zero(2, 1);

    const BatchState s_free = eqprop::free_phase(net, x, cfg);
    const BatchState s_nudge = eqprop::nudged_phase(net, s_free, x, y, +1, cfg);

    TrainConfig longer = cfg;
    longer.free_iters = 65;
    const BatchState s_long = eqprop::free_phase(net, x, longer);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(numerics::max_abs(Matrix(s_nudge.u[l] - s_long.u[l])) == 0.0);
    }
}

TEST_CASE("nudge with matching target applies no current at the start") {
    DeepFhnNet net = make_net({3, 4, 2}, 0.05, 31);
    TrainConfig cfg = small_cfg();
    const Matrix x =
        Eigen::Map<const Matrix>(experiments::seeded_normal(3, 33, 0.5).data(), 3, 1);
    const BatchState s_free = eqprop::free_phase(net, x, cfg);
    const Matrix y = s_free.u.back();  // y - u_out = 0 at the first nudged step

    BatchState plus = s_free, minus = s_free;
    eqprop::step_batch(plus, net, x, &y, +cfg.beta_nudge, cfg.dt);
    eqprop::step_batch(minus, net, x, &y, -cfg.beta_nudge, cfg.dt);
    CHECK(numerics::max_abs(Matrix(plus.u.back() - minus.u.back())) == 0.0);
}

TEST_CASE("nudge sign antisymmetry: first-order effect flips, second order cancels") {
    DeepFhnNet net = make_net({4, 6, 3}, 0.08, 41);
    TrainConfig cfg = small_cfg();
    cfg.free_iters = 3000;   // converge the phases for a clean linear response
    cfg.nudge_iters = 3000;
    const Matrix x =
        Eigen::Map<const Matrix>(experiments::seeded_normal(4, 44, 0.5).data(), 4, 1);
    Matrix y = Matrix::Zero(3, 1);
    y(1, 0) = 1.0;

    const BatchState s_free = eqprop::free_phase(net, x, cfg);
    auto deflection = [&](double beta) {
        TrainConfig c = cfg;
        c.beta_nudge = beta;
        const BatchState sp = eqprop::nudged_phase(net, s_free, x, y, +1, c);
        const BatchState sm = eqprop::nudged_phase(net, s_free, x, y, -1, c);
        const double first = numerics::max_abs(Matrix(sp.u.back() - sm.u.back()));
        const double second =
            numerics::max_abs(Matrix(sp.u.back() + sm.u.back() - 2.0 * s_free.u.back()));
        return std::pair<double, double>{first, second};
    };

    const auto [first_b, second_b] = deflection(0.02);
    const auto [first_h, second_h] = deflection(0.01);
    CHECK(first_b / first_h == doctest::Approx(2.0).epsilon(0.05));    // O(beta)
    CHECK(second_b > 2.5 * second_h);                                  // O(beta^2)
    CHECK(second_h < 0.5 * first_h);  // quadratic term subdominant at the small nudge
}

TEST_CASE("update is zero when the nudged states coincide") {
    DeepFhnNet net = make_net({3, 4, 2}, 0.05, 51);
    TrainConfig cfg = small_cfg();
    const Matrix x =
        Eigen::Map<const Matrix>(experiments::seeded_normal(3, 52, 0.5).data(), 3, 1);
    const BatchState s = eqprop::free_phase(net, x, cfg);
    const auto deltas = eqprop::eqprop_update(s, s, net, cfg);
    for (const auto& d : deltas) CHECK(numerics::max_abs(d) == 0.0);
}

TEST_CASE("single-coupling network: update sign matches the FD loss gradient sign") {
    DeepFhnNet net = make_net({1, 1}, 0.0, 61);
    net.couplings[0](0, 0) = 0.08;
    TrainConfig cfg = small_cfg();
    cfg.beta_nudge = 0.01;
    const Matrix x = Matrix::Constant(1, 1, 0.9);
    const Matrix y = Matrix::Constant(1, 1, 0.8);

    const auto report = eqprop::gradient_check(net, x.col(0), y.col(0), 0.01, 1e-5);
    REQUIRE(report.fd_gradient.size() == 1);
    const double fd = report.fd_gradient[0](0, 0);
    const double est = report.eqprop_estimate[0](0, 0);
    CHECK(fd != 0.0);
    CHECK(est * fd > 0.0);  // same sign
    CHECK(est == doctest::Approx(fd).epsilon(0.02));
}

TEST_CASE("halving beta changes the centered-difference estimate at O(beta^2)") {
    DeepFhnNet net = make_net({3, 5, 2}, 0.08, 71);
    const Vector x = experiments::seeded_normal(3, 72, 0.5);
    Vector y = Vector::Zero(2);
    y[0] = 1.0;

    const auto rb = eqprop::gradient_check(net, x, y, 0.04, 1e-5);
    const auto rh = eqprop::gradient_check(net, x, y, 0.02, 1e-5);
    const auto rq = eqprop::gradient_check(net, x, y, 0.01, 1e-5);
    // distance to the FD gradient shrinks roughly 4x per halving
    double db = 0.0, dh = 0.0, dq = 0.0;
    for (std::size_t l = 0; l < 2; ++l) {
        db = std::max(db, numerics::max_abs(Matrix(rb.eqprop_estimate[l] - rb.fd_gradient[l])));
        dh = std::max(dh, numerics::max_abs(Matrix(rh.eqprop_estimate[l] - rh.fd_gradient[l])));
        dq = std::max(dq, numerics::max_abs(Matrix(rq.eqprop_estimate[l] - rq.fd_gradient[l])));
    }
    CHECK(dh < db);
    CHECK(dq < dh);
}

TEST_CASE("gradient check on a small random net: high cosine, bounded magnitude error") {
    DeepFhnNet net = make_net({4, 6, 3}, 0.08, 81);
    const Vector x = experiments::seeded_normal(4, 82, 0.5);
    Vector y = Vector::Zero(3);
    y[2] = 1.0;

    const auto report = eqprop::gradient_check(net, x, y, 0.01, 1e-5);
    for (std::size_t l = 0; l < report.layer_cosine.size(); ++l) {
        CHECK(report.layer_cosine[l] >= 0.95);
        CHECK(report.layer_rel_magnitude_err[l] <= 0.2);
    }
}

TEST_CASE("train_epoch with zero learning rates leaves weights unchanged") {
    DeepFhnNet net = make_net({4, 5, 2}, 0.05, 91);
    const auto before = net.couplings;
    TrainConfig cfg = small_cfg();
    cfg.layer_lrs = {0.0, 0.0};
    cfg.batch_size = 3;

    std::vector<Vector> images;
    std::vector<int> labels;
    for (int i = 0; i < 7; ++i) {
        images.push_back(experiments::seeded_normal(4, 100 + i, 0.5));
        labels.push_back(i % 2);
    }
    const auto metrics = eqprop::train_epoch(net, images, labels, cfg, 0);
    CHECK(metrics.samples == 7);
    CHECK(metrics.loss > 0.0);
    for (std::size_t l = 0; l < net.blocks(); ++l) {
        CHECK((net.couplings[l].array() == before[l].array()).all());
    }
}

TEST_CASE("training a tiny synthetic two-class task reduces the error") {
    // Two well-separated Gaussian clusters in 8 dimensions, net 8-16-2.
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.15);
    std::vector<Vector> images;
    std::vector<int> labels;
    for (int i = 0; i < 24; ++i) {
        const int cls = i % 2;
        Vector x(8);
        for (Eigen::Index d = 0; d < 8; ++d) {
            const double center = (d < 4) == (cls == 0) ? 0.8 : 0.1;
            x[d] = center + noise(rng);
        }
        images.push_back(x);
        labels.push_back(cls);
    }

    DeepFhnNet net = make_net({8, 16, 2}, 0.05, 101);
    TrainConfig cfg = small_cfg();
    cfg.layer_lrs = {0.02, 0.01};
    cfg.batch_size = 8;
    cfg.seed = 5;

    const auto first = eqprop::evaluate(net, images, labels, cfg);
    eqprop::EpochMetrics last;
    for (std::size_t epoch = 0; epoch < 10; ++epoch) {
        last = eqprop::train_epoch(net, images, labels, cfg, epoch);
    }
    const auto final_eval = eqprop::evaluate(net, images, labels, cfg);
    CHECK(final_eval.error_rate < first.error_rate);
    CHECK(final_eval.error_rate <= 0.25);
}

TEST_CASE("training is deterministic for a fixed seed and data order") {
    std::vector<Vector> images;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        images.push_back(experiments::seeded_normal(4, 200 + i, 0.5));
        labels.push_back(i % 3);
    }
    TrainConfig cfg = small_cfg();
    cfg.layer_lrs = {0.01, 0.005};
    cfg.batch_size = 4;

    DeepFhnNet a = make_net({4, 6, 3}, 0.05, 7);
    DeepFhnNet b = make_net({4, 6, 3}, 0.05, 7);
    eqprop::train_epoch(a, images, labels, cfg, 0);
    eqprop::train_epoch(b, images, labels, cfg, 0);
    for (std::size_t l = 0; l < a.blocks(); ++l) {
        CHECK((a.couplings[l].array() == b.couplings[l].array()).all());
    }
}

TEST_CASE("evaluate: perfect prediction and chance level") {
    DeepFhnNet net = make_net({4, 6, 3}, 0.05, 111);
    TrainConfig cfg = small_cfg();
    const Vector x0 = experiments::seeded_normal(4, 112, 0.5);
    const BatchState s = eqprop::free_phase(net, Matrix(x0), cfg);
    Eigen::Index pred = 0;
    s.u.back().col(0).maxCoeff(&pred);

    const std::vector<Vector> images{x0};
    const std::vector<int> match{static_cast<int>(pred)};
    CHECK(eqprop::evaluate(net, images, match, cfg).error_rate == 0.0);

    // Untrained random net on balanced 10-class data sits near chance.
    DeepFhnNet wide = make_net({6, 12, 10}, 0.02, 113);
    std::vector<Vector> xs;
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) {
        xs.push_back(experiments::seeded_normal(6, 300 + i, 0.5));
        ys.push_back(i % 10);
    }
    const double err = eqprop::evaluate(wide, xs, ys, cfg).error_rate;
    CHECK(err >= 0.7);
    CHECK(err <= 1.0);

    const double again = eqprop::evaluate(wide, xs, ys, cfg).error_rate;
    CHECK(err == again);
}

TEST_CASE("divergence is surfaced with the batch index") {
    DeepFhnNet net = make_net({2, 2}, 0.0, 121);
    net.couplings[0] = Matrix::Constant(2, 2, 1e6);  // explosive gain
    TrainConfig cfg = small_cfg();
    cfg.layer_lrs = {0.01};
    cfg.batch_size = 2;
    std::vector<Vector> images{Vector::Constant(2, 1.0), Vector::Constant(2, -1.0)};
    std::vector<int> labels{0, 1};
    CHECK_THROWS_WITH_AS(eqprop::train_epoch(net, images, labels, cfg, 0),
                         doctest::Contains("batch"), NumericalError);
}

}  // TEST_SUITE

#include "fhnet/experiments.hpp"

#include "fhnet/errors.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fhnet::experiments {

using io::format_double;
using nlohmann::json;

Vector seeded_normal(Eigen::Index n, std::uint64_t seed, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * normal(rng);
    return v;
}

graph::WeightedGraph random_connected_graph(std::size_t nodes, std::size_t extra_edges,
                                            std::uint64_t seed) {
    if (nodes < 2) throw ConfigError("experiments: random graph needs >= 2 nodes");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> weight(0.5, 1.5);

    graph::WeightedGraph g;
    g.node_count = nodes;
    for (std::size_t i = 1; i < nodes; ++i) {
        std::uniform_int_distribution<std::size_t> parent(0, i - 1);
        g.edges.push_back({parent(rng), i, weight(rng)});
    }
    std::uniform_int_distribution<std::size_t> any(0, nodes - 1);
    for (std::size_t k = 0; k < extra_edges; ++k) {
        const std::size_t a = any(rng);
        const std::size_t b = any(rng);
        if (a == b) continue;
        g.edges.push_back({a, b, weight(rng)});
    }
    return g;
}

graph::ResidualTopology make_residual_topology(std::size_t depth, std::size_t width,
                                               double backbone_conductance, double coupling_scale,
                                               std::uint64_t seed) {
    graph::ResidualTopology t;
    t.depth = depth;
    t.width = width;
    t.backbone_conductance = backbone_conductance;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i + 1 < depth; ++i) {
        Matrix g = Matrix::Zero(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width));
        if (coupling_scale != 0.0) {
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = coupling_scale * normal(rng);
            }
        }
        t.couplings.push_back(std::move(g));
    }
    return t;
}

ebm::HopfieldEbm make_random_ebm(std::size_t depth, std::size_t width, double weight_scale,
                                 ebm::Activation activation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto w = static_cast<Eigen::Index>(width);

    auto random_orthogonal = [&]() {
        Matrix a(w, w);
        for (Eigen::Index i = 0; i < w; ++i) {
            for (Eigen::Index j = 0; j < w; ++j) a(i, j) = normal(rng);
        }
        Eigen::HouseholderQR<Matrix> qr(a);
        return Matrix(qr.householderQ());
    };

    ebm::HopfieldEbm net;
    net.depth = depth;
    net.width = width;
    net.activation = activation;
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        const Matrix u = random_orthogonal();
        const Matrix v = random_orthogonal();
        Vector s(w);
        std::uniform_real_distribution<double> sv(0.5, 1.0);
        for (Eigen::Index i = 0; i < w; ++i) s[i] = sv(rng);
        net.weights.push_back(weight_scale * u * s.asDiagonal() * v.transpose());
    }
    for (std::size_t l = 0; l < depth; ++l) {
        Vector b(w);
        for (Eigen::Index i = 0; i < w; ++i) b[i] = 0.05 * normal(rng);
        net.biases.push_back(std::move(b));
    }
    return net;
}

ham::HamOptions ham_options_from(const RunConfig& cfg) {
    ham::HamOptions opts;
    opts.inhibitor_mode = cfg.ham.inhibitor_mode == "as_printed" ? ham::InhibitorMode::AsPrinted
                                                                 : ham::InhibitorMode::Conservative;
    opts.half_first_step = cfg.ham.half_first_step;
    return opts;
}

LaplacianPair build_laplacians(const RunConfig& cfg) {
    const auto& t = cfg.topology;
    if (t.kind == "path") {
        Matrix base = graph::path_laplacian_ghost(t.nodes);
        return {t.backbone_conductance * base, base};
    }
    if (t.kind == "residual") {
        auto topo = make_residual_topology(t.depth, t.width, t.backbone_conductance,
                                           t.coupling_scale, cfg.seed);
        return {graph::residual_laplacian(topo), ham::inhibitor_laplacian(topo)};
    }
    if (t.kind == "graph_file") {
        Matrix l1 = graph::laplacian(graph::load_graph_json(t.path));
        // Purely local inhibitor by default for arbitrary graphs.
        return {l1, Matrix::Zero(l1.rows(), l1.cols())};
    }
    throw ConfigError("experiments: topology kind \"" + t.kind +
                      "\" is not simulatable directly (use train/eval for layered nets)");
}

void write_summary(const RunConfig& cfg, const std::string& command, const json& metrics,
                   const std::string& out_dir) {
    io::ensure_directory(out_dir);
    json summary;
    summary["command"] = command;
    summary["experiment"] = cfg.experiment;
    summary["config_hash"] = io::fnv1a_hex(io::serialize_config(cfg));
    summary["seed"] = cfg.seed;
    summary["flags"] = {
        {"formulation",
         cfg.fhn.formulation == core::Formulation::SpatialDelta ? "spatial_delta" : "classic"},
        {"inhibitor_mode", cfg.ham.inhibitor_mode},
        {"half_first_step", cfg.ham.half_first_step},
    };
    summary["metrics"] = metrics;
    io::atomic_write_text(out_dir + "/summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// simulate / relax
// ---------------------------------------------------------------------------

namespace {

core::NetworkState seeded_initial_state(Eigen::Index n, const RunConfig& cfg) {
    core::NetworkState s;
    s.u = seeded_normal(n, cfg.seed, cfg.relax.init_amplitude);
    s.v = Vector::Zero(n);
    return s;
}

core::RelaxOptions relax_options(const RunConfig& cfg) {
    return {cfg.relax.dt, cfg.relax.tol, cfg.relax.max_steps};
}

}  // namespace

json simulate_run(const RunConfig& cfg, const std::string& out_dir) {
    const auto [l1, l2] = build_laplacians(cfg);
    const Eigen::SparseMatrix<double> l1s = l1.sparseView();
    const Eigen::SparseMatrix<double> l2s = l2.sparseView();
    core::NetworkState s = seeded_initial_state(l1.rows(), cfg);
    const auto input = core::InputCurrent::zero(l1.rows());

    std::ostringstream csv;
    csv << "step,node,u,v\n";
    json traj = json::array();
    auto record = [&](std::size_t k, const core::NetworkState& state) {
        json frame;
        frame["step"] = k;
        json ju = json::array(), jv = json::array();
        for (Eigen::Index i = 0; i < state.u.size(); ++i) {
            csv << k << "," << i << "," << format_double(state.u[i]) << ","
                << format_double(state.v[i]) << "\n";
            ju.push_back(state.u[i]);
            jv.push_back(state.v[i]);
        }
        frame["u"] = ju;
        frame["v"] = jv;
        traj.push_back(frame);
    };

    record(0, s);
    for (std::size_t k = 1; k <= cfg.simulate.steps; ++k) {
        s = core::step(s, cfg.fhn, l1s, l2s, input, cfg.relax.dt);
        if (k % cfg.simulate.record_every == 0) record(k, s);
    }
    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/trajectory.csv", csv.str());
    io::atomic_write_text(out_dir + "/trajectory.json", json{{"frames", traj}}.dump(2) + "\n");

    json metrics;
    metrics["steps"] = cfg.simulate.steps;
    metrics["final_u_max_abs"] = numerics::max_abs(s.u);
    metrics["final_activator_residual_inf"] =
        numerics::max_abs(core::activator_residual(s, cfg.fhn, l1s, input));
    return metrics;
}

json relax_run(const RunConfig& cfg, const std::string& out_dir) {
    const auto [l1, l2] = build_laplacians(cfg);
    const Eigen::SparseMatrix<double> l1s = l1.sparseView();
    const Eigen::SparseMatrix<double> l2s = l2.sparseView();
    core::NetworkState s0 = seeded_initial_state(l1.rows(), cfg);
    const auto input = core::InputCurrent::zero(l1.rows());

    core::RelaxInfo info;
    core::NetworkState s = core::relax(s0, cfg.fhn, l1s, l2s, input, relax_options(cfg), &info);

    std::ostringstream csv;
    csv << "node,u,v\n";
    for (Eigen::Index i = 0; i < s.u.size(); ++i) {
        csv << i << "," << format_double(s.u[i]) << "," << format_double(s.v[i]) << "\n";
    }
    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/state.csv", csv.str());

    json metrics;
    metrics["converged"] = s.converged;
    metrics["steps"] = info.steps;
    metrics["activator_residual_inf"] =
        numerics::max_abs(core::activator_residual(s, cfg.fhn, l1s, input));
    metrics["inhibitor_residual_inf"] = numerics::max_abs(core::inhibitor_residual(s, cfg.fhn, l2s));
    metrics["u_max_abs"] = numerics::max_abs(s.u);
    if (cfg.topology.kind == "path") {
        const double delta_sq =
            cfg.fhn.activator_diffusion() * cfg.topology.backbone_conductance;
        metrics["path_kirchhoff_residual_inf"] =
            numerics::max_abs(ham::path_current_residuals(s.u, s.v, delta_sq, cfg.fhn));
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// selfadjoint-check
// ---------------------------------------------------------------------------

json selfadjoint_run(const RunConfig& cfg, const std::string& out_dir, const RunContext& ctx) {
    std::vector<core::FhnParams> regimes(3, cfg.fhn);
    regimes[1].epsilon = 1.2;
    regimes[1].alpha = 2.0;
    regimes[1].beta = 0.1;
    regimes[2].epsilon = 0.6;
    regimes[2].alpha = 1.5;
    regimes[2].beta = -0.1;

    core::RelaxOptions opts = relax_options(cfg);
    opts.tol = std::min(opts.tol, 1e-11);  // keep probe noise well under the 1e-3 budget
    opts.max_steps = std::max<std::size_t>(opts.max_steps, 100000);

    std::ostringstream csv;
    csv << "net,regime,nodes,attempts,sym_defect_rel,probe_sym_defect_rel,probe_match_rel\n";

    double worst_sym = 0.0, worst_probe_sym = 0.0, worst_match = 0.0;
    std::mt19937_64 size_rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> size_dist(8, std::max<std::size_t>(8, cfg.selfadjoint.max_nodes));

    for (std::size_t i = 0; i < cfg.selfadjoint.num_nets; ++i) {
        const std::size_t regime = i % regimes.size();
        const core::FhnParams& p = regimes[regime];
        const std::size_t n = size_dist(size_rng);

        core::NetworkState steady;
        Matrix l1, l2;
        std::size_t attempts = 0;
        for (; attempts < 50; ++attempts) {
            const std::uint64_t sub_seed = cfg.seed + 1000003ull * i + 13ull * attempts + 1;
            l1 = graph::laplacian(random_connected_graph(n, n / 2, sub_seed));
            l2 = graph::laplacian(random_connected_graph(n, n / 2, sub_seed ^ 0xabcdefull));
            core::NetworkState init;
            init.u = seeded_normal(static_cast<Eigen::Index>(n), sub_seed + 7, 0.5);
            init.v = Vector::Zero(static_cast<Eigen::Index>(n));
            steady = core::relax(init, p, l1, l2, core::InputCurrent::zero(l1.rows()), opts);
            if (steady.converged) break;
        }
        if (!steady.converged) {
            throw NumericalError("selfadjoint: no converged steady state found after 50 draws");
        }

        const auto resp = core::response_matrix(steady, p, l1, l2);
        const Matrix probe =
            core::response_probe(steady, p, l1, l2, core::InputCurrent::zero(l1.rows()),
                                 cfg.selfadjoint.probe_eps, opts, ctx.threads);
        const double probe_sym =
            numerics::symmetry_defect(probe) / std::max(numerics::max_abs(probe), 1e-300);
        const double match = numerics::max_abs(Matrix(probe - resp.response)) /
                             std::max(numerics::max_abs(resp.response), 1e-300);

        worst_sym = std::max(worst_sym, resp.symmetry_defect_rel);
        worst_probe_sym = std::max(worst_probe_sym, probe_sym);
        worst_match = std::max(worst_match, match);
        csv << i << "," << regime << "," << n << "," << attempts + 1 << ","
            << format_double(resp.symmetry_defect_rel) << "," << format_double(probe_sym) << ","
            << format_double(match) << "\n";
    }

    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/selfadjoint.csv", csv.str());

    json metrics;
    metrics["num_nets"] = cfg.selfadjoint.num_nets;
    metrics["max_symmetry_defect_rel"] = worst_sym;
    metrics["max_probe_symmetry_defect_rel"] = worst_probe_sym;
    metrics["max_probe_match_rel"] = worst_match;
    return metrics;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

json gradcheck_run(const RunConfig& cfg, const std::string& out_dir) {
    eqprop::DeepFhnNet net;
    net.layer_sizes = cfg.gradcheck.layer_sizes;
    net.params = cfg.fhn;
    eqprop::TrainConfig init_cfg;
    init_cfg.seed = cfg.seed;
    init_cfg.init_scale = cfg.gradcheck.weight_scale;
    eqprop::init_weights(net, init_cfg);

    const Vector x = seeded_normal(static_cast<Eigen::Index>(net.layer_sizes.front()),
                                   cfg.seed + 101, 0.5);
    Vector y = Vector::Zero(static_cast<Eigen::Index>(net.layer_sizes.back()));
    y[static_cast<Eigen::Index>(cfg.seed % net.layer_sizes.back())] = 1.0;

    const auto report =
        eqprop::gradient_check(net, x, y, cfg.gradcheck.beta_small, cfg.gradcheck.fd_eps);

    std::ostringstream csv;
    csv << "layer,cosine,rel_magnitude_err\n";
    double min_cos = 1.0, max_rel = 0.0;
    for (std::size_t l = 0; l < report.layer_cosine.size(); ++l) {
        csv << l << "," << format_double(report.layer_cosine[l]) << ","
            << format_double(report.layer_rel_magnitude_err[l]) << "\n";
        min_cos = std::min(min_cos, report.layer_cosine[l]);
        max_rel = std::max(max_rel, report.layer_rel_magnitude_err[l]);
    }
    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/gradcheck.csv", csv.str());

    json metrics;
    metrics["min_layer_cosine"] = min_cos;
    metrics["max_layer_rel_magnitude_err"] = max_rel;
    metrics["beta_small"] = cfg.gradcheck.beta_small;
    metrics["fd_eps"] = cfg.gradcheck.fd_eps;
    return metrics;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

namespace {

eqprop::TrainConfig train_config_from(const RunConfig& cfg) {
    eqprop::TrainConfig t;
    t.beta_nudge = cfg.train.beta_nudge;
    t.layer_lrs = cfg.train.layer_lrs;
    t.free_iters = cfg.train.free_iters;
    t.nudge_iters = cfg.train.nudge_iters;
    t.dt = cfg.train.dt;
    t.init_scale = cfg.train.init_scale;
    t.seed = cfg.seed;
    t.batch_size = cfg.train.batch_size;
    t.momentum = cfg.train.momentum;
    t.update_clip = cfg.train.update_clip;
    return t;
}

io::Dataset load_split(const std::string& images, const std::string& labels,
                       std::size_t subset, const std::string& split) {
    io::Dataset d = io::load_mnist_idx(images, labels, split);
    if (subset > 0 && subset < d.size()) {
        d.images.resize(subset);
        d.labels.resize(subset);
    }
    return d;
}

}  // namespace

json train_run(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.topology.kind != "layered" || cfg.topology.layer_sizes.size() < 2) {
        throw ConfigError("train: topology.kind must be \"layered\" with layer_sizes");
    }
    if (cfg.data.train_images.empty() || cfg.data.train_labels.empty()) {
        throw ConfigError("train: data.train_images and data.train_labels are required");
    }
    const io::Dataset train =
        load_split(cfg.data.train_images, cfg.data.train_labels, cfg.data.train_subset, "train");
    io::Dataset test;
    if (!cfg.data.test_images.empty()) {
        test = load_split(cfg.data.test_images, cfg.data.test_labels, cfg.data.test_subset, "test");
    }

    eqprop::DeepFhnNet net;
    net.layer_sizes = cfg.topology.layer_sizes;
    net.params = cfg.fhn;
    const eqprop::TrainConfig tcfg = train_config_from(cfg);
    tcfg.validate(net.layer_sizes.size() - 1);
    eqprop::init_weights(net, tcfg);

    std::ostringstream csv;
    csv << "epoch,split,loss,error\n";
    json history = json::array();
    double final_train_error = 1.0, final_test_error = 1.0;
    std::vector<Matrix> velocity;
    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto m = eqprop::train_epoch(net, train.images, train.labels, tcfg, epoch, &velocity);
        csv << epoch << ",train," << format_double(m.loss) << "," << format_double(m.error_rate)
            << "\n";
        final_train_error = m.error_rate;
        json row = {{"epoch", epoch}, {"train_loss", m.loss}, {"train_error", m.error_rate}};
        if (!test.images.empty()) {
            const auto e = eqprop::evaluate(net, test.images, test.labels, tcfg);
            csv << epoch << ",test," << format_double(e.loss) << "," << format_double(e.error_rate)
                << "\n";
            final_test_error = e.error_rate;
            row["test_loss"] = e.loss;
            row["test_error"] = e.error_rate;
        }
        history.push_back(row);
    }

    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/metrics.csv", csv.str());

    io::Checkpoint ckpt;
    ckpt.layer_sizes = net.layer_sizes;
    ckpt.couplings = net.couplings;
    ckpt.params = net.params;
    ckpt.seed = cfg.seed;
    ckpt.epoch = cfg.train.epochs;
    io::save_checkpoint(ckpt, out_dir + "/checkpoint_final");

    json metrics;
    metrics["epochs"] = cfg.train.epochs;
    metrics["train_samples"] = train.size();
    metrics["test_samples"] = test.size();
    metrics["final_train_error"] = final_train_error;
    metrics["final_test_error"] = final_test_error;
    metrics["history"] = history;
    return metrics;
}

json eval_run(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.data.checkpoint.empty()) throw ConfigError("eval: data.checkpoint is required");
    if (cfg.data.test_images.empty()) throw ConfigError("eval: data.test_images is required");
    const io::Checkpoint ckpt = io::load_checkpoint(cfg.data.checkpoint);
    eqprop::DeepFhnNet net;
    net.layer_sizes = ckpt.layer_sizes;
    net.couplings = ckpt.couplings;
    net.params = ckpt.params;

    const io::Dataset test =
        load_split(cfg.data.test_images, cfg.data.test_labels, cfg.data.test_subset, "test");
    const auto m = eqprop::evaluate(net, test.images, test.labels, train_config_from(cfg));

    io::ensure_directory(out_dir);
    std::ostringstream csv;
    csv << "split,loss,error\ntest," << format_double(m.loss) << ","
        << format_double(m.error_rate) << "\n";
    io::atomic_write_text(out_dir + "/eval.csv", csv.str());

    json metrics;
    metrics["test_error"] = m.error_rate;
    metrics["test_loss"] = m.loss;
    metrics["samples"] = m.samples;
    return metrics;
}

// ---------------------------------------------------------------------------
// ham-infer / fig2
// ---------------------------------------------------------------------------

namespace {

graph::ResidualTopology residual_from(const RunConfig& cfg) {
    if (cfg.topology.kind != "residual") {
        throw ConfigError("experiments: this command needs topology.kind = \"residual\"");
    }
    return make_residual_topology(cfg.topology.depth, cfg.topology.width,
                                  cfg.topology.backbone_conductance, cfg.topology.coupling_scale,
                                  cfg.seed);
}

ham::ComparisonReport run_comparison(const RunConfig& cfg) {
    const auto topo = residual_from(cfg);
    core::NetworkState init;
    init.u = seeded_normal(static_cast<Eigen::Index>(topo.depth * topo.width), cfg.seed + 17,
                           cfg.relax.init_amplitude);
    init.v = Vector::Zero(init.u.size());
    return ham::compare_to_time_dynamics(topo, cfg.fhn, init, relax_options(cfg),
                                         ham_options_from(cfg), cfg.ham.deviation_threshold);
}

}  // namespace

json ham_infer_run(const RunConfig& cfg, const std::string& out_dir) {
    const auto report = run_comparison(cfg);

    std::ostringstream csv;
    csv << "layer,node,u,p,v,q\n";
    for (std::size_t i = 0; i < report.recursion.size(); ++i) {
        const auto& ph = report.recursion[i];
        for (Eigen::Index nn = 0; nn < ph.u.size(); ++nn) {
            csv << i << "," << nn << "," << format_double(ph.u[nn]) << ","
                << format_double(ph.p[nn]) << "," << format_double(ph.v[nn]) << ","
                << format_double(ph.q[nn]) << "\n";
        }
    }
    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/ham_trajectory.csv", csv.str());

    json metrics;
    metrics["reached_depth"] = report.reached_depth;
    metrics["first_layer_exceeding"] = report.first_layer_exceeding;
    return metrics;
}

json fig2_run(const RunConfig& cfg, const std::string& out_dir) {
    const auto report = run_comparison(cfg);

    std::ostringstream csv;
    csv << "layer,node,u_time,u_ham,deviation\n";
    for (std::size_t i = 0; i < report.recursion.size(); ++i) {
        const Vector& ut = report.time_layers_u[i];
        const Vector& uh = report.recursion[i].u;
        for (Eigen::Index nn = 0; nn < ut.size(); ++nn) {
            csv << i << "," << nn << "," << format_double(ut[nn]) << "," << format_double(uh[nn])
                << "," << format_double(std::abs(uh[nn] - ut[nn])) << "\n";
        }
    }
    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/fig2_comparison.csv", csv.str());

    json per_layer = json::array();
    double max_first_10 = 0.0;
    for (const auto& d : report.deviations) {
        per_layer.push_back({{"layer", d.layer}, {"max_abs_u_deviation", d.max_abs_u_deviation}});
        if (d.layer < 10) max_first_10 = std::max(max_first_10, d.max_abs_u_deviation);
    }
    json metrics;
    metrics["reached_depth"] = report.reached_depth;
    metrics["first_layer_exceeding"] = report.first_layer_exceeding;
    metrics["max_deviation_first_10_layers"] = max_first_10;
    metrics["per_layer"] = per_layer;
    io::atomic_write_text(out_dir + "/fig2_summary.json", metrics.dump(2) + "\n");
    return metrics;
}

// ---------------------------------------------------------------------------
// ebm-infer
// ---------------------------------------------------------------------------

json ebm_infer_run(const RunConfig& cfg, const std::string& out_dir) {
    const ebm::Activation act = cfg.ebm.activation == "tanh" ? ebm::Activation::TanhShifted
                                                             : ebm::Activation::Sigmoid;
    std::ostringstream dev_csv, bal_csv;
    dev_csv << "net,layer,deviation\n";
    bal_csv << "net,layer,balance_residual\n";

    double max_dev = 0.0, max_bal = 0.0;
    std::size_t converged = 0;
    for (std::size_t k = 0; k < cfg.ebm.num_nets; ++k) {
        const auto net = make_random_ebm(cfg.ebm.depth, cfg.ebm.width, cfg.ebm.weight_scale, act,
                                         cfg.seed + 977ull * k);
        const Vector input =
            seeded_normal(static_cast<Eigen::Index>(cfg.ebm.width), cfg.seed + 31ull * k + 5, 0.3);
        const auto report = ebm::verify_ebm_reconstruction(net, input, cfg.ebm.relax_dt,
                                                           cfg.ebm.relax_tol,
                                                           cfg.ebm.relax_max_steps);
        if (!report.relax_converged) {
            throw NumericalError("ebm-infer: relaxation failed for net " + std::to_string(k));
        }
        ++converged;
        for (std::size_t l = 0; l < report.layer_deviation.size(); ++l) {
            dev_csv << k << "," << l << "," << format_double(report.layer_deviation[l]) << "\n";
        }
        for (std::size_t l = 0; l < report.balance_residual.size(); ++l) {
            bal_csv << k << "," << l + 1 << "," << format_double(report.balance_residual[l])
                    << "\n";
            max_bal = std::max(max_bal, report.balance_residual[l]);
        }
        max_dev = std::max(max_dev, report.max_deviation);
    }

    io::ensure_directory(out_dir);
    io::atomic_write_text(out_dir + "/ebm_deviation.csv", dev_csv.str());
    io::atomic_write_text(out_dir + "/ebm_balance.csv", bal_csv.str());

    json metrics;
    metrics["nets"] = cfg.ebm.num_nets;
    metrics["converged"] = converged;
    metrics["max_layer_deviation"] = max_dev;
    metrics["max_balance_residual"] = max_bal;
    return metrics;
}

// ---------------------------------------------------------------------------
// export-plot-data
// ---------------------------------------------------------------------------

namespace {

bool copy_if_present(const std::string& src, const std::string& dst) {
    std::ifstream in(src, std::ios::binary);
    if (!in) return false;
    std::stringstream buf;
    buf << in.rdbuf();
    io::atomic_write_text(dst, buf.str());
    return true;
}

}  // namespace

json export_plot_data(const RunConfig& cfg, const std::string& out_dir) {
    (void)cfg;
    const std::string plot_dir = out_dir + "/plot";
    io::ensure_directory(plot_dir);
    json produced = json::array();

    // Per-layer deviation curve from a fig2 comparison.
    {
        std::ifstream in(out_dir + "/fig2_summary.json");
        if (in) {
            json s;
            in >> s;
            std::ostringstream csv;
            csv << "layer,max_abs_u_deviation\n";
            for (const auto& row : s.at("per_layer")) {
                csv << row.at("layer").get<std::size_t>() << ","
                    << format_double(row.at("max_abs_u_deviation").get<double>()) << "\n";
            }
            io::atomic_write_text(plot_dir + "/deviation_by_layer.csv", csv.str());
            produced.push_back("plot/deviation_by_layer.csv");
        }
    }
    if (copy_if_present(out_dir + "/metrics.csv", plot_dir + "/metrics_long.csv")) {
        produced.push_back("plot/metrics_long.csv");
    }
    if (copy_if_present(out_dir + "/state.csv", plot_dir + "/state.csv")) {
        produced.push_back("plot/state.csv");
    }

    json metrics;
    metrics["produced"] = produced;
    return metrics;
}

}  // namespace fhnet::experiments

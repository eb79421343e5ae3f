#pragma once

// Experiment drivers shared by the CLI and the acceptance suite. Every driver
// is deterministic for a fixed config and writes its artifacts with atomic
// renames; nothing here prints timestamps into result files.

#include "fhnet/dataio.hpp"
#include "fhnet/eqprop.hpp"
#include "fhnet/fhn_core.hpp"
#include "fhnet/graph.hpp"
#include "fhnet/ham_ebm.hpp"
#include "fhnet/ham_fhn.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fhnet::experiments {

using io::RunConfig;
using numerics::Matrix;
using numerics::Vector;

struct RunContext {
    int threads = 1;
};

/// Seeded standard-normal vector (mt19937_64).
Vector seeded_normal(Eigen::Index n, std::uint64_t seed, double stddev);

/// Random connected weighted graph: a random spanning tree plus extra edges,
/// conductances uniform in [0.5, 1.5].
graph::WeightedGraph random_connected_graph(std::size_t nodes, std::size_t extra_edges,
                                            std::uint64_t seed);

/// Residual topology with seeded normal couplings of the given scale.
graph::ResidualTopology make_residual_topology(std::size_t depth, std::size_t width,
                                               double backbone_conductance, double coupling_scale,
                                               std::uint64_t seed);

/// Random constant-width EBM with controlled conditioning: each weight block
/// is scale * U diag(s) V^T with singular values s in [0.5, 1].
ebm::HopfieldEbm make_random_ebm(std::size_t depth, std::size_t width, double weight_scale,
                                 ebm::Activation activation, std::uint64_t seed);

ham::HamOptions ham_options_from(const RunConfig& cfg);

/// The activator/inhibitor Laplacian pair for path / residual / graph_file
/// topologies (inhibitor: uncoupled unit-conductance ghost paths for
/// residual, same shape as the activator otherwise).
struct LaplacianPair {
    Matrix l1;
    Matrix l2;
};
LaplacianPair build_laplacians(const RunConfig& cfg);

// Each driver returns the deterministic "metrics" object embedded in
// summary.json and writes its CSV artifacts under out_dir.
nlohmann::json simulate_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json relax_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json selfadjoint_run(const RunConfig& cfg, const std::string& out_dir,
                               const RunContext& ctx);
nlohmann::json gradcheck_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json train_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json eval_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json ham_infer_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json fig2_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json ebm_infer_run(const RunConfig& cfg, const std::string& out_dir);
nlohmann::json export_plot_data(const RunConfig& cfg, const std::string& out_dir);

/// Write summary.json (config hash, seed, formulation flags, metrics).
void write_summary(const RunConfig& cfg, const std::string& command,
                   const nlohmann::json& metrics, const std::string& out_dir);

}  // namespace fhnet::experiments

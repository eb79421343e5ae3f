#pragma once

// Dataset ingestion (IDX), run configuration, checkpoints and result export.

#include "fhnet/fhn_core.hpp"
#include "fhnet/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fhnet::io {

using numerics::Matrix;
using numerics::Vector;

// ---------------------------------------------------------------------------
// Datasets (IDX format)
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<Vector> images;  // 784-length vectors scaled to [0, 1]
    std::vector<int> labels;     // 0..9
    std::string split;

    std::size_t size() const { return images.size(); }
};

/// Parse an IDX image/label pair: big-endian magic (2051 images, 2049
/// labels), dimension headers, unsigned-byte pixels scaled by 1/255.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::string& split = "train");

/// Write an IDX pair (images as bytes = round(pixel * 255)). Test/conversion
/// utility; exact inverse of load_mnist_idx on byte-valued data.
void write_mnist_idx(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path);

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct TopologySection {
    std::string kind = "path";  // path | residual | layered | graph_file
    std::size_t nodes = 64;     // path
    std::size_t depth = 30;     // residual
    std::size_t width = 64;
    double backbone_conductance = 1.0;
    double coupling_scale = 0.0;          // residual: stddev of random couplings
    std::vector<std::size_t> layer_sizes; // layered
    std::string path;                     // graph_file
};

struct TrainSection {
    double beta_nudge = 0.9;
    std::vector<double> layer_lrs = {1e-2, 1e-3, 2e-4, 1e-4, 5e-5, 5e-5};
    std::size_t free_iters = 55;
    std::size_t nudge_iters = 14;
    double dt = 0.1;
    double init_scale = 0.014;
    std::size_t batch_size = 20;
    std::size_t epochs = 5;
    double momentum = 0.0;     // 0 = plain SGD
    double update_clip = 0.0;  // per-entry update cap; 0 = off
};

struct RelaxSection {
    double dt = 0.1;
    double tol = 1e-8;
    std::size_t max_steps = 20000;
    double init_amplitude = 0.5;  // stddev of the seeded random initial state
};

struct DataSection {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::size_t train_subset = 0;  // 0 = all
    std::size_t test_subset = 0;
    std::string checkpoint;  // checkpoint directory for `eval`
};

struct SimulateSection {
    std::size_t steps = 500;
    std::size_t record_every = 1;
};

struct HamSection {
    std::string inhibitor_mode = "conservative";  // conservative | as_printed
    bool half_first_step = false;
    double deviation_threshold = 1e-3;
};

struct EbmSection {
    std::size_t depth = 4;
    std::size_t width = 6;
    double weight_scale = 0.1;
    std::string activation = "sigmoid";  // sigmoid | tanh
    double relax_dt = 0.5;
    double relax_tol = 1e-13;
    std::size_t relax_max_steps = 50000;
    std::size_t num_nets = 10;
};

struct SelfAdjointSection {
    std::size_t num_nets = 20;
    std::size_t max_nodes = 32;
    double probe_eps = 1e-4;
};

struct GradcheckSection {
    std::vector<std::size_t> layer_sizes = {8, 16, 16, 4};
    double beta_small = 0.01;
    double fd_eps = 1e-4;
    double weight_scale = 0.1;
};

struct RunConfig {
    std::string experiment = "run";
    std::uint64_t seed = 1234;
    std::string out_dir = "runs/out";
    core::FhnParams fhn;  // Table-1 values by default
    TopologySection topology;
    TrainSection train;
    RelaxSection relax;
    DataSection data;
    SimulateSection simulate;
    HamSection ham;
    EbmSection ebm;
    SelfAdjointSection selfadjoint;
    GradcheckSection gradcheck;
};

/// Strict parse: unknown keys are rejected with their field path; omitted
/// fields keep the defaults above.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);  // round-trips through parse_config

// ---------------------------------------------------------------------------
// Checkpoints: JSON manifest + raw little-endian float64 blobs per layer
// ---------------------------------------------------------------------------

/// Blob layout: uint64 rows, uint64 cols (little-endian), then rows*cols
/// float64 little-endian, row-major.
void write_weight_blob(const std::string& path, const Matrix& w);
Matrix read_weight_blob(const std::string& path);

struct Checkpoint {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> couplings;
    core::FhnParams params;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

// ---------------------------------------------------------------------------
// Deterministic result export
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form of a double (deterministic).
std::string format_double(double x);

/// Write text to path atomically (temp file + rename).
void atomic_write_text(const std::string& path, const std::string& text);

/// FNV-1a 64-bit hash, hex-encoded; used for config hashes.
std::string fnv1a_hex(const std::string& text);

void ensure_directory(const std::string& dir);

}  // namespace fhnet::io

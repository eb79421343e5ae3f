#pragma once

// Weighted undirected graph Laplacians: generic incidence-based construction,
// the impedance-matched (ghost-node) path Laplacian, and the coupled-path
// Laplacian of a deep residual network.

#include "fhnet/numerics.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace fhnet::graph {

using numerics::Matrix;
using numerics::Vector;

struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double conductance = 1.0;  // must be strictly positive
};

/// Weighted undirected graph. The Laplacian is assembled as B^T Y B from the
/// branch-node incidence matrix B (one +1 and one -1 per row) and the
/// diagonal conductance matrix Y.
struct WeightedGraph {
    std::size_t node_count = 0;
    std::vector<Edge> edges;

    /// edge x node incidence matrix, entries {+1, -1, 0}.
    Matrix incidence() const;
    /// diagonal matrix of edge conductances.
    Matrix conductances() const;

    void validate() const;  // throws NumericalError on bad indices / g <= 0
};

/// L = B^T Y B. Symmetric, PSD, zero row sums.
Matrix laplacian(const WeightedGraph& g);

/// Path Laplacian with ghost nodes at both ends: tridiagonal, constant
/// diagonal 2, off-diagonals -1. The ghost nodes are implicit (held at zero
/// potential), so the matrix is n x n and positive definite. n >= 2.
Matrix path_laplacian_ghost(std::size_t n);

/// m parallel length-n paths coupled layer to layer. couplings[i](j, k) is
/// the conductance between node j of layer i and node k of layer i+1 and may
/// be negative (gain element). The backbone (within-path) edges all carry
/// `backbone_conductance` and get the ghost boost at both ends.
struct ResidualTopology {
    std::size_t depth = 0;   // n: nodes per path (layers)
    std::size_t width = 0;   // m: number of parallel paths
    double backbone_conductance = 1.0;
    std::vector<Matrix> couplings;  // depth-1 matrices, each width x width

    void validate() const;
};

/// Node ordering is layer-major: node (layer i, path j) has index i*width + j.
Matrix residual_laplacian(const ResidualTopology& t);

/// Delete row and column `node` from a connected graph's Laplacian; the
/// result is positive definite. Throws if the graph is disconnected (zero
/// eigenvalue of multiplicity > 1).
Matrix ground(const Matrix& laplacian, std::size_t node = 0);

/// Parse {"nodes": n, "edges": [{"a":., "b":., "g":.}, ...]} from a JSON file.
WeightedGraph load_graph_json(const std::string& path);

}  // namespace fhnet::graph

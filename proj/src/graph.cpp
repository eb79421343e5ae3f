#include "fhnet/graph.hpp"

#include "fhnet/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace fhnet::graph {

void WeightedGraph::validate() const {
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge& e = edges[i];
        if (e.a >= node_count || e.b >= node_count || e.a == e.b) {
            std::ostringstream msg;
            msg << "graph: edge " << i << " has invalid endpoints (" << e.a << ", " << e.b
                << ") for " << node_count << " nodes";
            throw NumericalError(msg.str());
        }
        if (!(e.conductance > 0.0)) {
            std::ostringstream msg;
            msg << "graph: edge " << i << " has non-positive conductance " << e.conductance;
            throw NumericalError(msg.str());
        }
    }
}

Matrix WeightedGraph::incidence() const {
    Matrix b = Matrix::Zero(static_cast<Eigen::Index>(edges.size()),
                            static_cast<Eigen::Index>(node_count));
    for (std::size_t i = 0; i < edges.size(); ++i) {
        b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(edges[i].a)) = 1.0;
        b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(edges[i].b)) = -1.0;
    }
    return b;
}

Matrix WeightedGraph::conductances() const {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(edges.size()),
                            static_cast<Eigen::Index>(edges.size()));
    for (std::size_t i = 0; i < edges.size(); ++i) {
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = edges[i].conductance;
    }
    return y;
}

Matrix laplacian(const WeightedGraph& g) {
    g.validate();
    const Matrix b = g.incidence();
    Matrix l = b.transpose() * g.conductances() * b;
    return Matrix(0.5 * (l + l.transpose()));
}

Matrix path_laplacian_ghost(std::size_t n) {
    if (n < 2) throw NumericalError("graph: path_laplacian_ghost needs n >= 2");
    Matrix l = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        l(i, i) = 2.0;
        if (i + 1 < static_cast<Eigen::Index>(n)) {
            l(i, i + 1) = -1.0;
            l(i + 1, i) = -1.0;
        }
    }
    return l;
}

void ResidualTopology::validate() const {
    if (depth < 2 || width < 1) {
        throw NumericalError("graph: residual topology needs depth >= 2 and width >= 1");
    }
    if (!(backbone_conductance > 0.0)) {
        throw NumericalError("graph: residual topology needs a positive backbone conductance");
    }
    if (couplings.size() != depth - 1) {
        std::ostringstream msg;
        msg << "graph: residual topology expects " << depth - 1 << " coupling matrices, got "
            << couplings.size();
        throw NumericalError(msg.str());
    }
    for (std::size_t i = 0; i < couplings.size(); ++i) {
        if (couplings[i].rows() != static_cast<Eigen::Index>(width) ||
            couplings[i].cols() != static_cast<Eigen::Index>(width)) {
            std::ostringstream msg;
            msg << "graph: coupling matrix " << i << " is " << couplings[i].rows() << "x"
                << couplings[i].cols() << ", expected " << width << "x" << width;
            throw NumericalError(msg.str());
        }
    }
}

Matrix residual_laplacian(const ResidualTopology& t) {
    t.validate();
    const auto n = static_cast<Eigen::Index>(t.depth);
    const auto m = static_cast<Eigen::Index>(t.width);
    const double c = t.backbone_conductance;
    Matrix l = Matrix::Zero(n * m, n * m);

    // Per-path backbone with the ghost boost: diagonal 2c on every node.
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index node = i * m + j;
            l(node, node) += 2.0 * c;
            if (i + 1 < n) {
                l(node, (i + 1) * m + j) += -c;
                l((i + 1) * m + j, node) += -c;
            }
        }
    }

    // Inter-layer couplings: g = couplings[i](j, k) ties (layer i, path j)
    // to (layer i+1, path k); matching diagonal increments on both endpoints.
    for (std::size_t i = 0; i + 1 < t.depth; ++i) {
        const Matrix& g = t.couplings[i];
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index k = 0; k < m; ++k) {
                const double w = g(j, k);
                if (w == 0.0) continue;
                const Eigen::Index a = static_cast<Eigen::Index>(i) * m + j;
                const Eigen::Index b = static_cast<Eigen::Index>(i + 1) * m + k;
                l(a, b) += -w;
                l(b, a) += -w;
                l(a, a) += w;
                l(b, b) += w;
            }
        }
    }
    return l;
}

Matrix ground(const Matrix& lap, std::size_t node) {
    numerics::require_symmetric(lap, "ground input");
    const Eigen::Index n = lap.rows();
    if (static_cast<Eigen::Index>(node) >= n) {
        throw NumericalError("graph: ground node index out of range");
    }
    // Connectivity check: the zero eigenvalue of a connected graph Laplacian
    // is simple. A second near-zero eigenvalue means a disconnected graph.
    const auto eig = numerics::sym_eig(lap);
    const double scale = std::max(1.0, numerics::max_abs(lap));
    if (n >= 2 && eig.eigenvalues[1] <= 1e-10 * scale) {
        throw NumericalError("graph: ground requires a connected graph (zero eigenvalue has multiplicity > 1)");
    }
    Matrix out(n - 1, n - 1);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == static_cast<Eigen::Index>(node)) continue;
        Eigen::Index c = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == static_cast<Eigen::Index>(node)) continue;
            out(r, c++) = lap(i, j);
        }
        ++r;
    }
    return out;
}

WeightedGraph load_graph_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("graph: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("graph: invalid JSON in " + path + ": " + e.what());
    }
    WeightedGraph g;
    try {
        g.node_count = j.at("nodes").get<std::size_t>();
        for (const auto& je : j.at("edges")) {
            Edge e;
            e.a = je.at("a").get<std::size_t>();
            e.b = je.at("b").get<std::size_t>();
            e.conductance = je.at("g").get<double>();
            g.edges.push_back(e);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("graph: bad graph description in " + path + ": " + e.what());
    }
    g.validate();
    return g;
}

}  // namespace fhnet::graph

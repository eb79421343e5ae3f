#include "fhnet/dataio.hpp"

#include "fhnet/errors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "weight blobs are written as raw little-endian float64");

namespace fhnet::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kImagesMagic = 2051;
constexpr std::uint32_t kLabelsMagic = 2049;

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("dataio: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                        const std::string& path) {
    if (off + 4 > b.size()) {
        throw IoError("dataio: truncated header in " + path);
    }
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x >> 24), static_cast<unsigned char>(x >> 16),
                          static_cast<unsigned char>(x >> 8), static_cast<unsigned char>(x)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::string& split) {
    const auto ib = read_file_bytes(images_path);
    const auto lb = read_file_bytes(labels_path);

    const std::uint32_t imagic = read_be32(ib, 0, images_path);
    if (imagic != kImagesMagic) {
        std::ostringstream msg;
        msg << "dataio: " << images_path << ": image magic " << imagic << " != " << kImagesMagic;
        throw IoError(msg.str());
    }
    const std::uint32_t lmagic = read_be32(lb, 0, labels_path);
    if (lmagic != kLabelsMagic) {
        std::ostringstream msg;
        msg << "dataio: " << labels_path << ": label magic " << lmagic << " != " << kLabelsMagic;
        throw IoError(msg.str());
    }

    const std::uint32_t count = read_be32(ib, 4, images_path);
    const std::uint32_t rows = read_be32(ib, 8, images_path);
    const std::uint32_t cols = read_be32(ib, 12, images_path);
    const std::uint32_t label_count = read_be32(lb, 4, labels_path);
    if (count != label_count) {
        std::ostringstream msg;
        msg << "dataio: image count " << count << " != label count " << label_count;
        throw IoError(msg.str());
    }

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    const std::size_t expected_image_bytes = 16 + static_cast<std::size_t>(count) * pixels;
    if (ib.size() != expected_image_bytes) {
        std::ostringstream msg;
        msg << "dataio: " << images_path << ": expected " << expected_image_bytes
            << " bytes, got " << ib.size();
        throw IoError(msg.str());
    }
    const std::size_t expected_label_bytes = 8 + count;
    if (lb.size() != expected_label_bytes) {
        std::ostringstream msg;
        msg << "dataio: " << labels_path << ": expected " << expected_label_bytes
            << " bytes, got " << lb.size();
        throw IoError(msg.str());
    }

    Dataset data;
    data.split = split;
    data.images.reserve(count);
    data.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Vector img(static_cast<Eigen::Index>(pixels));
        const std::size_t base = 16 + static_cast<std::size_t>(i) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            img[static_cast<Eigen::Index>(p)] = ib[base + p] / 255.0;
        }
        const int label = lb[8 + i];
        if (label < 0 || label > 9) {
            std::ostringstream msg;
            msg << "dataio: label " << label << " out of range at index " << i;
            throw IoError(msg.str());
        }
        data.images.push_back(std::move(img));
        data.labels.push_back(label);
    }
    return data;
}

void write_mnist_idx(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path) {
    if (data.images.size() != data.labels.size()) {
        throw IoError("dataio: image/label count mismatch on write");
    }
    const std::size_t pixels = data.images.empty() ? 784 : static_cast<std::size_t>(data.images[0].size());
    const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(double(pixels))));

    std::ofstream im(images_path, std::ios::binary);
    if (!im) throw IoError("dataio: cannot write " + images_path);
    write_be32(im, kImagesMagic);
    write_be32(im, static_cast<std::uint32_t>(data.images.size()));
    write_be32(im, side);
    write_be32(im, side);
    for (const auto& img : data.images) {
        for (Eigen::Index p = 0; p < img.size(); ++p) {
            const auto byte = static_cast<unsigned char>(std::lround(img[p] * 255.0));
            im.put(static_cast<char>(byte));
        }
    }

    std::ofstream lb(labels_path, std::ios::binary);
    if (!lb) throw IoError("dataio: cannot write " + labels_path);
    write_be32(lb, kLabelsMagic);
    write_be32(lb, static_cast<std::uint32_t>(data.labels.size()));
    for (int label : data.labels) lb.put(static_cast<char>(label));
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw ConfigError("config: unknown key \"" + (section.empty() ? key : section + "." + key) +
                      "\"");
}

template <typename T>
void assign(const json& j, T& out, const std::string& path) {
    try {
        out = j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for \"" + path + "\": " + e.what());
    }
}

void parse_fhn(const json& j, core::FhnParams& p) {
    for (const auto& [key, value] : j.items()) {
        if (key == "delta") assign(value, p.delta, "fhn.delta");
        else if (key == "epsilon") assign(value, p.epsilon, "fhn.epsilon");
        else if (key == "alpha") assign(value, p.alpha, "fhn.alpha");
        else if (key == "beta") assign(value, p.beta, "fhn.beta");
        else if (key == "d1") assign(value, p.d1, "fhn.d1");
        else if (key == "d2") assign(value, p.d2, "fhn.d2");
        else if (key == "tau1") assign(value, p.tau1, "fhn.tau1");
        else if (key == "tau2") assign(value, p.tau2, "fhn.tau2");
        else if (key == "formulation") {
            std::string f;
            assign(value, f, "fhn.formulation");
            if (f == "classic") p.formulation = core::Formulation::Classic;
            else if (f == "spatial_delta") p.formulation = core::Formulation::SpatialDelta;
            else throw ConfigError("config: fhn.formulation must be classic or spatial_delta");
        } else {
            unknown_key("fhn", key);
        }
    }
}

void parse_topology(const json& j, TopologySection& t) {
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") assign(value, t.kind, "topology.kind");
        else if (key == "nodes") assign(value, t.nodes, "topology.nodes");
        else if (key == "depth") assign(value, t.depth, "topology.depth");
        else if (key == "width") assign(value, t.width, "topology.width");
        else if (key == "backbone_conductance")
            assign(value, t.backbone_conductance, "topology.backbone_conductance");
        else if (key == "coupling_scale") assign(value, t.coupling_scale, "topology.coupling_scale");
        else if (key == "layer_sizes") assign(value, t.layer_sizes, "topology.layer_sizes");
        else if (key == "path") assign(value, t.path, "topology.path");
        else unknown_key("topology", key);
    }
    if (t.kind != "path" && t.kind != "residual" && t.kind != "layered" && t.kind != "graph_file") {
        throw ConfigError("config: topology.kind must be path, residual, layered or graph_file");
    }
}

void parse_train(const json& j, TrainSection& t) {
    for (const auto& [key, value] : j.items()) {
        if (key == "beta_nudge") assign(value, t.beta_nudge, "train.beta_nudge");
        else if (key == "layer_lrs") assign(value, t.layer_lrs, "train.layer_lrs");
        else if (key == "free_iters") assign(value, t.free_iters, "train.free_iters");
        else if (key == "nudge_iters") assign(value, t.nudge_iters, "train.nudge_iters");
        else if (key == "dt") assign(value, t.dt, "train.dt");
        else if (key == "init_scale") assign(value, t.init_scale, "train.init_scale");
        else if (key == "batch_size") assign(value, t.batch_size, "train.batch_size");
        else if (key == "epochs") assign(value, t.epochs, "train.epochs");
        else if (key == "momentum") assign(value, t.momentum, "train.momentum");
        else if (key == "update_clip") assign(value, t.update_clip, "train.update_clip");
        else unknown_key("train", key);
    }
    if (t.beta_nudge == 0.0) throw ConfigError("config: train.beta_nudge must be nonzero");
    for (double lr : t.layer_lrs) {
        if (!(lr >= 0.0)) throw ConfigError("config: train.layer_lrs must be nonnegative");
    }
}

void parse_relax(const json& j, RelaxSection& r, const std::string& section) {
    for (const auto& [key, value] : j.items()) {
        if (key == "dt") assign(value, r.dt, section + ".dt");
        else if (key == "tol") assign(value, r.tol, section + ".tol");
        else if (key == "max_steps") assign(value, r.max_steps, section + ".max_steps");
        else if (key == "init_amplitude") assign(value, r.init_amplitude, section + ".init_amplitude");
        else unknown_key(section, key);
    }
}

void parse_data(const json& j, DataSection& d) {
    for (const auto& [key, value] : j.items()) {
        if (key == "train_images") assign(value, d.train_images, "data.train_images");
        else if (key == "train_labels") assign(value, d.train_labels, "data.train_labels");
        else if (key == "test_images") assign(value, d.test_images, "data.test_images");
        else if (key == "test_labels") assign(value, d.test_labels, "data.test_labels");
        else if (key == "train_subset") assign(value, d.train_subset, "data.train_subset");
        else if (key == "test_subset") assign(value, d.test_subset, "data.test_subset");
        else if (key == "checkpoint") assign(value, d.checkpoint, "data.checkpoint");
        else unknown_key("data", key);
    }
}

void parse_simulate(const json& j, SimulateSection& s) {
    for (const auto& [key, value] : j.items()) {
        if (key == "steps") assign(value, s.steps, "simulate.steps");
        else if (key == "record_every") assign(value, s.record_every, "simulate.record_every");
        else unknown_key("simulate", key);
    }
}

void parse_ham(const json& j, HamSection& h) {
    for (const auto& [key, value] : j.items()) {
        if (key == "inhibitor_mode") assign(value, h.inhibitor_mode, "ham.inhibitor_mode");
        else if (key == "half_first_step") assign(value, h.half_first_step, "ham.half_first_step");
        else if (key == "deviation_threshold")
            assign(value, h.deviation_threshold, "ham.deviation_threshold");
        else unknown_key("ham", key);
    }
    if (h.inhibitor_mode != "conservative" && h.inhibitor_mode != "as_printed") {
        throw ConfigError("config: ham.inhibitor_mode must be conservative or as_printed");
    }
}

void parse_ebm(const json& j, EbmSection& e) {
    for (const auto& [key, value] : j.items()) {
        if (key == "depth") assign(value, e.depth, "ebm.depth");
        else if (key == "width") assign(value, e.width, "ebm.width");
        else if (key == "weight_scale") assign(value, e.weight_scale, "ebm.weight_scale");
        else if (key == "activation") assign(value, e.activation, "ebm.activation");
        else if (key == "relax_dt") assign(value, e.relax_dt, "ebm.relax_dt");
        else if (key == "relax_tol") assign(value, e.relax_tol, "ebm.relax_tol");
        else if (key == "relax_max_steps") assign(value, e.relax_max_steps, "ebm.relax_max_steps");
        else if (key == "num_nets") assign(value, e.num_nets, "ebm.num_nets");
        else unknown_key("ebm", key);
    }
    if (e.activation != "sigmoid" && e.activation != "tanh") {
        throw ConfigError("config: ebm.activation must be sigmoid or tanh");
    }
}

void parse_selfadjoint(const json& j, SelfAdjointSection& s) {
    for (const auto& [key, value] : j.items()) {
        if (key == "num_nets") assign(value, s.num_nets, "selfadjoint.num_nets");
        else if (key == "max_nodes") assign(value, s.max_nodes, "selfadjoint.max_nodes");
        else if (key == "probe_eps") assign(value, s.probe_eps, "selfadjoint.probe_eps");
        else unknown_key("selfadjoint", key);
    }
}

void parse_gradcheck(const json& j, GradcheckSection& g) {
    for (const auto& [key, value] : j.items()) {
        if (key == "layer_sizes") assign(value, g.layer_sizes, "gradcheck.layer_sizes");
        else if (key == "beta_small") assign(value, g.beta_small, "gradcheck.beta_small");
        else if (key == "fd_eps") assign(value, g.fd_eps, "gradcheck.fd_eps");
        else if (key == "weight_scale") assign(value, g.weight_scale, "gradcheck.weight_scale");
        else unknown_key("gradcheck", key);
    }
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");

    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "experiment") assign(value, cfg.experiment, "experiment");
        else if (key == "seed") assign(value, cfg.seed, "seed");
        else if (key == "out_dir") assign(value, cfg.out_dir, "out_dir");
        else if (key == "fhn") parse_fhn(value, cfg.fhn);
        else if (key == "topology") parse_topology(value, cfg.topology);
        else if (key == "train") parse_train(value, cfg.train);
        else if (key == "relax") parse_relax(value, cfg.relax, "relax");
        else if (key == "data") parse_data(value, cfg.data);
        else if (key == "simulate") parse_simulate(value, cfg.simulate);
        else if (key == "ham") parse_ham(value, cfg.ham);
        else if (key == "ebm") parse_ebm(value, cfg.ebm);
        else if (key == "selfadjoint") parse_selfadjoint(value, cfg.selfadjoint);
        else if (key == "gradcheck") parse_gradcheck(value, cfg.gradcheck);
        else unknown_key("", key);
    }
    cfg.fhn.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["fhn"] = {
        {"delta", cfg.fhn.delta},
        {"epsilon", cfg.fhn.epsilon},
        {"alpha", cfg.fhn.alpha},
        {"beta", cfg.fhn.beta},
        {"d1", cfg.fhn.d1},
        {"d2", cfg.fhn.d2},
        {"tau1", cfg.fhn.tau1},
        {"tau2", cfg.fhn.tau2},
        {"formulation",
         cfg.fhn.formulation == core::Formulation::SpatialDelta ? "spatial_delta" : "classic"},
    };
    j["topology"] = {
        {"kind", cfg.topology.kind},
        {"nodes", cfg.topology.nodes},
        {"depth", cfg.topology.depth},
        {"width", cfg.topology.width},
        {"backbone_conductance", cfg.topology.backbone_conductance},
        {"coupling_scale", cfg.topology.coupling_scale},
        {"layer_sizes", cfg.topology.layer_sizes},
        {"path", cfg.topology.path},
    };
    j["train"] = {
        {"beta_nudge", cfg.train.beta_nudge},
        {"layer_lrs", cfg.train.layer_lrs},
        {"free_iters", cfg.train.free_iters},
        {"nudge_iters", cfg.train.nudge_iters},
        {"dt", cfg.train.dt},
        {"init_scale", cfg.train.init_scale},
        {"batch_size", cfg.train.batch_size},
        {"epochs", cfg.train.epochs},
        {"momentum", cfg.train.momentum},
        {"update_clip", cfg.train.update_clip},
    };
    j["relax"] = {
        {"dt", cfg.relax.dt},
        {"tol", cfg.relax.tol},
        {"max_steps", cfg.relax.max_steps},
        {"init_amplitude", cfg.relax.init_amplitude},
    };
    j["data"] = {
        {"train_images", cfg.data.train_images},
        {"train_labels", cfg.data.train_labels},
        {"test_images", cfg.data.test_images},
        {"test_labels", cfg.data.test_labels},
        {"train_subset", cfg.data.train_subset},
        {"test_subset", cfg.data.test_subset},
        {"checkpoint", cfg.data.checkpoint},
    };
    j["simulate"] = {
        {"steps", cfg.simulate.steps},
        {"record_every", cfg.simulate.record_every},
    };
    j["ham"] = {
        {"inhibitor_mode", cfg.ham.inhibitor_mode},
        {"half_first_step", cfg.ham.half_first_step},
        {"deviation_threshold", cfg.ham.deviation_threshold},
    };
    j["ebm"] = {
        {"depth", cfg.ebm.depth},
        {"width", cfg.ebm.width},
        {"weight_scale", cfg.ebm.weight_scale},
        {"activation", cfg.ebm.activation},
        {"relax_dt", cfg.ebm.relax_dt},
        {"relax_tol", cfg.ebm.relax_tol},
        {"relax_max_steps", cfg.ebm.relax_max_steps},
        {"num_nets", cfg.ebm.num_nets},
    };
    j["selfadjoint"] = {
        {"num_nets", cfg.selfadjoint.num_nets},
        {"max_nodes", cfg.selfadjoint.max_nodes},
        {"probe_eps", cfg.selfadjoint.probe_eps},
    };
    j["gradcheck"] = {
        {"layer_sizes", cfg.gradcheck.layer_sizes},
        {"beta_small", cfg.gradcheck.beta_small},
        {"fd_eps", cfg.gradcheck.fd_eps},
        {"weight_scale", cfg.gradcheck.weight_scale},
    };
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void write_weight_blob(const std::string& path, const Matrix& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("dataio: cannot write " + path);
    const std::uint64_t rows = static_cast<std::uint64_t>(w.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(w.cols());
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            const double x = w(i, j);
            out.write(reinterpret_cast<const char*>(&x), 8);
        }
    }
    if (!out) throw IoError("dataio: short write to " + path);
}

Matrix read_weight_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("dataio: cannot open " + path);
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in) throw IoError("dataio: truncated blob header in " + path);
    Matrix w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t i = 0; i < rows; ++i) {
        for (std::uint64_t j = 0; j < cols; ++j) {
            double x = 0.0;
            in.read(reinterpret_cast<char*>(&x), 8);
            if (!in) {
                std::ostringstream msg;
                msg << "dataio: " << path << ": expected " << rows * cols
                    << " float64 values, truncated at " << i * cols + j;
                throw IoError(msg.str());
            }
            w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
        }
    }
    return w;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
    ensure_directory(dir);
    json manifest;
    manifest["format"] = "fhnet-checkpoint-v1";
    manifest["layer_sizes"] = ckpt.layer_sizes;
    manifest["seed"] = ckpt.seed;
    manifest["epoch"] = ckpt.epoch;
    std::vector<std::string> blobs;
    for (std::size_t i = 0; i < ckpt.couplings.size(); ++i) {
        std::string name = "G" + std::to_string(i) + ".bin";
        write_weight_blob(dir + "/" + name, ckpt.couplings[i]);
        blobs.push_back(name);
    }
    manifest["blobs"] = blobs;
    manifest["fhn"] = json::parse(serialize_config([&] {
                                      RunConfig c;
                                      c.fhn = ckpt.params;
                                      return c;
                                  }()))["fhn"];
    atomic_write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("dataio: cannot open " + dir + "/manifest.json");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("dataio: bad checkpoint manifest: " + std::string(e.what()));
    }
    Checkpoint ckpt;
    try {
        if (manifest.at("format") != "fhnet-checkpoint-v1") {
            throw IoError("dataio: unsupported checkpoint format");
        }
        ckpt.layer_sizes = manifest.at("layer_sizes").get<std::vector<std::size_t>>();
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();
        ckpt.epoch = manifest.at("epoch").get<std::size_t>();
        const auto& fj = manifest.at("fhn");
        RunConfig tmp = parse_config(json{{"fhn", fj}}.dump());
        ckpt.params = tmp.fhn;
        for (const auto& name : manifest.at("blobs").get<std::vector<std::string>>()) {
            ckpt.couplings.push_back(read_weight_blob(dir + "/" + name));
        }
    } catch (const json::exception& e) {
        throw IoError("dataio: bad checkpoint manifest: " + std::string(e.what()));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Export helpers
// ---------------------------------------------------------------------------

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("dataio: cannot write " + tmp);
        out << text;
        if (!out) throw IoError("dataio: short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("dataio: rename " + tmp + " -> " + path + ": " + ec.message());
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("dataio: cannot create directory " + dir + ": " + ec.message());
}

}  // namespace fhnet::io

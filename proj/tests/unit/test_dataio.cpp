#include "fhnet/dataio.hpp"

#include "fhnet/errors.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace fhnet;
using numerics::Matrix;
using numerics::Vector;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("fhnet_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

io::Dataset tiny_dataset() {
    io::Dataset d;
    d.split = "train";
    for (int k = 0; k < 3; ++k) {
        Vector img(784);
        for (Eigen::Index i = 0; i < 784; ++i) img[i] = ((i + 7 * k) % 256) / 255.0;
        d.images.push_back(img);
        d.labels.push_back(k % 10);
    }
    return d;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("idx files round-trip byte-valued pixels exactly") {
    TempDir dir;
    const io::Dataset d = tiny_dataset();
    io::write_mnist_idx(d, dir.file("img"), dir.file("lbl"));
    const io::Dataset back = io::load_mnist_idx(dir.file("img"), dir.file("lbl"));
    REQUIRE(back.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(back.labels[k] == d.labels[k]);
        CHECK(numerics::max_abs(Vector(back.images[k] - d.images[k])) == 0.0);
    }
}

TEST_CASE("idx loader rejects bad magic, truncation and count mismatch") {
    TempDir dir;
    const io::Dataset d = tiny_dataset();
    io::write_mnist_idx(d, dir.file("img"), dir.file("lbl"));

    // Corrupt the image magic.
    {
        std::fstream f(dir.file("img"), std::ios::in | std::ios::out | std::ios::binary);
        f.put(9);
    }
    CHECK_THROWS_WITH_AS(io::load_mnist_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("magic"), IoError);

    // Truncated payload reports the byte counts.
    io::write_mnist_idx(d, dir.file("img2"), dir.file("lbl2"));
    std::filesystem::resize_file(dir.file("img2"), 16 + 784 * 3 - 10);
    CHECK_THROWS_WITH_AS(io::load_mnist_idx(dir.file("img2"), dir.file("lbl2")),
                         doctest::Contains("expected"), IoError);

    // Label count differs from image count.
    io::write_mnist_idx(d, dir.file("img3"), dir.file("lbl3"));
    io::Dataset fewer = d;
    fewer.images.resize(2);
    fewer.labels.resize(2);
    io::write_mnist_idx(fewer, dir.file("img4"), dir.file("lbl4"));
    CHECK_THROWS_WITH_AS(io::load_mnist_idx(dir.file("img3"), dir.file("lbl4")),
                         doctest::Contains("count"), IoError);

    CHECK_THROWS_AS(io::load_mnist_idx(dir.file("missing"), dir.file("lbl")), IoError);
}

TEST_CASE("empty config yields the trained-regime defaults") {
    const io::RunConfig cfg = io::parse_config("{}");
    CHECK(cfg.fhn.delta == doctest::Approx(0.75));
    CHECK(cfg.fhn.epsilon == doctest::Approx(0.85));
    CHECK(cfg.fhn.alpha == doctest::Approx(1.08));
    CHECK(cfg.fhn.beta == doctest::Approx(0.0));
    CHECK(cfg.train.beta_nudge == doctest::Approx(0.9));
    CHECK(cfg.train.free_iters == 55);
    CHECK(cfg.train.nudge_iters == 14);
    CHECK(cfg.train.dt == doctest::Approx(0.1));
    CHECK(cfg.train.init_scale == doctest::Approx(0.014));
    REQUIRE(cfg.train.layer_lrs.size() == 6);
    CHECK(cfg.train.layer_lrs[0] == doctest::Approx(1e-2));
    CHECK(cfg.train.layer_lrs[4] == doctest::Approx(5e-5));
    CHECK(cfg.train.layer_lrs[5] == doctest::Approx(5e-5));
}

TEST_CASE("unknown keys are rejected with their field path") {
    CHECK_THROWS_WITH_AS(io::parse_config("{\"fhn\":{\"delts\":1}}"),
                         doctest::Contains("fhn.delts"), ConfigError);
    CHECK_THROWS_WITH_AS(io::parse_config("{\"bogus\":{}}"), doctest::Contains("bogus"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(io::parse_config("{\"train\":{\"beta_nudge\":0}}"),
                         doctest::Contains("beta_nudge"), ConfigError);
    CHECK_THROWS_AS(io::parse_config("not json"), ConfigError);
}

TEST_CASE("config serialization round-trips") {
    io::RunConfig cfg;
    cfg.experiment = "roundtrip";
    cfg.seed = 99;
    cfg.fhn.formulation = core::Formulation::SpatialDelta;
    cfg.topology.kind = "residual";
    cfg.topology.depth = 12;
    cfg.ham.inhibitor_mode = "as_printed";
    const std::string text = io::serialize_config(cfg);
    const io::RunConfig back = io::parse_config(text);
    CHECK(io::serialize_config(back) == text);
    CHECK(back.topology.depth == 12);
    CHECK(back.ham.inhibitor_mode == "as_printed");
    CHECK(back.fhn.formulation == core::Formulation::SpatialDelta);
}

TEST_CASE("weight blobs and checkpoints round-trip bit-exactly") {
    TempDir dir;
    Matrix w(3, 2);
    w << 1.5, -2.25, 3.0e-17, 4.0, -0.0, 6.75;
    io::write_weight_blob(dir.file("w.bin"), w);
    const Matrix back = io::read_weight_blob(dir.file("w.bin"));
    CHECK((back.array() == w.array()).all());

    io::Checkpoint ckpt;
    ckpt.layer_sizes = {3, 2};
    ckpt.couplings = {w};
    ckpt.params.delta = 0.6;
    ckpt.seed = 42;
    ckpt.epoch = 5;
    io::save_checkpoint(ckpt, dir.file("ckpt"));
    const io::Checkpoint loaded = io::load_checkpoint(dir.file("ckpt"));
    CHECK(loaded.layer_sizes == ckpt.layer_sizes);
    CHECK(loaded.seed == 42);
    CHECK(loaded.epoch == 5);
    CHECK(loaded.params.delta == doctest::Approx(0.6));
    CHECK((loaded.couplings[0].array() == w.array()).all());
}

TEST_CASE("truncated weight blob reports the element position") {
    TempDir dir;
    Matrix w = Matrix::Ones(4, 4);
    io::write_weight_blob(dir.file("w.bin"), w);
    std::filesystem::resize_file(dir.file("w.bin"), 16 + 8 * 10);
    CHECK_THROWS_WITH_AS(io::read_weight_blob(dir.file("w.bin")), doctest::Contains("truncated"),
                         IoError);
}

TEST_CASE("atomic text writes are deterministic and complete") {
    TempDir dir;
    io::atomic_write_text(dir.file("a.txt"), "line\n");
    io::atomic_write_text(dir.file("a.txt"), "line\n");
    std::ifstream in(dir.file("a.txt"));
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "line\n");
    CHECK(!std::filesystem::exists(dir.file("a.txt.tmp")));
}

TEST_CASE("fnv1a matches the reference values") {
    CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(io::fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(io::fnv1a_hex("hello") == "a430d84680aabd0b");
}

TEST_CASE("format_double is deterministic and round-trips") {
    CHECK(io::format_double(0.1) == io::format_double(0.1));
    const double x = 1.0 / 3.0;
    CHECK(std::stod(io::format_double(x)) == x);
}

}  // TEST_SUITE

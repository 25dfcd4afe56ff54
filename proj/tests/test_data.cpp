#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "probe/data.hpp"
#include "probe/io.hpp"
#include "probe/landscape.hpp"

using namespace probe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("probekit-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("cifar record parsing is bit-exact") {
    TempDir tmp;
    const fs::path file = tmp.path / "fixture.bin";

    // Hand-built fixture: two records with known bytes.
    std::vector<unsigned char> bytes(2 * 3073, 0);
    bytes[0] = 7;  // label
    for (int p = 0; p < 3072; ++p) bytes[1 + p] = static_cast<unsigned char>((p * 13 + 5) % 256);
    bytes[3073] = 2;
    for (int p = 0; p < 3072; ++p) bytes[3074 + p] = static_cast<unsigned char>((p * 7) % 256);
    {
        std::ofstream os(file, std::ios::binary);
        os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    }

    Batch batch = read_cifar_file(file.string());
    REQUIRE(batch.size() == 2);
    CHECK(batch.labels[0] == 7);
    CHECK(batch.labels[1] == 2);
    for (int p = 0; p < 3072; ++p) {
        CHECK(batch.inputs(0, p) == static_cast<double>(bytes[1 + p]) / 255.0);
        CHECK(batch.inputs(1, p) == static_cast<double>(bytes[3074 + p]) / 255.0);
    }
}

TEST_CASE("cifar loader error contracts") {
    TempDir tmp;
    SUBCASE("truncated file reports the byte offset") {
        const fs::path file = tmp.path / "short.bin";
        std::vector<char> bytes(3073 + 100, 0);
        std::ofstream(file, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_WITH_AS(read_cifar_file(file.string()), doctest::Contains("3073"),
                             FormatError);
    }
    SUBCASE("unexpected record count is rejected") {
        const fs::path file = tmp.path / "count.bin";
        std::vector<char> bytes(3073 * 3, 0);
        std::ofstream(file, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(read_cifar_file(file.string(), 10000), FormatError);
    }
    SUBCASE("labels past 9 are corruption") {
        const fs::path file = tmp.path / "corrupt.bin";
        std::vector<char> bytes(3073, 0);
        bytes[0] = 11;
        std::ofstream(file, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_WITH_AS(read_cifar_file(file.string()), doctest::Contains("corrupt"),
                             FormatError);
    }
    SUBCASE("missing batch files fail the directory loader") {
        CHECK_THROWS_AS(load_cifar10(tmp.path.string()), FormatError);
    }
}

TEST_CASE("writing a byte-derived batch and re-reading reproduces pixels bitwise") {
    TempDir tmp;
    const fs::path file = tmp.path / "roundtrip.bin";

    Batch original;
    original.inputs.resize(4, 3072);
    original.labels = {0, 3, 9, 5};
    std::mt19937_64 rng(3);
    for (int r = 0; r < 4; ++r)
        for (int p = 0; p < 3072; ++p)
            original.inputs(r, p) = static_cast<double>(rng() % 256) / 255.0;

    write_cifar_file(file.string(), original);
    Batch reread = read_cifar_file(file.string());
    CHECK(reread.inputs == original.inputs);
    CHECK(reread.labels == original.labels);
}

TEST_CASE("synthetic blobs") {
    SUBCASE("wide separation is linearly solvable end to end") {
        Dataset data = synth_dataset(3, 6, 50, 40.0, 4);
        LinearTrainResult fit = train_linear(data.train, 3, 0.0, std::nullopt, 1500, 1e-4);
        CHECK(accuracy(fit.map.apply(data.test.inputs), data.test.labels) == 1.0);
    }
    SUBCASE("zero separation leaves any classifier near chance") {
        Dataset data = synth_dataset(2, 4, 200, 0.0, 5);
        LinearTrainResult fit = train_linear(data.train, 2, 0.0, std::nullopt, 400);
        const double acc = accuracy(fit.map.apply(data.test.inputs), data.test.labels);
        CHECK(acc > 0.3);
        CHECK(acc < 0.7);
    }
    SUBCASE("same seed reproduces the dataset bitwise") {
        Dataset a = synth_dataset(2, 5, 30, 3.0, 6);
        Dataset b = synth_dataset(2, 5, 30, 3.0, 6);
        CHECK(a.train.inputs == b.train.inputs);
        CHECK(a.test.inputs == b.test.inputs);
        CHECK(a.train.labels == b.train.labels);
    }
    SUBCASE("split is 80/20 and balanced") {
        Dataset data = synth_dataset(2, 4, 100, 2.0, 7);
        CHECK(data.train.size() == 160);
        CHECK(data.test.size() == 40);
        int ones = 0;
        for (int y : data.train.labels) ones += y;
        CHECK(ones == 80);
    }
    SUBCASE("dim below classes is rejected") {
        CHECK_THROWS_AS(synth_dataset(5, 3, 10, 1.0, 0), ArgumentError);
    }
}

TEST_CASE("standardize centers and scales per channel") {
    Dataset data = synth_dataset(2, 4, 100, 3.0, 8);
    standardize(data);
    for (int c = 0; c < 4; ++c) {
        CHECK(data.train.inputs.col(c).mean() == doctest::Approx(0.0).epsilon(1e-9));
        const double var = (data.train.inputs.col(c).array() -
                            data.train.inputs.col(c).mean())
                               .square()
                               .mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("network spec JSON round trip") {
    NetworkSpec spec;
    spec.input_shape = TensorShape::image(2, 6, 6);
    spec.output_dim = 3;
    spec.layers = {
        LayerSpec::conv2d(2, 3, 3, 1, 1),
        LayerSpec::batchnorm(3),
        LayerSpec::relu(),
        LayerSpec::residual({LayerSpec::conv2d(3, 3, 3, 1, 1), LayerSpec::relu()}),
        LayerSpec::maxpool(2),
        LayerSpec::flatten(),
        LayerSpec::dense(27, 3),
    };

    NetworkSpec reread = spec_from_json(spec_to_json(spec));
    CHECK(spec_to_json(reread) == spec_to_json(spec));
    // Same parameter layout both ways.
    CHECK(zero_params(reread).size() == zero_params(spec).size());
}

TEST_CASE("checkpoint round trip is bitwise for params and running stats") {
    TempDir tmp;
    NetworkSpec spec;
    spec.input_shape = TensorShape::flat(4);
    spec.output_dim = 2;
    spec.layers = {LayerSpec::dense(4, 6), LayerSpec::batchnorm(6), LayerSpec::relu(),
                   LayerSpec::dense(6, 2)};

    ParamVector params = init_params(spec, InitScheme::Default, 10);
    BnState bn = BnState::init_for(spec);
    bn.stats.at("1").mean = Vec::LinSpaced(6, -1.0, 1.0);
    bn.stats.at("1").var = Vec::LinSpaced(6, 0.5, 2.0);

    const std::string path = (tmp.path / "ckpt.bin").string();
    save_checkpoint(path, params, &bn);

    BnState bn_loaded = BnState::init_for(spec);
    ParamVector loaded = load_checkpoint(path, spec, &bn_loaded);
    CHECK(loaded.values == params.values);
    CHECK(bn_loaded.stats.at("1").mean == bn.stats.at("1").mean);
    CHECK(bn_loaded.stats.at("1").var == bn.stats.at("1").var);
}

TEST_CASE("checkpoint loader rejects mismatched specs and bad magic") {
    TempDir tmp;
    NetworkSpec spec = mlp_spec(4, {5}, 2);
    ParamVector params = init_params(spec, InitScheme::Default, 11);
    const std::string path = (tmp.path / "ckpt.bin").string();
    save_checkpoint(path, params);

    NetworkSpec other = mlp_spec(4, {6}, 2);
    CHECK_THROWS_AS(load_checkpoint(path, other), FormatError);

    const std::string junk = (tmp.path / "junk.bin").string();
    std::ofstream(junk, std::ios::binary) << "NOTAPROBE";
    CHECK_THROWS_AS(load_checkpoint(junk, spec), FormatError);
}

TEST_CASE("config hash is stable under key reordering") {
    Json a = Json::parse(R"({"alpha": 1, "nested": {"x": [1,2,3], "y": "s"}, "zeta": 0.5})");
    Json b = Json::parse(R"({"zeta": 0.5, "nested": {"y": "s", "x": [1,2,3]}, "alpha": 1})");
    CHECK(config_hash(a) == config_hash(b));
    Json c = a;
    c["alpha"] = 2;
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("param fingerprints change with the values") {
    NetworkSpec spec = mlp_spec(3, {4}, 2);
    ParamVector a = init_params(spec, InitScheme::HeUniform, 1);
    ParamVector b = init_params(spec, InitScheme::HeUniform, 2);
    CHECK(param_fingerprint(a) == param_fingerprint(a));
    CHECK(param_fingerprint(a) != param_fingerprint(b));
}

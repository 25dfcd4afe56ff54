#include "probe/data.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

namespace probe {

namespace {

constexpr int kCifarRecord = 3073;
constexpr int kCifarPixels = 3072;

}  // namespace

Batch read_cifar_file(const std::string& path, int expected_records) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw FormatError("cannot open " + path);
    const std::streamoff size = is.tellg();
    if (size % kCifarRecord != 0)
        throw FormatError(path + ": size " + std::to_string(size) +
                          " is not a multiple of 3073 (stray bytes from offset " +
                          std::to_string((size / kCifarRecord) * kCifarRecord) + ")");
    const int records = static_cast<int>(size / kCifarRecord);
    if (expected_records >= 0 && records != expected_records)
        throw FormatError(path + ": expected " + std::to_string(expected_records) +
                          " records, found " + std::to_string(records));
    is.seekg(0);

    Batch batch;
    batch.inputs.resize(records, kCifarPixels);
    batch.labels.resize(records);
    std::vector<unsigned char> record(kCifarRecord);
    for (int r = 0; r < records; ++r) {
        is.read(reinterpret_cast<char*>(record.data()), kCifarRecord);
        if (!is)
            throw FormatError(path + ": truncated record at byte offset " +
                              std::to_string(static_cast<long long>(r) * kCifarRecord));
        if (record[0] >= 10)
            throw FormatError(path + ": corrupt label " + std::to_string(record[0]) +
                              " at byte offset " +
                              std::to_string(static_cast<long long>(r) * kCifarRecord));
        batch.labels[r] = record[0];
        for (int p = 0; p < kCifarPixels; ++p)
            batch.inputs(r, p) = static_cast<double>(record[1 + p]) / 255.0;
    }
    return batch;
}

void write_cifar_file(const std::string& path, const Batch& batch) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    if (batch.inputs.cols() != kCifarPixels)
        throw ArgumentError("write_cifar_file: batch is not 3072 pixels wide");
    std::vector<unsigned char> record(kCifarRecord);
    for (int r = 0; r < batch.size(); ++r) {
        record[0] = static_cast<unsigned char>(batch.labels[r]);
        for (int p = 0; p < kCifarPixels; ++p) {
            const double v = batch.inputs(r, p) * 255.0;
            record[1 + p] = static_cast<unsigned char>(v + 0.5);
        }
        os.write(reinterpret_cast<const char*>(record.data()), kCifarRecord);
    }
}

Dataset load_cifar10(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset data;
    data.shape = TensorShape::image(3, 32, 32);
    data.classes = 10;
    data.source = "cifar10:" + dir;

    std::vector<Batch> parts;
    for (int i = 1; i <= 5; ++i) {
        const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
        parts.push_back(read_cifar_file(path, 10000));
    }
    data.train.inputs.resize(50000, kCifarPixels);
    data.train.labels.resize(50000);
    int row = 0;
    for (const auto& part : parts) {
        data.train.inputs.middleRows(row, part.size()) = part.inputs;
        std::copy(part.labels.begin(), part.labels.end(), data.train.labels.begin() + row);
        row += part.size();
    }
    data.test = read_cifar_file((fs::path(dir) / "test_batch.bin").string(), 10000);
    return data;
}

namespace {

Dataset split_80_20(Mat inputs, std::vector<int> labels, const TensorShape& shape, int classes,
                    const std::string& source) {
    // Per-class split keeps both sides balanced.
    std::vector<int> train_rows, test_rows;
    std::vector<int> per_class_seen(classes, 0);
    std::vector<int> per_class_total(classes, 0);
    for (int y : labels) ++per_class_total[y];
    for (int r = 0; r < static_cast<int>(labels.size()); ++r) {
        const int y = labels[r];
        const int cut = (per_class_total[y] * 4) / 5;
        if (per_class_seen[y]++ < cut)
            train_rows.push_back(r);
        else
            test_rows.push_back(r);
    }

    auto take = [&](const std::vector<int>& rows) {
        Batch b;
        b.inputs.resize(rows.size(), inputs.cols());
        b.labels.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            b.inputs.row(i) = inputs.row(rows[i]);
            b.labels[i] = labels[rows[i]];
        }
        return b;
    };

    Dataset data;
    data.train = take(train_rows);
    data.test = take(test_rows);
    data.shape = shape;
    data.classes = classes;
    data.source = source;
    return data;
}

}  // namespace

Dataset synth_dataset(int classes, int dim, int per_class, double separation, std::uint64_t seed) {
    if (classes < 2) throw ArgumentError("synth_dataset: need at least 2 classes");
    if (dim < classes)
        throw ArgumentError("synth_dataset: dim must be >= classes for axis-aligned means");
    if (per_class < 2) throw ArgumentError("synth_dataset: need at least 2 samples per class");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double scale = separation / std::sqrt(2.0);  // axis means are pairwise `separation` apart

    Mat inputs(classes * per_class, dim);
    std::vector<int> labels(classes * per_class);
    int row = 0;
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int d = 0; d < dim; ++d) inputs(row, d) = noise(rng) + (d == c ? scale : 0.0);
            labels[row] = c;
        }
    return split_80_20(std::move(inputs), std::move(labels), TensorShape::flat(dim), classes,
                       "synthetic");
}

Dataset synth_xor(int dim, int per_quadrant, double separation, std::uint64_t seed) {
    if (dim < 2) throw ArgumentError("synth_xor: dim must be >= 2");
    if (per_quadrant < 2) throw ArgumentError("synth_xor: need at least 2 samples per quadrant");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double d2 = separation / 2.0;
    const int signs[4][2] = {{1, 1}, {-1, -1}, {1, -1}, {-1, 1}};

    Mat inputs(4 * per_quadrant, dim);
    std::vector<int> labels(4 * per_quadrant);
    int row = 0;
    for (int q = 0; q < 4; ++q)
        for (int i = 0; i < per_quadrant; ++i, ++row) {
            for (int d = 0; d < dim; ++d) inputs(row, d) = noise(rng);
            inputs(row, 0) += signs[q][0] * d2;
            inputs(row, 1) += signs[q][1] * d2;
            labels[row] = q / 2;  // opposite corners share a class
        }
    return split_80_20(std::move(inputs), std::move(labels), TensorShape::flat(dim), 2,
                       "synthetic-xor");
}

void standardize(Dataset& data) {
    const int spatial = data.shape.is_image() ? data.shape.height() * data.shape.width() : 1;
    const int channels = data.shape.is_image() ? data.shape.channels() : data.shape.count();
    for (int c = 0; c < channels; ++c) {
        auto block = data.train.inputs.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
        const double mean = block.mean();
        const double sd = std::sqrt((block.array() - mean).square().mean() + 1e-12);
        data.train.inputs.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial) =
            ((block.array() - mean) / sd).matrix();
        auto tblock = data.test.inputs.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
        data.test.inputs.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial) =
            ((tblock.array() - mean) / sd).matrix();
    }
}

}  // namespace probe

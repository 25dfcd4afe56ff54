#pragma once

#include <cstdint>
#include <string>

#include "probe/net.hpp"

namespace probe {

struct Dataset {
    Batch train;
    Batch test;
    TensorShape shape;
    int classes = 0;
    std::string source;
};

// CIFAR-10 binary format: data_batch_1..5.bin + test_batch.bin, each record
// 3073 bytes (1 label byte, then 3072 pixel bytes as R, G, B planes of 32x32
// row-major values); pixels scaled to [0,1] by /255.
Dataset load_cifar10(const std::string& dir);

// Writes a batch back to the same record format (test fixtures).
void write_cifar_file(const std::string& path, const Batch& batch);
Batch read_cifar_file(const std::string& path, int expected_records = -1);

// Gaussian blobs: class means pairwise `separation` apart on scaled
// coordinate axes (requires dim >= classes), unit noise, 80/20 train/test
// split per class.
Dataset synth_dataset(int classes, int dim, int per_class, double separation,
                      std::uint64_t seed);

// Two-class XOR arrangement: four Gaussian blobs at (+-d, +-d) in the first
// two coordinates, opposite corners sharing a class. Not linearly separable;
// a small MLP separates it.
Dataset synth_xor(int dim, int per_quadrant, double separation, std::uint64_t seed);

// Per-channel standardization computed on train, applied to both splits.
// Used for the "normalized" training mode; note the result leaves [0,1].
void standardize(Dataset& data);

}  // namespace probe

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biaslens/tiler.hpp"

namespace biaslens {

// Two-class tile confidences; q_p + q_n = 1 up to rounding.
struct Confidence {
    double q_p = 0.5;
    double q_n = 0.5;
};

// Fixed compact architecture:
//   conv 3x3 (8 ch, stride 2) -> ReLU -> conv 3x3 (16 ch, stride 2) -> ReLU
//   -> global average pool -> dense to K -> ReLU (embedding) -> dense to 2 -> softmax.
// Convolutions are valid (no padding); the input must be at least 7x7.
struct Architecture {
    int in_h = 0;
    int in_w = 0;
    int in_c = 0;
    int conv1_channels = 8;
    int conv2_channels = 16;
    int embedding_dim = 0;  // K

    static int conv_out(int in) { return (in - 3) / 2 + 1; }
    int c1_h() const { return conv_out(in_h); }
    int c1_w() const { return conv_out(in_w); }
    int c2_h() const { return conv_out(c1_h()); }
    int c2_w() const { return conv_out(c1_w()); }

    std::size_t conv1_w_count() const { return static_cast<std::size_t>(conv1_channels) * in_c * 9; }
    std::size_t conv2_w_count() const {
        return static_cast<std::size_t>(conv2_channels) * conv1_channels * 9;
    }
    std::size_t fc1_w_count() const {
        return static_cast<std::size_t>(embedding_dim) * conv2_channels;
    }
    std::size_t fc2_w_count() const { return static_cast<std::size_t>(2) * embedding_dim; }

    // Flat parameter layout: conv1 w, conv1 b, conv2 w, conv2 b, fc1 w, fc1 b, fc2 w, fc2 b.
    std::size_t conv1_w_off() const { return 0; }
    std::size_t conv1_b_off() const { return conv1_w_off() + conv1_w_count(); }
    std::size_t conv2_w_off() const { return conv1_b_off() + conv1_channels; }
    std::size_t conv2_b_off() const { return conv2_w_off() + conv2_w_count(); }
    std::size_t fc1_w_off() const { return conv2_b_off() + conv2_channels; }
    std::size_t fc1_b_off() const { return fc1_w_off() + fc1_w_count(); }
    std::size_t fc2_w_off() const { return fc1_b_off() + embedding_dim; }
    std::size_t fc2_b_off() const { return fc2_w_off() + fc2_w_count(); }
    std::size_t param_count() const { return fc2_b_off() + 2; }

    bool operator==(const Architecture&) const = default;
};

struct ScorerModel {
    Architecture arch;
    std::uint64_t rng_seed = 0;
    std::vector<double> params;
    std::string tag;  // in-memory provenance only, not persisted
};

// Intermediate activations of one forward pass, kept for backprop and tests.
struct ForwardPass {
    std::vector<double> z1, a1;     // conv1 pre/post ReLU, [c1_ch][c1_h][c1_w]
    std::vector<double> z2, a2;     // conv2 pre/post ReLU
    std::vector<double> pooled;     // [conv2_channels]
    std::vector<double> z_fc1;      // pre-ReLU dense, [K]
    std::vector<double> embedding;  // post-ReLU dense, [K]
    double logits[2] = {0, 0};
    Confidence confidence;
    double loss(int label) const;  // cross-entropy against one-hot(label)
};

// Deterministic Glorot-uniform weights from the seed; biases start at zero.
ScorerModel init_model(std::uint64_t seed, int embedding_dim, int tile_h, int tile_w, int tile_c);

ForwardPass forward(const ScorerModel& model, const Tile& tile);

Confidence score(const ScorerModel& model, const Tile& tile);

// Penultimate ReLU activations; entries are nonnegative.
std::vector<double> embed(const ScorerModel& model, const Tile& tile);

// Gradient of the cross-entropy loss w.r.t. every parameter, flat layout.
std::vector<double> gradient(const ScorerModel& model, const Tile& tile, int label,
                             const ForwardPass& pass);

// One SGD step on the cross-entropy loss; returns the (pre-step) loss.
// Throws NumericError if the loss is not finite.
double train_step(ScorerModel& model, const Tile& tile, int label, double lr);

// Persistence: magic "BLSC", version u32, architecture descriptor, seed,
// then the little-endian f64 parameter vector.
void save_model(const std::filesystem::path& path, const ScorerModel& model);
ScorerModel load_model(const std::filesystem::path& path);

}  // namespace biaslens

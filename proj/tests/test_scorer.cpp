#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"
#include "biaslens/scorer.hpp"

using namespace biaslens;

namespace {

Tile random_tile(std::uint64_t seed, int h = 20, int w = 20, int c = 1) {
    Tile tile;
    tile.parent_id = "t";
    tile.index = 0;
    tile.height = h;
    tile.width = w;
    tile.channels = c;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    tile.pixels.resize(static_cast<std::size_t>(h) * w * c);
    for (double& p : tile.pixels) p = dist(rng);
    return tile;
}

double loss_at(const ScorerModel& model, const Tile& tile, int label) {
    return forward(model, tile).loss(label);
}

}  // namespace

TEST_CASE("init_model is deterministic in the seed") {
    const ScorerModel a = init_model(7, 64, 20, 20, 1);
    const ScorerModel b = init_model(7, 64, 20, 20, 1);
    CHECK(a.params == b.params);

    const ScorerModel c = init_model(8, 64, 20, 20, 1);
    CHECK(a.params != c.params);
}

TEST_CASE("init_model rejects K < 2") {
    CHECK_THROWS_AS(init_model(7, 1, 20, 20, 1), UsageError);
}

TEST_CASE("score is a softmax: q_p + q_n == 1") {
    const ScorerModel model = init_model(3, 16, 20, 20, 1);
    const Tile tile = random_tile(1);
    const Confidence conf = score(model, tile);
    CHECK(conf.q_p == doctest::Approx(1.0 - conf.q_n).epsilon(1e-12));
    CHECK(conf.q_p >= 0.0);
    CHECK(conf.q_p <= 1.0);
}

TEST_CASE("zeroed final dense layer gives symmetric confidences") {
    ScorerModel model = init_model(3, 16, 20, 20, 1);
    const Architecture& a = model.arch;
    for (std::size_t i = a.fc2_w_off(); i < a.param_count(); ++i) model.params[i] = 0.0;
    const Confidence conf = score(model, random_tile(2));
    CHECK(conf.q_p == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(conf.q_n == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("score is deterministic for fixed seed and tile") {
    const ScorerModel model = init_model(11, 32, 20, 20, 1);
    const Tile tile = random_tile(5);
    const Confidence a = score(model, tile);
    const Confidence b = score(model, tile);
    CHECK(a.q_p == b.q_p);
    CHECK(a.q_n == b.q_n);
}

TEST_CASE("embedding is nonnegative and K-dimensional") {
    const ScorerModel model = init_model(13, 48, 20, 20, 1);
    const auto u = embed(model, random_tile(6));
    CHECK(u.size() == 48);
    for (double v : u) CHECK(v >= 0.0);
}

TEST_CASE("zero tile with zero biases embeds to the zero vector") {
    const ScorerModel model = init_model(17, 16, 20, 20, 1);  // biases init to zero
    Tile tile = random_tile(7);
    for (double& p : tile.pixels) p = 0.0;
    const auto u = embed(model, tile);
    for (double v : u) CHECK(v == 0.0);
}

TEST_CASE("score equals softmax of the final dense layer applied to embed") {
    const ScorerModel model = init_model(19, 24, 20, 20, 1);
    const Tile tile = random_tile(8);
    const auto u = embed(model, tile);
    const Confidence conf = score(model, tile);

    // recompute the head from stored parameters
    const Architecture& a = model.arch;
    double logits[2];
    for (int j = 0; j < 2; ++j) {
        double acc = model.params[a.fc2_b_off() + j];
        for (int k = 0; k < a.embedding_dim; ++k) {
            acc += model.params[a.fc2_w_off() + static_cast<std::size_t>(j) * a.embedding_dim + k] *
                   u[static_cast<std::size_t>(k)];
        }
        logits[j] = acc;
    }
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
    CHECK(conf.q_p == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
    CHECK(conf.q_n == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-14));
}

TEST_CASE("tile shape mismatch is rejected") {
    const ScorerModel model = init_model(19, 24, 20, 20, 1);
    CHECK_THROWS_AS(score(model, random_tile(1, 16, 20, 1)), DataError);
}

TEST_CASE("analytic gradient matches central finite differences per layer") {
    const ScorerModel model = init_model(23, 16, 20, 20, 1);
    const Tile tile = random_tile(9);
    const int label = 1;
    const ForwardPass pass = forward(model, tile);
    const auto grad = gradient(model, tile, label, pass);

    const Architecture& a = model.arch;
    struct Layer {
        const char* name;
        std::size_t off;
        std::size_t count;
    };
    const Layer layers[] = {
        {"conv1_w", a.conv1_w_off(), a.conv1_w_count()},
        {"conv1_b", a.conv1_b_off(), static_cast<std::size_t>(a.conv1_channels)},
        {"conv2_w", a.conv2_w_off(), a.conv2_w_count()},
        {"conv2_b", a.conv2_b_off(), static_cast<std::size_t>(a.conv2_channels)},
        {"fc1_w", a.fc1_w_off(), a.fc1_w_count()},
        {"fc1_b", a.fc1_b_off(), static_cast<std::size_t>(a.embedding_dim)},
        {"fc2_w", a.fc2_w_off(), a.fc2_w_count()},
        {"fc2_b", a.fc2_b_off(), 2},
    };

    std::mt19937_64 probe_rng(99);
    const double h = 1e-5;
    for (const Layer& layer : layers) {
        CAPTURE(layer.name);
        std::uniform_int_distribution<std::size_t> pick(0, layer.count - 1);
        double max_rel = 0.0;
        for (int probe = 0; probe < 64; ++probe) {
            const std::size_t idx = layer.off + pick(probe_rng);
            ScorerModel perturbed = model;
            perturbed.params[idx] = model.params[idx] + h;
            const double up = loss_at(perturbed, tile, label);
            perturbed.params[idx] = model.params[idx] - h;
            const double down = loss_at(perturbed, tile, label);
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grad[idx];
            const double rel = std::abs(numeric - analytic) /
                               std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("train_step with lr = 0 leaves parameters unchanged") {
    ScorerModel model = init_model(29, 16, 20, 20, 1);
    const auto before = model.params;
    train_step(model, random_tile(10), 1, 0.0);
    CHECK(model.params == before);
}

TEST_CASE("repeated steps on one pair reduce the loss") {
    ScorerModel model = init_model(31, 16, 20, 20, 1);
    const Tile tile = random_tile(11);
    const double initial = loss_at(model, tile, 1);
    double last = initial;
    for (int i = 0; i < 50; ++i) last = train_step(model, tile, 1, 0.01);
    const double final_loss = loss_at(model, tile, 1);
    CHECK(final_loss < initial);
    CHECK(last <= initial);
}

TEST_CASE("model round-trips through the BLSC file byte-stably") {
    const ScorerModel model = init_model(37, 32, 20, 20, 1);
    const auto path = std::filesystem::temp_directory_path() / "biaslens_model_test.bin";
    save_model(path, model);
    const ScorerModel loaded = load_model(path);
    CHECK(loaded.arch == model.arch);
    CHECK(loaded.rng_seed == model.rng_seed);
    CHECK(loaded.params == model.params);

    save_model(path, loaded);  // write-back is byte-identical
    const auto bytes_a = io::read_file_bytes(path);
    save_model(path, model);
    const auto bytes_b = io::read_file_bytes(path);
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove(path);
}

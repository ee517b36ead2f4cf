#include "biaslens/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"
#include "biaslens/rng.hpp"

namespace biaslens {

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr char kModelMagic[4] = {'B', 'L', 'S', 'C'};

inline std::size_t plane_idx(int ch, int y, int x, int h, int w) {
    return (static_cast<std::size_t>(ch) * h + y) * w + x;
}

// in: [in_ch][in_h][in_w], weights: [out_ch][in_ch][3][3], stride 2, valid.
void conv_forward(const double* in, int in_ch, int in_h, int in_w, const double* weights,
                  const double* bias, int out_ch, int out_h, int out_w, double* out) {
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = bias[oc];
                const int iy0 = oy * 2;
                const int ix0 = ox * 2;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* w = weights + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
                    const double* row0 = in + plane_idx(ic, iy0, ix0, in_h, in_w);
                    const double* row1 = row0 + in_w;
                    const double* row2 = row1 + in_w;
                    acc += w[0] * row0[0] + w[1] * row0[1] + w[2] * row0[2] +
                           w[3] * row1[0] + w[4] * row1[1] + w[5] * row1[2] +
                           w[6] * row2[0] + w[7] * row2[1] + w[8] * row2[2];
                }
                out[plane_idx(oc, oy, ox, out_h, out_w)] = acc;
            }
        }
    }
}

// Accumulates weight/bias gradients and the input gradient for one conv layer.
void conv_backward(const double* in, int in_ch, int in_h, int in_w, const double* weights,
                   int out_ch, int out_h, int out_w, const double* dout, double* dweights,
                   double* dbias, double* din) {
    if (din) std::fill(din, din + static_cast<std::size_t>(in_ch) * in_h * in_w, 0.0);
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                const double g = dout[plane_idx(oc, oy, ox, out_h, out_w)];
                if (g == 0.0) continue;
                dbias[oc] += g;
                const int iy0 = oy * 2;
                const int ix0 = ox * 2;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const std::size_t w_base = (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const std::size_t ii = plane_idx(ic, iy0 + ky, ix0 + kx, in_h, in_w);
                            dweights[w_base + ky * 3 + kx] += g * in[ii];
                            if (din) din[ii] += g * weights[w_base + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

void check_tile_shape(const Architecture& arch, const Tile& tile) {
    if (tile.height != arch.in_h || tile.width != arch.in_w || tile.channels != arch.in_c) {
        throw DataError("tile shape " + std::to_string(tile.height) + "x" +
                        std::to_string(tile.width) + "x" + std::to_string(tile.channels) +
                        " does not match model input " + std::to_string(arch.in_h) + "x" +
                        std::to_string(arch.in_w) + "x" + std::to_string(arch.in_c));
    }
}

// Tile pixels are stored (y, x, c); the net works on channel planes.
std::vector<double> to_planes(const Tile& tile) {
    std::vector<double> planes(tile.pixels.size());
    for (int y = 0; y < tile.height; ++y) {
        for (int x = 0; x < tile.width; ++x) {
            for (int c = 0; c < tile.channels; ++c) {
                planes[plane_idx(c, y, x, tile.height, tile.width)] = tile.at(y, x, c);
            }
        }
    }
    return planes;
}

inline int target_index(int label) { return label == 1 ? 0 : 1; }

}  // namespace

double ForwardPass::loss(int label) const {
    const double q = target_index(label) == 0 ? confidence.q_p : confidence.q_n;
    return -std::log(std::max(q, 1e-300));
}

ScorerModel init_model(std::uint64_t seed, int embedding_dim, int tile_h, int tile_w, int tile_c) {
    if (embedding_dim < 2) {
        throw UsageError("embedding dimension K must be >= 2, got " + std::to_string(embedding_dim));
    }
    Architecture arch;
    arch.in_h = tile_h;
    arch.in_w = tile_w;
    arch.in_c = tile_c;
    arch.embedding_dim = embedding_dim;
    if (tile_h < 7 || tile_w < 7 || tile_c < 1) {
        throw UsageError("tile input must be at least 7x7x1 for the two stride-2 convolutions");
    }

    ScorerModel model;
    model.arch = arch;
    model.rng_seed = seed;
    model.params.assign(arch.param_count(), 0.0);

    Rng rng(seed);
    const auto glorot_fill = [&](std::size_t offset, std::size_t count, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < count; ++i) model.params[offset + i] = dist(rng);
    };
    glorot_fill(arch.conv1_w_off(), arch.conv1_w_count(), arch.in_c * 9, arch.conv1_channels * 9);
    glorot_fill(arch.conv2_w_off(), arch.conv2_w_count(), arch.conv1_channels * 9,
                arch.conv2_channels * 9);
    glorot_fill(arch.fc1_w_off(), arch.fc1_w_count(), arch.conv2_channels, arch.embedding_dim);
    glorot_fill(arch.fc2_w_off(), arch.fc2_w_count(), arch.embedding_dim, 2);
    return model;
}

ForwardPass forward(const ScorerModel& model, const Tile& tile) {
    const Architecture& a = model.arch;
    check_tile_shape(a, tile);
    const double* p = model.params.data();

    ForwardPass pass;
    const std::vector<double> input = to_planes(tile);

    const int c1h = a.c1_h(), c1w = a.c1_w();
    pass.z1.resize(static_cast<std::size_t>(a.conv1_channels) * c1h * c1w);
    conv_forward(input.data(), a.in_c, a.in_h, a.in_w, p + a.conv1_w_off(), p + a.conv1_b_off(),
                 a.conv1_channels, c1h, c1w, pass.z1.data());
    pass.a1.resize(pass.z1.size());
    for (std::size_t i = 0; i < pass.z1.size(); ++i) pass.a1[i] = std::max(pass.z1[i], 0.0);

    const int c2h = a.c2_h(), c2w = a.c2_w();
    pass.z2.resize(static_cast<std::size_t>(a.conv2_channels) * c2h * c2w);
    conv_forward(pass.a1.data(), a.conv1_channels, c1h, c1w, p + a.conv2_w_off(),
                 p + a.conv2_b_off(), a.conv2_channels, c2h, c2w, pass.z2.data());
    pass.a2.resize(pass.z2.size());
    for (std::size_t i = 0; i < pass.z2.size(); ++i) pass.a2[i] = std::max(pass.z2[i], 0.0);

    pass.pooled.assign(a.conv2_channels, 0.0);
    const double inv_area = 1.0 / (c2h * c2w);
    for (int ch = 0; ch < a.conv2_channels; ++ch) {
        double acc = 0.0;
        const double* plane = pass.a2.data() + static_cast<std::size_t>(ch) * c2h * c2w;
        for (int i = 0; i < c2h * c2w; ++i) acc += plane[i];
        pass.pooled[ch] = acc * inv_area;
    }

    pass.z_fc1.assign(a.embedding_dim, 0.0);
    pass.embedding.assign(a.embedding_dim, 0.0);
    const double* w1 = p + a.fc1_w_off();
    const double* b1 = p + a.fc1_b_off();
    for (int k = 0; k < a.embedding_dim; ++k) {
        double acc = b1[k];
        const double* row = w1 + static_cast<std::size_t>(k) * a.conv2_channels;
        for (int c = 0; c < a.conv2_channels; ++c) acc += row[c] * pass.pooled[c];
        pass.z_fc1[k] = acc;
        pass.embedding[k] = std::max(acc, 0.0);
    }

    const double* w2 = p + a.fc2_w_off();
    const double* b2 = p + a.fc2_b_off();
    for (int j = 0; j < 2; ++j) {
        double acc = b2[j];
        const double* row = w2 + static_cast<std::size_t>(j) * a.embedding_dim;
        for (int k = 0; k < a.embedding_dim; ++k) acc += row[k] * pass.embedding[k];
        pass.logits[j] = acc;
    }

    const double zmax = std::max(pass.logits[0], pass.logits[1]);
    const double e0 = std::exp(pass.logits[0] - zmax);
    const double e1 = std::exp(pass.logits[1] - zmax);
    pass.confidence.q_p = e0 / (e0 + e1);
    pass.confidence.q_n = e1 / (e0 + e1);
    return pass;
}

Confidence score(const ScorerModel& model, const Tile& tile) {
    return forward(model, tile).confidence;
}

std::vector<double> embed(const ScorerModel& model, const Tile& tile) {
    return forward(model, tile).embedding;
}

std::vector<double> gradient(const ScorerModel& model, const Tile& tile, int label,
                             const ForwardPass& pass) {
    const Architecture& a = model.arch;
    const double* p = model.params.data();
    std::vector<double> grad(a.param_count(), 0.0);

    // softmax + cross-entropy: dL/dz = q - onehot(target)
    double dlogits[2] = {pass.confidence.q_p, pass.confidence.q_n};
    dlogits[target_index(label)] -= 1.0;

    std::vector<double> dembed(a.embedding_dim, 0.0);
    {
        double* gw2 = grad.data() + a.fc2_w_off();
        double* gb2 = grad.data() + a.fc2_b_off();
        const double* w2 = p + a.fc2_w_off();
        for (int j = 0; j < 2; ++j) {
            gb2[j] = dlogits[j];
            for (int k = 0; k < a.embedding_dim; ++k) {
                gw2[static_cast<std::size_t>(j) * a.embedding_dim + k] =
                    dlogits[j] * pass.embedding[k];
                dembed[k] += dlogits[j] * w2[static_cast<std::size_t>(j) * a.embedding_dim + k];
            }
        }
    }

    std::vector<double> dpooled(a.conv2_channels, 0.0);
    {
        double* gw1 = grad.data() + a.fc1_w_off();
        double* gb1 = grad.data() + a.fc1_b_off();
        const double* w1 = p + a.fc1_w_off();
        for (int k = 0; k < a.embedding_dim; ++k) {
            const double dz = pass.z_fc1[k] > 0.0 ? dembed[k] : 0.0;
            gb1[k] = dz;
            for (int c = 0; c < a.conv2_channels; ++c) {
                gw1[static_cast<std::size_t>(k) * a.conv2_channels + c] = dz * pass.pooled[c];
                dpooled[c] += dz * w1[static_cast<std::size_t>(k) * a.conv2_channels + c];
            }
        }
    }

    const int c1h = a.c1_h(), c1w = a.c1_w();
    const int c2h = a.c2_h(), c2w = a.c2_w();

    std::vector<double> dz2(pass.z2.size());
    const double inv_area = 1.0 / (c2h * c2w);
    for (int ch = 0; ch < a.conv2_channels; ++ch) {
        const double g = dpooled[ch] * inv_area;
        for (int i = 0; i < c2h * c2w; ++i) {
            const std::size_t idx = static_cast<std::size_t>(ch) * c2h * c2w + i;
            dz2[idx] = pass.z2[idx] > 0.0 ? g : 0.0;
        }
    }

    std::vector<double> da1(pass.a1.size());
    conv_backward(pass.a1.data(), a.conv1_channels, c1h, c1w, p + a.conv2_w_off(),
                  a.conv2_channels, c2h, c2w, dz2.data(), grad.data() + a.conv2_w_off(),
                  grad.data() + a.conv2_b_off(), da1.data());

    std::vector<double> dz1(pass.z1.size());
    for (std::size_t i = 0; i < pass.z1.size(); ++i) {
        dz1[i] = pass.z1[i] > 0.0 ? da1[i] : 0.0;
    }

    const std::vector<double> input = to_planes(tile);
    conv_backward(input.data(), a.in_c, a.in_h, a.in_w, p + a.conv1_w_off(), a.conv1_channels,
                  c1h, c1w, dz1.data(), grad.data() + a.conv1_w_off(),
                  grad.data() + a.conv1_b_off(), nullptr);
    return grad;
}

double train_step(ScorerModel& model, const Tile& tile, int label, double lr) {
    if (lr < 0.0) throw UsageError("learning rate must be nonnegative");
    const ForwardPass pass = forward(model, tile);
    const double loss = pass.loss(label);
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss on tile " + std::to_string(tile.index) +
                           " of sample '" + tile.parent_id + "'");
    }
    if (lr == 0.0) return loss;
    const std::vector<double> grad = gradient(model, tile, label, pass);
    for (std::size_t i = 0; i < grad.size(); ++i) model.params[i] -= lr * grad[i];
    return loss;
}

void save_model(const std::filesystem::path& path, const ScorerModel& model) {
    for (double v : model.params) {
        if (!std::isfinite(v)) throw NumericError("refusing to save non-finite model parameters");
    }
    io::atomic_write(path, [&](std::ostream& out) {
        io::write_magic(out, kModelMagic);
        io::write_u32(out, kModelVersion);
        const Architecture& a = model.arch;
        io::write_u32(out, static_cast<std::uint32_t>(a.in_h));
        io::write_u32(out, static_cast<std::uint32_t>(a.in_w));
        io::write_u32(out, static_cast<std::uint32_t>(a.in_c));
        io::write_u32(out, static_cast<std::uint32_t>(a.conv1_channels));
        io::write_u32(out, static_cast<std::uint32_t>(a.conv2_channels));
        io::write_u32(out, static_cast<std::uint32_t>(a.embedding_dim));
        io::write_u64(out, model.rng_seed);
        io::write_u64(out, model.params.size());
        io::write_f64_array(out, model.params.data(), model.params.size());
    });
}

ScorerModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model: " + path.string());
    io::Reader reader(in, path.string());
    reader.expect_magic(kModelMagic);
    const std::uint32_t version = reader.u32();
    if (version != kModelVersion) {
        throw DataError(path.string() + ": unsupported model version " + std::to_string(version));
    }
    ScorerModel model;
    model.arch.in_h = static_cast<int>(reader.u32());
    model.arch.in_w = static_cast<int>(reader.u32());
    model.arch.in_c = static_cast<int>(reader.u32());
    model.arch.conv1_channels = static_cast<int>(reader.u32());
    model.arch.conv2_channels = static_cast<int>(reader.u32());
    model.arch.embedding_dim = static_cast<int>(reader.u32());
    model.rng_seed = reader.u64();
    const std::uint64_t count = reader.u64();
    if (count != model.arch.param_count()) {
        throw DataError(path.string() + ": parameter count " + std::to_string(count) +
                        " does not match architecture (" +
                        std::to_string(model.arch.param_count()) + ")");
    }
    model.params.resize(count);
    reader.f64_array(model.params.data(), count);
    for (double v : model.params) {
        if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite parameter");
    }
    return model;
}

}  // namespace biaslens

#include "drbl/network.hpp"

#include <cmath>
#include <sstream>

#include "drbl/ops.hpp"

namespace drbl {

namespace {

using Index = Eigen::Index;

Matrix uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
    return m;
}

BlockOptions block_options(const NetworkArchitecture& arch, std::size_t block) {
    return {arch.residual_for_block(block), arch.batch_norm};
}

bool dropout_between(const NetworkArchitecture& arch) {
    return arch.dropout_placement != DropoutPlacement::Output;
}

bool dropout_output(const NetworkArchitecture& arch) {
    return arch.dropout_placement != DropoutPlacement::Between;
}

ResidualBlockParams load_block(const NetworkArchitecture& arch, const ParamStore& params, std::size_t block) {
    ResidualBlockParams p;
    for (std::size_t l = 1; l <= arch.bidir_layers_per_block; ++l) {
        p.layers.push_back(BidirLayerParams::load(params, layer_prefix(block, l), arch.bidirectional));
    }
    if (arch.batch_norm) {
        p.bn = BatchNormParams::load(params, block_prefix(block) + ".bn", arch.bn_momentum, arch.bn_epsilon);
    }
    return p;
}

ResidualBlockParams zero_block_grads(const NetworkArchitecture& arch) {
    ResidualBlockParams g;
    for (std::size_t l = 1; l <= arch.bidir_layers_per_block; ++l) {
        g.layers.push_back(BidirLayerParams::zeros(arch.hidden_width, arch.hidden_width, arch.bidirectional));
    }
    g.bn = BatchNormParams::identity(arch.hidden_width);
    g.bn.alpha.setZero();
    return g;
}

} // namespace

std::string to_string(DropoutPlacement placement) {
    switch (placement) {
    case DropoutPlacement::Between: return "between";
    case DropoutPlacement::Output: return "output";
    case DropoutPlacement::Both: return "both";
    }
    return "between";
}

DropoutPlacement parse_dropout_placement(const std::string& text) {
    if (text == "between") return DropoutPlacement::Between;
    if (text == "output") return DropoutPlacement::Output;
    if (text == "both") return DropoutPlacement::Both;
    throw ConfigError("dropout_placement must be between, output or both; got '" + text + "'");
}

bool NetworkArchitecture::residual_for_block(std::size_t block) const {
    auto it = block_residual.find(block);
    return it == block_residual.end() ? residual : it->second;
}

void NetworkArchitecture::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
    };
    positive(residual_blocks, "residual_blocks");
    positive(bidir_layers_per_block, "bidir_layers_per_block");
    positive(hidden_width, "hidden_width");
    positive(input_channels, "input_channels");
    positive(num_classes, "num_classes");
    positive(window_length, "window_length");
    validate_keep_prob(dropout_keep_prob);
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must lie in (0, 1)");
    if (!(bn_epsilon > 0.0)) throw ConfigError("bn_epsilon must be positive");
    for (const auto& [block, flag] : block_residual) {
        if (block == 0 || block > residual_blocks) {
            throw ConfigError("block index " + std::to_string(block) + " out of range; blocks are numbered 1.." +
                              std::to_string(residual_blocks));
        }
    }
}

std::string block_prefix(std::size_t block) { return "block" + std::to_string(block); }

std::string layer_prefix(std::size_t block, std::size_t layer) {
    return block_prefix(block) + ".layer" + std::to_string(layer);
}

ParamStore init_params(const NetworkArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    ParamStore store;
    const std::size_t h = arch.hidden_width;
    store.add("input.W", Tensor::from_matrix(uniform_init(h, arch.input_channels, rng)));
    store.add("input.b", Tensor(Shape{h}));
    for (std::size_t b = 1; b <= arch.residual_blocks; ++b) {
        for (std::size_t l = 1; l <= arch.bidir_layers_per_block; ++l) {
            BidirLayerParams::initialized(h, h, rng, arch.bidirectional).register_in(store, layer_prefix(b, l));
        }
        if (arch.batch_norm) BatchNormParams::identity(h, arch.bn_beta_init).register_in(store, block_prefix(b) + ".bn");
    }
    store.add("head.W", Tensor::from_matrix(uniform_init(arch.num_classes, h, rng)));
    store.add("head.b", Tensor(Shape{arch.num_classes}));
    return store;
}

Matrix network_forward(const NetworkArchitecture& arch, const ParamStore& params, const Tensor& x, Mode mode,
                       Rng* rng, NetworkCache* cache) {
    if (x.rank() != 3 || x.dim(1) != arch.window_length || x.dim(2) != arch.input_channels) {
        throw DimensionError("layers", "network expects [batch x " + std::to_string(arch.window_length) + " x " +
                                           std::to_string(arch.input_channels) + "], got " + shape_string(x.shape()));
    }
    const bool use_dropout = mode == Mode::Train && arch.dropout_keep_prob < 1.0;
    if (use_dropout && rng == nullptr) throw ConfigError("layers", "train-mode dropout needs a random generator");

    NetworkCache local;
    NetworkCache& c = cache ? *cache : local;
    c.mode = mode;
    c.input = to_sequence(x);
    const Matrix w_in = params.param("input.W").matrix();
    c.input_preactivation = (c.input.values * w_in.transpose()).rowwise() + params.param("input.b").data().transpose();
    Sequence cur{relu_eval(c.input_preactivation), c.input.steps, c.input.batch};

    c.blocks.clear();
    c.block_caches.assign(arch.residual_blocks, ResidualBlockCache{});
    c.block_masks.assign(arch.residual_blocks, Matrix{});
    for (std::size_t b = 1; b <= arch.residual_blocks; ++b) {
        c.blocks.push_back(load_block(arch, params, b));
        cur = residual_block_sequence_forward(c.blocks.back(), cur, mode, block_options(arch, b),
                                              &c.block_caches[b - 1]);
        if (use_dropout && dropout_between(arch) && b < arch.residual_blocks) {
            c.block_masks[b - 1] = dropout_mask(cur.values.rows(), cur.values.cols(), arch.dropout_keep_prob, *rng);
            cur.values = cur.values.cwiseProduct(c.block_masks[b - 1]);
        }
    }

    c.last_features = cur.step(cur.steps - 1);
    c.output_mask.resize(0, 0);
    if (use_dropout && dropout_output(arch)) {
        c.output_mask = dropout_mask(c.last_features.rows(), c.last_features.cols(), arch.dropout_keep_prob, *rng);
        c.last_features = c.last_features.cwiseProduct(c.output_mask);
    }
    const Matrix w_head = params.param("head.W").matrix();
    return (c.last_features * w_head.transpose()).rowwise() + params.param("head.b").data().transpose();
}

void network_backward(const NetworkArchitecture& arch, ParamStore& params, const NetworkCache& cache,
                      const Matrix& dscores) {
    const Matrix w_head = params.param("head.W").matrix();
    const Matrix dhead = dscores.transpose() * cache.last_features;
    params.accumulate_grad("head.W", Eigen::Map<const Vector>(dhead.data(), dhead.size()));
    params.accumulate_grad("head.b", dscores.colwise().sum().transpose());

    Matrix dlast = dscores * w_head;
    if (cache.output_mask.size() != 0) dlast = dlast.cwiseProduct(cache.output_mask);

    const std::size_t steps = cache.input.steps;
    Sequence d{Matrix::Zero(cache.input.values.rows(), static_cast<Index>(arch.hidden_width)), steps,
               cache.input.batch};
    d.step(steps - 1) = dlast;

    for (std::size_t b = arch.residual_blocks; b >= 1; --b) {
        const Matrix& mask = cache.block_masks[b - 1];
        if (mask.size() != 0) d.values = d.values.cwiseProduct(mask);
        ResidualBlockParams grads = zero_block_grads(arch);
        d = residual_block_sequence_backward(cache.blocks[b - 1], cache.block_caches[b - 1], d,
                                             block_options(arch, b), grads);
        for (std::size_t l = 1; l <= arch.bidir_layers_per_block; ++l) {
            grads.layers[l - 1].accumulate_grads(params, layer_prefix(b, l));
        }
        if (arch.batch_norm) grads.bn.accumulate_grads(params, block_prefix(b) + ".bn");
    }

    const Matrix dpre = (cache.input_preactivation.array() > 0.0).select(d.values.array(), 0.0).matrix();
    const Matrix dw_in = dpre.transpose() * cache.input.values;
    params.accumulate_grad("input.W", Eigen::Map<const Vector>(dw_in.data(), dw_in.size()));
    params.accumulate_grad("input.b", dpre.colwise().sum().transpose());
}

void apply_running_stats(const NetworkArchitecture& arch, ParamStore& params, const NetworkCache& cache) {
    if (!arch.batch_norm || cache.mode != Mode::Train) return;
    for (std::size_t b = 1; b <= arch.residual_blocks; ++b) {
        BatchNormParams bn = cache.blocks[b - 1].bn;
        update_running_stats(bn, cache.block_caches[b - 1].bn);
        const std::string prefix = block_prefix(b) + ".bn";
        params.buffer(prefix + ".running_mean").data() = bn.running_mean;
        params.buffer(prefix + ".running_var").data() = bn.running_var;
    }
}

void check_params_match(const NetworkArchitecture& arch, const ParamStore& params) {
    const ParamStore expected = init_params(arch, 0);
    std::ostringstream problems;
    auto compare = [&](const auto& want, const auto& have, const char* kind) {
        for (const auto& [path, tensor] : want) {
            auto it = have.find(path);
            if (it == have.end()) {
                problems << "\n  missing " << kind << " " << path << " " << shape_string(tensor.shape());
            } else if (it->second.shape() != tensor.shape()) {
                problems << "\n  " << path << ": checkpoint " << shape_string(it->second.shape()) << " vs config "
                         << shape_string(tensor.shape());
            }
        }
        for (const auto& [path, tensor] : have) {
            if (!want.count(path)) problems << "\n  unexpected " << kind << " " << path;
        }
    };
    compare(expected.params(), params.params(), "parameter");
    compare(expected.buffers(), params.buffers(), "buffer");
    const std::string text = problems.str();
    if (!text.empty()) throw DimensionError("checkpoint", "parameters do not match the architecture:" + text);
}

std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Index r = 0; r < scores.rows(); ++r) {
        Index best = 0;
        scores.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

} // namespace drbl

#ifndef DRBL_NETWORK_HPP
#define DRBL_NETWORK_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drbl/layers.hpp"

namespace drbl {

enum class DropoutPlacement { Between, Output, Both };

std::string to_string(DropoutPlacement placement);
DropoutPlacement parse_dropout_placement(const std::string& text);

/// Declarative stack description. Blocks and layers are numbered from 1 in
/// configuration and parameter paths ("block1.layer2...").
struct NetworkArchitecture {
    std::size_t residual_blocks = 2;
    std::size_t bidir_layers_per_block = 2;
    std::size_t hidden_width = 28;
    std::size_t input_channels = 9;
    std::size_t num_classes = 6;
    std::size_t window_length = 128;
    double dropout_keep_prob = 0.85;
    DropoutPlacement dropout_placement = DropoutPlacement::Between;

    bool residual = true;
    bool bidirectional = true;
    bool batch_norm = true;
    /// Per-block skip switches keyed by 1-based block index; overrides `residual`.
    std::map<std::size_t, bool> block_residual;

    double bn_beta_init = 0.0;
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-5;

    std::size_t lstm_cell_count() const {
        return residual_blocks * bidir_layers_per_block * (bidirectional ? 2 : 1);
    }
    bool residual_for_block(std::size_t block) const;
    void validate() const;
};

std::string block_prefix(std::size_t block);
std::string layer_prefix(std::size_t block, std::size_t layer);

/// Fresh parameters: scaled-uniform weights, gate biases 1, batch norm at
/// alpha=1, beta=bn_beta_init, running mean 0 and variance 1.
ParamStore init_params(const NetworkArchitecture& arch, std::uint64_t seed);

/// Everything the backward pass needs from one forward pass.
struct NetworkCache {
    Mode mode = Mode::Infer;
    Sequence input;
    Matrix input_preactivation;
    std::vector<ResidualBlockParams> blocks;
    std::vector<ResidualBlockCache> block_caches;
    std::vector<Matrix> block_masks;   ///< dropout after block k (empty when none)
    Matrix output_mask;
    Matrix last_features;              ///< t = T features fed to the head
};

/// Input projection d -> h with ReLU, the residual blocks, then the dense head
/// on the final time step only. Returns class scores [batch x C]. `rng` is
/// required in train mode when dropout is active. `params` is not modified.
Matrix network_forward(const NetworkArchitecture& arch, const ParamStore& params, const Tensor& x, Mode mode,
                       Rng* rng, NetworkCache* cache = nullptr);

/// Accumulates dL/dθ into `params.grads()` given dL/dscores.
void network_backward(const NetworkArchitecture& arch, ParamStore& params, const NetworkCache& cache,
                      const Matrix& dscores);

/// Folds the batch statistics of a train-mode pass into the running averages.
void apply_running_stats(const NetworkArchitecture& arch, ParamStore& params, const NetworkCache& cache);

/// Throws if `params` does not hold exactly the paths and shapes `arch` needs,
/// listing every mismatch.
void check_params_match(const NetworkArchitecture& arch, const ParamStore& params);

std::vector<int> argmax_rows(const Matrix& scores);

} // namespace drbl

#endif // DRBL_NETWORK_HPP

#ifndef DRBL_LAYERS_HPP
#define DRBL_LAYERS_HPP

#include <string>
#include <vector>

#include "drbl/param_store.hpp"
#include "drbl/random.hpp"
#include "drbl/tensor.hpp"

namespace drbl {

enum class Mode { Train, Infer };

/// Time-major activations: rows [t*batch, (t+1)*batch) hold time step t.
struct Sequence {
    Matrix values;
    std::size_t steps = 0;
    std::size_t batch = 0;

    std::size_t width() const { return static_cast<std::size_t>(values.cols()); }
    auto step(std::size_t t) { return values.middleRows(static_cast<Eigen::Index>(t * batch), static_cast<Eigen::Index>(batch)); }
    auto step(std::size_t t) const { return values.middleRows(static_cast<Eigen::Index>(t * batch), static_cast<Eigen::Index>(batch)); }
};

/// [batch x T x d] tensor to time-major sequence, and back.
Sequence to_sequence(const Tensor& x);
Tensor to_tensor(const Sequence& s);
Sequence reverse_steps(const Sequence& s);

// --- LSTM -----------------------------------------------------------------

/// Gate weights act on the concatenation [h_{t-1}, x_t]; each is [h x (h+d)].
struct LstmLayerParams {
    Matrix W_f, W_i, W_c, W_o;
    Vector b_f, b_i, b_c, b_o;

    static LstmLayerParams zeros(std::size_t hidden, std::size_t input);
    /// Scaled-uniform weights; forget/input/output biases 1, candidate bias 0.
    static LstmLayerParams initialized(std::size_t hidden, std::size_t input, Rng& rng);

    std::size_t hidden() const { return static_cast<std::size_t>(W_f.rows()); }
    std::size_t input() const { return static_cast<std::size_t>(W_f.cols()) - hidden(); }

    void register_in(ParamStore& store, const std::string& prefix) const;
    static LstmLayerParams load(const ParamStore& store, const std::string& prefix);
    void accumulate_grads(ParamStore& store, const std::string& prefix) const;
};

struct LstmState {
    Matrix h;
    Matrix C;

    static LstmState zeros(std::size_t batch, std::size_t hidden) {
        return {Matrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden)),
                Matrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden))};
    }
};

/// Gate activations of one step, kept for inspection and for backward.
struct LstmGates {
    Matrix f, i, c_tilde, o;
};

/// One step of the LSTM recurrence on x_t [batch x d].
LstmState lstm_cell_step(const LstmLayerParams& params, const Matrix& x_t, const LstmState& state,
                         LstmGates* gates = nullptr);

/// Gradients of one step given dL/dh_t and dL/dC_t (the latter from later steps).
struct LstmStepGrads {
    Matrix dx, dh_prev, dC_prev;
};
LstmStepGrads lstm_cell_backward(const LstmLayerParams& params, const Matrix& x_t, const LstmState& prev,
                                 const LstmGates& gates, const LstmState& next, const Matrix& dh,
                                 const Matrix& dC, LstmLayerParams& grads);

struct LstmCache {
    Matrix inputs;   ///< [T*batch x (h+d)] rows of [h_{t-1}, x_t]
    Matrix gates;    ///< [T*batch x 4h] activated f, i, c~, o
    Matrix cells;    ///< [T*batch x h] C_t
    Matrix tanh_cells;
};

/// Unrolls from the all-zero state and returns h_t for every step.
Sequence lstm_sequence_forward(const LstmLayerParams& params, const Sequence& x, LstmCache* cache = nullptr);
/// Full backpropagation through time. Adds parameter gradients into `grads`
/// and returns dL/dx.
Sequence lstm_sequence_backward(const LstmLayerParams& params, const LstmCache& cache, const Sequence& dh,
                                LstmLayerParams& grads);

Tensor lstm_layer_forward(const LstmLayerParams& params, const Tensor& x);

// --- bidirectional layer ---------------------------------------------------

/// Forward and time-reversed LSTMs whose outputs are concatenated and
/// projected back to h features through ReLU. With `bidirectional` false the
/// backward cell is absent and the projection is [h x h].
struct BidirLayerParams {
    LstmLayerParams forward_cell;
    LstmLayerParams backward_cell;
    Matrix W_proj;
    Vector b_proj;
    bool bidirectional = true;

    static BidirLayerParams zeros(std::size_t hidden, std::size_t input, bool bidirectional = true);
    static BidirLayerParams initialized(std::size_t hidden, std::size_t input, Rng& rng, bool bidirectional = true);

    std::size_t hidden() const { return forward_cell.hidden(); }

    void register_in(ParamStore& store, const std::string& prefix) const;
    static BidirLayerParams load(const ParamStore& store, const std::string& prefix, bool bidirectional);
    void accumulate_grads(ParamStore& store, const std::string& prefix) const;
};

struct BidirCache {
    LstmCache forward;
    LstmCache backward;
    Matrix concat;          ///< [T*batch x 2h]
    Matrix preactivation;   ///< before ReLU
};

Sequence bidir_sequence_forward(const BidirLayerParams& params, const Sequence& x, BidirCache* cache = nullptr);
Sequence bidir_sequence_backward(const BidirLayerParams& params, const BidirCache& cache, const Sequence& dy,
                                 BidirLayerParams& grads);

Tensor bidir_layer_forward(const BidirLayerParams& params, const Tensor& x);

// --- batch normalization ---------------------------------------------------

struct BatchNormParams {
    Vector alpha;
    Vector beta;
    Vector running_mean;
    Vector running_var;
    double momentum = 0.99;
    double epsilon = 1e-5;

    static BatchNormParams identity(std::size_t width, double beta_init = 0.0);

    void register_in(ParamStore& store, const std::string& prefix) const;
    static BatchNormParams load(const ParamStore& store, const std::string& prefix, double momentum, double epsilon);
    void accumulate_grads(ParamStore& store, const std::string& prefix) const;
};

struct BatchNormCache {
    Mode mode = Mode::Train;
    Matrix x_hat;
    Vector inv_std;
    Vector batch_mean;
    Vector batch_var;
};

/// Normalizes each column over all rows. Pure: running statistics are not
/// touched here, see update_running_stats.
Matrix batch_norm_forward(const BatchNormParams& params, const Matrix& x, Mode mode,
                          BatchNormCache* cache = nullptr);
Matrix batch_norm_backward(const BatchNormParams& params, const BatchNormCache& cache, const Matrix& dy,
                           BatchNormParams& grads);
void update_running_stats(BatchNormParams& params, const BatchNormCache& cache);

/// x is [N x h]. Train mode normalizes with batch statistics and folds them
/// into the running averages; infer mode uses the running averages only.
Tensor batch_norm(const Tensor& x, BatchNormParams& params, Mode mode);

// --- dropout ---------------------------------------------------------------

void validate_keep_prob(double keep_prob);

/// Inverted-dropout mask: entries are 0 or 1/keep_prob. Consumes no
/// randomness when keep_prob == 1.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double keep_prob, Rng& rng);

Tensor dropout(const Tensor& x, double keep_prob, Rng& rng, Mode mode);

// --- residual block --------------------------------------------------------

struct ResidualBlockParams {
    std::vector<BidirLayerParams> layers;
    BatchNormParams bn;
};

struct BlockOptions {
    bool residual = true;
    bool batch_norm = true;
};

struct ResidualBlockCache {
    std::vector<Sequence> layer_inputs;
    std::vector<BidirCache> layers;
    BatchNormCache bn;
};

Sequence residual_block_sequence_forward(const ResidualBlockParams& params, const Sequence& x, Mode mode,
                                         const BlockOptions& options, ResidualBlockCache* cache = nullptr);
Sequence residual_block_sequence_backward(const ResidualBlockParams& params, const ResidualBlockCache& cache,
                                          const Sequence& dy, const BlockOptions& options,
                                          ResidualBlockParams& grads);

/// Block over a [batch x T x h] tensor; train mode updates the block's
/// batch-norm running statistics.
Tensor residual_block_forward(ResidualBlockParams& params, const Tensor& x, Mode mode,
                              const BlockOptions& options = {});

} // namespace drbl

#endif // DRBL_LAYERS_HPP

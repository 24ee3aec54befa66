#include "drbl/layers.hpp"

#include <cmath>

#include "drbl/ops.hpp"

namespace drbl {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(idx(rows), idx(cols));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
    return m;
}

Matrix load_matrix(const ParamStore& store, const std::string& path) {
    const Tensor& t = store.param(path);
    if (t.rank() != 2) throw DimensionError("layers", "'" + path + "' must be a matrix, got " + shape_string(t.shape()));
    return t.matrix();
}

void add_matrix_grad(ParamStore& store, const std::string& path, const Matrix& g) {
    store.accumulate_grad(path, Eigen::Map<const Vector>(g.data(), g.size()));
}

void require_width(const Sequence& x, std::size_t width, const char* what) {
    if (x.width() != width) {
        throw DimensionError("layers", std::string(what) + " expects " + std::to_string(width) +
                                           " input features, got " + std::to_string(x.width()));
    }
}

Matrix stacked_weights(const LstmLayerParams& p) {
    const Index h = p.W_f.rows();
    Matrix w(4 * h, p.W_f.cols());
    w << p.W_f, p.W_i, p.W_c, p.W_o;
    return w;
}

Eigen::RowVectorXd stacked_bias(const LstmLayerParams& p) {
    const Index h = p.b_f.size();
    Eigen::RowVectorXd b(4 * h);
    b << p.b_f.transpose(), p.b_i.transpose(), p.b_c.transpose(), p.b_o.transpose();
    return b;
}

/// Gate weights split into the input and recurrent parts, transposed for
/// row-major batches.
struct StackedCell {
    Matrix wx_t;
    Matrix wh_t;
    Eigen::RowVectorXd bias;
};

StackedCell stack_cell(const LstmLayerParams& p) {
    const Matrix w = stacked_weights(p);
    const Index h = p.W_f.rows();
    return {w.rightCols(w.cols() - h).transpose(), w.leftCols(h).transpose(), stacked_bias(p)};
}

/// Activated gates [f, i, c~, o] of one step. Shared by the single step and
/// the unrolled layer so both produce identical bits.
Matrix step_gates(const StackedCell& s, const Matrix& x_t, const Matrix& h_prev) {
    const Index h = s.wh_t.rows();
    Matrix pre(x_t.rows(), 4 * h);
    pre.noalias() = x_t * s.wx_t;
    pre.noalias() += h_prev * s.wh_t;
    pre.rowwise() += s.bias;
    Matrix g(x_t.rows(), 4 * h);
    g.leftCols(2 * h) = sigmoid_eval(pre.leftCols(2 * h));
    g.middleCols(2 * h, h) = tanh_eval(pre.middleCols(2 * h, h));
    g.rightCols(h) = sigmoid_eval(pre.rightCols(h));
    return g;
}

void add_stacked_grads(LstmLayerParams& grads, const Matrix& dw, const Eigen::RowVectorXd& db) {
    const Index h = grads.W_f.rows();
    grads.W_f += dw.middleRows(0, h);
    grads.W_i += dw.middleRows(h, h);
    grads.W_c += dw.middleRows(2 * h, h);
    grads.W_o += dw.middleRows(3 * h, h);
    grads.b_f += db.segment(0, h).transpose();
    grads.b_i += db.segment(h, h).transpose();
    grads.b_c += db.segment(2 * h, h).transpose();
    grads.b_o += db.segment(3 * h, h).transpose();
}

template <typename Derived>
Matrix sigmoid_derivative_from_output(const Eigen::MatrixBase<Derived>& y) {
    return (y.array() * (1.0 - y.array())).matrix();
}

} // namespace

// --- sequences ---------------------------------------------------------------

Sequence to_sequence(const Tensor& x) {
    if (x.rank() != 3) throw DimensionError("layers", "expected [batch x T x d], got " + shape_string(x.shape()));
    const std::size_t batch = x.dim(0), steps = x.dim(1), width = x.dim(2);
    Sequence s{Matrix(idx(steps * batch), idx(width)), steps, batch};
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            s.values.row(idx(t * batch + b)) =
                x.data().segment(idx((b * steps + t) * width), idx(width)).transpose();
    return s;
}

Tensor to_tensor(const Sequence& s) {
    const std::size_t width = s.width();
    Tensor x(Shape{s.batch, s.steps, width});
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t t = 0; t < s.steps; ++t)
            x.data().segment(idx((b * s.steps + t) * width), idx(width)) =
                s.values.row(idx(t * s.batch + b)).transpose();
    return x;
}

Sequence reverse_steps(const Sequence& s) {
    Sequence r{Matrix(s.values.rows(), s.values.cols()), s.steps, s.batch};
    for (std::size_t t = 0; t < s.steps; ++t) r.step(s.steps - 1 - t) = s.step(t);
    return r;
}

// --- LSTM params ---------------------------------------------------------------

LstmLayerParams LstmLayerParams::zeros(std::size_t hidden, std::size_t input) {
    const Index h = idx(hidden), w = idx(hidden + input);
    return {Matrix::Zero(h, w), Matrix::Zero(h, w), Matrix::Zero(h, w), Matrix::Zero(h, w),
            Vector::Zero(h),    Vector::Zero(h),    Vector::Zero(h),    Vector::Zero(h)};
}

LstmLayerParams LstmLayerParams::initialized(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmLayerParams p = zeros(hidden, input);
    const std::size_t fan_in = hidden + input;
    p.W_f = uniform_matrix(hidden, fan_in, fan_in, hidden, rng);
    p.W_i = uniform_matrix(hidden, fan_in, fan_in, hidden, rng);
    p.W_c = uniform_matrix(hidden, fan_in, fan_in, hidden, rng);
    p.W_o = uniform_matrix(hidden, fan_in, fan_in, hidden, rng);
    p.b_f.setOnes();
    p.b_i.setOnes();
    p.b_o.setOnes();
    return p;
}

void LstmLayerParams::register_in(ParamStore& store, const std::string& prefix) const {
    store.add(prefix + ".W_f", Tensor::from_matrix(W_f));
    store.add(prefix + ".W_i", Tensor::from_matrix(W_i));
    store.add(prefix + ".W_c", Tensor::from_matrix(W_c));
    store.add(prefix + ".W_o", Tensor::from_matrix(W_o));
    store.add(prefix + ".b_f", Tensor::from_vector(b_f));
    store.add(prefix + ".b_i", Tensor::from_vector(b_i));
    store.add(prefix + ".b_c", Tensor::from_vector(b_c));
    store.add(prefix + ".b_o", Tensor::from_vector(b_o));
}

LstmLayerParams LstmLayerParams::load(const ParamStore& store, const std::string& prefix) {
    LstmLayerParams p{load_matrix(store, prefix + ".W_f"), load_matrix(store, prefix + ".W_i"),
                      load_matrix(store, prefix + ".W_c"), load_matrix(store, prefix + ".W_o"),
                      store.param(prefix + ".b_f").data(), store.param(prefix + ".b_i").data(),
                      store.param(prefix + ".b_c").data(), store.param(prefix + ".b_o").data()};
    return p;
}

void LstmLayerParams::accumulate_grads(ParamStore& store, const std::string& prefix) const {
    add_matrix_grad(store, prefix + ".W_f", W_f);
    add_matrix_grad(store, prefix + ".W_i", W_i);
    add_matrix_grad(store, prefix + ".W_c", W_c);
    add_matrix_grad(store, prefix + ".W_o", W_o);
    store.accumulate_grad(prefix + ".b_f", b_f);
    store.accumulate_grad(prefix + ".b_i", b_i);
    store.accumulate_grad(prefix + ".b_c", b_c);
    store.accumulate_grad(prefix + ".b_o", b_o);
}

// --- LSTM step ---------------------------------------------------------------

LstmState lstm_cell_step(const LstmLayerParams& params, const Matrix& x_t, const LstmState& state,
                         LstmGates* gates) {
    const Index h = idx(params.hidden());
    if (x_t.cols() != idx(params.input()) || state.h.cols() != h || state.C.cols() != h ||
        state.h.rows() != x_t.rows() || state.C.rows() != x_t.rows()) {
        throw DimensionError("layers", "lstm_cell_step shape mismatch: x [" + std::to_string(x_t.rows()) + "x" +
                                           std::to_string(x_t.cols()) + "], state h [" +
                                           std::to_string(state.h.rows()) + "x" + std::to_string(state.h.cols()) +
                                           "], cell expects input " + std::to_string(params.input()) +
                                           " hidden " + std::to_string(params.hidden()));
    }
    const Matrix g = step_gates(stack_cell(params), x_t, state.h);
    LstmState next;
    next.C = g.leftCols(h).cwiseProduct(state.C) + g.middleCols(h, h).cwiseProduct(g.middleCols(2 * h, h));
    next.h = g.rightCols(h).cwiseProduct(tanh_eval(next.C));
    if (gates) *gates = {g.leftCols(h), g.middleCols(h, h), g.middleCols(2 * h, h), g.rightCols(h)};
    return next;
}

LstmStepGrads lstm_cell_backward(const LstmLayerParams& params, const Matrix& x_t, const LstmState& prev,
                                 const LstmGates& gates, const LstmState& next, const Matrix& dh,
                                 const Matrix& dC, LstmLayerParams& grads) {
    const Index h = idx(params.hidden());
    const Matrix tanh_c = tanh_eval(next.C);
    const Matrix dcell =
        dC + dh.cwiseProduct(gates.o).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
    const Matrix dz_f = dcell.cwiseProduct(prev.C).cwiseProduct(sigmoid_derivative_from_output(gates.f));
    const Matrix dz_i = dcell.cwiseProduct(gates.c_tilde).cwiseProduct(sigmoid_derivative_from_output(gates.i));
    const Matrix dz_c =
        dcell.cwiseProduct(gates.i).cwiseProduct((1.0 - gates.c_tilde.array().square()).matrix());
    const Matrix dz_o = dh.cwiseProduct(tanh_c).cwiseProduct(sigmoid_derivative_from_output(gates.o));

    Matrix z(x_t.rows(), h + x_t.cols());
    z << prev.h, x_t;
    grads.W_f += dz_f.transpose() * z;
    grads.W_i += dz_i.transpose() * z;
    grads.W_c += dz_c.transpose() * z;
    grads.W_o += dz_o.transpose() * z;
    grads.b_f += dz_f.colwise().sum().transpose();
    grads.b_i += dz_i.colwise().sum().transpose();
    grads.b_c += dz_c.colwise().sum().transpose();
    grads.b_o += dz_o.colwise().sum().transpose();

    const Matrix dz = dz_f * params.W_f + dz_i * params.W_i + dz_c * params.W_c + dz_o * params.W_o;
    return {dz.rightCols(x_t.cols()), dz.leftCols(h), dcell.cwiseProduct(gates.f)};
}

// --- LSTM sequence -------------------------------------------------------------

Sequence lstm_sequence_forward(const LstmLayerParams& params, const Sequence& x, LstmCache* cache) {
    if (x.steps == 0) throw DimensionError("layers", "lstm_layer_forward needs at least one time step");
    require_width(x, params.input(), "lstm layer");
    const Index h = idx(params.hidden());
    const Index batch = idx(x.batch);
    const StackedCell cell = stack_cell(params);

    Sequence out{Matrix(x.values.rows(), h), x.steps, x.batch};
    if (cache) {
        cache->inputs.resize(x.values.rows(), h + x.values.cols());
        cache->gates.resize(x.values.rows(), 4 * h);
        cache->cells.resize(x.values.rows(), h);
        cache->tanh_cells.resize(x.values.rows(), h);
    }
    Matrix h_prev = Matrix::Zero(batch, h);
    Matrix c_prev = Matrix::Zero(batch, h);
    for (std::size_t t = 0; t < x.steps; ++t) {
        const Matrix x_t = x.step(t);
        const Matrix g = step_gates(cell, x_t, h_prev);
        Matrix c = g.leftCols(h).cwiseProduct(c_prev) + g.middleCols(h, h).cwiseProduct(g.middleCols(2 * h, h));
        Matrix tc = tanh_eval(c);
        Matrix hn = g.rightCols(h).cwiseProduct(tc);
        if (cache) {
            const Index r = idx(t) * batch;
            cache->inputs.middleRows(r, batch) << h_prev, x_t;
            cache->gates.middleRows(r, batch) = g;
            cache->cells.middleRows(r, batch) = c;
            cache->tanh_cells.middleRows(r, batch) = tc;
        }
        out.step(t) = hn;
        h_prev = std::move(hn);
        c_prev = std::move(c);
    }
    return out;
}

Sequence lstm_sequence_backward(const LstmLayerParams& params, const LstmCache& cache, const Sequence& dh,
                                LstmLayerParams& grads) {
    const Index h = idx(params.hidden());
    const Index batch = idx(dh.batch);
    const Matrix w = stacked_weights(params);
    const Matrix wh = w.leftCols(h);

    Matrix dz(dh.values.rows(), 4 * h);
    Matrix dh_next = Matrix::Zero(batch, h);
    Matrix dc_next = Matrix::Zero(batch, h);
    for (std::size_t step = dh.steps; step-- > 0;) {
        const Index r = idx(step) * batch;
        const auto g = cache.gates.middleRows(r, batch);
        const auto f = g.leftCols(h);
        const auto i = g.middleCols(h, h);
        const auto c_tilde = g.middleCols(2 * h, h);
        const auto o = g.rightCols(h);
        const auto tc = cache.tanh_cells.middleRows(r, batch);

        const Matrix dht = dh.step(step) + dh_next;
        Matrix dc = dht.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;
        auto dzt = dz.middleRows(r, batch);
        if (step > 0) {
            dzt.leftCols(h) = dc.cwiseProduct(cache.cells.middleRows(r - batch, batch))
                                  .cwiseProduct(sigmoid_derivative_from_output(f));
        } else {
            dzt.leftCols(h).setZero();
        }
        dzt.middleCols(h, h) = dc.cwiseProduct(c_tilde).cwiseProduct(sigmoid_derivative_from_output(i));
        dzt.middleCols(2 * h, h) = dc.cwiseProduct(i).cwiseProduct((1.0 - c_tilde.array().square()).matrix());
        dzt.rightCols(h) = dht.cwiseProduct(tc).cwiseProduct(sigmoid_derivative_from_output(o));

        dh_next.noalias() = dzt * wh;
        dc_next = dc.cwiseProduct(f);
    }
    add_stacked_grads(grads, dz.transpose() * cache.inputs, dz.colwise().sum());
    const Index d = w.cols() - h;
    return Sequence{dz * w.rightCols(d), dh.steps, dh.batch};
}

Tensor lstm_layer_forward(const LstmLayerParams& params, const Tensor& x) {
    if (x.rank() == 3 && x.dim(1) == 0) throw DimensionError("layers", "empty sequence");
    return to_tensor(lstm_sequence_forward(params, to_sequence(x)));
}

// --- bidirectional layer ---------------------------------------------------------

BidirLayerParams BidirLayerParams::zeros(std::size_t hidden, std::size_t input, bool bidirectional) {
    BidirLayerParams p;
    p.bidirectional = bidirectional;
    p.forward_cell = LstmLayerParams::zeros(hidden, input);
    if (bidirectional) p.backward_cell = LstmLayerParams::zeros(hidden, input);
    p.W_proj = Matrix::Zero(idx(hidden), idx(bidirectional ? 2 * hidden : hidden));
    p.b_proj = Vector::Zero(idx(hidden));
    return p;
}

BidirLayerParams BidirLayerParams::initialized(std::size_t hidden, std::size_t input, Rng& rng,
                                               bool bidirectional) {
    BidirLayerParams p = zeros(hidden, input, bidirectional);
    p.forward_cell = LstmLayerParams::initialized(hidden, input, rng);
    if (bidirectional) p.backward_cell = LstmLayerParams::initialized(hidden, input, rng);
    const std::size_t in = bidirectional ? 2 * hidden : hidden;
    p.W_proj = uniform_matrix(hidden, in, in, hidden, rng);
    return p;
}

void BidirLayerParams::register_in(ParamStore& store, const std::string& prefix) const {
    forward_cell.register_in(store, prefix + ".forward");
    if (bidirectional) backward_cell.register_in(store, prefix + ".backward");
    store.add(prefix + ".proj.W", Tensor::from_matrix(W_proj));
    store.add(prefix + ".proj.b", Tensor::from_vector(b_proj));
}

BidirLayerParams BidirLayerParams::load(const ParamStore& store, const std::string& prefix, bool bidirectional) {
    BidirLayerParams p;
    p.bidirectional = bidirectional;
    p.forward_cell = LstmLayerParams::load(store, prefix + ".forward");
    if (bidirectional) p.backward_cell = LstmLayerParams::load(store, prefix + ".backward");
    p.W_proj = load_matrix(store, prefix + ".proj.W");
    p.b_proj = store.param(prefix + ".proj.b").data();
    return p;
}

void BidirLayerParams::accumulate_grads(ParamStore& store, const std::string& prefix) const {
    forward_cell.accumulate_grads(store, prefix + ".forward");
    if (bidirectional) backward_cell.accumulate_grads(store, prefix + ".backward");
    add_matrix_grad(store, prefix + ".proj.W", W_proj);
    store.accumulate_grad(prefix + ".proj.b", b_proj);
}

Sequence bidir_sequence_forward(const BidirLayerParams& params, const Sequence& x, BidirCache* cache) {
    const Index h = idx(params.hidden());
    const Sequence fwd = lstm_sequence_forward(params.forward_cell, x, cache ? &cache->forward : nullptr);
    Matrix concat;
    if (params.bidirectional) {
        const Sequence bwd = reverse_steps(
            lstm_sequence_forward(params.backward_cell, reverse_steps(x), cache ? &cache->backward : nullptr));
        concat.resize(x.values.rows(), 2 * h);
        concat << fwd.values, bwd.values;
    } else {
        concat = fwd.values;
    }
    if (concat.cols() != params.W_proj.cols()) {
        throw DimensionError("layers", "projection expects " + std::to_string(params.W_proj.cols()) +
                                           " features, got " + std::to_string(concat.cols()));
    }
    Matrix pre = (concat * params.W_proj.transpose()).rowwise() + params.b_proj.transpose();
    Sequence out{relu_eval(pre), x.steps, x.batch};
    if (cache) {
        cache->concat = std::move(concat);
        cache->preactivation = std::move(pre);
    }
    return out;
}

Sequence bidir_sequence_backward(const BidirLayerParams& params, const BidirCache& cache, const Sequence& dy,
                                 BidirLayerParams& grads) {
    const Index h = idx(params.hidden());
    const Matrix dpre = (cache.preactivation.array() > 0.0).select(dy.values.array(), 0.0).matrix();
    grads.W_proj += dpre.transpose() * cache.concat;
    grads.b_proj += dpre.colwise().sum().transpose();
    const Matrix dconcat = dpre * params.W_proj;

    Sequence dfwd{dconcat.leftCols(h), dy.steps, dy.batch};
    Sequence dx = lstm_sequence_backward(params.forward_cell, cache.forward, dfwd, grads.forward_cell);
    if (params.bidirectional) {
        const Sequence dbwd{dconcat.rightCols(h), dy.steps, dy.batch};
        const Sequence dxr =
            lstm_sequence_backward(params.backward_cell, cache.backward, reverse_steps(dbwd), grads.backward_cell);
        dx.values += reverse_steps(dxr).values;
    }
    return dx;
}

Tensor bidir_layer_forward(const BidirLayerParams& params, const Tensor& x) {
    return to_tensor(bidir_sequence_forward(params, to_sequence(x)));
}

// --- batch normalization -------------------------------------------------------

BatchNormParams BatchNormParams::identity(std::size_t width, double beta_init) {
    BatchNormParams p;
    p.alpha = Vector::Ones(idx(width));
    p.beta = Vector::Constant(idx(width), beta_init);
    p.running_mean = Vector::Zero(idx(width));
    p.running_var = Vector::Ones(idx(width));
    return p;
}

void BatchNormParams::register_in(ParamStore& store, const std::string& prefix) const {
    store.add(prefix + ".alpha", Tensor::from_vector(alpha));
    store.add(prefix + ".beta", Tensor::from_vector(beta));
    store.add_buffer(prefix + ".running_mean", Tensor::from_vector(running_mean));
    store.add_buffer(prefix + ".running_var", Tensor::from_vector(running_var));
}

BatchNormParams BatchNormParams::load(const ParamStore& store, const std::string& prefix, double momentum,
                                      double epsilon) {
    BatchNormParams p;
    p.alpha = store.param(prefix + ".alpha").data();
    p.beta = store.param(prefix + ".beta").data();
    p.running_mean = store.buffer(prefix + ".running_mean").data();
    p.running_var = store.buffer(prefix + ".running_var").data();
    p.momentum = momentum;
    p.epsilon = epsilon;
    return p;
}

void BatchNormParams::accumulate_grads(ParamStore& store, const std::string& prefix) const {
    store.accumulate_grad(prefix + ".alpha", alpha);
    store.accumulate_grad(prefix + ".beta", beta);
}

Matrix batch_norm_forward(const BatchNormParams& params, const Matrix& x, Mode mode, BatchNormCache* cache) {
    if (x.cols() != params.alpha.size()) {
        throw DimensionError("layers", "batch_norm expects " + std::to_string(params.alpha.size()) +
                                           " features, got " + std::to_string(x.cols()));
    }
    BatchNormCache local;
    BatchNormCache& c = cache ? *cache : local;
    c.mode = mode;
    if (mode == Mode::Train) {
        if (x.rows() < 2) {
            throw NumericError("layers", "batch_norm in train mode needs at least 2 rows, got " +
                                             std::to_string(x.rows()));
        }
        c.batch_mean = x.colwise().mean().transpose();
        const Matrix centered = x.rowwise() - c.batch_mean.transpose();
        c.batch_var = centered.array().square().colwise().mean().transpose();
        c.inv_std = (c.batch_var.array() + params.epsilon).rsqrt().matrix();
        c.x_hat = (centered.array().rowwise() * c.inv_std.transpose().array()).matrix();
    } else {
        c.inv_std = (params.running_var.array() + params.epsilon).rsqrt().matrix();
        c.x_hat = ((x.rowwise() - params.running_mean.transpose()).array().rowwise() * c.inv_std.transpose().array())
                      .matrix();
    }
    return ((c.x_hat.array().rowwise() * params.alpha.transpose().array()).rowwise() + params.beta.transpose().array())
        .matrix();
}

Matrix batch_norm_backward(const BatchNormParams& params, const BatchNormCache& cache, const Matrix& dy,
                           BatchNormParams& grads) {
    grads.alpha += dy.cwiseProduct(cache.x_hat).colwise().sum().transpose();
    grads.beta += dy.colwise().sum().transpose();
    const Matrix dx_hat = (dy.array().rowwise() * params.alpha.transpose().array()).matrix();
    if (cache.mode == Mode::Infer) {
        return (dx_hat.array().rowwise() * cache.inv_std.transpose().array()).matrix();
    }
    const double n = static_cast<double>(dy.rows());
    const Eigen::RowVectorXd sum_dx_hat = dx_hat.colwise().sum();
    const Eigen::RowVectorXd sum_dx_hat_x_hat = dx_hat.cwiseProduct(cache.x_hat).colwise().sum();
    Matrix dx = (n * dx_hat.array()).matrix();
    dx.rowwise() -= sum_dx_hat;
    dx -= (cache.x_hat.array().rowwise() * sum_dx_hat_x_hat.array()).matrix();
    return (dx.array().rowwise() * (cache.inv_std.transpose().array() / n)).matrix();
}

void update_running_stats(BatchNormParams& params, const BatchNormCache& cache) {
    if (cache.mode != Mode::Train) return;
    params.running_mean = params.momentum * params.running_mean + (1.0 - params.momentum) * cache.batch_mean;
    params.running_var = params.momentum * params.running_var + (1.0 - params.momentum) * cache.batch_var;
}

Tensor batch_norm(const Tensor& x, BatchNormParams& params, Mode mode) {
    if (x.rank() != 2) throw DimensionError("layers", "batch_norm expects [N x h], got " + shape_string(x.shape()));
    BatchNormCache cache;
    Matrix y = batch_norm_forward(params, x.matrix(), mode, &cache);
    update_running_stats(params, cache);
    return Tensor::from_matrix(y);
}

// --- dropout -------------------------------------------------------------------

void validate_keep_prob(double keep_prob) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ConfigError("layers", "dropout keep_prob must lie in (0, 1], got " + std::to_string(keep_prob));
    }
}

Matrix dropout_mask(Index rows, Index cols, double keep_prob, Rng& rng) {
    validate_keep_prob(keep_prob);
    if (keep_prob == 1.0) return Matrix::Ones(rows, cols);
    const double scale = 1.0 / keep_prob;
    Matrix mask(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) mask(r, c) = rng.uniform() < keep_prob ? scale : 0.0;
    return mask;
}

Tensor dropout(const Tensor& x, double keep_prob, Rng& rng, Mode mode) {
    validate_keep_prob(keep_prob);
    if (mode == Mode::Infer || keep_prob == 1.0) return x;
    const Matrix mask = dropout_mask(static_cast<Index>(x.size()), 1, keep_prob, rng);
    return Tensor(x.shape(), x.data().cwiseProduct(Eigen::Map<const Vector>(mask.data(), mask.size())));
}

// --- residual block ------------------------------------------------------------

Sequence residual_block_sequence_forward(const ResidualBlockParams& params, const Sequence& x, Mode mode,
                                         const BlockOptions& options, ResidualBlockCache* cache) {
    if (params.layers.empty()) throw ConfigError("layers", "residual block needs at least one bidirectional layer");
    const std::size_t h = params.layers.front().hidden();
    if (x.width() != h) {
        throw DimensionError("layers", "residual block input has " + std::to_string(x.width()) +
                                           " features but the block width is " + std::to_string(h) +
                                           "; add an input projection layer so the skip path matches");
    }
    if (cache) {
        cache->layer_inputs.clear();
        cache->layers.assign(params.layers.size(), BidirCache{});
    }
    Sequence cur = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (cache) cache->layer_inputs.push_back(cur);
        cur = bidir_sequence_forward(params.layers[l], cur, cache ? &cache->layers[l] : nullptr);
    }
    if (options.residual) cur.values += x.values;
    if (options.batch_norm) {
        cur.values = batch_norm_forward(params.bn, cur.values, mode, cache ? &cache->bn : nullptr);
    }
    return cur;
}

Sequence residual_block_sequence_backward(const ResidualBlockParams& params, const ResidualBlockCache& cache,
                                          const Sequence& dy, const BlockOptions& options,
                                          ResidualBlockParams& grads) {
    Sequence dsum = dy;
    if (options.batch_norm) dsum.values = batch_norm_backward(params.bn, cache.bn, dy.values, grads.bn);
    Sequence d = dsum;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        d = bidir_sequence_backward(params.layers[l], cache.layers[l], d, grads.layers[l]);
    }
    if (options.residual) d.values += dsum.values;
    return d;
}

Tensor residual_block_forward(ResidualBlockParams& params, const Tensor& x, Mode mode, const BlockOptions& options) {
    ResidualBlockCache cache;
    const Sequence y = residual_block_sequence_forward(params, to_sequence(x), mode, options, &cache);
    if (options.batch_norm) update_running_stats(params.bn, cache.bn);
    return to_tensor(y);
}

} // namespace drbl

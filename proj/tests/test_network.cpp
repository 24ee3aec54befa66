#include <gtest/gtest.h>

#include "drbl/network.hpp"
#include "drbl/ops.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

using namespace drbl;
using namespace drbl::testing;

namespace {

NetworkArchitecture small_architecture() {
    NetworkArchitecture a;
    a.residual_blocks = 2;
    a.bidir_layers_per_block = 2;
    a.hidden_width = 4;
    a.input_channels = 3;
    a.window_length = 6;
    a.num_classes = 3;
    return a;
}

/// Zeroes every LSTM weight so gates sit at their biases and cells stay at 0.
void zero_recurrent_weights(ParamStore& p) {
    for (const auto& path : p.paths()) {
        if (path.find(".forward.") != std::string::npos || path.find(".backward.") != std::string::npos) {
            if (path.substr(path.rfind('.') + 1, 1) == "W") p.param(path).data().setZero();
        }
    }
}

} // namespace

TEST(Network, ParameterLayout) {
    const auto a = small_architecture();
    const ParamStore p = init_params(a, 1);
    EXPECT_EQ(p.param("input.W").shape(), (Shape{4, 3}));
    EXPECT_EQ(p.param("head.W").shape(), (Shape{3, 4}));
    EXPECT_EQ(p.param("block2.layer2.forward.W_f").shape(), (Shape{4, 8}));
    EXPECT_EQ(p.param("block1.layer1.proj.W").shape(), (Shape{4, 8}));
    EXPECT_TRUE(p.contains("block2.layer1.backward.b_o"));
    EXPECT_TRUE(p.contains_buffer("block1.bn.running_var"));
    EXPECT_EQ(a.lstm_cell_count(), 8u);
    EXPECT_TRUE((p.buffer("block1.bn.running_var").data().array() == 1.0).all());
    EXPECT_TRUE((p.param("block1.bn.alpha").data().array() == 1.0).all());
    EXPECT_TRUE((p.param("block1.bn.beta").data().array() == 0.0).all());
}

TEST(Network, UnidirectionalLayoutHasNoBackwardCell) {
    auto a = small_architecture();
    a.bidirectional = false;
    const ParamStore p = init_params(a, 1);
    EXPECT_FALSE(p.contains("block1.layer1.backward.W_f"));
    EXPECT_EQ(p.param("block1.layer1.proj.W").shape(), (Shape{4, 4}));
    EXPECT_EQ(a.lstm_cell_count(), 4u);
}

TEST(Network, BetaInitSwitch) {
    auto a = small_architecture();
    a.bn_beta_init = 0.1;
    EXPECT_TRUE((init_params(a, 1).param("block2.bn.beta").data().array() == 0.1).all());
}

TEST(Network, ZeroHeadGivesZeroScores) {
    const auto a = small_architecture();
    ParamStore p = init_params(a, 2);
    p.param("head.W").data().setZero();
    Rng rng(3);
    const Matrix s = network_forward(a, p, random_tensor({5, 6, 3}, rng), Mode::Infer, nullptr);
    EXPECT_EQ(s.rows(), 5);
    EXPECT_EQ(s.cols(), 3);
    EXPECT_TRUE((s.array() == 0.0).all());
}

TEST(Network, OnlyTheFinalStepMattersWithFrozenGates) {
    const auto a = small_architecture();
    ParamStore p = init_params(a, 4);
    zero_recurrent_weights(p);
    Rng rng(5);
    Tensor x = random_tensor({1, 6, 3}, rng);
    const Matrix base = network_forward(a, p, x, Mode::Infer, nullptr);
    Tensor early = x;
    for (std::size_t t = 0; t + 1 < 6; ++t)
        for (std::size_t k = 0; k < 3; ++k) early.at(0, t, k) += rng.uniform(-2, 2);
    EXPECT_EQ(network_forward(a, p, early, Mode::Infer, nullptr), base);
    Tensor late = x;
    for (std::size_t k = 0; k < 3; ++k) late.at(0, 5, k) += 3.0;
    EXPECT_NE(network_forward(a, p, late, Mode::Infer, nullptr), base);
}

TEST(Network, EqualsManualComposition) {
    auto a = tiny_architecture();
    const ParamStore p = init_params(a, 17);
    Rng rng(18);
    const Tensor x = random_tensor({3, 4, 2}, rng);

    const Tensor flat = x.reshaped({12, 2});
    Matrix pre = flat.matrix() * p.param("input.W").matrix().transpose();
    pre.rowwise() += p.param("input.b").data().transpose();
    const Tensor projected = relu(Tensor::from_matrix(pre)).reshaped({3, 4, 3});
    ResidualBlockParams block;
    block.layers = {BidirLayerParams::load(p, "block1.layer1", true)};
    block.bn = BatchNormParams::load(p, "block1.bn", 0.99, 1e-5);
    const Tensor y = residual_block_forward(block, projected, Mode::Train);
    Matrix last(3, 3);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t k = 0; k < 3; ++k) last(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = y.at(b, 3, k);
    Matrix expected = last * p.param("head.W").matrix().transpose();
    expected.rowwise() += p.param("head.b").data().transpose();

    const Matrix got = network_forward(a, p, x, Mode::Train, nullptr);
    EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Network, ForwardDoesNotMutateParameters) {
    const auto a = small_architecture();
    const ParamStore p = init_params(a, 6);
    ParamStore copy = p;
    Rng rng(7);
    network_forward(a, copy, random_tensor({4, 6, 3}, rng), Mode::Train, &rng);
    EXPECT_TRUE(copy == p);
}

TEST(Network, RunningStatsFoldInAfterTrainPass) {
    const auto a = small_architecture();
    ParamStore p = init_params(a, 6);
    Rng rng(7);
    NetworkCache cache;
    network_forward(a, p, random_tensor({4, 6, 3}, rng), Mode::Train, &rng, &cache);
    apply_running_stats(a, p, cache);
    const Vector expected = 0.99 * Vector::Zero(4) + 0.01 * cache.block_caches[0].bn.batch_mean;
    EXPECT_LT((p.buffer("block1.bn.running_mean").data() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Network, TrainDropoutNeedsGenerator) {
    const auto a = small_architecture();
    const ParamStore p = init_params(a, 6);
    EXPECT_THROW(network_forward(a, p, Tensor({1, 6, 3}), Mode::Train, nullptr), ConfigError);
    EXPECT_NO_THROW(network_forward(a, p, Tensor({1, 6, 3}), Mode::Infer, nullptr));
}

TEST(Network, RejectsWrongInputShape) {
    const auto a = small_architecture();
    const ParamStore p = init_params(a, 6);
    EXPECT_THROW(network_forward(a, p, Tensor({1, 5, 3}), Mode::Infer, nullptr), DimensionError);
    EXPECT_THROW(network_forward(a, p, Tensor({1, 6, 2}), Mode::Infer, nullptr), DimensionError);
}

TEST(Network, ParamsMismatchNamesShapes) {
    auto a = small_architecture();
    const ParamStore p = init_params(a, 1);
    a.hidden_width = 5;
    try {
        check_params_match(a, p);
        FAIL() << "expected a dimension error";
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("[4x3]"), std::string::npos);
        EXPECT_NE(what.find("[5x3]"), std::string::npos);
    }
    a.hidden_width = 4;
    EXPECT_NO_THROW(check_params_match(a, p));
}

TEST(Network, ValidateRejectsBadSettings) {
    auto a = small_architecture();
    a.block_residual[0] = false;
    EXPECT_THROW(a.validate(), ConfigError);
    a = small_architecture();
    a.block_residual[3] = false;
    EXPECT_THROW(a.validate(), ConfigError);
    a = small_architecture();
    a.dropout_keep_prob = 0.0;
    EXPECT_THROW(a.validate(), ConfigError);
    a = small_architecture();
    a.residual_blocks = 0;
    EXPECT_THROW(a.validate(), ConfigError);
}

TEST(Network, PerBlockResidualOverride) {
    auto a = small_architecture();
    a.block_residual[2] = false;
    EXPECT_TRUE(a.residual_for_block(1));
    EXPECT_FALSE(a.residual_for_block(2));
}

TEST(Network, DropoutPlacementNames) {
    for (auto p : {DropoutPlacement::Between, DropoutPlacement::Output, DropoutPlacement::Both})
        EXPECT_EQ(parse_dropout_placement(to_string(p)), p);
    EXPECT_THROW(parse_dropout_placement("everywhere"), ConfigError);
}

class NetworkGradients : public ::testing::TestWithParam<int> {};

TEST_P(NetworkGradients, TinyNetwork) {
    EXPECT_TRUE(gradients_agree(network_case(static_cast<std::uint64_t>(GetParam()))));
}

TEST_P(NetworkGradients, TwoBlocksTwoLayersUnidirectional) {
    auto a = tiny_architecture();
    a.residual_blocks = 2;
    a.bidir_layers_per_block = 2;
    a.bidirectional = false;
    EXPECT_TRUE(gradients_agree(network_case(static_cast<std::uint64_t>(GetParam()), a, 0.0015, true)));
}

TEST_P(NetworkGradients, NoSkipNoBatchNorm) {
    auto a = tiny_architecture();
    a.residual = false;
    a.batch_norm = false;
    EXPECT_TRUE(gradients_agree(network_case(static_cast<std::uint64_t>(GetParam()), a, 0.0015, true)));
}

INSTANTIATE_TEST_SUITE_P(Seeds, NetworkGradients, ::testing::Range(1, 21));

TEST(NetworkGradients, DropoutMasksAreReplayed) {
    auto a = tiny_architecture();
    a.residual_blocks = 2;
    a.dropout_keep_prob = 0.7;
    a.dropout_placement = DropoutPlacement::Both;
    ParamStore params = init_params(a, 5);
    Rng data(9);
    const Tensor x = random_tensor({2, 4, 2}, data);
    const Matrix y = one_hot(std::vector<int>{0, 1}, 2);
    Rng rng(11);
    const std::string state = rng.state();
    NetworkCache cache;
    const Matrix scores = network_forward(a, params, x, Mode::Train, &rng, &cache);
    params.zero_grads();
    network_backward(a, params, cache, classification_loss_gradient(scores, y));
    const auto report = grad_check(
        [&] {
            Rng replay;
            replay.set_state(state);
            return classification_loss(network_forward(a, params, x, Mode::Train, &replay), y, params, 0.0);
        },
        params, kGradEpsilon);
    EXPECT_TRUE(gradients_agree(report));
}

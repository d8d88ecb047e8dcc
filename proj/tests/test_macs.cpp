#include "doctest.h"

#include "dlenergy/error.hpp"
#include "dlenergy/macs.hpp"
#include "dlenergy/rng.hpp"
#include "oracles.hpp"

using namespace dlenergy;

namespace {

LayerConfig conv_cfg(std::int64_t b, std::int64_t c_in, std::int64_t side, std::int64_t c_out,
                     std::int64_t k, std::int64_t s, std::int64_t p) {
    return {.kind = LayerKind::Conv2d, .batch_size = b, .image_size = side, .kernel_size = k,
            .in_channels = c_in, .out_channels = c_out, .stride = s, .padding = p};
}

LayerConfig pool_cfg(std::int64_t b, std::int64_t c, std::int64_t side, std::int64_t k,
                     std::int64_t s, std::int64_t p) {
    return {.kind = LayerKind::MaxPool2d, .batch_size = b, .image_size = side, .kernel_size = k,
            .in_channels = c, .stride = s, .padding = p};
}

}  // namespace

TEST_CASE("vgg11 per-type totals with bias accumulates") {
    const auto macs = architecture_macs(preset("vgg11", 1), true);
    CHECK(macs.total_for(LayerKind::Conv2d) == 7'492'882'432ull);
    CHECK(macs.total_for(LayerKind::Linear) == 123'642'856ull);
    CHECK(macs.total_for(LayerKind::MaxPool2d) == 3'060'736ull);
    CHECK(macs.total_for(LayerKind::ReLU) == 3'717'120ull);
}

TEST_CASE("bias accumulates account for the table offsets") {
    const auto with = architecture_macs(preset("vgg11"), true);
    const auto without = architecture_macs(preset("vgg11"), false);
    CHECK(with.total_for(LayerKind::Conv2d) - without.total_for(LayerKind::Conv2d) == 7'426'048ull);
    CHECK(with.total_for(LayerKind::Linear) - without.total_for(LayerKind::Linear) == 9'192ull);
}

TEST_CASE("conv2d_macs") {
    const auto unit = conv_cfg(1, 1, 1, 1, 1, 1, 0);
    CHECK(conv2d_macs(unit, {1, 1, 1, 1}, false) == 1);

    // VGG11 conv1, checked against the loop oracle
    const auto first = conv_cfg(1, 3, 224, 64, 3, 1, 1);
    const auto out = propagate_shape(input_shape_of(first), first);
    const auto expected = oracle::conv_multiplies(1, 3, 224, 64, 3, 1, 1);
    CHECK(expected == 86'704'128ull);
    CHECK(conv2d_macs(first, out, false) == expected);
}

TEST_CASE("linear_macs") {
    LayerConfig unit{.kind = LayerKind::Linear, .batch_size = 1, .in_channels = 1, .out_channels = 1};
    CHECK(linear_macs(unit, {1, 1, 1, 1}, false) == 1);
    LayerConfig big{.kind = LayerKind::Linear, .batch_size = 1, .in_channels = 4096, .out_channels = 4096};
    const auto expected = oracle::linear_multiplies(1, 4096, 4096);
    CHECK(expected == 16'777'216ull);
    CHECK(linear_macs(big, {1, 4096, 1, 1}, false) == expected);
    CHECK(linear_macs(big, {1, 4096, 1, 1}, true) == expected + 4096);
}

TEST_CASE("maxpool2d_macs") {
    CHECK(maxpool2d_macs(pool_cfg(2, 1, 1, 1, 1, 0), {2, 1, 1, 1}) == 1);
    const auto pool1 = pool_cfg(1, 64, 224, 2, 2, 0);
    const auto expected = oracle::pool_macs(1, 64, 224, 2, 2, 0);
    CHECK(expected == 1'605'632ull);
    CHECK(maxpool2d_macs(pool1, {1, 64, 112, 112}) == expected);
}

TEST_CASE("relu_macs") {
    CHECK(relu_macs({1, 2, 1, 1}) == 1);
    CHECK(relu_macs({1, 50'000, 1, 1}) == 25'000);
    CHECK(relu_macs({1, 3, 1, 1}) == 1);  // odd counts round down
}

TEST_CASE("architecture_macs") {
    ArchitectureSpec empty{"empty", {1, 3, 8, 8}, {}};
    CHECK(architecture_macs(empty).total == 0);

    const auto one = architecture_macs(preset("vgg11", 1));
    const auto two = architecture_macs(preset("vgg11", 2));
    REQUIRE(one.per_layer.size() == two.per_layer.size());
    MacCount sum = 0;
    for (std::size_t i = 0; i < one.per_layer.size(); ++i) {
        CHECK(two.per_layer[i] == 2 * one.per_layer[i]);
        sum += one.per_layer[i];
    }
    CHECK(sum == one.total);
    CHECK(two.total == 2 * one.total);
}

TEST_CASE("random small configs match the loop oracles") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto b = rng.uniform_int(1, 4);
        const auto c_in = rng.uniform_int(1, 8);
        const auto c_out = rng.uniform_int(1, 8);
        const auto side = rng.uniform_int(1, 8);
        const auto k = rng.uniform_int(1, 8);
        const auto s = rng.uniform_int(1, 4);
        const auto p = rng.uniform_int(0, 3);
        if (side + 2 * p < k) continue;
        const auto conv = conv_cfg(b, c_in, side, c_out, k, s, p);
        const auto out = propagate_shape(input_shape_of(conv), conv);
        CHECK(conv2d_macs(conv, out, false) ==
              oracle::conv_multiplies(int(b), int(c_in), int(side), int(c_out), int(k), int(s), int(p)));

        if (p <= k / 2) {
            const auto pool = pool_cfg(b, c_in, side, k, s, p);
            const auto pout = propagate_shape(input_shape_of(pool), pool);
            CHECK(maxpool2d_macs(pool, pout) ==
                  oracle::pool_macs(int(b), int(c_in), int(side), int(k), int(s), int(p)));
        }
        LayerConfig fc{.kind = LayerKind::Linear, .batch_size = b, .in_channels = c_in, .out_channels = c_out};
        CHECK(linear_macs(fc, input_shape_of(fc), false) == oracle::linear_multiplies(int(b), int(c_in), int(c_out)));
    }
}

TEST_CASE("linearity in batch and monotonicity") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c_in = rng.uniform_int(1, 64);
        const auto c_out = rng.uniform_int(1, 64);
        const auto side = rng.uniform_int(8, 64);
        const auto k = rng.uniform_int(1, 5);
        const auto n = rng.uniform_int(2, 16);
        const auto base = conv_cfg(1, c_in, side, c_out, k, 1, 0);
        const auto batched = conv_cfg(n, c_in, side, c_out, k, 1, 0);
        CHECK(config_macs(batched) == static_cast<MacCount>(n) * config_macs(base));
        CHECK(config_macs(conv_cfg(1, c_in + 1, side, c_out, k, 1, 0)) >= config_macs(base));
        CHECK(config_macs(conv_cfg(1, c_in, side, c_out + 1, k, 1, 0)) >= config_macs(base));
        LayerConfig relu{.kind = LayerKind::ReLU, .batch_size = 1, .in_channels = c_in * side};
        LayerConfig relu_n{.kind = LayerKind::ReLU, .batch_size = n, .in_channels = c_in * side};
        // floor halving: exact linearity holds when the element count is even
        if ((c_in * side) % 2 == 0) CHECK(config_macs(relu_n) == static_cast<MacCount>(n) * config_macs(relu));
    }
}

TEST_CASE("overflow is reported") {
    LayerConfig huge{.kind = LayerKind::Linear, .batch_size = 1LL << 40, .in_channels = 1LL << 20,
                     .out_channels = 1LL << 20};
    CHECK_THROWS_AS(linear_macs(huge, {1LL << 40, 1LL << 20, 1, 1}, false), OverflowError);
}

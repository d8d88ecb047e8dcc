#include "doctest.h"

#include <nlohmann/json.hpp>

#include "dlenergy/arch.hpp"
#include "dlenergy/error.hpp"
#include "dlenergy/rng.hpp"

using namespace dlenergy;

namespace {

LayerConfig square_window(LayerKind kind, int k, int pad, int stride) {
    LayerConfig cfg;
    cfg.kind = kind;
    cfg.kernel_size = k;
    cfg.padding = pad;
    cfg.stride = stride;
    if (kind == LayerKind::Conv2d) {
        cfg.in_channels = 3;
        cfg.out_channels = 8;
    }
    return cfg;
}

std::size_t count_kind(const std::vector<ResolvedLayer>& layers, LayerKind kind) {
    return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(),
                                                  [&](const auto& l) { return l.config.kind == kind; }));
}

}  // namespace

TEST_CASE("conv output side follows the floor formula") {
    const TensorShape in{1, 3, 224, 224};
    CHECK(propagate_shape(in, square_window(LayerKind::Conv2d, 3, 1, 1)).height == 224);
    CHECK(propagate_shape(in, square_window(LayerKind::Conv2d, 2, 0, 2)).height == 112);
    // AlexNet conv1: floor((224 + 4 - 11) / 4) + 1 = 55
    const auto out = propagate_shape(in, square_window(LayerKind::Conv2d, 11, 2, 4));
    CHECK(out.height == 55);
    CHECK(out.width == 55);
    CHECK(out.channels == 8);
}

TEST_CASE("maxpool preserves channels") {
    const TensorShape in{2, 64, 224, 224};
    const auto out = propagate_shape(in, square_window(LayerKind::MaxPool2d, 2, 0, 2));
    CHECK(out == TensorShape{2, 64, 112, 112});
}

TEST_CASE("shape errors") {
    SUBCASE("kernel larger than the padded input") {
        CHECK_THROWS_AS(propagate_shape({1, 3, 4, 4}, square_window(LayerKind::Conv2d, 7, 1, 1)), ShapeError);
    }
    SUBCASE("channel mismatch") {
        CHECK_THROWS_AS(propagate_shape({1, 4, 16, 16}, square_window(LayerKind::Conv2d, 3, 1, 1)), ShapeError);
    }
    SUBCASE("linear on a spatial tensor") {
        LayerConfig fc{.kind = LayerKind::Linear, .in_channels = 16, .out_channels = 2};
        CHECK_THROWS_AS(propagate_shape({1, 16, 2, 2}, fc), ShapeError);
        CHECK(propagate_shape({1, 16, 1, 1}, fc) == TensorShape{1, 2, 1, 1});
    }
}

TEST_CASE("flatten, activations and dropout") {
    const TensorShape in{4, 512, 7, 7};
    CHECK(propagate_shape(in, LayerConfig{.kind = LayerKind::Flatten}) == TensorShape{4, 25088, 1, 1});
    CHECK(propagate_shape(in, LayerConfig{.kind = LayerKind::ReLU}) == in);
    CHECK(propagate_shape(in, LayerConfig{.kind = LayerKind::Dropout}) == in);
    CHECK(propagate_shape(in, LayerConfig{.kind = LayerKind::Softmax}) == in);
}

TEST_CASE("propagation is deterministic") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const auto side = rng.uniform_int(4, 64);
        auto cfg = square_window(LayerKind::Conv2d, static_cast<int>(rng.uniform_int(1, 4)),
                                 static_cast<int>(rng.uniform_int(0, 2)), static_cast<int>(rng.uniform_int(1, 3)));
        const TensorShape in{1, 3, side, side};
        CHECK(propagate_shape(in, cfg) == propagate_shape(in, cfg));
    }
}

TEST_CASE("vgg11 predictable layers") {
    const auto layers = extract_predictable_layers(preset("vgg11"));
    CHECK(layers.size() == 26);
    CHECK(count_kind(layers, LayerKind::Conv2d) == 8);
    CHECK(count_kind(layers, LayerKind::MaxPool2d) == 5);
    CHECK(count_kind(layers, LayerKind::Linear) == 3);
    CHECK(count_kind(layers, LayerKind::ReLU) == 10);
    // order preserved and indices point back into the spec
    for (std::size_t i = 1; i < layers.size(); ++i) CHECK(layers[i].index > layers[i - 1].index);
    // activations carry the flattened per-sample size
    CHECK(layers[1].config.kind == LayerKind::ReLU);
    CHECK(*layers[1].config.in_channels == 64 * 224 * 224);
}

TEST_CASE("extraction edge cases") {
    ArchitectureSpec empty{"empty", {1, 3, 8, 8}, {}};
    CHECK(extract_predictable_layers(empty).empty());
    ArchitectureSpec drops{"drops", {1, 3, 8, 8}, {LayerConfig{.kind = LayerKind::Dropout},
                                                  LayerConfig{.kind = LayerKind::Dropout}}};
    CHECK(extract_predictable_layers(drops).empty());
}

TEST_CASE("presets propagate to 1000 classes") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const auto arch = preset(name, 3);
        CHECK(arch.input == TensorShape{3, 3, 224, 224});
        const auto layers = resolve_layers(arch);
        REQUIRE(!layers.empty());
        CHECK(layers.back().config.kind == LayerKind::Linear);
        CHECK(layers.back().output == TensorShape{3, 1000, 1, 1});
    }
    CHECK(count_kind(extract_predictable_layers(preset("vgg16")), LayerKind::Conv2d) == 13);
    CHECK(count_kind(extract_predictable_layers(preset("vgg13")), LayerKind::Conv2d) == 10);
    CHECK(count_kind(extract_predictable_layers(preset("alexnet")), LayerKind::Conv2d) == 5);
}

TEST_CASE("load_architecture") {
    SUBCASE("preset name") {
        const auto arch = load_architecture("vgg11");
        CHECK(arch.input.channels == 3);
        CHECK(arch.input.height == 224);
        CHECK(arch.input.width == 224);
    }
    SUBCASE("inline json with one conv") {
        const auto arch = load_architecture(R"({"name":"tiny","input":{"batch":2,"channels":3,"height":8,"width":8},
            "layers":[{"kind":"conv2d","in_channels":3,"out_channels":4,"kernel_size":3,"padding":1}]})");
        CHECK(arch.layers.size() == 1);
        CHECK(arch.name == "tiny");
    }
    SUBCASE("kernel_size zero") {
        CHECK_THROWS_AS(load_architecture(R"({"name":"bad","input":{"batch":1,"channels":3,"height":8,"width":8},
            "layers":[{"kind":"conv2d","in_channels":3,"out_channels":4,"kernel_size":0}]})"),
                        ValidationError);
    }
    SUBCASE("malformed json") {
        CHECK_THROWS_AS(load_architecture(R"({"name": )"), ParseError);
    }
    SUBCASE("unknown preset") {
        CHECK_THROWS_AS(load_architecture("resnet50"), UnknownPreset);
    }
    SUBCASE("maxpool padding bound") {
        CHECK_THROWS_AS(load_architecture(R"({"input":{"batch":1,"channels":3,"height":8,"width":8},
            "layers":[{"kind":"maxpool2d","kernel_size":2,"padding":2}]})"),
                        ValidationError);
    }
}

TEST_CASE("json round trip") {
    for (const auto& name : preset_names()) {
        const auto arch = preset(name, 5);
        const auto text = to_json(arch).dump();
        CHECK(load_architecture(text) == arch);
    }
}

TEST_CASE("stand-alone configs") {
    LayerConfig conv{.kind = LayerKind::Conv2d, .batch_size = 2, .image_size = 10, .kernel_size = 3,
                     .in_channels = 4, .out_channels = 5, .stride = 1, .padding = 0};
    CHECK(input_shape_of(conv) == TensorShape{2, 4, 10, 10});
    LayerConfig relu{.kind = LayerKind::ReLU, .batch_size = 3, .in_channels = 100};
    CHECK(input_shape_of(relu) == TensorShape{3, 100, 1, 1});
    LayerConfig incomplete{.kind = LayerKind::Linear, .in_channels = 4, .out_channels = 4};
    CHECK_THROWS_AS(input_shape_of(incomplete), ValidationError);
    LayerConfig stray{.kind = LayerKind::ReLU, .batch_size = 1, .kernel_size = 3, .in_channels = 10};
    CHECK_THROWS_AS(validate(stray, true), ValidationError);
}

TEST_CASE("layer kind names") {
    CHECK(parse_layer_kind("Conv2d") == LayerKind::Conv2d);
    CHECK(parse_layer_kind("AdaptiveAvgPool2d") == LayerKind::AdaptiveAvgPool);
    CHECK(parse_layer_kind("MAXPOOL2D") == LayerKind::MaxPool2d);
    CHECK_THROWS_AS(parse_layer_kind("lstm"), ParseError);
    for (auto kind : predictable_kinds()) CHECK(parse_layer_kind(to_string(kind)) == kind);
}

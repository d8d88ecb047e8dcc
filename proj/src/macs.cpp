#include "dlenergy/macs.hpp"

#include <initializer_list>

#include <fmt/format.h>

#include "dlenergy/error.hpp"

namespace dlenergy {

namespace {

MacCount product(std::initializer_list<std::int64_t> factors) {
    MacCount acc = 1;
    for (const auto factor : factors) {
        if (factor < 0) throw OverflowError("negative factor in MAC product");
        if (__builtin_mul_overflow(acc, static_cast<MacCount>(factor), &acc)) {
            throw OverflowError("MAC count exceeds 64 bits");
        }
    }
    return acc;
}

MacCount add(MacCount a, MacCount b) {
    MacCount out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw OverflowError("MAC count exceeds 64 bits");
    return out;
}

void expect(const LayerConfig& cfg, LayerKind kind) {
    if (cfg.kind != kind) {
        throw ValidationError(fmt::format("expected a {} layer, got {}", to_string(kind), to_string(cfg.kind)));
    }
}

}  // namespace

MacCount conv2d_macs(const LayerConfig& cfg, const TensorShape& out, bool include_bias) {
    expect(cfg, LayerKind::Conv2d);
    const auto k = cfg.kernel_size.value();
    const auto outputs = product({out.width, out.height, cfg.out_channels.value(), out.batch});
    auto macs = product({k, k, cfg.in_channels.value()});
    if (__builtin_mul_overflow(macs, outputs, &macs)) throw OverflowError("MAC count exceeds 64 bits");
    return include_bias ? add(macs, outputs) : macs;
}

MacCount linear_macs(const LayerConfig& cfg, const TensorShape& in, bool include_bias) {
    expect(cfg, LayerKind::Linear);
    const auto c_out = cfg.out_channels.value();
    const auto macs = product({in.width, in.height, cfg.in_channels.value(), c_out, in.batch});
    return include_bias ? add(macs, product({c_out, in.batch})) : macs;
}

MacCount maxpool2d_macs(const LayerConfig& cfg, const TensorShape& out) {
    expect(cfg, LayerKind::MaxPool2d);
    const auto k = cfg.kernel_size.value();
    return product({k, k, out.width, out.height, cfg.in_channels.value(), out.batch}) / 2;
}

MacCount relu_macs(const TensorShape& in) {
    return product({in.width, in.height, in.channels, in.batch}) / 2;
}

MacCount activation_macs(const TensorShape& in) { return relu_macs(in); }

MacCount layer_macs(const ResolvedLayer& layer, bool include_bias) {
    switch (layer.config.kind) {
        case LayerKind::Conv2d: return conv2d_macs(layer.config, layer.output, include_bias);
        case LayerKind::Linear: return linear_macs(layer.config, layer.input, include_bias);
        case LayerKind::MaxPool2d: return maxpool2d_macs(layer.config, layer.output);
        case LayerKind::ReLU: return relu_macs(layer.input);
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax: return activation_macs(layer.input);
        case LayerKind::AdaptiveAvgPool:
        case LayerKind::Dropout:
        case LayerKind::Flatten: return 0;
    }
    return 0;
}

MacCount config_macs(const LayerConfig& cfg, bool include_bias) {
    const auto in = input_shape_of(cfg);
    const auto out = propagate_shape(in, cfg);
    LayerConfig resolved = cfg;
    return layer_macs(ResolvedLayer{0, std::move(resolved), in, out}, include_bias);
}

MacCount ArchitectureMacs::total_for(LayerKind kind) const {
    MacCount sum = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].config.kind == kind) sum = add(sum, per_layer[i]);
    }
    return sum;
}

ArchitectureMacs architecture_macs(const ArchitectureSpec& arch, bool include_bias) {
    ArchitectureMacs result;
    result.layers = resolve_layers(arch);
    result.per_layer.reserve(result.layers.size());
    for (const auto& layer : result.layers) {
        const auto macs = layer_macs(layer, include_bias);
        result.per_layer.push_back(macs);
        result.total = add(result.total, macs);
    }
    return result;
}

}  // namespace dlenergy

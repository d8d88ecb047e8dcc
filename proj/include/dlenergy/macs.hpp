#pragma once

#include <cstdint>
#include <vector>

#include "dlenergy/arch.hpp"

namespace dlenergy {

/// Multiply-accumulate operations for one forward pass.
using MacCount = std::uint64_t;

// Counting convention: multiplicative layers count one MAC per multiply,
// plus one accumulate per output element when `include_bias` is set.
// Comparison and elementwise layers have no multiplies; their FLOP count
// (one per visited element) is halved, rounding down.

MacCount conv2d_macs(const LayerConfig& cfg, const TensorShape& out, bool include_bias = true);
MacCount linear_macs(const LayerConfig& cfg, const TensorShape& in, bool include_bias = true);
MacCount maxpool2d_macs(const LayerConfig& cfg, const TensorShape& out);
MacCount relu_macs(const TensorShape& in);
/// Sigmoid, Tanh and Softmax use the same halving rule as ReLU.
MacCount activation_macs(const TensorShape& in);

/// Dispatch on the layer kind; discarded kinds count zero.
MacCount layer_macs(const ResolvedLayer& layer, bool include_bias = true);
/// MACs of a complete stand-alone config (dataset rows).
MacCount config_macs(const LayerConfig& cfg, bool include_bias = true);

struct ArchitectureMacs {
    std::vector<ResolvedLayer> layers;  // every layer, discarded ones included
    std::vector<MacCount> per_layer;    // aligned with `layers`
    MacCount total = 0;

    MacCount total_for(LayerKind kind) const;
};

ArchitectureMacs architecture_macs(const ArchitectureSpec& arch, bool include_bias = true);

}  // namespace dlenergy

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dlenergy {

enum class LayerKind {
    Conv2d,
    MaxPool2d,
    Linear,
    ReLU,
    Sigmoid,
    Tanh,
    Softmax,
    AdaptiveAvgPool,
    Dropout,
    Flatten,
};

/// Canonical lower-case name ("conv2d", "maxpool2d", "relu", ...).
std::string_view to_string(LayerKind kind) noexcept;
/// Case-insensitive; also accepts the PyTorch spellings ("Conv2d",
/// "AdaptiveAvgPool2d", ...). Throws ParseError on unknown names.
LayerKind parse_layer_kind(std::string_view name);

bool is_activation(LayerKind kind) noexcept;
/// Kinds that carry a predictor; the rest are discarded before estimation.
bool is_predictable(LayerKind kind) noexcept;

/// The seven kinds a predictor bundle covers, in a fixed order.
const std::vector<LayerKind>& predictable_kinds();

struct TensorShape {
    std::int64_t batch = 1;
    std::int64_t channels = 1;
    std::int64_t height = 1;
    std::int64_t width = 1;

    std::int64_t elements_per_sample() const { return channels * height * width; }
    bool is_flat() const { return height == 1 && width == 1; }
    bool operator==(const TensorShape&) const = default;
};

std::string to_string(const TensorShape& shape);

/// Parameters of one layer. Which fields are present depends on `kind`:
///
///   Conv2d      batch_size image_size kernel_size in_channels out_channels stride padding
///   MaxPool2d   batch_size image_size kernel_size in_channels stride padding
///   Linear      batch_size in_channels out_channels
///   activations batch_size in_channels (flattened per-sample element count)
///   AdaptiveAvgPool  output_size
///
/// Inside an architecture every field may be omitted except the ones that
/// define the layer (kernel, channel counts); missing fields are resolved
/// from the propagated input shape.
struct LayerConfig {
    LayerKind kind = LayerKind::ReLU;
    std::optional<std::int64_t> batch_size;
    std::optional<std::int64_t> image_size;
    std::optional<std::int64_t> kernel_size;
    std::optional<std::int64_t> in_channels;
    std::optional<std::int64_t> out_channels;
    std::optional<std::int64_t> stride;
    std::optional<std::int64_t> padding;
    std::optional<std::int64_t> output_size;

    bool operator==(const LayerConfig&) const = default;
};

/// Checks the field-presence and range invariants. With `require_complete`
/// every applicable field must be set (stand-alone dataset configs);
/// otherwise only the defining ones are required (architecture layers).
void validate(const LayerConfig& config, bool require_complete);

/// Shape of the tensor a stand-alone (complete) config consumes.
TensorShape input_shape_of(const LayerConfig& config);

struct ArchitectureSpec {
    std::string name;
    TensorShape input;
    std::vector<LayerConfig> layers;

    bool operator==(const ArchitectureSpec&) const = default;
};

/// Output shape of `layer` applied to `input`. Throws ShapeError.
TensorShape propagate_shape(const TensorShape& input, const LayerConfig& layer);

struct ResolvedLayer {
    std::size_t index = 0;  // position in ArchitectureSpec::layers
    LayerConfig config;     // complete config, filled from the shapes
    TensorShape input;
    TensorShape output;
};

/// Every layer with its shapes resolved, discarded kinds included.
std::vector<ResolvedLayer> resolve_layers(const ArchitectureSpec& arch);

/// Layers that carry energy predictors (AdaptiveAvgPool, Dropout and
/// Flatten removed), in architecture order.
std::vector<ResolvedLayer> extract_predictable_layers(const ArchitectureSpec& arch);

/// Names accepted by load_architecture as presets.
const std::vector<std::string>& preset_names();

/// Built-in AlexNet / VGG11 / VGG13 / VGG16 with 3x224x224 inputs.
ArchitectureSpec preset(std::string_view name, std::int64_t batch = 1);

/// Accepts a preset name, a path to a JSON file, or an inline JSON
/// document. Throws ParseError, ValidationError or UnknownPreset.
ArchitectureSpec load_architecture(std::string_view source);
ArchitectureSpec architecture_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ArchitectureSpec& arch);
nlohmann::json to_json(const LayerConfig& config);
LayerConfig layer_config_from_json(const nlohmann::json& doc);

ArchitectureSpec with_batch(ArchitectureSpec arch, std::int64_t batch);

}  // namespace dlenergy

#include "dlenergy/arch.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "dlenergy/error.hpp"

namespace dlenergy {

using json = nlohmann::json;

namespace {

struct KindName {
    LayerKind kind;
    std::string_view canonical;
    std::string_view alias;
};

constexpr std::array<KindName, 10> kKindNames{{
    {LayerKind::Conv2d, "conv2d", "conv2d"},
    {LayerKind::MaxPool2d, "maxpool2d", "maxpool"},
    {LayerKind::Linear, "linear", "linear"},
    {LayerKind::ReLU, "relu", "relu"},
    {LayerKind::Sigmoid, "sigmoid", "sigmoid"},
    {LayerKind::Tanh, "tanh", "tanh"},
    {LayerKind::Softmax, "softmax", "softmax"},
    {LayerKind::AdaptiveAvgPool, "adaptiveavgpool", "adaptiveavgpool2d"},
    {LayerKind::Dropout, "dropout", "dropout"},
    {LayerKind::Flatten, "flatten", "flatten"},
}};

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Field presence per kind.
enum Field : unsigned {
    kBatch = 1u << 0,
    kImage = 1u << 1,
    kKernel = 1u << 2,
    kIn = 1u << 3,
    kOut = 1u << 4,
    kStride = 1u << 5,
    kPadding = 1u << 6,
    kOutputSize = 1u << 7,
};

struct FieldRules {
    unsigned allowed;
    unsigned required_in_arch;
    unsigned required_complete;
};

FieldRules rules_for(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: {
            const unsigned all = kBatch | kImage | kKernel | kIn | kOut | kStride | kPadding;
            return {all, kKernel | kIn | kOut, all};
        }
        case LayerKind::MaxPool2d: {
            const unsigned all = kBatch | kImage | kKernel | kIn | kStride | kPadding;
            return {all, kKernel, all};
        }
        case LayerKind::Linear:
            return {kBatch | kIn | kOut, kIn | kOut, kBatch | kIn | kOut};
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax:
            return {kBatch | kIn, 0u, kBatch | kIn};
        case LayerKind::AdaptiveAvgPool:
            return {kBatch | kOutputSize, kOutputSize, kBatch | kOutputSize};
        case LayerKind::Dropout:
        case LayerKind::Flatten:
            return {kBatch, 0u, kBatch};
    }
    return {0u, 0u, 0u};
}

struct FieldRef {
    Field flag;
    const char* name;
    std::optional<std::int64_t> LayerConfig::*member;
    std::int64_t minimum;
};

constexpr std::array<FieldRef, 8> kFields{{
    {kBatch, "batch_size", &LayerConfig::batch_size, 1},
    {kImage, "image_size", &LayerConfig::image_size, 1},
    {kKernel, "kernel_size", &LayerConfig::kernel_size, 1},
    {kIn, "in_channels", &LayerConfig::in_channels, 1},
    {kOut, "out_channels", &LayerConfig::out_channels, 1},
    {kStride, "stride", &LayerConfig::stride, 1},
    {kPadding, "padding", &LayerConfig::padding, 0},
    {kOutputSize, "output_size", &LayerConfig::output_size, 1},
}};

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) throw ShapeError("tensor element count overflows 64 bits");
    return out;
}

std::int64_t window_output_side(std::int64_t side, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding) {
    const std::int64_t span = side + 2 * padding - kernel;
    if (span < 0) {
        throw ShapeError(fmt::format("kernel {} larger than padded input side {}", kernel,
                                     side + 2 * padding));
    }
    return span / stride + 1;
}

// Fills the missing fields of `layer` from `input` and computes the output.
std::pair<LayerConfig, TensorShape> resolve(const TensorShape& input, const LayerConfig& layer) {
    if (input.batch < 1 || input.channels < 1 || input.height < 1 || input.width < 1) {
        throw ShapeError("input shape " + to_string(input) + " has a non-positive dimension");
    }
    validate(layer, false);

    LayerConfig cfg = layer;
    const auto kind_name = to_string(layer.kind);
    if (cfg.batch_size && *cfg.batch_size != input.batch) {
        throw ShapeError(fmt::format("{}: batch_size {} does not match input batch {}", kind_name,
                                     *cfg.batch_size, input.batch));
    }
    cfg.batch_size = input.batch;

    TensorShape out = input;
    switch (layer.kind) {
        case LayerKind::Conv2d:
        case LayerKind::MaxPool2d: {
            if (input.height != input.width) {
                throw ShapeError(fmt::format("{}: only square inputs are supported, got {}",
                                             kind_name, to_string(input)));
            }
            if (cfg.image_size && *cfg.image_size != input.height) {
                throw ShapeError(fmt::format("{}: image_size {} does not match input side {}",
                                             kind_name, *cfg.image_size, input.height));
            }
            if (cfg.in_channels && *cfg.in_channels != input.channels) {
                throw ShapeError(fmt::format("{}: in_channels {} does not match input channels {}",
                                             kind_name, *cfg.in_channels, input.channels));
            }
            cfg.image_size = input.height;
            cfg.in_channels = input.channels;
            const bool pool = layer.kind == LayerKind::MaxPool2d;
            if (!cfg.stride) cfg.stride = pool ? *cfg.kernel_size : 1;
            if (!cfg.padding) cfg.padding = 0;
            const auto side = window_output_side(input.height, *cfg.kernel_size, *cfg.stride, *cfg.padding);
            validate(cfg, true);
            out.height = side;
            out.width = side;
            out.channels = pool ? input.channels : *cfg.out_channels;
            break;
        }
        case LayerKind::Linear:
            if (!input.is_flat()) {
                throw ShapeError("linear: expects a flat input (insert a flatten layer), got " +
                                 to_string(input));
            }
            if (*cfg.in_channels != input.channels) {
                throw ShapeError(fmt::format("linear: in_channels {} does not match input size {}",
                                             *cfg.in_channels, input.channels));
            }
            out.channels = *cfg.out_channels;
            break;
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax: {
            const auto elements = checked_mul(checked_mul(input.channels, input.height), input.width);
            if (cfg.in_channels && *cfg.in_channels != elements) {
                throw ShapeError(fmt::format("{}: in_channels {} does not match input size {}",
                                             kind_name, *cfg.in_channels, elements));
            }
            cfg.in_channels = elements;
            break;
        }
        case LayerKind::AdaptiveAvgPool:
            out.height = *cfg.output_size;
            out.width = *cfg.output_size;
            break;
        case LayerKind::Dropout:
            break;
        case LayerKind::Flatten:
            out.channels = checked_mul(checked_mul(input.channels, input.height), input.width);
            out.height = 1;
            out.width = 1;
            break;
    }
    return {cfg, out};
}

LayerConfig conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                 std::int64_t padding) {
    LayerConfig c;
    c.kind = LayerKind::Conv2d;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel_size = kernel;
    c.stride = stride;
    c.padding = padding;
    return c;
}

LayerConfig maxpool(std::int64_t kernel, std::int64_t stride) {
    LayerConfig c;
    c.kind = LayerKind::MaxPool2d;
    c.kernel_size = kernel;
    c.stride = stride;
    c.padding = 0;
    return c;
}

LayerConfig linear(std::int64_t in, std::int64_t out) {
    LayerConfig c;
    c.kind = LayerKind::Linear;
    c.in_channels = in;
    c.out_channels = out;
    return c;
}

LayerConfig simple(LayerKind kind) {
    LayerConfig c;
    c.kind = kind;
    return c;
}

LayerConfig adaptive_avg_pool(std::int64_t side) {
    LayerConfig c;
    c.kind = LayerKind::AdaptiveAvgPool;
    c.output_size = side;
    return c;
}

ArchitectureSpec make_vgg(std::string name, const std::vector<int>& plan, std::int64_t batch) {
    ArchitectureSpec arch{std::move(name), {batch, 3, 224, 224}, {}};
    std::int64_t channels = 3;
    for (int entry : plan) {
        if (entry == 0) {
            arch.layers.push_back(maxpool(2, 2));
        } else {
            arch.layers.push_back(conv(channels, entry, 3, 1, 1));
            arch.layers.push_back(simple(LayerKind::ReLU));
            channels = entry;
        }
    }
    arch.layers.push_back(adaptive_avg_pool(7));
    arch.layers.push_back(simple(LayerKind::Flatten));
    arch.layers.push_back(linear(512 * 7 * 7, 4096));
    arch.layers.push_back(simple(LayerKind::ReLU));
    arch.layers.push_back(simple(LayerKind::Dropout));
    arch.layers.push_back(linear(4096, 4096));
    arch.layers.push_back(simple(LayerKind::ReLU));
    arch.layers.push_back(simple(LayerKind::Dropout));
    arch.layers.push_back(linear(4096, 1000));
    return arch;
}

ArchitectureSpec make_alexnet(std::int64_t batch) {
    ArchitectureSpec arch{"alexnet", {batch, 3, 224, 224}, {}};
    auto& l = arch.layers;
    l.push_back(conv(3, 64, 11, 4, 2));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(maxpool(3, 2));
    l.push_back(conv(64, 192, 5, 1, 2));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(maxpool(3, 2));
    l.push_back(conv(192, 384, 3, 1, 1));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(conv(384, 256, 3, 1, 1));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(conv(256, 256, 3, 1, 1));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(maxpool(3, 2));
    l.push_back(adaptive_avg_pool(6));
    l.push_back(simple(LayerKind::Flatten));
    l.push_back(simple(LayerKind::Dropout));
    l.push_back(linear(256 * 6 * 6, 4096));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(simple(LayerKind::Dropout));
    l.push_back(linear(4096, 4096));
    l.push_back(simple(LayerKind::ReLU));
    l.push_back(linear(4096, 1000));
    return arch;
}

std::int64_t read_int(const json& doc, const char* key, const char* where) {
    const auto it = doc.find(key);
    if (it == doc.end()) throw ValidationError(fmt::format("{}: missing field '{}'", where, key));
    if (!it->is_number_integer()) {
        throw ValidationError(fmt::format("{}: field '{}' must be an integer", where, key));
    }
    return it->get<std::int64_t>();
}

}  // namespace

std::string_view to_string(LayerKind kind) noexcept {
    for (const auto& entry : kKindNames) {
        if (entry.kind == kind) return entry.canonical;
    }
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
    const auto key = lower(name);
    for (const auto& entry : kKindNames) {
        if (key == entry.canonical || key == entry.alias) return entry.kind;
    }
    throw ParseError(fmt::format("unknown layer kind '{}'", name));
}

bool is_activation(LayerKind kind) noexcept {
    return kind == LayerKind::ReLU || kind == LayerKind::Sigmoid || kind == LayerKind::Tanh ||
           kind == LayerKind::Softmax;
}

bool is_predictable(LayerKind kind) noexcept {
    return kind == LayerKind::Conv2d || kind == LayerKind::MaxPool2d ||
           kind == LayerKind::Linear || is_activation(kind);
}

const std::vector<LayerKind>& predictable_kinds() {
    static const std::vector<LayerKind> kinds{LayerKind::Conv2d, LayerKind::MaxPool2d,
                                              LayerKind::Linear,  LayerKind::ReLU,
                                              LayerKind::Sigmoid, LayerKind::Tanh,
                                              LayerKind::Softmax};
    return kinds;
}

std::string to_string(const TensorShape& s) {
    return fmt::format("({}, {}, {}, {})", s.batch, s.channels, s.height, s.width);
}

void validate(const LayerConfig& config, bool require_complete) {
    const auto rules = rules_for(config.kind);
    const auto required = require_complete ? rules.required_complete : rules.required_in_arch;
    const auto kind_name = to_string(config.kind);
    for (const auto& field : kFields) {
        const auto& value = config.*field.member;
        const bool allowed = (rules.allowed & field.flag) != 0;
        if (value && !allowed) {
            throw ValidationError(fmt::format("{}: field '{}' does not apply", kind_name, field.name));
        }
        if (!value && (required & field.flag)) {
            throw ValidationError(fmt::format("{}: missing field '{}'", kind_name, field.name));
        }
        if (value && *value < field.minimum) {
            throw ValidationError(fmt::format("{}: field '{}' must be >= {}, got {}", kind_name,
                                              field.name, field.minimum, *value));
        }
    }
    if (config.kind == LayerKind::Conv2d || config.kind == LayerKind::MaxPool2d) {
        const auto padding = config.padding.value_or(0);
        if (config.image_size && *config.image_size + 2 * padding < *config.kernel_size) {
            throw ValidationError(fmt::format("{}: image_size {} + 2*padding {} < kernel_size {}",
                                              kind_name, *config.image_size, padding,
                                              *config.kernel_size));
        }
        if (config.kind == LayerKind::MaxPool2d && padding > *config.kernel_size / 2) {
            throw ValidationError(fmt::format("maxpool2d: padding {} exceeds kernel_size/2 = {}",
                                              padding, *config.kernel_size / 2));
        }
    }
}

TensorShape input_shape_of(const LayerConfig& config) {
    validate(config, true);
    const auto batch = *config.batch_size;
    switch (config.kind) {
        case LayerKind::Conv2d:
        case LayerKind::MaxPool2d:
            return {batch, *config.in_channels, *config.image_size, *config.image_size};
        case LayerKind::Linear:
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax:
            return {batch, *config.in_channels, 1, 1};
        default:
            throw ShapeError(fmt::format("{}: no stand-alone input shape", to_string(config.kind)));
    }
}

TensorShape propagate_shape(const TensorShape& input, const LayerConfig& layer) {
    return resolve(input, layer).second;
}

std::vector<ResolvedLayer> resolve_layers(const ArchitectureSpec& arch) {
    std::vector<ResolvedLayer> out;
    out.reserve(arch.layers.size());
    TensorShape shape = arch.input;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        try {
            auto [cfg, next] = resolve(shape, arch.layers[i]);
            out.push_back({i, std::move(cfg), shape, next});
            shape = next;
        } catch (const ShapeError& e) {
            throw ShapeError(fmt::format("{} layer {}: {}", arch.name, i, e.what()));
        }
    }
    return out;
}

std::vector<ResolvedLayer> extract_predictable_layers(const ArchitectureSpec& arch) {
    auto layers = resolve_layers(arch);
    std::erase_if(layers, [](const ResolvedLayer& l) { return !is_predictable(l.config.kind); });
    return layers;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"alexnet", "vgg11", "vgg13", "vgg16"};
    return names;
}

ArchitectureSpec preset(std::string_view name, std::int64_t batch) {
    if (batch < 1) throw ValidationError("batch must be >= 1");
    const auto key = lower(name);
    constexpr int M = 0;
    if (key == "alexnet") return make_alexnet(batch);
    if (key == "vgg11") return make_vgg("vgg11", {64, M, 128, M, 256, 256, M, 512, 512, M, 512, 512, M}, batch);
    if (key == "vgg13") {
        return make_vgg("vgg13", {64, 64, M, 128, 128, M, 256, 256, M, 512, 512, M, 512, 512, M}, batch);
    }
    if (key == "vgg16") {
        return make_vgg("vgg16",
                        {64, 64, M, 128, 128, M, 256, 256, 256, M, 512, 512, 512, M, 512, 512, 512, M},
                        batch);
    }
    throw UnknownPreset(fmt::format("unknown architecture preset '{}'", name));
}

LayerConfig layer_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("layer entry must be an object");
    const auto kind_it = doc.find("kind");
    if (kind_it == doc.end() || !kind_it->is_string()) {
        throw ValidationError("layer entry needs a string 'kind'");
    }
    LayerConfig cfg;
    try {
        cfg.kind = parse_layer_kind(kind_it->get<std::string>());
    } catch (const ParseError& e) {
        throw ValidationError(e.what());
    }
    for (const auto& [key, value] : doc.items()) {
        if (key == "kind") continue;
        const auto field = std::find_if(kFields.begin(), kFields.end(),
                                        [&](const FieldRef& f) { return key == f.name; });
        if (field == kFields.end()) throw ValidationError(fmt::format("unknown layer field '{}'", key));
        if (!value.is_number_integer()) {
            throw ValidationError(fmt::format("layer field '{}' must be an integer", key));
        }
        cfg.*(field->member) = value.get<std::int64_t>();
    }
    return cfg;
}

json to_json(const LayerConfig& config) {
    json out = json::object();
    out["kind"] = std::string(to_string(config.kind));
    for (const auto& field : kFields) {
        if (const auto& value = config.*field.member) out[field.name] = *value;
    }
    return out;
}

ArchitectureSpec architecture_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("architecture document must be an object");
    ArchitectureSpec arch;
    if (auto it = doc.find("name"); it != doc.end()) {
        if (!it->is_string()) throw ValidationError("'name' must be a string");
        arch.name = it->get<std::string>();
    }
    const auto input = doc.find("input");
    if (input == doc.end() || !input->is_object()) throw ValidationError("missing 'input' object");
    arch.input = {read_int(*input, "batch", "input"), read_int(*input, "channels", "input"),
                  read_int(*input, "height", "input"), read_int(*input, "width", "input")};
    const auto layers = doc.find("layers");
    if (layers == doc.end() || !layers->is_array()) throw ValidationError("missing 'layers' array");
    for (const auto& entry : *layers) arch.layers.push_back(layer_config_from_json(entry));

    for (const auto& layer : arch.layers) validate(layer, false);
    try {
        resolve_layers(arch);
    } catch (const ShapeError& e) {
        throw ValidationError(e.what());
    }
    return arch;
}

json to_json(const ArchitectureSpec& arch) {
    json layers = json::array();
    for (const auto& layer : arch.layers) layers.push_back(to_json(layer));
    return {{"name", arch.name},
            {"input",
             {{"batch", arch.input.batch},
              {"channels", arch.input.channels},
              {"height", arch.input.height},
              {"width", arch.input.width}}},
            {"layers", std::move(layers)}};
}

ArchitectureSpec load_architecture(std::string_view source) {
    const auto key = lower(source);
    if (std::find(preset_names().begin(), preset_names().end(), key) != preset_names().end()) {
        return preset(key);
    }
    std::string text;
    const auto first = source.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && source[first] == '{') {
        text = std::string(source);
    } else {
        const std::filesystem::path path{std::string(source)};
        std::error_code ec;
        if (!std::filesystem::is_regular_file(path, ec)) {
            throw UnknownPreset(fmt::format("'{}' is neither a preset ({}) nor a readable file",
                                            source, fmt::join(preset_names(), ", ")));
        }
        std::ifstream in(path);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        text = buffer.str();
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("malformed architecture JSON: {}", e.what()));
    }
    return architecture_from_json(doc);
}

ArchitectureSpec with_batch(ArchitectureSpec arch, std::int64_t batch) {
    if (batch < 1) throw ValidationError("batch must be >= 1");
    arch.input.batch = batch;
    for (auto& layer : arch.layers) {
        if (layer.batch_size) layer.batch_size = batch;
    }
    return arch;
}

}  // namespace dlenergy

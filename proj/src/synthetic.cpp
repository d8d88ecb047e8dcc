#include "dlenergy/synthetic.hpp"

#include <fmt/format.h>

#include "dlenergy/macs.hpp"

namespace dlenergy {

double SyntheticWorld::true_energy(const LayerConfig& config, MacCount macs) const {
    switch (config.kind) {
        case LayerKind::Conv2d:
        case LayerKind::MaxPool2d:
        case LayerKind::Linear:
        case LayerKind::ReLU: return joules_per_mac * static_cast<double>(macs);
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax: {
            const auto& c = activation_coeffs;
            const double b = static_cast<double>(config.batch_size.value());
            const double s = static_cast<double>(config.in_channels.value());
            double e = c.at(0) + c.at(1) * b + c.at(2) * s + c.at(3) * b * s;
            if (config.kind == LayerKind::Tanh) e += c.at(4) * b * b + c.at(5) * s * s;
            return e;
        }
        default: break;
    }
    throw ValidationError(fmt::format("no synthetic energy law for {} layers", to_string(config.kind)));
}

double SyntheticWorld::measure(const LayerConfig& config, MacCount macs, Rng& rng) const {
    const double truth = true_energy(config, macs);
    if (noise == 0.0) return truth;
    return truth * (1.0 + noise * rng.normal());
}

std::vector<MeasurementRecord> SyntheticWorld::layerwise(LayerKind kind, std::size_t count,
                                                         std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<MeasurementRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        MeasurementRecord rec;
        rec.config = sample_config(kind, rng);
        rec.macs = config_macs(rec.config);
        rec.cpu_energy_j = measure(rec.config, rec.macs, rng);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<MeasurementRecord> SyntheticWorld::layerwise_all(std::size_t count_per_kind, std::uint64_t seed) const {
    std::vector<MeasurementRecord> out;
    std::uint64_t offset = 0;
    for (const auto kind : predictable_kinds()) {
        auto part = layerwise(kind, count_per_kind, seed + 1000003 * offset++);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<ModelWiseRecord> SyntheticWorld::modelwise(const std::vector<ArchitectureSpec>& archs,
                                                       const std::vector<std::int64_t>& batches,
                                                       std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<ModelWiseRecord> out;
    for (const auto& base : archs) {
        for (const auto batch : batches) {
            const auto arch = with_batch(base, batch);
            ModelWiseRecord rec;
            rec.architecture = arch.name;
            rec.batch_size = batch;
            double truth = 0.0;
            for (const auto& layer : extract_predictable_layers(arch)) {
                LayerMeasurement lm;
                lm.layer_index = static_cast<std::int64_t>(layer.index);
                lm.config = layer.config;
                lm.macs = layer_macs(layer);
                lm.energy_j = measure(lm.config, lm.macs, rng);
                truth += true_energy(lm.config, lm.macs);
                rec.total_macs += lm.macs;
                rec.layers.push_back(std::move(lm));
            }
            rec.total_energy_j = noise == 0.0 ? truth : truth * (1.0 + noise * rng.normal());
            out.push_back(std::move(rec));
        }
    }
    return out;
}

double SyntheticWorld::architecture_energy(const ArchitectureSpec& arch) const {
    double total = 0.0;
    for (const auto& layer : extract_predictable_layers(arch)) total += true_energy(layer.config, layer_macs(layer));
    return total;
}

}  // namespace dlenergy

#pragma once

#include <cstdint>
#include <vector>

#include "dlenergy/arch.hpp"
#include "dlenergy/dataset.hpp"

namespace dlenergy {

/// A made-up machine with a known energy law, for hardware-free runs.
///
/// Conv2d, MaxPool2d, Linear and ReLU cost `joules_per_mac` per MAC.
/// Sigmoid, Tanh and Softmax follow a polynomial in batch size b and
/// per-sample size s: c0 + c1·b + c2·s + c3·b·s (Tanh adds c4·b² + c5·s²).
/// Measurements get multiplicative Gaussian noise with std `noise` (a
/// fraction of the true value).
struct SyntheticWorld {
    double joules_per_mac = 1e-10;
    std::vector<double> activation_coeffs{2e-4, 3e-6, 4e-9, 6e-10, 1e-8, 2e-16};
    double noise = 0.0;

    /// Noise-free energy of one forward pass.
    double true_energy(const LayerConfig& config, MacCount macs) const;
    double measure(const LayerConfig& config, MacCount macs, Rng& rng) const;

    /// `count` sampled configs of `kind` with measured energies.
    std::vector<MeasurementRecord> layerwise(LayerKind kind, std::size_t count, std::uint64_t seed) const;
    /// `count_per_kind` records for every predictable kind.
    std::vector<MeasurementRecord> layerwise_all(std::size_t count_per_kind, std::uint64_t seed) const;

    /// One model-wise record per (architecture, batch) with per-layer
    /// measurements of the predictable layers. The total is measured as
    /// one more noisy draw of the summed truth.
    std::vector<ModelWiseRecord> modelwise(const std::vector<ArchitectureSpec>& archs,
                                           const std::vector<std::int64_t>& batches, std::uint64_t seed) const;

    /// Sum of true_energy over the predictable layers of `arch`.
    double architecture_energy(const ArchitectureSpec& arch) const;
};

}  // namespace dlenergy

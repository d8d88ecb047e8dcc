#pragma once

#include <cstdint>
#include <vector>

#include "dlenergy/arch.hpp"

namespace dlenergy {

/// Dense NCHW tensor of doubles.
struct Tensor {
    TensorShape shape;
    std::vector<double> data;

    static Tensor zeros(const TensorShape& shape);
    double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
    double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
};

/// Parameters of a weighted layer. Conv: [out][in][k][k]; linear: [out][in].
struct LayerWeights {
    std::vector<double> weight;
    std::vector<double> bias;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights drawn from `seed`.
LayerWeights make_weights(const LayerConfig& config, std::uint64_t seed);
Tensor random_input(const TensorShape& shape, std::uint64_t seed);

// Naive reference kernels: direct loops, no blocking or vectorization.
Tensor conv2d_forward(const Tensor& in, const LayerWeights& w, std::int64_t out_channels, std::int64_t kernel,
                      std::int64_t stride, std::int64_t padding);
Tensor maxpool2d_forward(const Tensor& in, std::int64_t kernel, std::int64_t stride, std::int64_t padding);
Tensor linear_forward(const Tensor& in, const LayerWeights& w, std::int64_t out_features);
Tensor relu_forward(const Tensor& in);
Tensor sigmoid_forward(const Tensor& in);
Tensor tanh_forward(const Tensor& in);
/// Over the flattened sample for flat inputs, otherwise over the width axis;
/// max-subtracted.
Tensor softmax_forward(const Tensor& in);
Tensor adaptive_avg_pool_forward(const Tensor& in, std::int64_t output_size);

/// Dispatches on config.kind; `in` must have input_shape_of(config) (for
/// stand-alone configs). Throws ShapeError.
Tensor forward(const LayerConfig& config, const Tensor& in, const LayerWeights& weights);

/// A stand-alone layer with fixed weights and input, ready to run
/// repeatedly as a measurement workload.
class LayerKernel {
public:
    LayerKernel(const LayerConfig& config, std::uint64_t seed);

    const LayerConfig& config() const { return config_; }
    const Tensor& input() const { return input_; }
    Tensor run() const { return forward(config_, input_, weights_); }

private:
    LayerConfig config_;
    LayerWeights weights_;
    Tensor input_;
};

}  // namespace dlenergy

#include "dlenergy/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dlenergy/error.hpp"
#include "dlenergy/rng.hpp"

namespace dlenergy {

namespace {

std::size_t volume(const TensorShape& s) {
    return static_cast<std::size_t>(s.batch * s.channels * s.height * s.width);
}

std::int64_t window_out(std::int64_t side, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    if (k < 1 || stride < 1 || pad < 0 || side + 2 * pad < k) {
        throw ShapeError(fmt::format("window k={} stride={} pad={} does not fit side {}", k, stride, pad, side));
    }
    return (side + 2 * pad - k) / stride + 1;
}

template <typename F>
Tensor elementwise(const Tensor& in, F f) {
    Tensor out = in;
    for (auto& v : out.data) v = f(v);
    return out;
}

}  // namespace

Tensor Tensor::zeros(const TensorShape& shape) { return {shape, std::vector<double>(volume(shape), 0.0)}; }

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(((n * shape.channels + c) * shape.height + h) * shape.width + w)];
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data[static_cast<std::size_t>(((n * shape.channels + c) * shape.height + h) * shape.width + w)];
}

LayerWeights make_weights(const LayerConfig& config, std::uint64_t seed) {
    LayerWeights w;
    Rng rng(seed);
    std::int64_t fan_in = 0, count = 0, outs = 0;
    if (config.kind == LayerKind::Conv2d) {
        const auto k = config.kernel_size.value();
        fan_in = config.in_channels.value() * k * k;
        outs = config.out_channels.value();
        count = outs * fan_in;
    } else if (config.kind == LayerKind::Linear) {
        fan_in = config.in_channels.value();
        outs = config.out_channels.value();
        count = outs * fan_in;
    } else {
        return w;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    w.weight.resize(static_cast<std::size_t>(count));
    for (auto& v : w.weight) v = rng.uniform(-bound, bound);
    w.bias.resize(static_cast<std::size_t>(outs));
    for (auto& v : w.bias) v = rng.uniform(-bound, bound);
    return w;
}

Tensor random_input(const TensorShape& shape, std::uint64_t seed) {
    Rng rng(seed);
    auto t = Tensor::zeros(shape);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

Tensor conv2d_forward(const Tensor& in, const LayerWeights& w, std::int64_t out_channels, std::int64_t kernel,
                      std::int64_t stride, std::int64_t padding) {
    const auto& s = in.shape;
    const auto oh = window_out(s.height, kernel, stride, padding);
    const auto ow = window_out(s.width, kernel, stride, padding);
    const auto expected = static_cast<std::size_t>(out_channels * s.channels * kernel * kernel);
    if (w.weight.size() != expected || w.bias.size() != static_cast<std::size_t>(out_channels)) {
        throw ShapeError("conv2d weights do not match the layer shape");
    }
    auto out = Tensor::zeros({s.batch, out_channels, oh, ow});
    for (std::int64_t n = 0; n < s.batch; ++n) {
        for (std::int64_t co = 0; co < out_channels; ++co) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = w.bias[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < s.channels; ++ci) {
                        for (std::int64_t ky = 0; ky < kernel; ++ky) {
                            const auto iy = y * stride + ky - padding;
                            if (iy < 0 || iy >= s.height) continue;
                            for (std::int64_t kx = 0; kx < kernel; ++kx) {
                                const auto ix = x * stride + kx - padding;
                                if (ix < 0 || ix >= s.width) continue;
                                const auto wi = ((co * s.channels + ci) * kernel + ky) * kernel + kx;
                                acc += w.weight[static_cast<std::size_t>(wi)] * in.at(n, ci, iy, ix);
                            }
                        }
                    }
                    out.at(n, co, y, x) = acc;
                }
            }
        }
    }
    return out;
}

Tensor maxpool2d_forward(const Tensor& in, std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
    const auto& s = in.shape;
    const auto oh = window_out(s.height, kernel, stride, padding);
    const auto ow = window_out(s.width, kernel, stride, padding);
    auto out = Tensor::zeros({s.batch, s.channels, oh, ow});
    for (std::int64_t n = 0; n < s.batch; ++n) {
        for (std::int64_t c = 0; c < s.channels; ++c) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::int64_t ky = 0; ky < kernel; ++ky) {
                        const auto iy = y * stride + ky - padding;
                        if (iy < 0 || iy >= s.height) continue;
                        for (std::int64_t kx = 0; kx < kernel; ++kx) {
                            const auto ix = x * stride + kx - padding;
                            if (ix < 0 || ix >= s.width) continue;
                            best = std::max(best, in.at(n, c, iy, ix));
                        }
                    }
                    out.at(n, c, y, x) = best;
                }
            }
        }
    }
    return out;
}

Tensor linear_forward(const Tensor& in, const LayerWeights& w, std::int64_t out_features) {
    const auto in_features = in.shape.elements_per_sample();
    if (w.weight.size() != static_cast<std::size_t>(out_features * in_features) ||
        w.bias.size() != static_cast<std::size_t>(out_features)) {
        throw ShapeError(fmt::format("linear weights do not match {} -> {} features", in_features, out_features));
    }
    auto out = Tensor::zeros({in.shape.batch, out_features, 1, 1});
    for (std::int64_t n = 0; n < in.shape.batch; ++n) {
        const double* x = in.data.data() + n * in_features;
        for (std::int64_t o = 0; o < out_features; ++o) {
            const double* row = w.weight.data() + o * in_features;
            double acc = w.bias[static_cast<std::size_t>(o)];
            for (std::int64_t i = 0; i < in_features; ++i) acc += row[i] * x[i];
            out.data[static_cast<std::size_t>(n * out_features + o)] = acc;
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& in) {
    return elementwise(in, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor sigmoid_forward(const Tensor& in) {
    return elementwise(in, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor tanh_forward(const Tensor& in) {
    return elementwise(in, [](double v) { return std::tanh(v); });
}

Tensor softmax_forward(const Tensor& in) {
    Tensor out = in;
    const auto& s = in.shape;
    // Flat inputs normalize over the whole sample; otherwise the last axis.
    const auto axis = s.is_flat() ? s.elements_per_sample() : s.width;
    const auto groups = static_cast<std::int64_t>(out.data.size()) / axis;
    for (std::int64_t g = 0; g < groups; ++g) {
        double* v = out.data.data() + g * axis;
        const double top = *std::max_element(v, v + axis);
        double sum = 0.0;
        for (std::int64_t i = 0; i < axis; ++i) {
            v[i] = std::exp(v[i] - top);
            sum += v[i];
        }
        for (std::int64_t i = 0; i < axis; ++i) v[i] /= sum;
    }
    return out;
}

Tensor adaptive_avg_pool_forward(const Tensor& in, std::int64_t output_size) {
    const auto& s = in.shape;
    if (output_size < 1) throw ShapeError("adaptive pool output size must be positive");
    auto out = Tensor::zeros({s.batch, s.channels, output_size, output_size});
    for (std::int64_t n = 0; n < s.batch; ++n) {
        for (std::int64_t c = 0; c < s.channels; ++c) {
            for (std::int64_t y = 0; y < output_size; ++y) {
                const auto y0 = y * s.height / output_size;
                const auto y1 = ((y + 1) * s.height + output_size - 1) / output_size;
                for (std::int64_t x = 0; x < output_size; ++x) {
                    const auto x0 = x * s.width / output_size;
                    const auto x1 = ((x + 1) * s.width + output_size - 1) / output_size;
                    double acc = 0.0;
                    for (auto iy = y0; iy < y1; ++iy) {
                        for (auto ix = x0; ix < x1; ++ix) acc += in.at(n, c, iy, ix);
                    }
                    out.at(n, c, y, x) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
                }
            }
        }
    }
    return out;
}

Tensor forward(const LayerConfig& config, const Tensor& in, const LayerWeights& weights) {
    const auto expect_channels = [&](std::int64_t c) {
        if (in.shape.channels != c) {
            throw ShapeError(fmt::format("{} expects {} input channels, got {}", to_string(config.kind), c,
                                         in.shape.channels));
        }
    };
    switch (config.kind) {
        case LayerKind::Conv2d:
            expect_channels(config.in_channels.value());
            return conv2d_forward(in, weights, config.out_channels.value(), config.kernel_size.value(),
                                  config.stride.value_or(1), config.padding.value_or(0));
        case LayerKind::MaxPool2d:
            expect_channels(config.in_channels.value());
            return maxpool2d_forward(in, config.kernel_size.value(),
                                     config.stride.value_or(config.kernel_size.value()), config.padding.value_or(0));
        case LayerKind::Linear:
            if (in.shape.elements_per_sample() != config.in_channels.value()) {
                throw ShapeError(fmt::format("linear expects {} input features, got {}", config.in_channels.value(),
                                             in.shape.elements_per_sample()));
            }
            return linear_forward(in, weights, config.out_channels.value());
        case LayerKind::ReLU: return relu_forward(in);
        case LayerKind::Sigmoid: return sigmoid_forward(in);
        case LayerKind::Tanh: return tanh_forward(in);
        case LayerKind::Softmax: return softmax_forward(in);
        case LayerKind::AdaptiveAvgPool: return adaptive_avg_pool_forward(in, config.output_size.value());
        case LayerKind::Dropout: return in;  // inference mode
        case LayerKind::Flatten: {
            Tensor out = in;
            out.shape = {in.shape.batch, in.shape.elements_per_sample(), 1, 1};
            return out;
        }
    }
    throw ShapeError("unknown layer kind");
}

LayerKernel::LayerKernel(const LayerConfig& config, std::uint64_t seed)
    : config_(config),
      weights_(make_weights(config, seed)),
      input_(random_input(input_shape_of(config), seed ^ 0x9e3779b97f4a7c15ULL)) {}

}  // namespace dlenergy

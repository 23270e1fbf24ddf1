#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/prng.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

enum class Activation { relu, tanh };

inline const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

inline double activate(Activation a, double z) noexcept {
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative with respect to the pre-activation; ReLU'(0) is taken as 0.
inline double activate_grad(Activation a, double z) noexcept {
    if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

/// Sign pattern of every ReLU pre-activation visited by a forward pass:
/// 0 negative, 1 positive, 2 exactly zero. Gradient checks compare patterns
/// to detect finite-difference steps that cross a kink.
using ActivationPattern = std::vector<std::uint8_t>;

inline void record_pattern(ActivationPattern* pattern, Activation a, std::span<const double> pre) {
    if (!pattern || a != Activation::relu) return;
    for (double z : pre) pattern->push_back(z > 0.0 ? 1 : (z < 0.0 ? 0 : 2));
}

/// Fully connected network. weights[l] is (layer_sizes[l+1], layer_sizes[l]);
/// hidden layers apply `activation`, the last layer is affine.
struct Mlp {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::size_t layers() const noexcept { return weights.size(); }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
};

inline Mlp make_mlp(std::vector<std::size_t> layer_sizes, Activation activation = Activation::relu) {
    if (layer_sizes.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
    Mlp mlp;
    mlp.layer_sizes = std::move(layer_sizes);
    mlp.activation = activation;
    for (std::size_t l = 0; l + 1 < mlp.layer_sizes.size(); ++l) {
        mlp.weights.emplace_back(Shape{mlp.layer_sizes[l + 1], mlp.layer_sizes[l]});
        mlp.biases.emplace_back(Shape{mlp.layer_sizes[l + 1]});
    }
    return mlp;
}

// He scaling: weights uniform on ±sqrt(6/fan_in), i.e. stddev sqrt(2/fan_in); zero biases.
inline void init_he(Tensor& weight, std::size_t fan_in, Prng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : weight.data()) w = rng.uniform(-bound, bound);
}

inline void init_he(Mlp& mlp, Prng& rng) {
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        init_he(mlp.weights[l], mlp.layer_sizes[l], rng);
        mlp.biases[l].fill(0.0);
    }
}

inline Mlp zeros_like(const Mlp& mlp) { return make_mlp(mlp.layer_sizes, mlp.activation); }

inline void append_parameters(Mlp& mlp, std::vector<Tensor*>& out) {
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        out.push_back(&mlp.weights[l]);
        out.push_back(&mlp.biases[l]);
    }
}

inline void append_parameters(const Mlp& mlp, std::vector<const Tensor*>& out) {
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        out.push_back(&mlp.weights[l]);
        out.push_back(&mlp.biases[l]);
    }
}

/// Activations retained by a forward pass for the backward pass.
struct MlpCache {
    std::vector<Tensor> inputs;  // inputs[l]: input to layer l
    std::vector<Tensor> pre;     // pre[l]: pre-activation of hidden layer l
};

namespace detail {

inline Tensor affine(const Mlp& mlp, std::size_t l, const Tensor& input) {
    if (input.dim(1) != mlp.layer_sizes[l]) {
        throw DimensionError("mlp layer " + std::to_string(l) + ": input width " + std::to_string(input.dim(1)) +
                             " != " + std::to_string(mlp.layer_sizes[l]));
    }
    Tensor z({input.dim(0), mlp.layer_sizes[l + 1]});
    auto zm = as_matrix(z);
    zm.noalias() = as_matrix(input) * as_matrix(mlp.weights[l]).transpose();
    const Eigen::Map<const Eigen::RowVectorXd> b(mlp.biases[l].data().data(),
                                                 static_cast<Eigen::Index>(mlp.biases[l].size()));
    zm.rowwise() += b;
    return z;
}

inline void require_finite(const Tensor& t, std::size_t layer) {
    if (!all_finite(t.data())) {
        throw NumericError("non-finite activation in mlp layer " + std::to_string(layer));
    }
}

}  // namespace detail

/// Evaluates layers [first, layers()) on `input` (the input of layer `first`).
inline Tensor mlp_forward_range(const Mlp& mlp, std::size_t first, Tensor input, MlpCache* cache = nullptr,
                                ActivationPattern* pattern = nullptr) {
    require_rank(input, 2, "mlp_forward");
    if (cache) {
        cache->inputs.assign(mlp.layers(), Tensor());
        cache->pre.assign(mlp.layers(), Tensor());
    }
    for (std::size_t l = first; l < mlp.layers(); ++l) {
        Tensor z = detail::affine(mlp, l, input);
        detail::require_finite(z, l);
        if (cache) cache->inputs[l] = std::move(input);
        if (l + 1 < mlp.layers()) {
            record_pattern(pattern, mlp.activation, z.data());
            Tensor a(z.shape());
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(mlp.activation, z[i]);
            if (cache) cache->pre[l] = std::move(z);
            input = std::move(a);
        } else {
            input = std::move(z);
        }
    }
    return input;
}

/// Batched forward pass: input is (batch, layer_sizes[0]).
inline Tensor mlp_forward(const Mlp& mlp, const Tensor& input, MlpCache* cache = nullptr,
                          ActivationPattern* pattern = nullptr) {
    return mlp_forward_range(mlp, 0, input, cache, pattern);
}

/// Reverse pass over layers [first, layers()). `dout` is the gradient of the
/// loss with respect to the network output; parameter gradients accumulate
/// into `grad`. Returns the gradient with respect to the input of layer
/// `first` when requested, otherwise an empty tensor.
inline Tensor mlp_backward_range(const Mlp& mlp, std::size_t first, const MlpCache& cache, Tensor dout, Mlp& grad,
                                 bool need_input_grad = false) {
    for (std::size_t l = mlp.layers(); l-- > first;) {
        Tensor dz = std::move(dout);
        if (l + 1 < mlp.layers()) {
            const Tensor& pre = cache.pre[l];
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activate_grad(mlp.activation, pre[i]);
        }
        add_matmul_tn(grad.weights[l], dz, cache.inputs[l]);
        auto& gb = grad.biases[l];
        for (std::size_t r = 0; r < dz.dim(0); ++r) {
            const auto row = dz.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
        }
        if (l > first || need_input_grad) dout = matmul(dz, mlp.weights[l]);
    }
    return need_input_grad ? dout : Tensor();
}

inline Tensor mlp_backward(const Mlp& mlp, const MlpCache& cache, Tensor dout, Mlp& grad,
                           bool need_input_grad = false) {
    return mlp_backward_range(mlp, 0, cache, std::move(dout), grad, need_input_grad);
}

/// Forward-mode pass: returns (output, d output) for input tangent `dinput`.
inline std::pair<Tensor, Tensor> mlp_forward_tangent(const Mlp& mlp, const Tensor& input, const Tensor& dinput) {
    require_same_shape(input, dinput, "mlp_forward_tangent");
    Tensor a = input;
    Tensor da = dinput;
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        Tensor z = detail::affine(mlp, l, a);
        Tensor dz = matmul_nt(da, mlp.weights[l]);
        if (l + 1 < mlp.layers()) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                dz[i] *= activate_grad(mlp.activation, z[i]);
                z[i] = activate(mlp.activation, z[i]);
            }
        }
        a = std::move(z);
        da = std::move(dz);
    }
    return {std::move(a), std::move(da)};
}

}  // namespace dpn

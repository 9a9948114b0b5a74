#ifndef HMC_NN_LAYERS_HPP
#define HMC_NN_LAYERS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"
#include "hmc/nn/ops.hpp"
#include "hmc/nn/tape.hpp"

namespace hmc::nn {

struct DenseLayer {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out

    Eigen::Index in_dim() const { return weight.rows(); }
    Eigen::Index out_dim() const { return weight.cols(); }
};

/// Glorot-uniform weights, zero bias.
inline DenseLayer make_dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(in, out), Matrix::Zero(1, out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    return layer;
}

inline DenseLayer make_zero_dense(Eigen::Index in, Eigen::Index out) {
    return DenseLayer{Matrix::Zero(in, out), Matrix::Zero(1, out)};
}

/// Stack of dense layers applied after mean aggregation over the 1-ring.
struct GraphConvParams {
    std::vector<DenseLayer> layers;

    Eigen::Index in_dim() const { return layers.front().in_dim(); }
    Eigen::Index out_dim() const { return layers.back().out_dim(); }
};

inline GraphConvParams make_graph_conv(const std::vector<Eigen::Index>& widths, std::mt19937_64& rng) {
    if (widths.size() < 2) throw ShapeError("graph conv needs at least input and output widths");
    GraphConvParams p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) p.layers.push_back(make_dense(widths[l], widths[l + 1], rng));
    return p;
}

inline void check_chain(const GraphConvParams& p) {
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        if (p.layers[l].out_dim() != p.layers[l + 1].in_dim()) throw ShapeError("graph conv widths do not chain");
    }
    for (const auto& layer : p.layers) {
        if (layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) throw ShapeError("graph conv bias shape");
    }
}

struct BoundDense {
    Var weight;
    Var bias;
};

using BoundLayers = std::vector<BoundDense>;

/// Records the layer parameters as tape leaves; `trainable` marks them for gradients.
inline BoundLayers bind(Tape& tape, const std::vector<DenseLayer>& layers, bool trainable) {
    BoundLayers out;
    for (const auto& layer : layers) {
        if (trainable) {
            out.push_back({tape.variable(layer.weight), tape.variable(layer.bias)});
        } else {
            out.push_back({tape.constant(layer.weight), tape.constant(layer.bias)});
        }
    }
    return out;
}

/// h <- act(Agg h W + b) per layer; ELU on hidden layers, identity on the last.
inline Var graph_conv_forward(const Var& features, const SparseMatrix& agg, const BoundLayers& layers) {
    if (agg.rows() != features.rows() || agg.cols() != features.rows()) {
        throw ShapeError("aggregation matrix does not match the feature rows");
    }
    Var h = features;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (h.cols() != layers[l].weight.rows()) throw ShapeError("graph conv input width mismatch");
        // Aggregate on the narrower side of the product.
        if (layers[l].weight.rows() <= layers[l].weight.cols()) {
            h = matmul(spmm(agg, h), layers[l].weight);
        } else {
            h = spmm(agg, matmul(h, layers[l].weight));
        }
        h = add_row(h, layers[l].bias);
        if (l + 1 < layers.size()) h = elu(h);
    }
    return h;
}

inline Matrix graph_conv_forward(const Matrix& features, const SparseMatrix& agg, const GraphConvParams& params) {
    check_chain(params);
    Tape tape;
    const BoundLayers bound = bind(tape, params.layers, false);
    return graph_conv_forward(tape.constant(features), agg, bound).value();
}

/// Per-row multilayer perceptron; ELU on hidden layers.
inline Var dense_forward(const Var& x, const BoundLayers& layers) {
    Var h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = add_row(matmul(h, layers[l].weight), layers[l].bias);
        if (l + 1 < layers.size()) h = elu(h);
    }
    return h;
}

}  // namespace hmc::nn

#endif  // HMC_NN_LAYERS_HPP

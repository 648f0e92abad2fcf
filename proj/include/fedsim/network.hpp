#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

// Spatial layout of an activation tensor. Flat feature vectors use {1, 1, dim}.
struct Shape {
    int channels = 1;
    int height = 1;
    int width = 1;

    int elems() const { return channels * height * width; }
    bool operator==(const Shape&) const = default;
};

enum class LayerKind { dense, conv2d, relu, flatten, tanh_act, scale };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int in = 0, out = 0;                          // dense
    int in_ch = 0, out_ch = 0, kh = 0, kw = 0;    // conv2d (stride 1, no padding)
    double alpha = 1.0;                           // scale
    Shape in_shape, out_shape;                    // resolved when the layer is added
    std::size_t param_offset = 0;
    std::size_t param_count = 0;
};

// Activations at every layer boundary from one forward pass; acts[0] is the
// input batch, acts[i+1] the output of layer i.
struct ForwardCache {
    std::vector<Matrix> acts;
    const Matrix& output() const { return acts.back(); }
};

struct BackwardResult {
    std::vector<double> param_grad;  // dimension = Network::param_count()
    Matrix input_grad;               // same shape as the forward input batch
};

// Layered feed-forward network over 64-bit floats with analytic gradients.
// Parameters live in one flat vector so model updates can be treated as plain
// vectors by the aggregation rules.
class Network {
public:
    explicit Network(Shape input_shape = {1, 1, 1}) : input_shape_(input_shape) { current_ = input_shape; }

    Network& add_dense(int out_features);
    Network& add_conv2d(int out_channels, int kh, int kw);
    Network& add_relu();
    Network& add_flatten();
    Network& add_tanh();
    Network& add_scale(double alpha);

    // Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)] per layer.
    void init_params(std::uint64_t seed);

    Shape input_shape() const { return input_shape_; }
    Shape output_shape() const { return current_; }
    int input_dim() const { return input_shape_.elems(); }
    int output_dim() const { return current_.elems(); }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }
    void set_params(std::vector<double> p);
    const std::vector<LayerSpec>& layers() const { return layers_; }

    // Raw forward pass (no softmax). batch: one flattened sample per row.
    ForwardCache forward(const Matrix& batch) const;
    Matrix output(const Matrix& batch) const { return forward(batch).output(); }

    // Per-row softmax of the final layer output.
    Matrix probabilities(const Matrix& batch) const;
    int predict_one(const double* x) const;
    std::vector<int> predict(const Matrix& batch) const;

    // Activations entering the final layer (the penultimate representation).
    Matrix penultimate(const Matrix& batch) const;

    // Backpropagate an arbitrary output gradient.
    BackwardResult backward(const ForwardCache& cache, const Matrix& output_grad) const;

    // Mean softmax-cross-entropy loss over the batch and its gradients.
    struct LossGrad {
        double loss = 0.0;
        std::vector<double> param_grad;
        Matrix input_grad;
    };
    LossGrad loss_and_grad(const Matrix& batch, const std::vector<int>& labels) const;
    double loss(const Matrix& batch, const std::vector<int>& labels) const;

private:
    void check_ready() const;

    Shape input_shape_;
    Shape current_;
    std::vector<LayerSpec> layers_;
    std::vector<double> params_;
};

// Numerically stable softmax over each row of `logits`.
Matrix softmax(const Matrix& logits);

// Mean cross-entropy against integer labels; fills dlogits = (p - onehot)/B
// when non-null.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits);

// SGD with momentum and weight decay (decoupled from the network so velocity
// can persist across steps): v <- mu*v + (g + wd*theta); theta <- theta - lr*v.
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
    void reset() { velocity_.clear(); }

    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

private:
    double momentum_;
    double weight_decay_;
    std::vector<double> velocity_;
};

}  // namespace fedsim

#include "fedsim/network.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/rng.hpp"

namespace fedsim {

Network& Network::add_dense(int out_features) {
    require(out_features > 0, ErrorCode::invalid_argument, "dense: out_features must be positive");
    LayerSpec spec;
    spec.kind = LayerKind::dense;
    spec.in = current_.elems();
    spec.out = out_features;
    spec.in_shape = current_;
    spec.out_shape = {1, 1, out_features};
    spec.param_count = static_cast<std::size_t>(spec.in) * spec.out + spec.out;
    spec.param_offset = params_.size();
    params_.resize(params_.size() + spec.param_count, 0.0);
    layers_.push_back(spec);
    current_ = spec.out_shape;
    return *this;
}

Network& Network::add_conv2d(int out_channels, int kh, int kw) {
    require(out_channels > 0 && kh > 0 && kw > 0, ErrorCode::invalid_argument, "conv2d: bad dimensions");
    require(current_.height >= kh && current_.width >= kw, ErrorCode::invalid_argument,
            "conv2d: kernel larger than input");
    LayerSpec spec;
    spec.kind = LayerKind::conv2d;
    spec.in_ch = current_.channels;
    spec.out_ch = out_channels;
    spec.kh = kh;
    spec.kw = kw;
    spec.in_shape = current_;
    spec.out_shape = {out_channels, current_.height - kh + 1, current_.width - kw + 1};
    spec.param_count = static_cast<std::size_t>(out_channels) * spec.in_ch * kh * kw + out_channels;
    spec.param_offset = params_.size();
    params_.resize(params_.size() + spec.param_count, 0.0);
    layers_.push_back(spec);
    current_ = spec.out_shape;
    return *this;
}

Network& Network::add_relu() {
    LayerSpec spec;
    spec.kind = LayerKind::relu;
    spec.in_shape = spec.out_shape = current_;
    layers_.push_back(spec);
    return *this;
}

Network& Network::add_flatten() {
    LayerSpec spec;
    spec.kind = LayerKind::flatten;
    spec.in_shape = current_;
    spec.out_shape = {1, 1, current_.elems()};
    layers_.push_back(spec);
    current_ = spec.out_shape;
    return *this;
}

Network& Network::add_tanh() {
    LayerSpec spec;
    spec.kind = LayerKind::tanh_act;
    spec.in_shape = spec.out_shape = current_;
    layers_.push_back(spec);
    return *this;
}

Network& Network::add_scale(double alpha) {
    LayerSpec spec;
    spec.kind = LayerKind::scale;
    spec.alpha = alpha;
    spec.in_shape = spec.out_shape = current_;
    layers_.push_back(spec);
    return *this;
}

void Network::init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (const LayerSpec& spec : layers_) {
        if (spec.param_count == 0) continue;
        int fan_in = spec.kind == LayerKind::dense ? spec.in : spec.in_ch * spec.kh * spec.kw;
        double bound = std::sqrt(1.0 / fan_in);
        for (std::size_t i = 0; i < spec.param_count; ++i)
            params_[spec.param_offset + i] = rng.uniform(-bound, bound);
    }
}

void Network::set_params(std::vector<double> p) {
    require(p.size() == params_.size(), ErrorCode::invalid_argument, "set_params: dimension mismatch");
    params_ = std::move(p);
}

void Network::check_ready() const {
    require(!layers_.empty(), ErrorCode::invalid_argument, "network has no layers");
}

ForwardCache Network::forward(const Matrix& batch) const {
    check_ready();
    require(batch.cols == input_dim(), ErrorCode::invalid_argument,
            "forward: batch width " + std::to_string(batch.cols) + " does not match network input " +
                std::to_string(input_dim()));
    ForwardCache cache;
    cache.acts.reserve(layers_.size() + 1);
    cache.acts.push_back(batch);
    const int B = batch.rows;
    for (const LayerSpec& spec : layers_) {
        const Matrix& x = cache.acts.back();
        switch (spec.kind) {
            case LayerKind::dense: {
                Matrix y(B, spec.out);
                const double* W = params_.data() + spec.param_offset;
                const double* b = W + static_cast<std::size_t>(spec.in) * spec.out;
                for (int r = 0; r < B; ++r) {
                    const double* xr = x.row(r);
                    double* yr = y.row(r);
                    for (int j = 0; j < spec.out; ++j) yr[j] = b[j];
                    for (int i = 0; i < spec.in; ++i) {
                        const double xi = xr[i];
                        if (xi == 0.0) continue;
                        const double* Wi = W + static_cast<std::size_t>(i) * spec.out;
                        for (int j = 0; j < spec.out; ++j) yr[j] += xi * Wi[j];
                    }
                }
                cache.acts.push_back(std::move(y));
                break;
            }
            case LayerKind::conv2d: {
                const Shape& si = spec.in_shape;
                const Shape& so = spec.out_shape;
                Matrix y(B, so.elems());
                const double* W = params_.data() + spec.param_offset;
                const double* bias = W + static_cast<std::size_t>(spec.out_ch) * spec.in_ch * spec.kh * spec.kw;
                for (int r = 0; r < B; ++r) {
                    const double* xr = x.row(r);
                    double* yr = y.row(r);
                    for (int oc = 0; oc < so.channels; ++oc) {
                        for (int oy = 0; oy < so.height; ++oy) {
                            for (int ox = 0; ox < so.width; ++ox) {
                                double acc = bias[oc];
                                for (int ic = 0; ic < si.channels; ++ic) {
                                    for (int ky = 0; ky < spec.kh; ++ky) {
                                        const double* xrow =
                                            xr + (static_cast<std::size_t>(ic) * si.height + oy + ky) * si.width + ox;
                                        const double* wrow =
                                            W + ((static_cast<std::size_t>(oc) * si.channels + ic) * spec.kh + ky) *
                                                    spec.kw;
                                        for (int kx = 0; kx < spec.kw; ++kx) acc += xrow[kx] * wrow[kx];
                                    }
                                }
                                yr[(static_cast<std::size_t>(oc) * so.height + oy) * so.width + ox] = acc;
                            }
                        }
                    }
                }
                cache.acts.push_back(std::move(y));
                break;
            }
            case LayerKind::relu: {
                Matrix y = x;
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
                cache.acts.push_back(std::move(y));
                break;
            }
            case LayerKind::flatten: {
                cache.acts.push_back(x);  // layout is already flat row-major
                break;
            }
            case LayerKind::tanh_act: {
                Matrix y = x;
                for (double& v : y.data) v = std::tanh(v);
                cache.acts.push_back(std::move(y));
                break;
            }
            case LayerKind::scale: {
                Matrix y = x;
                for (double& v : y.data) v *= spec.alpha;
                cache.acts.push_back(std::move(y));
                break;
            }
        }
    }
    return cache;
}

Matrix Network::probabilities(const Matrix& batch) const { return softmax(output(batch)); }

int Network::predict_one(const double* x) const {
    Matrix b(1, input_dim());
    std::copy(x, x + input_dim(), b.data.begin());
    Matrix out = output(b);
    return static_cast<int>(std::max_element(out.data.begin(), out.data.end()) - out.data.begin());
}

std::vector<int> Network::predict(const Matrix& batch) const {
    Matrix out = output(batch);
    std::vector<int> labels(batch.rows);
    for (int r = 0; r < batch.rows; ++r) {
        const double* row = out.row(r);
        labels[r] = static_cast<int>(std::max_element(row, row + out.cols) - row);
    }
    return labels;
}

Matrix Network::penultimate(const Matrix& batch) const {
    check_ready();
    ForwardCache cache = forward(batch);
    return cache.acts[cache.acts.size() - 2];
}

BackwardResult Network::backward(const ForwardCache& cache, const Matrix& output_grad) const {
    check_ready();
    require(cache.acts.size() == layers_.size() + 1, ErrorCode::invalid_argument, "backward: stale cache");
    require(output_grad.rows == cache.output().rows && output_grad.cols == cache.output().cols,
            ErrorCode::invalid_argument, "backward: output gradient shape mismatch");

    BackwardResult res;
    res.param_grad.assign(params_.size(), 0.0);
    Matrix grad = output_grad;
    const int B = output_grad.rows;

    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
        const LayerSpec& spec = layers_[li];
        const Matrix& x = cache.acts[li];
        const Matrix& y = cache.acts[li + 1];
        switch (spec.kind) {
            case LayerKind::dense: {
                double* gW = res.param_grad.data() + spec.param_offset;
                double* gb = gW + static_cast<std::size_t>(spec.in) * spec.out;
                Matrix gx(B, spec.in);
                const double* W = params_.data() + spec.param_offset;
                for (int r = 0; r < B; ++r) {
                    const double* xr = x.row(r);
                    const double* gr = grad.row(r);
                    double* gxr = gx.row(r);
                    for (int j = 0; j < spec.out; ++j) gb[j] += gr[j];
                    for (int i = 0; i < spec.in; ++i) {
                        const double* Wi = W + static_cast<std::size_t>(i) * spec.out;
                        double* gWi = gW + static_cast<std::size_t>(i) * spec.out;
                        double acc = 0.0;
                        const double xi = xr[i];
                        for (int j = 0; j < spec.out; ++j) {
                            gWi[j] += xi * gr[j];
                            acc += Wi[j] * gr[j];
                        }
                        gxr[i] = acc;
                    }
                }
                grad = std::move(gx);
                break;
            }
            case LayerKind::conv2d: {
                const Shape& si = spec.in_shape;
                const Shape& so = spec.out_shape;
                double* gW = res.param_grad.data() + spec.param_offset;
                double* gb = gW + static_cast<std::size_t>(spec.out_ch) * spec.in_ch * spec.kh * spec.kw;
                const double* W = params_.data() + spec.param_offset;
                Matrix gx(B, si.elems());
                for (int r = 0; r < B; ++r) {
                    const double* xr = x.row(r);
                    const double* gr = grad.row(r);
                    double* gxr = gx.row(r);
                    for (int oc = 0; oc < so.channels; ++oc) {
                        for (int oy = 0; oy < so.height; ++oy) {
                            for (int ox = 0; ox < so.width; ++ox) {
                                const double g = gr[(static_cast<std::size_t>(oc) * so.height + oy) * so.width + ox];
                                if (g == 0.0) continue;
                                gb[oc] += g;
                                for (int ic = 0; ic < si.channels; ++ic) {
                                    for (int ky = 0; ky < spec.kh; ++ky) {
                                        const std::size_t xoff =
                                            (static_cast<std::size_t>(ic) * si.height + oy + ky) * si.width + ox;
                                        const std::size_t woff =
                                            ((static_cast<std::size_t>(oc) * si.channels + ic) * spec.kh + ky) *
                                            spec.kw;
                                        for (int kx = 0; kx < spec.kw; ++kx) {
                                            gW[woff + kx] += g * xr[xoff + kx];
                                            gxr[xoff + kx] += g * W[woff + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                grad = std::move(gx);
                break;
            }
            case LayerKind::relu: {
                for (std::size_t i = 0; i < grad.data.size(); ++i)
                    if (x.data[i] <= 0.0) grad.data[i] = 0.0;
                break;
            }
            case LayerKind::flatten:
                break;
            case LayerKind::tanh_act: {
                for (std::size_t i = 0; i < grad.data.size(); ++i)
                    grad.data[i] *= 1.0 - y.data[i] * y.data[i];
                break;
            }
            case LayerKind::scale: {
                for (double& v : grad.data) v *= spec.alpha;
                break;
            }
        }
    }
    res.input_grad = std::move(grad);
    return res;
}

Network::LossGrad Network::loss_and_grad(const Matrix& batch, const std::vector<int>& labels) const {
    require(batch.all_finite(), ErrorCode::numeric, "loss_and_grad: non-finite values in input batch");
    ForwardCache cache = forward(batch);
    require(cache.output().all_finite(), ErrorCode::numeric, "loss_and_grad: non-finite values in forward pass");
    Matrix dlogits;
    double loss = softmax_cross_entropy(cache.output(), labels, &dlogits);
    BackwardResult back = backward(cache, dlogits);
    return {loss, std::move(back.param_grad), std::move(back.input_grad)};
}

double Network::loss(const Matrix& batch, const std::vector<int>& labels) const {
    return softmax_cross_entropy(output(batch), labels, nullptr);
}

Matrix softmax(const Matrix& logits) {
    Matrix p = logits;
    for (int r = 0; r < p.rows; ++r) {
        double* row = p.row(r);
        double mx = row[0];
        for (int c = 1; c < p.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < p.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < p.cols; ++c) row[c] /= sum;
    }
    return p;
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits) {
    require(static_cast<int>(labels.size()) == logits.rows, ErrorCode::invalid_argument,
            "cross_entropy: label count does not match batch");
    for (int lab : labels)
        require(lab >= 0 && lab < logits.cols, ErrorCode::invalid_argument,
                "cross_entropy: label " + std::to_string(lab) + " outside [0, " + std::to_string(logits.cols) + ")");
    Matrix p = softmax(logits);
    const int B = logits.rows;
    double loss = 0.0;
    for (int r = 0; r < B; ++r) loss += -std::log(std::max(p(r, labels[r]), 1e-300));
    loss /= B;
    if (dlogits) {
        for (int r = 0; r < B; ++r) p(r, labels[r]) -= 1.0;
        for (double& v : p.data) v /= B;
        *dlogits = std::move(p);
    }
    return loss;
}

void SgdOptimizer::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    require(params.size() == grad.size(), ErrorCode::invalid_argument, "sgd: gradient dimension mismatch");
    if (velocity_.size() != params.size()) velocity_.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grad[i] + weight_decay_ * params[i];
        velocity_[i] = momentum_ * velocity_[i] + g;
        params[i] -= lr * velocity_[i];
    }
}

}  // namespace fedsim

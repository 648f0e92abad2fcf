#include "fedsim/trigger.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/rng.hpp"

namespace fedsim {

TriggerGenerator make_dense_generator(Shape shape, int hidden, double epsilon, std::uint64_t seed) {
    require(epsilon > 0.0, ErrorCode::invalid_argument, "generator: epsilon must be positive");
    TriggerGenerator gen;
    gen.epsilon = epsilon;
    gen.net = Network(shape);
    gen.net.add_dense(hidden).add_relu().add_dense(shape.elems()).add_tanh().add_scale(epsilon);
    gen.net.init_params(seed);
    return gen;
}

namespace {

// Projects each row of `raw` onto the epsilon ball in place; returns the raw
// row norms (needed by the backward pass).
std::vector<double> project_rows(Matrix& raw, double epsilon) {
    std::vector<double> norms(raw.rows);
    for (int r = 0; r < raw.rows; ++r) {
        double s = 0.0;
        const double* row = raw.row(r);
        for (int c = 0; c < raw.cols; ++c) s += row[c] * row[c];
        double norm = std::sqrt(s);
        norms[r] = norm;
        double scale = std::max(1.0, norm / epsilon);
        if (scale > 1.0) {
            double* w = raw.row(r);
            for (int c = 0; c < raw.cols; ++c) w[c] /= scale;
        }
    }
    return norms;
}

}  // namespace

Matrix generate_noise(const TriggerGenerator& gen, const Matrix& x) {
    Matrix raw = gen.net.output(x);
    project_rows(raw, gen.epsilon);
    return raw;
}

std::vector<double> generate_noise(const TriggerGenerator& gen, const std::vector<double>& x) {
    Matrix batch(1, static_cast<int>(x.size()), x);
    return generate_noise(gen, batch).data;
}

Matrix apply_trigger(const TriggerGenerator& gen, const Matrix& x) {
    Matrix out = generate_noise(gen, x);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::clamp(out.data[i] + x.data[i], 0.0, 1.0);
    return out;
}

std::vector<double> apply_trigger(const TriggerGenerator& gen, const std::vector<double>& x) {
    Matrix batch(1, static_cast<int>(x.size()), x);
    return apply_trigger(gen, batch).data;
}

StageOneGrad stage_one_loss_and_grad(const TriggerGenerator& gen, const Network& frozen_classifier, const Matrix& x,
                                     const std::vector<int>& target_labels) {
    // forward: raw noise -> projection -> add input -> clamp -> classifier
    ForwardCache gen_cache = gen.net.forward(x);
    Matrix noise = gen_cache.output();
    std::vector<double> raw_norms = project_rows(noise, gen.epsilon);

    Matrix triggered = noise;
    std::vector<char> clamped(triggered.data.size(), 0);
    for (std::size_t i = 0; i < triggered.data.size(); ++i) {
        double v = triggered.data[i] + x.data[i];
        if (v < 0.0) {
            v = 0.0;
            clamped[i] = 1;
        } else if (v > 1.0) {
            v = 1.0;
            clamped[i] = 1;
        }
        triggered.data[i] = v;
    }

    ForwardCache cls_cache = frozen_classifier.forward(triggered);
    require(cls_cache.output().all_finite(), ErrorCode::numeric, "stage one: non-finite classifier output");
    Matrix dlogits;
    double loss = softmax_cross_entropy(cls_cache.output(), target_labels, &dlogits);

    // backward through the classifier to its input
    Matrix dT = frozen_classifier.backward(cls_cache, dlogits).input_grad;
    // clamp: zero gradient where the pixel was saturated
    for (std::size_t i = 0; i < dT.data.size(); ++i)
        if (clamped[i]) dT.data[i] = 0.0;
    // projection: identity when the ball constraint is inactive, exact
    // quotient rule otherwise; the boundary takes the inactive branch
    const Matrix& raw = gen_cache.output();
    for (int r = 0; r < dT.rows; ++r) {
        double norm = raw_norms[r];
        if (norm <= gen.epsilon) continue;
        const double* g = raw.row(r);
        double* u = dT.row(r);
        double gu = 0.0;
        for (int c = 0; c < dT.cols; ++c) gu += g[c] * u[c];
        const double scale = gen.epsilon / norm;
        const double norm2 = norm * norm;
        for (int c = 0; c < dT.cols; ++c) u[c] = scale * (u[c] - g[c] * gu / norm2);
    }

    BackwardResult gen_back = gen.net.backward(gen_cache, dT);
    return {loss, std::move(gen_back.param_grad)};
}

StageOneStats train_generator(TriggerGenerator& gen, const Network& frozen_classifier, const Dataset& ds,
                              const std::vector<int>& bd_indices, AttackTargeting targeting, int epochs, double lr,
                              int batch_size, std::uint64_t seed) {
    require(epochs >= 0, ErrorCode::invalid_argument, "train_generator: epochs must be non-negative");
    require(gen.net.input_dim() == ds.dim(), ErrorCode::invalid_argument,
            "train_generator: generator input does not match dataset");

    StageOneStats stats;
    if (bd_indices.empty()) return stats;

    const int n = static_cast<int>(bd_indices.size());
    std::vector<int> target_labels(n, targeting.target_label);
    Matrix all = ds.gather(bd_indices, 0, n);
    stats.initial_loss = stats.final_loss =
        stage_one_loss_and_grad(gen, frozen_classifier, all, target_labels).loss;
    if (epochs == 0) return stats;

    const int bs = std::clamp(batch_size, 1, n);
    Rng rng(seed);
    SgdOptimizer opt(0.9, 0.0);
    std::vector<int> order(bd_indices);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += bs) {
            int end = std::min(start + bs, n);
            Matrix batch = ds.gather(order, start, end);
            std::vector<int> targets(end - start, targeting.target_label);
            StageOneGrad sg = stage_one_loss_and_grad(gen, frozen_classifier, batch, targets);
            require(std::isfinite(sg.loss), ErrorCode::numeric,
                    "train_generator: numeric failure at epoch " + std::to_string(epoch));
            opt.step(gen.net.params(), sg.xi_grad, lr);
        }
    }
    stats.final_loss = stage_one_loss_and_grad(gen, frozen_classifier, all, target_labels).loss;
    return stats;
}

}  // namespace fedsim

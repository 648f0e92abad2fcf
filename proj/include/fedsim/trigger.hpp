#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/network.hpp"

namespace fedsim {

// All-to-one labeling rule: every poisoned sample is pushed to target_label.
struct AttackTargeting {
    int target_label = 0;
    int relabel(int /*true_label*/) const { return target_label; }
};

// Per-sample trigger noise generator with a hard l2 budget. The raw network
// output is projected onto the epsilon ball inside the forward pass, so
// training gradients see the projection.
struct TriggerGenerator {
    Network net;          // input shape == output shape
    double epsilon = 1.0;
};

// Dense encoder/decoder dim -> hidden -> dim with tanh output scaled to
// [-epsilon, epsilon] per element before projection.
TriggerGenerator make_dense_generator(Shape shape, int hidden, double epsilon, std::uint64_t seed);

// Projected noise g(x) / max(1, ||g(x)||_2 / epsilon), one row per sample.
Matrix generate_noise(const TriggerGenerator& gen, const Matrix& x);
std::vector<double> generate_noise(const TriggerGenerator& gen, const std::vector<double>& x);

// T(x) = clamp(x + noise, 0, 1).
Matrix apply_trigger(const TriggerGenerator& gen, const Matrix& x);
std::vector<double> apply_trigger(const TriggerGenerator& gen, const std::vector<double>& x);

// Backdoor loss of the frozen classifier on triggered inputs together with
// its gradient with respect to the generator parameters only.
struct StageOneGrad {
    double loss = 0.0;
    std::vector<double> xi_grad;
};
StageOneGrad stage_one_loss_and_grad(const TriggerGenerator& gen, const Network& frozen_classifier, const Matrix& x,
                                     const std::vector<int>& target_labels);

struct StageOneStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Stage I of the local attack: fit the generator against the frozen
// classifier for `epochs` passes over the poisoned subset. The classifier is
// never modified. Momentum 0.9, no weight decay on generator parameters.
StageOneStats train_generator(TriggerGenerator& gen, const Network& frozen_classifier, const Dataset& ds,
                              const std::vector<int>& bd_indices, AttackTargeting targeting, int epochs, double lr,
                              int batch_size, std::uint64_t seed);

}  // namespace fedsim

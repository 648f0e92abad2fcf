#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/network.hpp"
#include "fedsim/trigger.hpp"

namespace fedsim {

// One agent's contribution for a round: delta = local params - global params.
// is_malicious is ground truth for diagnostics; aggregation rules never see it.
struct AgentUpdate {
    std::vector<double> delta;
    int agent_id = -1;
    bool is_malicious = false;
};

// Fixed square trigger stamped over the image.
struct PatchSpec {
    int row = 0;
    int col = 0;
    int height = 3;
    int width = 3;
    double value = 1.0;
};

struct LocalHyperparams {
    int benign_epochs = 2;
    double benign_lr = 0.1;
    int backdoor_epochs = 10;   // e_f
    double backdoor_lr = 0.1;   // gamma_f
    int gen_epochs = 20;        // e_T
    double gen_lr = 0.01;       // gamma_T
    int batch_size = 256;
    int gen_batch_size = 256;
    int gen_dataset_size = 1024;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

// Plain local SGD on the agent's shard.
AgentUpdate benign_local_train(const Network& global, const Dataset& ds, const std::vector<int>& local_indices,
                               int epochs, double lr, int batch_size, double momentum, double weight_decay,
                               std::uint64_t seed, int agent_id);

// Two-phase malicious training: fit the trigger generator against the frozen
// global model, then train a local model on the summed clean + backdoor loss.
// The generator is updated in place and persists across rounds.
AgentUpdate fta_local_train(const Network& global, TriggerGenerator& gen, const Dataset& ds, const PoisonSplit& split,
                            AttackTargeting targeting, const LocalHyperparams& hp, std::uint64_t seed, int agent_id);

// Baseline attack: same poisoning loop with a fixed patch trigger.
AgentUpdate patch_local_train(const Network& global, const Dataset& ds, const PoisonSplit& split,
                              const PatchSpec& patch, AttackTargeting targeting, const LocalHyperparams& hp,
                              std::uint64_t seed, int agent_id);

// Stamp the patch onto a flattened c x h x w sample.
std::vector<double> apply_patch(const std::vector<double>& x, Shape shape, const PatchSpec& patch);
Matrix apply_patch_batch(const Matrix& x, Shape shape, const PatchSpec& patch);

}  // namespace fedsim

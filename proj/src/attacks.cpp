#include "fedsim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fedsim/rng.hpp"

namespace fedsim {

std::vector<double> apply_patch(const std::vector<double>& x, Shape shape, const PatchSpec& patch) {
    require(patch.row >= 0 && patch.col >= 0 && patch.height > 0 && patch.width > 0 &&
                patch.row + patch.height <= shape.height && patch.col + patch.width <= shape.width,
            ErrorCode::invalid_argument, "apply_patch: patch does not fit inside the image");
    std::vector<double> out = x;
    for (int ch = 0; ch < shape.channels; ++ch)
        for (int r = patch.row; r < patch.row + patch.height; ++r)
            for (int c = patch.col; c < patch.col + patch.width; ++c)
                out[(static_cast<std::size_t>(ch) * shape.height + r) * shape.width + c] = patch.value;
    return out;
}

Matrix apply_patch_batch(const Matrix& x, Shape shape, const PatchSpec& patch) {
    Matrix out = x;
    for (int b = 0; b < x.rows; ++b) {
        std::vector<double> row(out.row(b), out.row(b) + out.cols);
        row = apply_patch(row, shape, patch);
        std::copy(row.begin(), row.end(), out.row(b));
    }
    return out;
}

namespace {

using PoisonFn = std::function<Matrix(const Matrix&)>;

// Shared local-SGD loop. The backdoor stream is active only when bd_indices
// is non-empty, in which case every step adds the poisoned-batch loss to the
// clean-batch loss (unweighted sum of the two batch means). With an empty
// backdoor stream the loop is exactly benign local training, RNG draws
// included.
AgentUpdate run_local_training(const Network& global, const Dataset& ds, const std::vector<int>& clean_indices,
                               const std::vector<int>& bd_indices, const PoisonFn& poison, AttackTargeting targeting,
                               int epochs, double lr, int batch_size, double momentum, double weight_decay,
                               std::uint64_t seed, int agent_id, bool malicious, const char* stage_label) {
    require(!clean_indices.empty(), ErrorCode::invalid_argument, "local training: empty local dataset");

    Network local = global;
    Rng rng(seed);
    SgdOptimizer opt(momentum, weight_decay);
    const int n = static_cast<int>(clean_indices.size());
    const int bs = std::clamp(batch_size, 1, n);
    const int n_bd = static_cast<int>(bd_indices.size());
    const int bs_bd = n_bd > 0 ? std::clamp(batch_size, 1, n_bd) : 0;

    std::vector<int> order = clean_indices;
    try {
        for (int epoch = 0; epoch < epochs; ++epoch) {
            rng.shuffle(order);
            for (int start = 0; start < n; start += bs) {
                int end = std::min(start + bs, n);
                Matrix batch = ds.gather(order, start, end);
                std::vector<int> labels = ds.gather_labels(order, start, end);
                Network::LossGrad lg = local.loss_and_grad(batch, labels);
                if (n_bd > 0) {
                    std::vector<int> picks = rng.sample_without_replacement(n_bd, bs_bd);
                    std::vector<int> bd_batch_idx(bs_bd);
                    for (int i = 0; i < bs_bd; ++i) bd_batch_idx[i] = bd_indices[picks[i]];
                    Matrix bd_batch = poison(ds.gather(bd_batch_idx, 0, bs_bd));
                    std::vector<int> bd_labels(bs_bd, targeting.target_label);
                    Network::LossGrad bd_lg = local.loss_and_grad(bd_batch, bd_labels);
                    for (std::size_t i = 0; i < lg.param_grad.size(); ++i) lg.param_grad[i] += bd_lg.param_grad[i];
                }
                opt.step(local.params(), lg.param_grad, lr);
            }
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric)
            raise(ErrorCode::numeric, std::string(stage_label) + ": " + e.what());
        throw;
    }

    AgentUpdate update;
    update.agent_id = agent_id;
    update.is_malicious = malicious;
    update.delta.resize(local.param_count());
    for (std::size_t i = 0; i < update.delta.size(); ++i) update.delta[i] = local.params()[i] - global.params()[i];
    return update;
}

}  // namespace

AgentUpdate benign_local_train(const Network& global, const Dataset& ds, const std::vector<int>& local_indices,
                               int epochs, double lr, int batch_size, double momentum, double weight_decay,
                               std::uint64_t seed, int agent_id) {
    require(epochs >= 1, ErrorCode::invalid_argument, "benign_local_train: epochs must be at least 1");
    return run_local_training(global, ds, local_indices, {}, nullptr, {}, epochs, lr, batch_size, momentum,
                              weight_decay, seed, agent_id, false, "benign training");
}

AgentUpdate fta_local_train(const Network& global, TriggerGenerator& gen, const Dataset& ds, const PoisonSplit& split,
                            AttackTargeting targeting, const LocalHyperparams& hp, std::uint64_t seed, int agent_id) {
    require(gen.net.input_dim() == ds.dim(), ErrorCode::invalid_argument,
            "fta_local_train: generator does not match dataset dimension");
    require(global.input_dim() == ds.dim(), ErrorCode::invalid_argument,
            "fta_local_train: classifier does not match dataset dimension");

    // Stage I: fit the trigger generator against the frozen global model.
    std::vector<int> gen_data = split.bd_indices;
    if (static_cast<int>(gen_data.size()) > hp.gen_dataset_size) gen_data.resize(hp.gen_dataset_size);
    try {
        train_generator(gen, global, ds, gen_data, targeting, hp.gen_epochs, hp.gen_lr, hp.gen_batch_size,
                        derive_seed(seed, 1));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric) raise(ErrorCode::numeric, std::string("stage I: ") + e.what());
        throw;
    }

    // Stage II: poisoning training against the now-fixed generator. Uses the
    // underived seed so that with an empty backdoor subset the update matches
    // benign training on the same seed exactly.
    const TriggerGenerator& frozen_gen = gen;
    PoisonFn poison = [&frozen_gen](const Matrix& batch) { return apply_trigger(frozen_gen, batch); };
    return run_local_training(global, ds, split.clean_indices, split.bd_indices, poison, targeting,
                              hp.backdoor_epochs, hp.backdoor_lr, hp.batch_size, hp.momentum, hp.weight_decay, seed,
                              agent_id, true, "stage II");
}

AgentUpdate patch_local_train(const Network& global, const Dataset& ds, const PoisonSplit& split,
                              const PatchSpec& patch, AttackTargeting targeting, const LocalHyperparams& hp,
                              std::uint64_t seed, int agent_id) {
    Shape shape = ds.shape;
    PoisonFn poison = [shape, patch](const Matrix& batch) { return apply_patch_batch(batch, shape, patch); };
    return run_local_training(global, ds, split.clean_indices, split.bd_indices, poison, targeting,
                              hp.backdoor_epochs, hp.backdoor_lr, hp.batch_size, hp.momentum, hp.weight_decay, seed,
                              agent_id, true, "patch training");
}

}  // namespace fedsim

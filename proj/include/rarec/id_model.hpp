#pragma once

#include <cstdint>
#include <vector>

#include "rarec/data.hpp"
#include "rarec/tensor.hpp"

namespace rarec {

struct IdModelConfig {
    int dim = 64;
    int epochs = 3;
    int batch_size = 128;
    int negatives_per_positive = 1;
    double learning_rate = 0.01;
    int interest_count = 1;  // single-interest pooling
    int history_window = 50;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (interest_count != 1) throw ConfigError("id_model: interest_count is fixed to 1");
        if (dim < 2) throw ConfigError("id_model: dim must be >= 2");
        if (epochs < 1 || batch_size < 1 || negatives_per_positive < 1)
            throw ConfigError("id_model: epochs/batch_size/negatives must be >= 1");
        if (history_window < 1) throw ConfigError("id_model: history_window must be >= 1");
    }
};

// Item embedding table plus one attention-pooling head that turns a user's
// item history into u. Once frozen the content is checksummed and immutable.
struct IdEmbeddings {
    int dim = 0;
    int history_window = 50;
    ParameterSet params;  // id.item_table, id.pool_w, id.pool_v
    bool frozen = false;
    std::uint64_t checksum = 0;

    const Tensor& p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw CheckpointError("id-model parameter missing: " + name);
        return it->second;
    }
    std::size_t num_items() const { return static_cast<std::size_t>(p("id.item_table").dim(0)); }

    // Attention-pooled combination of the (windowed) history rows.
    Tensor user_embedding(const std::vector<int>& history) const;
    Tensor item_embedding(int item) const;

    void freeze();
    void verify_frozen() const;
};

struct IdTrainReport {
    std::vector<double> epoch_loss;
    double initial_heldout_loss = 0.0;
    double final_heldout_loss = 0.0;
};

// BPR training over the sequential expansion of the training split, with
// uniformly sampled negatives resampled per epoch. Deterministic for a
// fixed config seed. `resume_from` continues from existing embeddings and
// refuses frozen ones.
IdEmbeddings train_id_model(const SplitDataset& split, const IdModelConfig& cfg,
                            IdTrainReport* report = nullptr,
                            const IdEmbeddings* resume_from = nullptr);

}  // namespace rarec

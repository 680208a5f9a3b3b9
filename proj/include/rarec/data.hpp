#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rarec/common.hpp"

namespace rarec {

struct Interaction {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
    std::string title;
};

struct LoadReport {
    std::size_t total_lines = 0;
    std::size_t malformed = 0;
    std::size_t loaded = 0;
};

// Preprocessed corpus: indexed users and items, per-user sequences in time
// order (ties broken by input order), one title per item, popularity counts.
struct Dataset {
    std::vector<std::string> user_ids;   // sorted; index is the user key
    std::vector<std::string> item_ids;   // sorted; index is the item key
    std::vector<std::string> item_titles;
    std::vector<int> item_popularity;
    std::vector<std::vector<int>> user_seqs;          // item indices per user
    std::vector<std::vector<std::int64_t>> user_times;

    std::size_t num_users() const { return user_ids.size(); }
    std::size_t num_items() const { return item_ids.size(); }
    std::size_t num_interactions() const;
    int item_index(const std::string& id) const;      // -1 when unknown
    int user_index(const std::string& id) const;

    std::vector<Interaction> to_interactions() const;
};

// Leave-one-out views: per user the last interaction is the test item, the
// second-to-last the validation item, the remainder the training sequence.
struct SplitDataset {
    Dataset data;
    std::vector<std::vector<int>> train_seq;
    std::vector<int> val_item;
    std::vector<int> test_item;

    // History visible when ranking the test item: train sequence + val item.
    std::vector<int> test_history(int user) const {
        std::vector<int> h = train_seq[static_cast<std::size_t>(user)];
        h.push_back(val_item[static_cast<std::size_t>(user)]);
        return h;
    }
};

// One alignment-tuning sample: a history prefix and the next (positive)
// item, plus a sampled negative.
struct AlignSample {
    int user = 0;
    std::vector<int> history;  // item indices, oldest first
    int pos_item = 0;
    int neg_item = 0;
    int pos_index = 0;  // position of pos_item within the user's train sequence
};

struct SyntheticConfig {
    int num_users = 2000;
    int num_items = 500;
    int num_clusters = 4;
    int interactions_per_user = 14;
    int vocab_per_cluster = 40;
    double within_cluster_prob = 0.9;
    std::uint64_t seed = 1;
};

struct EfficientSetReport {
    std::size_t pool_size = 0;
    std::size_t after_denoise = 0;
    std::size_t selected = 0;
    std::vector<std::pair<std::string, std::size_t>> cell_counts;  // "bu,bi" -> count
};

std::vector<Interaction> load_interactions(const std::string& path, LoadReport* report = nullptr);
void write_interactions(const std::string& path, const std::vector<Interaction>& rows,
                        const std::vector<std::string>* roles = nullptr);

Dataset preprocess(const std::vector<Interaction>& raw);
SplitDataset leave_one_out_split(Dataset data);

int word_overlap(const std::string& target_title, const std::vector<std::string>& history_titles);

// Keeps exactly the samples whose positive-item title shares at least one
// word with the history titles; order preserved.
std::vector<AlignSample> denoise(const std::vector<AlignSample>& samples, const Dataset& data);

// Buckets samples by (history length quantile, target popularity quantile)
// into user_buckets x item_buckets cells, then draws n samples spread
// uniformly over nonempty cells (largest-remainder rounding, without
// replacement). Output keeps pool order.
std::vector<AlignSample> diversity_sample(const std::vector<AlignSample>& samples,
                                          const Dataset& data, int user_buckets,
                                          int item_buckets, std::size_t target_size,
                                          std::uint64_t seed,
                                          EfficientSetReport* report = nullptr);

enum class AlignSetMode { kEfficient, kRandom, kAll };

AlignSetMode align_set_mode_from(const std::string& name);
std::string to_string(AlignSetMode mode);

// Full construction: sequential expansion of the training split into
// (history, next-item) pairs with sampled negatives, then denoising and
// diversity sampling (mode kEfficient), a uniform sample (kRandom), or the
// whole pool (kAll). target_size 0 means 10% of the pool.
std::vector<AlignSample> build_efficient_set(const SplitDataset& split, std::size_t target_size,
                                             std::uint64_t seed, AlignSetMode mode,
                                             int user_buckets = 4, int item_buckets = 4,
                                             EfficientSetReport* report = nullptr);

std::vector<Interaction> generate_synthetic(const SyntheticConfig& cfg);

}  // namespace rarec

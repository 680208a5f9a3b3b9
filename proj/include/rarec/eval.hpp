#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rarec/data.hpp"

namespace rarec {

// Scoring model abstraction for ranking: embed the user, embed every
// candidate item, score by dot product. Implementations must be read-only
// and safe to call from multiple threads.
class RankingModel {
public:
    virtual ~RankingModel() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual std::vector<double> user_vector(int user, const std::vector<int>& history) const = 0;
    virtual std::vector<double> item_vector(int item) const = 0;
    virtual std::uint64_t checksum() const = 0;
};

struct RankedList {
    std::vector<int> ordered_items;  // candidates by descending score, ties by ascending id
    double test_score = 0.0;
    int test_rank = 0;  // 1-based
};

struct MetricsReport {
    double hr10 = 0.0;
    double hr50 = 0.0;
    double hr100 = 0.0;
    double ndcg10 = 0.0;
    double mrr10 = 0.0;
    std::size_t num_users = 0;

    std::string table() const;
    std::string line() const;  // metric=value pairs, space separated
};

RankedList rank_items(const RankingModel& model, const SplitDataset& split, int user,
                      const std::vector<int>& candidates);

double hit_rate_at_k(const std::vector<int>& ranks, int k);
double ndcg_at_k(const std::vector<int>& ranks, int k = 10);
double mrr_at_k(const std::vector<int>& ranks, int k = 10);

MetricsReport metrics_from_ranks(const std::vector<int>& ranks);

// Full-catalog leave-one-out evaluation. Item vectors are computed once and
// reused; per-user ranking fans out over `threads`. Aborts (throws) if the
// metric monotonicity invariants fail.
MetricsReport evaluate(const RankingModel& model, const SplitDataset& split,
                       std::vector<int>* ranks_out = nullptr, int threads = 1);

struct CompareReport {
    struct Stratum {
        std::string label;
        std::size_t users = 0;
        double hr10_a = 0.0;
        double hr10_b = 0.0;
    };
    MetricsReport a;
    MetricsReport b;
    std::vector<Stratum> strata;  // by test-time history length

    std::string table(const std::string& name_a, const std::string& name_b) const;
};

// Paired deltas of model_a over model_b on the same test set, stratified by
// history length quartiles.
CompareReport compare(const RankingModel& model_a, const RankingModel& model_b,
                      const SplitDataset& split, int threads = 1);

}  // namespace rarec

#include "rarec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace rarec {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// 1-based rank of `test` among candidate scores; ties resolved by ascending
// item index, matching rank_items ordering.
int rank_of(const std::vector<double>& scores, const std::vector<int>& candidates, int test) {
    double ts = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i] == test) {
            ts = scores[i];
            found = true;
            break;
        }
    }
    if (!found) throw DataError("rank: test item not among candidates");
    int rank = 1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i] == test) continue;
        if (scores[i] > ts || (scores[i] == ts && candidates[i] < test)) ++rank;
    }
    return rank;
}

}  // namespace

RankedList rank_items(const RankingModel& model, const SplitDataset& split, int user,
                      const std::vector<int>& candidates) {
    if (candidates.empty()) throw DataError("rank_items: empty candidate set");
    const int test = split.test_item[static_cast<std::size_t>(user)];
    const std::vector<double> uvec = model.user_vector(user, split.test_history(user));
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::vector<double> ivec = model.item_vector(candidates[i]);
        double s = 0.0;
        for (std::size_t j = 0; j < uvec.size(); ++j) s += uvec[j] * ivec[j];
        scores[i] = s;
    }
    RankedList out;
    out.ordered_items = candidates;
    std::vector<std::size_t> idx(candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    });
    for (std::size_t i = 0; i < idx.size(); ++i) out.ordered_items[i] = candidates[idx[i]];
    out.test_rank = rank_of(scores, candidates, test);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i] == test) out.test_score = scores[i];
    return out;
}

double hit_rate_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw DataError("hit_rate_at_k: empty rank list");
    std::size_t hits = 0;
    for (int r : ranks)
        if (r <= k) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw DataError("ndcg_at_k: empty rank list");
    double total = 0.0;
    for (int r : ranks)
        if (r <= k) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return total / static_cast<double>(ranks.size());
}

double mrr_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw DataError("mrr_at_k: empty rank list");
    double total = 0.0;
    for (int r : ranks)
        if (r <= k) total += 1.0 / static_cast<double>(r);
    return total / static_cast<double>(ranks.size());
}

MetricsReport metrics_from_ranks(const std::vector<int>& ranks) {
    MetricsReport m;
    m.hr10 = hit_rate_at_k(ranks, 10);
    m.hr50 = hit_rate_at_k(ranks, 50);
    m.hr100 = hit_rate_at_k(ranks, 100);
    m.ndcg10 = ndcg_at_k(ranks, 10);
    m.mrr10 = mrr_at_k(ranks, 10);
    m.num_users = ranks.size();
    if (!(m.hr10 <= m.hr50 && m.hr50 <= m.hr100))
        throw NumericError("metric invariant violated: HR@10 <= HR@50 <= HR@100");
    if (!(m.mrr10 <= m.ndcg10 + 1e-12 && m.ndcg10 <= m.hr10 + 1e-12))
        throw NumericError("metric invariant violated: MRR@10 <= NDCG@10 <= HR@10");
    return m;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << "metric      value\n";
    os << "HR@10       " << fmt(hr10) << "\n";
    os << "HR@50       " << fmt(hr50) << "\n";
    os << "HR@100      " << fmt(hr100) << "\n";
    os << "NDCG@10     " << fmt(ndcg10) << "\n";
    os << "MRR@10      " << fmt(mrr10) << "\n";
    os << "users       " << num_users << "\n";
    return os.str();
}

std::string MetricsReport::line() const {
    std::ostringstream os;
    os << "hr@10=" << fmt(hr10) << " hr@50=" << fmt(hr50) << " hr@100=" << fmt(hr100)
       << " ndcg@10=" << fmt(ndcg10) << " mrr@10=" << fmt(mrr10) << " users=" << num_users;
    return os.str();
}

namespace {

std::vector<int> ranks_for_model(const RankingModel& model, const SplitDataset& split,
                                 int threads) {
    const std::size_t num_users = split.data.num_users();
    const int num_items = static_cast<int>(split.data.num_items());
    const int d = model.dim();

    std::vector<double> item_matrix(static_cast<std::size_t>(num_items) *
                                    static_cast<std::size_t>(d));
    for (int i = 0; i < num_items; ++i) {
        const auto v = model.item_vector(i);
        if (static_cast<int>(v.size()) != d) throw ShapeError("item_vector dim mismatch");
        std::copy(v.begin(), v.end(), item_matrix.begin() + static_cast<std::size_t>(i) * d);
    }

    std::vector<int> ranks(num_users, 0);
    auto worker = [&](std::size_t begin, std::size_t end) {
        std::vector<double> scores(static_cast<std::size_t>(num_items));
        for (std::size_t u = begin; u < end; ++u) {
            const auto uvec = model.user_vector(static_cast<int>(u), split.test_history(static_cast<int>(u)));
            for (int i = 0; i < num_items; ++i) {
                const double* row = item_matrix.data() + static_cast<std::size_t>(i) * d;
                double s = 0.0;
                for (int j = 0; j < d; ++j) s += uvec[static_cast<std::size_t>(j)] * row[j];
                scores[static_cast<std::size_t>(i)] = s;
            }
            const int test = split.test_item[u];
            const double ts = scores[static_cast<std::size_t>(test)];
            int rank = 1;
            for (int i = 0; i < num_items; ++i) {
                if (i == test) continue;
                const double s = scores[static_cast<std::size_t>(i)];
                if (s > ts || (s == ts && i < test)) ++rank;
            }
            ranks[u] = rank;
        }
    };

    if (threads <= 1) {
        worker(0, num_users);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (num_users + static_cast<std::size_t>(threads) - 1) /
                                  static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const std::size_t b = static_cast<std::size_t>(t) * chunk;
            const std::size_t e = std::min(num_users, b + chunk);
            if (b < e) pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return ranks;
}

}  // namespace

MetricsReport evaluate(const RankingModel& model, const SplitDataset& split,
                       std::vector<int>* ranks_out, int threads) {
    const std::uint64_t before = model.checksum();
    std::vector<int> ranks = ranks_for_model(model, split, threads);
    if (model.checksum() != before)
        throw FrozenViolation("evaluate mutated the model: checksum changed");
    MetricsReport m = metrics_from_ranks(ranks);
    if (ranks_out) *ranks_out = std::move(ranks);
    return m;
}

CompareReport compare(const RankingModel& model_a, const RankingModel& model_b,
                      const SplitDataset& split, int threads) {
    std::vector<int> ranks_a, ranks_b;
    CompareReport rep;
    rep.a = evaluate(model_a, split, &ranks_a, threads);
    rep.b = evaluate(model_b, split, &ranks_b, threads);

    // history-length quartile strata; bucket(x) counts passed boundaries
    std::vector<std::size_t> len(split.data.num_users());
    std::vector<std::size_t> sorted_len;
    for (std::size_t u = 0; u < len.size(); ++u) {
        len[u] = split.train_seq[u].size() + 1;
        sorted_len.push_back(len[u]);
    }
    std::sort(sorted_len.begin(), sorted_len.end());
    std::vector<std::size_t> bounds;
    for (int q = 1; q < 4; ++q)
        bounds.push_back(sorted_len[sorted_len.size() * static_cast<std::size_t>(q) / 4]);
    auto bucket_of = [&bounds](std::size_t x) {
        int b = 0;
        for (std::size_t t : bounds)
            if (x >= t) ++b;
        return b;
    };

    std::vector<std::vector<int>> ra(4), rb(4);
    for (std::size_t u = 0; u < len.size(); ++u) {
        const int b = bucket_of(len[u]);
        ra[static_cast<std::size_t>(b)].push_back(ranks_a[u]);
        rb[static_cast<std::size_t>(b)].push_back(ranks_b[u]);
    }
    for (int b = 0; b < 4; ++b) {
        CompareReport::Stratum s;
        s.label = "len_q" + std::to_string(b + 1);
        s.users = ra[static_cast<std::size_t>(b)].size();
        if (s.users > 0) {
            s.hr10_a = hit_rate_at_k(ra[static_cast<std::size_t>(b)], 10);
            s.hr10_b = hit_rate_at_k(rb[static_cast<std::size_t>(b)], 10);
        }
        rep.strata.push_back(s);
    }
    return rep;
}

std::string CompareReport::table(const std::string& name_a, const std::string& name_b) const {
    auto rel = [](double da, double db) {
        if (db == 0.0) return std::string("n/a");
        std::ostringstream os;
        os.precision(6);
        os << 100.0 * (da - db) / db << "%";
        return os.str();
    };
    std::ostringstream os;
    os << "metric      " << name_a << "  " << name_b << "  delta  relative\n";
    auto row = [&](const char* name, double va, double vb) {
        os << name << " " << fmt(va) << " " << fmt(vb) << " " << fmt(va - vb) << " "
           << rel(va, vb) << "\n";
    };
    row("HR@10  ", a.hr10, b.hr10);
    row("HR@50  ", a.hr50, b.hr50);
    row("HR@100 ", a.hr100, b.hr100);
    row("NDCG@10", a.ndcg10, b.ndcg10);
    row("MRR@10 ", a.mrr10, b.mrr10);
    os << "stratified by test-time history length (HR@10):\n";
    std::size_t total = 0;
    for (const auto& s : strata) {
        os << "  " << s.label << " users=" << s.users << " " << name_a << "=" << fmt(s.hr10_a)
           << " " << name_b << "=" << fmt(s.hr10_b) << "\n";
        total += s.users;
    }
    os << "  total_stratified_users=" << total << "\n";
    return os.str();
}

}  // namespace rarec

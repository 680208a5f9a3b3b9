#include "rarec/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rarec/rng.hpp"
#include "rarec/tokenizer.hpp"

namespace rarec {

namespace {

int index_of(const std::vector<std::string>& sorted_ids, const std::string& id) {
    auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
    if (it == sorted_ids.end() || *it != id) return -1;
    return static_cast<int>(it - sorted_ids.begin());
}

}  // namespace

std::size_t Dataset::num_interactions() const {
    std::size_t n = 0;
    for (const auto& s : user_seqs) n += s.size();
    return n;
}

int Dataset::item_index(const std::string& id) const { return index_of(item_ids, id); }
int Dataset::user_index(const std::string& id) const { return index_of(user_ids, id); }

std::vector<Interaction> Dataset::to_interactions() const {
    std::vector<Interaction> out;
    out.reserve(num_interactions());
    for (std::size_t u = 0; u < user_seqs.size(); ++u) {
        for (std::size_t k = 0; k < user_seqs[u].size(); ++k) {
            const int it = user_seqs[u][k];
            out.push_back({user_ids[u], item_ids[static_cast<std::size_t>(it)],
                           user_times[u][k], item_titles[static_cast<std::size_t>(it)]});
        }
    }
    return out;
}

std::vector<Interaction> load_interactions(const std::string& path, LoadReport* report) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open interaction file: " + path);
    std::vector<Interaction> out;
    LoadReport rep;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++rep.total_lines;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("user_id") ||
            !j.contains("item_id") || !j.contains("timestamp") || !j.contains("title") ||
            !j["user_id"].is_string() || !j["item_id"].is_string() ||
            !j["timestamp"].is_number_integer() || !j["title"].is_string()) {
            ++rep.malformed;
            continue;
        }
        out.push_back({j["user_id"].get<std::string>(), j["item_id"].get<std::string>(),
                       j["timestamp"].get<std::int64_t>(), j["title"].get<std::string>()});
    }
    rep.loaded = out.size();
    if (rep.total_lines > 0 && rep.malformed * 10 > rep.total_lines)
        throw DataError("more than 10% malformed lines in " + path + " (" +
                        std::to_string(rep.malformed) + "/" + std::to_string(rep.total_lines) +
                        ")");
    if (report) *report = rep;
    return out;
}

void write_interactions(const std::string& path, const std::vector<Interaction>& rows,
                        const std::vector<std::string>* roles) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::json j;
        j["user_id"] = rows[i].user_id;
        j["item_id"] = rows[i].item_id;
        j["timestamp"] = rows[i].timestamp;
        j["title"] = rows[i].title;
        if (roles) j["role"] = (*roles)[i];
        f << j.dump() << "\n";
    }
    f.close();
    if (!f) throw DataError("short write to " + path);
}

Dataset preprocess(const std::vector<Interaction>& raw) {
    // Title filters run first, then the minimum-interaction rule.
    std::vector<const Interaction*> kept;
    kept.reserve(raw.size());
    for (const auto& r : raw) {
        if (r.title.empty() || r.title.size() > 200) continue;
        kept.push_back(&r);
    }

    std::map<std::string, std::vector<const Interaction*>> by_user;
    for (const auto* r : kept) by_user[r->user_id].push_back(r);
    for (auto it = by_user.begin(); it != by_user.end();) {
        if (it->second.size() < 3) {
            it = by_user.erase(it);
        } else {
            std::stable_sort(it->second.begin(), it->second.end(),
                             [](const Interaction* a, const Interaction* b) {
                                 return a->timestamp < b->timestamp;
                             });
            ++it;
        }
    }
    if (by_user.empty()) throw DataError("preprocess: no users left after filtering");

    Dataset ds;
    std::set<std::string> item_set;
    for (const auto& [uid, seq] : by_user) {
        ds.user_ids.push_back(uid);
        for (const auto* r : seq) item_set.insert(r->item_id);
    }
    ds.item_ids.assign(item_set.begin(), item_set.end());
    ds.item_titles.assign(ds.item_ids.size(), "");
    ds.item_popularity.assign(ds.item_ids.size(), 0);

    ds.user_seqs.resize(ds.user_ids.size());
    ds.user_times.resize(ds.user_ids.size());
    std::size_t u = 0;
    for (const auto& [uid, seq] : by_user) {
        for (const auto* r : seq) {
            const int it = ds.item_index(r->item_id);
            ds.user_seqs[u].push_back(it);
            ds.user_times[u].push_back(r->timestamp);
            ds.item_popularity[static_cast<std::size_t>(it)] += 1;
            if (ds.item_titles[static_cast<std::size_t>(it)].empty())
                ds.item_titles[static_cast<std::size_t>(it)] = r->title;
        }
        ++u;
    }
    return ds;
}

SplitDataset leave_one_out_split(Dataset data) {
    SplitDataset split;
    split.train_seq.resize(data.num_users());
    split.val_item.resize(data.num_users());
    split.test_item.resize(data.num_users());
    for (std::size_t u = 0; u < data.num_users(); ++u) {
        const auto& seq = data.user_seqs[u];
        if (seq.size() < 3)
            throw DataError("leave_one_out_split: user with fewer than 3 interactions");
        split.train_seq[u].assign(seq.begin(), seq.end() - 2);
        split.val_item[u] = seq[seq.size() - 2];
        split.test_item[u] = seq[seq.size() - 1];
    }
    split.data = std::move(data);
    return split;
}

int word_overlap(const std::string& target_title, const std::vector<std::string>& history_titles) {
    std::unordered_set<std::string> history_words;
    for (const auto& t : history_titles)
        for (auto& w : Tokenizer::words(t)) history_words.insert(std::move(w));
    std::unordered_set<std::string> target_words;
    for (auto& w : Tokenizer::words(target_title)) target_words.insert(std::move(w));
    int n = 0;
    for (const auto& w : target_words)
        if (history_words.count(w)) ++n;
    return n;
}

namespace {

std::vector<std::string> sample_titles(const Dataset& data, const AlignSample& s) {
    std::vector<std::string> titles;
    titles.reserve(s.history.size());
    for (int it : s.history) titles.push_back(data.item_titles[static_cast<std::size_t>(it)]);
    return titles;
}

}  // namespace

std::vector<AlignSample> denoise(const std::vector<AlignSample>& samples, const Dataset& data) {
    std::vector<AlignSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto titles = sample_titles(data, s);
        if (word_overlap(data.item_titles[static_cast<std::size_t>(s.pos_item)], titles) > 0)
            out.push_back(s);
    }
    return out;
}

namespace {

// Boundaries at the k/B order statistics, k = 1..B-1; bucket(x) counts the
// boundaries x has passed.
std::vector<double> quantile_bounds(std::vector<double> values, int buckets) {
    std::sort(values.begin(), values.end());
    std::vector<double> bounds;
    for (int k = 1; k < buckets; ++k) {
        const std::size_t idx = values.size() * static_cast<std::size_t>(k) /
                                static_cast<std::size_t>(buckets);
        bounds.push_back(values[std::min(idx, values.size() - 1)]);
    }
    return bounds;
}

int bucket_of(double x, const std::vector<double>& bounds) {
    int b = 0;
    for (double t : bounds)
        if (x >= t) ++b;
    return b;
}

}  // namespace

std::vector<AlignSample> diversity_sample(const std::vector<AlignSample>& samples,
                                          const Dataset& data, int user_buckets,
                                          int item_buckets, std::size_t target_size,
                                          std::uint64_t seed, EfficientSetReport* report) {
    if (user_buckets < 1 || item_buckets < 1)
        throw ConfigError("diversity_sample: bucket counts must be >= 1");
    if (target_size > samples.size())
        throw DataError("diversity_sample: requested " + std::to_string(target_size) +
                        " samples from a pool of " + std::to_string(samples.size()));

    std::vector<double> hist_len, popularity;
    hist_len.reserve(samples.size());
    popularity.reserve(samples.size());
    for (const auto& s : samples) {
        hist_len.push_back(static_cast<double>(s.history.size()));
        popularity.push_back(
            static_cast<double>(data.item_popularity[static_cast<std::size_t>(s.pos_item)]));
    }
    const auto ub = quantile_bounds(hist_len, user_buckets);
    const auto ib = quantile_bounds(popularity, item_buckets);

    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < samples.size(); ++i)
        cells[{bucket_of(hist_len[i], ub), bucket_of(popularity[i], ib)}].push_back(i);

    // Equal share per nonempty cell, largest-remainder rounding (equal
    // remainders broken by cell order), spare demand spilling round-robin
    // into cells that still have capacity.
    const std::size_t ncells = cells.size();
    std::vector<std::pair<int, int>> keys;
    for (const auto& [k, v] : cells) keys.push_back(k);
    std::vector<std::size_t> quota(ncells, target_size / ncells);
    for (std::size_t c = 0; c < target_size % ncells; ++c) quota[c] += 1;
    for (;;) {
        std::size_t deficit = 0;
        for (std::size_t c = 0; c < ncells; ++c) {
            const std::size_t cap = cells[keys[c]].size();
            if (quota[c] > cap) {
                deficit += quota[c] - cap;
                quota[c] = cap;
            }
        }
        if (deficit == 0) break;
        bool placed = false;
        for (std::size_t c = 0; c < ncells && deficit > 0; ++c) {
            if (quota[c] < cells[keys[c]].size()) {
                quota[c] += 1;
                --deficit;
                placed = true;
            }
        }
        if (!placed) throw DataError("diversity_sample: pool cannot satisfy target size");
        if (deficit == 0) break;
    }

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(target_size);
    for (std::size_t c = 0; c < ncells; ++c) {
        auto idx = cells[keys[c]];
        rng.shuffle(idx);
        for (std::size_t k = 0; k < quota[c]; ++k) chosen.push_back(idx[k]);
    }
    std::sort(chosen.begin(), chosen.end());

    if (report) {
        report->cell_counts.clear();
        for (std::size_t c = 0; c < ncells; ++c)
            report->cell_counts.push_back({std::to_string(keys[c].first) + "," +
                                               std::to_string(keys[c].second),
                                           quota[c]});
    }

    std::vector<AlignSample> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(samples[i]);
    return out;
}

AlignSetMode align_set_mode_from(const std::string& name) {
    if (name == "efficient") return AlignSetMode::kEfficient;
    if (name == "random") return AlignSetMode::kRandom;
    if (name == "all") return AlignSetMode::kAll;
    throw ConfigError("unknown align-set mode: " + name);
}

std::string to_string(AlignSetMode mode) {
    switch (mode) {
        case AlignSetMode::kEfficient: return "efficient";
        case AlignSetMode::kRandom: return "random";
        case AlignSetMode::kAll: return "all";
    }
    return "?";
}

std::vector<AlignSample> build_efficient_set(const SplitDataset& split, std::size_t target_size,
                                             std::uint64_t seed, AlignSetMode mode,
                                             int user_buckets, int item_buckets,
                                             EfficientSetReport* report) {
    const Dataset& data = split.data;
    const int num_items = static_cast<int>(data.num_items());
    Rng rng(derive_seed(seed, "align-set-negatives"));

    std::vector<AlignSample> pool;
    for (std::size_t u = 0; u < data.num_users(); ++u) {
        const auto& seq = split.train_seq[u];
        if (seq.size() < 2) continue;
        std::vector<char> seen(static_cast<std::size_t>(num_items), 0);
        for (int it : data.user_seqs[u]) seen[static_cast<std::size_t>(it)] = 1;
        for (std::size_t p = 1; p < seq.size(); ++p) {
            AlignSample s;
            s.user = static_cast<int>(u);
            s.history.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(p));
            s.pos_item = seq[p];
            s.pos_index = static_cast<int>(p);
            int neg;
            do {
                neg = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_items)));
            } while (seen[static_cast<std::size_t>(neg)]);
            s.neg_item = neg;
            pool.push_back(std::move(s));
        }
    }

    EfficientSetReport rep;
    rep.pool_size = pool.size();
    if (target_size == 0) target_size = pool.size() / 10;

    std::vector<AlignSample> out;
    if (mode == AlignSetMode::kAll) {
        rep.after_denoise = pool.size();
        out = std::move(pool);
    } else if (mode == AlignSetMode::kRandom) {
        rep.after_denoise = pool.size();
        if (target_size > pool.size())
            throw DataError("align set: requested " + std::to_string(target_size) +
                            " samples from a pool of " + std::to_string(pool.size()));
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng pick(derive_seed(seed, "align-set-random"));
        pick.shuffle(idx);
        idx.resize(target_size);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) out.push_back(pool[i]);
    } else {
        auto clean = denoise(pool, data);
        rep.after_denoise = clean.size();
        if (target_size > clean.size())
            throw DataError("align set: requested " + std::to_string(target_size) +
                            " samples but only " + std::to_string(clean.size()) +
                            " remain after denoising");
        out = diversity_sample(clean, data, user_buckets, item_buckets, target_size,
                               derive_seed(seed, "align-set-diversity"), &rep);
    }
    rep.selected = out.size();
    if (report) *report = rep;
    return out;
}

namespace {

// Pseudo-words built from syllables; pools are disjoint across clusters.
std::string make_word(std::uint64_t key) {
    static const char* syll[] = {"ba", "co", "da", "fe", "gi", "ho", "ja", "ki", "lo", "mu",
                                 "na", "pe", "qui", "ro", "sa", "te", "vu", "wa", "xi", "zo"};
    std::string w;
    std::uint64_t h = fnv1a64(&key, sizeof(key));
    const int parts = 2 + static_cast<int>(h % 2);
    for (int p = 0; p < parts; ++p) {
        w += syll[(h >> (p * 8)) % 20];
    }
    return w;
}

}  // namespace

std::vector<Interaction> generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_clusters < 2) throw ConfigError("generate_synthetic: need >= 2 clusters");
    if (cfg.num_users < 1 || cfg.num_items < cfg.num_clusters ||
        cfg.interactions_per_user < 3 || cfg.vocab_per_cluster < 3)
        throw ConfigError("generate_synthetic: degenerate sizes");

    Rng rng(cfg.seed);
    const int C = cfg.num_clusters;

    // disjoint word pools per cluster, plus a small shared pool
    std::vector<std::vector<std::string>> pools(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
        for (int w = 0; w < cfg.vocab_per_cluster; ++w)
            pools[static_cast<std::size_t>(c)].push_back(
                make_word(static_cast<std::uint64_t>(c) * 100003ull + static_cast<std::uint64_t>(w)) +
                std::to_string(c) + std::to_string(w));
    std::vector<std::string> shared;
    for (int w = 0; w < 8; ++w)
        shared.push_back(make_word(900001ull + static_cast<std::uint64_t>(w)) + "s" +
                         std::to_string(w));

    auto pad = [](int v, int width) {
        std::string s = std::to_string(v);
        return std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(s.size(),
                                                                                   static_cast<std::size_t>(width)),
                           '0') +
               s;
    };
    const int uw = static_cast<int>(std::to_string(cfg.num_users - 1).size());
    const int iw = static_cast<int>(std::to_string(cfg.num_items - 1).size());

    // items: round-robin cluster assignment, fixed titles from the cluster pool
    std::vector<int> item_cluster(static_cast<std::size_t>(cfg.num_items));
    std::vector<std::string> item_title(static_cast<std::size_t>(cfg.num_items));
    std::vector<std::vector<int>> cluster_items(static_cast<std::size_t>(C));
    for (int i = 0; i < cfg.num_items; ++i) {
        const int c = i % C;
        item_cluster[static_cast<std::size_t>(i)] = c;
        cluster_items[static_cast<std::size_t>(c)].push_back(i);
        const auto& pool = pools[static_cast<std::size_t>(c)];
        const int nwords = 3 + static_cast<int>(rng.below(3));
        std::string title;
        for (int w = 0; w < nwords; ++w) {
            if (w) title += " ";
            title += pool[rng.below(pool.size())];
        }
        if (rng.uniform01() < 0.15) title += " " + shared[rng.below(shared.size())];
        item_title[static_cast<std::size_t>(i)] = title;
    }

    std::vector<Interaction> out;
    out.reserve(static_cast<std::size_t>(cfg.num_users) *
                static_cast<std::size_t>(cfg.interactions_per_user));
    for (int u = 0; u < cfg.num_users; ++u) {
        const int uc = u % C;
        const auto& own = cluster_items[static_cast<std::size_t>(uc)];
        // a per-user favored subset gives the ID model user-level signal
        std::vector<int> favored = own;
        rng.shuffle(favored);
        favored.resize(std::max<std::size_t>(3, own.size() / 5));
        const std::string uid = "u" + pad(u, uw);
        std::int64_t t = 1600000000 + static_cast<std::int64_t>(u);
        for (int k = 0; k < cfg.interactions_per_user; ++k) {
            int item;
            if (rng.uniform01() < cfg.within_cluster_prob) {
                if (rng.uniform01() < 0.7)
                    item = favored[rng.below(favored.size())];
                else
                    item = own[rng.below(own.size())];
            } else {
                int oc = static_cast<int>(rng.below(static_cast<std::uint64_t>(C - 1)));
                if (oc >= uc) ++oc;
                const auto& other = cluster_items[static_cast<std::size_t>(oc)];
                item = other[rng.below(other.size())];
            }
            t += 1 + static_cast<std::int64_t>(rng.below(50));
            out.push_back({uid, "i" + pad(item, iw), t, item_title[static_cast<std::size_t>(item)]});
        }
    }
    return out;
}

}  // namespace rarec

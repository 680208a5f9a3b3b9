#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rarec/data.hpp"
#include "rarec/rng.hpp"

using namespace rarec;

namespace {

std::string temp_file(const char* tag) {
    auto dir = std::filesystem::temp_directory_path() / "rarec_data_tests";
    std::filesystem::create_directories(dir);
    return (dir / tag).string();
}

Interaction mk(const char* u, const char* i, std::int64_t t, const char* title) {
    return {u, i, t, title};
}

std::vector<Interaction> three_user_corpus() {
    return {
        mk("u1", "a", 1, "red shoe"),   mk("u1", "b", 2, "blue shoe"),
        mk("u1", "c", 3, "green hat"),  mk("u2", "a", 1, "red shoe"),
        mk("u2", "c", 2, "green hat"),  mk("u2", "b", 3, "blue shoe"),
        mk("u2", "d", 4, "wool scarf"), mk("u3", "a", 5, "red shoe"),
        mk("u3", "b", 6, "blue shoe"),  mk("u3", "d", 7, "wool scarf"),
        mk("u3", "c", 8, "green hat"),  mk("u3", "a", 9, "red shoe"),
    };
}

}  // namespace

TEST_CASE("load_interactions: valid, empty, and malformed lines") {
    const std::string path = temp_file("load.jsonl");
    {
        std::ofstream f(path, std::ios::trunc);
        f << R"({"user_id":"u1","item_id":"a","timestamp":1,"title":"x"})" << "\n";
        f << R"({"user_id":"u1","item_id":"b","timestamp":2,"title":"y"})" << "\n";
        f << R"({"user_id":"u1","item_id":"c","timestamp":3,"title":"z"})" << "\n";
    }
    LoadReport rep;
    auto rows = load_interactions(path, &rep);
    CHECK(rows.size() == 3);
    CHECK(rep.malformed == 0);

    {
        std::ofstream f(path, std::ios::trunc);
    }
    rows = load_interactions(path, &rep);
    CHECK(rows.empty());

    {
        std::ofstream f(path, std::ios::trunc);
        for (int i = 0; i < 20; ++i)
            f << R"({"user_id":"u1","item_id":"a)" << i << R"(","timestamp":1,"title":"x"})"
              << "\n";
        f << R"({"user_id":"u1","timestamp":1,"title":"missing item"})" << "\n";
    }
    rows = load_interactions(path, &rep);
    CHECK(rows.size() == 20);
    CHECK(rep.malformed == 1);

    {
        std::ofstream f(path, std::ios::trunc);
        f << R"({"user_id":"u1","item_id":"a","timestamp":1,"title":"x"})" << "\n";
        f << "not json at all\n";
    }
    CHECK_THROWS_AS(load_interactions(path), DataError);
    CHECK_THROWS_AS(load_interactions(temp_file("missing.jsonl")), DataError);
}

TEST_CASE("preprocess drops short users and bad titles, and is idempotent") {
    auto rows = three_user_corpus();
    rows.push_back(mk("u4", "e", 1, "one"));
    rows.push_back(mk("u4", "f", 2, "two"));  // only 2 interactions: dropped
    Dataset ds = preprocess(rows);
    CHECK(ds.num_users() == 3);
    CHECK(ds.user_index("u4") == -1);

    // an over-long title removes interactions before the user-count rule
    auto rows2 = three_user_corpus();
    const std::string long_title(201, 'x');
    rows2[0].title = long_title;  // u1 drops to 2 interactions -> removed
    Dataset ds2 = preprocess(rows2);
    CHECK(ds2.user_index("u1") == -1);
    CHECK(ds2.num_users() == 2);

    // exactly 200 characters survives
    auto rows3 = three_user_corpus();
    rows3[0].title = std::string(200, 'y');
    CHECK(preprocess(rows3).num_users() == 3);

    // idempotence: preprocess of a flattened clean dataset changes nothing
    Dataset once = preprocess(three_user_corpus());
    Dataset twice = preprocess(once.to_interactions());
    CHECK(once.user_ids == twice.user_ids);
    CHECK(once.item_ids == twice.item_ids);
    CHECK(once.user_seqs == twice.user_seqs);
    CHECK(once.item_popularity == twice.item_popularity);

    CHECK_THROWS_AS(preprocess({mk("u", "i", 1, "")}), DataError);
}

TEST_CASE("preprocess keeps per-user time order with stable ties") {
    std::vector<Interaction> rows = {
        mk("u1", "b", 5, "bb"), mk("u1", "a", 1, "aa"), mk("u1", "c", 5, "cc"),
        mk("u1", "d", 2, "dd"),
    };
    Dataset ds = preprocess(rows);
    const auto& seq = ds.user_seqs[0];
    std::vector<std::string> ids;
    for (int i : seq) ids.push_back(ds.item_ids[static_cast<std::size_t>(i)]);
    CHECK(ids == std::vector<std::string>{"a", "d", "b", "c"});  // ties keep input order
}

TEST_CASE("leave-one-out split partitions each user sequence") {
    Dataset ds = preprocess(three_user_corpus());
    SplitDataset split = leave_one_out_split(ds);
    for (std::size_t u = 0; u < split.data.num_users(); ++u) {
        const auto& seq = split.data.user_seqs[u];
        REQUIRE(split.train_seq[u].size() + 2 == seq.size());
        for (std::size_t k = 0; k < split.train_seq[u].size(); ++k)
            CHECK(split.train_seq[u][k] == seq[k]);
        CHECK(split.val_item[u] == seq[seq.size() - 2]);
        CHECK(split.test_item[u] == seq[seq.size() - 1]);
    }

    // minimal case [a,b,c]
    std::vector<Interaction> tiny = {mk("u", "a", 1, "ta"), mk("u", "b", 2, "tb"),
                                     mk("u", "c", 3, "tc")};
    SplitDataset s2 = leave_one_out_split(preprocess(tiny));
    CHECK(s2.train_seq[0].size() == 1);
    CHECK(s2.data.item_ids[static_cast<std::size_t>(s2.train_seq[0][0])] == "a");
    CHECK(s2.data.item_ids[static_cast<std::size_t>(s2.val_item[0])] == "b");
    CHECK(s2.data.item_ids[static_cast<std::size_t>(s2.test_item[0])] == "c");
}

TEST_CASE("leave-one-out partition property over random corpora") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticConfig cfg;
        cfg.num_users = 40;
        cfg.num_items = 30;
        cfg.num_clusters = 3;
        cfg.interactions_per_user = 6;
        cfg.seed = seed;
        SplitDataset split = leave_one_out_split(preprocess(generate_synthetic(cfg)));
        for (std::size_t u = 0; u < split.data.num_users(); ++u) {
            std::vector<int> joined = split.train_seq[u];
            joined.push_back(split.val_item[u]);
            joined.push_back(split.test_item[u]);
            CHECK(joined == split.data.user_seqs[u]);
        }
    }
}

TEST_CASE("word overlap") {
    CHECK(word_overlap("blue denim jacket", {"denim skirt"}) == 1);
    CHECK(word_overlap("alpha beta", {"gamma delta", "epsilon"}) == 0);
    CHECK(word_overlap("wool red scarf", {"wool red scarf"}) == 3);
    CHECK(word_overlap("Wool RED scarf!", {"wool red scarf"}) == 3);  // case folded
}

TEST_CASE("denoise removes exactly the zero-overlap samples, order preserved") {
    Dataset ds = preprocess({
        mk("u1", "a", 1, "alpha one"), mk("u1", "b", 2, "alpha two"),
        mk("u1", "c", 3, "beta three"), mk("u1", "d", 4, "gamma four"),
    });
    auto idx = [&](const char* id) { return ds.item_index(id); };

    std::vector<AlignSample> samples;
    AlignSample s1{0, {idx("a")}, idx("b"), idx("c"), 1};          // overlap "alpha" > 0
    AlignSample s2{0, {idx("a")}, idx("c"), idx("b"), 2};          // zero overlap
    AlignSample s3{0, {idx("a"), idx("b")}, idx("d"), idx("c"), 3};  // zero overlap
    AlignSample s4{0, {idx("c")}, idx("c"), idx("a"), 4};          // identical title words
    samples = {s1, s2, s3, s4};

    auto out = denoise(samples, ds);
    REQUIRE(out.size() == 2);
    CHECK(out[0].pos_item == s1.pos_item);
    CHECK(out[1].pos_item == s4.pos_item);

    // survivor count equals an independent recount
    std::size_t expect = 0;
    for (const auto& s : samples) {
        std::vector<std::string> titles;
        for (int it : s.history) titles.push_back(ds.item_titles[static_cast<std::size_t>(it)]);
        if (word_overlap(ds.item_titles[static_cast<std::size_t>(s.pos_item)], titles) > 0)
            ++expect;
    }
    CHECK(out.size() == expect);
}

TEST_CASE("diversity sampling quotas and determinism") {
    SyntheticConfig cfg;
    cfg.num_users = 60;
    cfg.num_items = 40;
    cfg.num_clusters = 4;
    cfg.interactions_per_user = 8;
    cfg.seed = 3;
    SplitDataset split = leave_one_out_split(preprocess(generate_synthetic(cfg)));
    auto pool = build_efficient_set(split, 0, 9, AlignSetMode::kAll);

    // single cell: plain uniform subset of the right size
    auto sub = diversity_sample(pool, split.data, 1, 1, 50, 11);
    CHECK(sub.size() == 50);

    // n = |samples| returns everything (pool order)
    auto all = diversity_sample(pool, split.data, 3, 3, pool.size(), 11);
    REQUIRE(all.size() == pool.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i].user == pool[i].user);
        CHECK(all[i].pos_index == pool[i].pos_index);
    }

    // determinism
    auto again = diversity_sample(pool, split.data, 2, 2, 60, 11);
    auto again2 = diversity_sample(pool, split.data, 2, 2, 60, 11);
    REQUIRE(again.size() == again2.size());
    for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].user == again2[i].user);

    CHECK_THROWS_AS(diversity_sample(pool, split.data, 2, 2, pool.size() + 1, 1), DataError);
}

TEST_CASE("diversity sampling: four equal cells get exact equal quotas") {
    // hand-built pool with two history lengths and two popularity levels
    Dataset ds = preprocess({
        mk("u1", "pop", 1, "alpha"), mk("u1", "rare", 2, "beta"), mk("u1", "pop", 3, "alpha"),
        mk("u2", "pop", 1, "alpha"), mk("u2", "rare2", 2, "betb"), mk("u2", "pop", 3, "alpha"),
    });
    const int pop = ds.item_index("pop");
    const int rare = ds.item_index("rare");
    std::vector<AlignSample> pool;
    for (int rep = 0; rep < 100; ++rep) {
        pool.push_back({0, {pop}, pop, rare, 1});                 // short hist, popular target
        pool.push_back({0, {pop}, rare, pop, 1});                 // short hist, rare target
        pool.push_back({0, {pop, rare, pop}, pop, rare, 1});      // long hist, popular
        pool.push_back({0, {pop, rare, pop}, rare, pop, 1});      // long hist, rare
    }
    EfficientSetReport rep;
    auto out = diversity_sample(pool, ds, 2, 2, 400, 5, &rep);
    CHECK(out.size() == 400);
    REQUIRE(rep.cell_counts.size() == 4);
    for (const auto& [cell, count] : rep.cell_counts) CHECK(count == 100);
}

TEST_CASE("build_efficient_set: modes, sizes, and the 10% default") {
    SyntheticConfig cfg;
    cfg.num_users = 80;
    cfg.num_items = 60;
    cfg.num_clusters = 4;
    cfg.interactions_per_user = 9;
    cfg.seed = 21;
    SplitDataset split = leave_one_out_split(preprocess(generate_synthetic(cfg)));

    EfficientSetReport rep;
    auto eff = build_efficient_set(split, 0, 77, AlignSetMode::kEfficient, 4, 4, &rep);
    CHECK(rep.pool_size > 0);
    CHECK(eff.size() == rep.pool_size / 10);  // auto size = 10% of the pool
    CHECK(eff.size() == rep.selected);
    std::size_t cell_sum = 0;
    for (const auto& [cell, count] : rep.cell_counts) cell_sum += count;
    CHECK(cell_sum == eff.size());

    auto eff2 = build_efficient_set(split, 0, 77, AlignSetMode::kEfficient, 4, 4);
    REQUIRE(eff2.size() == eff.size());
    for (std::size_t i = 0; i < eff.size(); ++i) {
        CHECK(eff[i].user == eff2[i].user);
        CHECK(eff[i].neg_item == eff2[i].neg_item);
    }

    auto rnd = build_efficient_set(split, 100, 77, AlignSetMode::kRandom, 4, 4, &rep);
    CHECK(rnd.size() == 100);
    auto all = build_efficient_set(split, 0, 77, AlignSetMode::kAll, 4, 4, &rep);
    CHECK(all.size() == rep.pool_size);

    // positives come from the training split; negatives never collide
    for (const auto& s : all) {
        const auto& seq = split.train_seq[static_cast<std::size_t>(s.user)];
        CHECK(seq[static_cast<std::size_t>(s.pos_index)] == s.pos_item);
        for (int it : split.data.user_seqs[static_cast<std::size_t>(s.user)])
            CHECK(it != s.neg_item);
    }

    CHECK_THROWS_AS(
        build_efficient_set(split, rep.pool_size * 10, 77, AlignSetMode::kEfficient, 4, 4),
        DataError);
}

TEST_CASE("synthetic generator: determinism, cluster mix, and clean titles") {
    SyntheticConfig cfg;
    cfg.num_users = 400;
    cfg.num_items = 120;
    cfg.num_clusters = 4;
    cfg.interactions_per_user = 20;
    cfg.seed = 99;

    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].user_id == b[i].user_id);
        CHECK(a[i].item_id == b[i].item_id);
        CHECK(a[i].timestamp == b[i].timestamp);
        CHECK(a[i].title == b[i].title);
    }

    // within-cluster fraction close to the configured 0.9
    const int C = cfg.num_clusters;
    std::size_t within = 0;
    for (const auto& r : a) {
        const int u = std::stoi(r.user_id.substr(1));
        const int it = std::stoi(r.item_id.substr(1));
        if (u % C == it % C) ++within;
    }
    const double frac = static_cast<double>(within) / static_cast<double>(a.size());
    CHECK(frac > 0.88);
    CHECK(frac < 0.92);

    // titles survive preprocessing unchanged
    for (const auto& r : a) {
        CHECK_FALSE(r.title.empty());
        CHECK(r.title.size() <= 200);
    }
    Dataset ds = preprocess(a);
    CHECK(ds.num_interactions() == a.size());

    // timestamps strictly increasing per user
    for (std::size_t u = 0; u < ds.num_users(); ++u)
        for (std::size_t k = 1; k < ds.user_times[u].size(); ++k)
            CHECK(ds.user_times[u][k] > ds.user_times[u][k - 1]);

    CHECK_THROWS_AS(generate_synthetic(SyntheticConfig{10, 10, 1, 5, 10, 0.9, 1}), ConfigError);
}

TEST_CASE("interaction write/load round trip with roles") {
    const std::string path = temp_file("roundtrip.jsonl");
    auto rows = three_user_corpus();
    std::vector<std::string> roles(rows.size(), "train");
    write_interactions(path, rows, &roles);
    auto back = load_interactions(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].user_id == rows[i].user_id);
        CHECK(back[i].item_id == rows[i].item_id);
        CHECK(back[i].timestamp == rows[i].timestamp);
        CHECK(back[i].title == rows[i].title);
    }
}

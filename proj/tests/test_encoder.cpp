#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rarec/encoder.hpp"
#include "rarec/tokenizer.hpp"

using namespace rarec;

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 12;
    return cfg;
}

std::vector<Tensor> zero_prefixes(const EncoderConfig& cfg, int rows) {
    std::vector<Tensor> out;
    for (int l = 0; l <= cfg.num_layers; ++l)
        out.push_back(Tensor::zeros({rows, cfg.hidden_dim}));
    return out;
}

}  // namespace

TEST_CASE("encode_plain shapes and determinism") {
    EncoderWeights w = EncoderWeights::init(small_cfg(), 7);
    LayerStates one = encode_plain(w, {5});
    REQUIRE(one.states.size() == 3);
    for (const auto& s : one.states) {
        CHECK(s.dim(0) == 1);
        CHECK(s.dim(1) == 8);
    }

    LayerStates a = encode_plain(w, {5, 9, 13});
    LayerStates b = encode_plain(w, {5, 9, 13});
    for (std::size_t l = 0; l < a.states.size(); ++l)
        CHECK(a.states[l].values() == b.states[l].values());

    CHECK_THROWS_AS(encode_plain(w, {}), ShapeError);
}

TEST_CASE("position embeddings make token order matter") {
    EncoderWeights w = EncoderWeights::init(small_cfg(), 7);
    LayerStates ab = encode_plain(w, {5, 9});
    LayerStates ba = encode_plain(w, {9, 5});
    CHECK(ab.states.back().values() != ba.states.back().values());
}

TEST_CASE("overlong input truncates to max_seq_len") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 7);
    std::vector<int> tokens(40, 5);
    LayerStates st = encode_plain(w, tokens);
    CHECK(st.states.back().dim(0) == cfg.max_seq_len);
}

TEST_CASE("prefix neutrality: zero-row prefixes reproduce encode_plain bitwise") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 17);
    std::vector<int> tokens = {4, 7, 30, 12};
    LayerStates plain = encode_plain(w, tokens);
    LayerStates pref = encode_with_prefix(w, tokens, zero_prefixes(cfg, 0));
    REQUIRE(plain.states.size() == pref.states.size());
    for (std::size_t l = 0; l < plain.states.size(); ++l)
        CHECK(plain.states[l].values() == pref.states[l].values());
}

TEST_CASE("prefix matrices must cover num_layers + 1 and match the hidden size") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 17);
    std::vector<Tensor> toofew(2, Tensor::zeros({1, cfg.hidden_dim}));
    CHECK_THROWS_AS(encode_with_prefix(w, {4, 5}, toofew), ShapeError);
    std::vector<Tensor> wrong(static_cast<std::size_t>(cfg.num_layers) + 1,
                              Tensor::zeros({1, cfg.hidden_dim + 1}));
    CHECK_THROWS_AS(encode_with_prefix(w, {4, 5}, wrong), ShapeError);
}

TEST_CASE("prefixes add key/value rows but no output rows") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 23);
    std::vector<int> tokens = {4, 7, 30};
    for (int rows : {1, 3, 6}) {
        std::vector<Tensor> prefixes;
        for (int l = 0; l <= cfg.num_layers; ++l)
            prefixes.push_back(init_trunc_normal({rows, cfg.hidden_dim}, -0.02, 0.02, 0.01,
                                                 static_cast<std::uint64_t>(rows * 10 + l)));
        LayerStates st = encode_with_prefix(w, tokens, prefixes);
        for (const auto& s : st.states) CHECK(s.dim(0) == 3);
    }
}

TEST_CASE("attention rows sum to one, including prefix columns") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 29);
    std::vector<Tensor> prefixes;
    for (int l = 0; l <= cfg.num_layers; ++l)
        prefixes.push_back(init_trunc_normal({2, cfg.hidden_dim}, -0.5, 0.5, 0.3,
                                             static_cast<std::uint64_t>(l + 100)));
    AttentionCapture cap;
    encode_with_prefix(w, {4, 7, 30, 12}, prefixes, &cap);
    REQUIRE(cap.probs.size() == static_cast<std::size_t>(cfg.num_layers * cfg.num_heads));
    for (const auto& probs : cap.probs) {
        CHECK(probs.dim(1) == 2 + 4);  // prefix rows widen the key side
        for (int i = 0; i < probs.dim(0); ++i) {
            double row = 0;
            for (int j = 0; j < probs.dim(1); ++j) row += probs.data()[i * probs.dim(1) + j];
            CHECK(std::abs(row - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("hand-computed 2-token, 1-head, hidden=2 attention with zero prefixes") {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.hidden_dim = 2;
    cfg.num_heads = 1;
    cfg.ffn_dim = 2;
    cfg.vocab_size = 8;
    cfg.max_seq_len = 4;
    EncoderWeights w = EncoderWeights::init(cfg, 1);

    auto set = [&](const std::string& name, std::vector<double> v) {
        Tensor& t = w.params.at(name);
        REQUIRE(t.size() == v.size());
        t.values() = std::move(v);
    };
    // identity projections, zero embeddings except two one-hot tokens
    set("enc.tok_emb", [] {
        std::vector<double> v(8 * 2, 0.0);
        v[3 * 2 + 0] = 1.0;  // token 3 -> [1, 0]
        v[4 * 2 + 1] = 1.0;  // token 4 -> [0, 1]
        return v;
    }());
    set("enc.pos_emb", std::vector<double>(4 * 2, 0.0));
    set("enc.l0.wq", {1, 0, 0, 1});
    set("enc.l0.wk", {1, 0, 0, 1});
    set("enc.l0.wv", {1, 0, 0, 1});
    set("enc.l0.wo", {1, 0, 0, 1});

    const double s = 1.0 / std::sqrt(2.0);  // logit of a token attending to itself
    const double es = std::exp(s);

    // plain: row of token 3 attends over [self=s, other=0]
    {
        AttentionCapture cap;
        encode_plain(w, {3, 4}, &cap);
        REQUIRE(cap.probs.size() == 1);
        const Tensor& p = cap.probs[0];
        REQUIRE(p.shape() == Shape{2, 2});
        CHECK(p.data()[0] == doctest::Approx(es / (es + 1.0)).epsilon(1e-12));
        CHECK(p.data()[1] == doctest::Approx(1.0 / (es + 1.0)).epsilon(1e-12));
    }

    // two all-zero prefix rows contribute zero-logit columns: each gets the
    // uniform softmax share 1/(3 + e^s)
    {
        AttentionCapture cap;
        encode_with_prefix(w, {3, 4}, zero_prefixes(cfg, 2), &cap);
        REQUIRE(cap.probs.size() == 1);
        const Tensor& p = cap.probs[0];
        REQUIRE(p.shape() == Shape{2, 4});
        const double denom = 3.0 + es;
        CHECK(p.data()[0] == doctest::Approx(1.0 / denom).epsilon(1e-12));
        CHECK(p.data()[1] == doctest::Approx(1.0 / denom).epsilon(1e-12));
        CHECK(p.data()[2] == doctest::Approx(es / denom).epsilon(1e-12));
        CHECK(p.data()[3] == doctest::Approx(1.0 / denom).epsilon(1e-12));
        // second token row mirrors the first
        CHECK(p.data()[4 + 3] == doctest::Approx(es / denom).epsilon(1e-12));
    }
}

TEST_CASE("frozen encoder: checksum invariance and gradient flow to prefixes only") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 31);
    w.freeze();
    w.verify_frozen();
    const std::uint64_t sum_before = w.checksum;

    std::vector<Tensor> prefixes;
    for (int l = 0; l <= cfg.num_layers; ++l) {
        Tensor p = init_trunc_normal({2, cfg.hidden_dim}, -0.02, 0.02, 0.01,
                                     static_cast<std::uint64_t>(l));
        p.set_requires_grad(true);
        prefixes.push_back(p);
    }

    Tape tape;
    {
        TapeScope scope(tape);
        LayerStates st = encode_with_prefix(w, {4, 7, 30}, prefixes);
        Tensor loss = sum(pool_representation(st, cfg.num_layers));
        tape.backward(loss);
    }

    // injected prefixes receive gradients (except the trailing one, which no
    // block consumes); frozen weights record none
    for (int l = 0; l < cfg.num_layers; ++l) {
        double norm = 0;
        for (double g : prefixes[static_cast<std::size_t>(l)].grad_or_zero()) norm += g * g;
        CHECK(norm > 0.0);
    }
    for (const auto& [name, t] : w.params) {
        CAPTURE(name);
        CHECK(t.raw_grad().empty());
    }

    w.verify_frozen();
    CHECK(w.checksum == sum_before);

    // mutation is detected
    w.params.at("enc.l0.wq").data()[0] += 1.0;
    CHECK_THROWS_AS(w.verify_frozen(), FrozenViolation);
}

TEST_CASE("pool_representation averages over positions") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 37);
    LayerStates one = encode_plain(w, {9});
    Tensor p1 = pool_representation(one, cfg.num_layers);
    CHECK(p1.shape() == Shape{cfg.hidden_dim});
    CHECK(p1.values() == one.states.back().values());

    // duplicated token: same pooled vector as the single token (identical
    // rows share position embeddings only if positions match, so compare a
    // hand-averaged copy instead)
    LayerStates two = encode_plain(w, {9, 9});
    Tensor p2 = pool_representation(two, cfg.num_layers);
    for (int j = 0; j < cfg.hidden_dim; ++j) {
        const double avg =
            0.5 * (two.states.back().data()[j] + two.states.back().data()[cfg.hidden_dim + j]);
        CHECK(p2.data()[j] == doctest::Approx(avg).epsilon(1e-12));
    }
    CHECK_THROWS_AS(pool_representation(one, 99), ShapeError);
}

TEST_CASE("warm_encoder reduces the masked-word loss and respects freezing") {
    EncoderConfig cfg = small_cfg();
    EncoderWeights w = EncoderWeights::init(cfg, 41);
    Tokenizer tok(cfg.vocab_size);
    std::vector<std::vector<int>> titles;
    for (int i = 0; i < 30; ++i)
        titles.push_back(tok.tokenize("word" + std::to_string(i % 5) + " common tail"));
    WarmupReport rep = warm_encoder(w, titles, 60, 8, 1e-3, 3);
    CHECK(rep.last_loss < rep.first_loss);

    w.freeze();
    CHECK_THROWS_AS(warm_encoder(w, titles, 1, 1, 1e-3, 3), FrozenViolation);
}

#include "rarec/encoder.hpp"

#include <cmath>
#include <cstdio>

#include "rarec/checkpoint.hpp"
#include "rarec/optimizer.hpp"
#include "rarec/rng.hpp"

namespace rarec {

namespace {

std::string lw(int l, const char* name) {
    return "enc.l" + std::to_string(l) + "." + name;
}

}  // namespace

EncoderWeights EncoderWeights::init(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoderWeights w;
    w.cfg = cfg;
    const int d = cfg.hidden_dim;

    auto tn = [&](const std::string& name, Shape shape) {
        w.params.emplace(name, init_trunc_normal(std::move(shape), -0.02, 0.02, 0.01,
                                                 derive_seed(seed, name)));
    };
    auto ones = [&](const std::string& name, int n) {
        w.params.emplace(name, Tensor::from({n}, std::vector<double>(static_cast<std::size_t>(n), 1.0)));
    };
    auto zeros = [&](const std::string& name, int n) {
        w.params.emplace(name, Tensor::zeros({n}));
    };

    tn("enc.tok_emb", {cfg.vocab_size, d});
    tn("enc.pos_emb", {cfg.max_seq_len, d});
    for (int l = 0; l < cfg.num_layers; ++l) {
        tn(lw(l, "wq"), {d, d});
        zeros(lw(l, "bq"), d);
        tn(lw(l, "wk"), {d, d});
        zeros(lw(l, "bk"), d);
        tn(lw(l, "wv"), {d, d});
        zeros(lw(l, "bv"), d);
        tn(lw(l, "wo"), {d, d});
        zeros(lw(l, "bo"), d);
        ones(lw(l, "ln1_g"), d);
        zeros(lw(l, "ln1_b"), d);
        tn(lw(l, "w1"), {d, cfg.ffn_dim});
        zeros(lw(l, "b1"), cfg.ffn_dim);
        tn(lw(l, "w2"), {cfg.ffn_dim, d});
        zeros(lw(l, "b2"), d);
        ones(lw(l, "ln2_g"), d);
        zeros(lw(l, "ln2_b"), d);
    }
    return w;
}

void EncoderWeights::set_trainable(bool trainable) {
    if (frozen && trainable) throw FrozenViolation("encoder is frozen");
    for (auto& [name, t] : params) {
        (void)name;
        t.set_requires_grad(trainable);
    }
}

void EncoderWeights::freeze() {
    set_trainable(false);
    snap_to_f32(params);
    checksum = content_checksum(params);
    frozen = true;
}

void EncoderWeights::verify_frozen() const {
    if (!frozen) throw FrozenViolation("encoder was never frozen");
    if (content_checksum(params) != checksum)
        throw FrozenViolation("encoder parameters changed while frozen");
}

namespace {

struct EncodeInputs {
    const std::vector<Tensor>* prefixes = nullptr;  // L+1 entries when present
    const Tensor* input_rows = nullptr;
};

LayerStates run_encoder(const EncoderWeights& w, const std::vector<int>& tokens_in,
                        const EncodeInputs& in, AttentionCapture* capture) {
    if (tokens_in.empty()) throw ShapeError("encode: empty token sequence");
    const EncoderConfig& cfg = w.cfg;
    std::vector<int> tokens = tokens_in;
    if (static_cast<int>(tokens.size()) > cfg.max_seq_len) {
        std::fprintf(stderr, "[encoder] truncating input of %zu tokens to %d\n", tokens.size(),
                     cfg.max_seq_len);
        tokens.resize(static_cast<std::size_t>(cfg.max_seq_len));
    }
    if (in.prefixes) {
        if (static_cast<int>(in.prefixes->size()) != cfg.num_layers + 1)
            throw ShapeError("encode_with_prefix: need " + std::to_string(cfg.num_layers + 1) +
                             " prefix matrices, got " + std::to_string(in.prefixes->size()));
        for (const auto& p : *in.prefixes)
            if (p.rank() != 2 || p.dim(1) != cfg.hidden_dim)
                throw ShapeError("encode_with_prefix: prefix hidden size mismatch");
    }

    const int d = cfg.hidden_dim;
    const int heads = cfg.num_heads;
    const int dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<int> positions(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) positions[i] = static_cast<int>(i);
    Tensor h = add(embedding_lookup(w.p("enc.tok_emb"), tokens),
                   embedding_lookup(w.p("enc.pos_emb"), positions));
    if (in.input_rows) {
        if (in.input_rows->rank() != 2 || in.input_rows->dim(1) != d)
            throw ShapeError("encode_with_input_rows: row width mismatch");
        h = concat(*in.input_rows, h, 0);
    }

    LayerStates out;
    out.states.push_back(h);
    for (int l = 0; l < cfg.num_layers; ++l) {
        Tensor kv_src = h;
        if (in.prefixes) {
            const Tensor& pre = (*in.prefixes)[static_cast<std::size_t>(l)];
            if (pre.dim(0) > 0) kv_src = concat(pre, h, 0);
        }
        Tensor q = add(matmul(h, w.p(lw(l, "wq"))), w.p(lw(l, "bq")));
        Tensor k = add(matmul(kv_src, w.p(lw(l, "wk"))), w.p(lw(l, "bk")));
        Tensor v = add(matmul(kv_src, w.p(lw(l, "wv"))), w.p(lw(l, "bv")));

        Tensor heads_out;
        for (int hd = 0; hd < heads; ++hd) {
            Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
            Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
            Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
            Tensor logits = scale(matmul(qh, transpose(kh)), inv_scale);
            Tensor probs = softmax_rows(logits);
            if (capture) capture->probs.push_back(probs);
            Tensor oh = matmul(probs, vh);
            heads_out = hd == 0 ? oh : concat(heads_out, oh, 1);
        }
        Tensor attn = add(matmul(heads_out, w.p(lw(l, "wo"))), w.p(lw(l, "bo")));
        h = layer_norm_rows(add(h, attn), w.p(lw(l, "ln1_g")), w.p(lw(l, "ln1_b")));
        Tensor f = add(matmul(gelu(add(matmul(h, w.p(lw(l, "w1"))), w.p(lw(l, "b1")))),
                              w.p(lw(l, "w2"))),
                       w.p(lw(l, "b2")));
        h = layer_norm_rows(add(h, f), w.p(lw(l, "ln2_g")), w.p(lw(l, "ln2_b")));
        out.states.push_back(h);
    }
    return out;
}

}  // namespace

LayerStates encode_plain(const EncoderWeights& w, const std::vector<int>& tokens,
                         AttentionCapture* capture) {
    EncodeInputs in;
    return run_encoder(w, tokens, in, capture);
}

LayerStates encode_with_prefix(const EncoderWeights& w, const std::vector<int>& tokens,
                               const std::vector<Tensor>& layer_prefixes,
                               AttentionCapture* capture) {
    EncodeInputs in;
    in.prefixes = &layer_prefixes;
    return run_encoder(w, tokens, in, capture);
}

LayerStates encode_with_input_rows(const EncoderWeights& w, const std::vector<int>& tokens,
                                   const Tensor& rows) {
    EncodeInputs in;
    in.input_rows = &rows;
    return run_encoder(w, tokens, in, nullptr);
}

Tensor pool_representation(const LayerStates& states, int layer) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= states.states.size())
        throw ShapeError("pool_representation: bad layer index");
    return mean_rows(states.states[static_cast<std::size_t>(layer)]);
}

WarmupReport warm_encoder(EncoderWeights& w, const std::vector<std::vector<int>>& title_tokens,
                          int steps, int batch_size, double lr, std::uint64_t seed) {
    if (w.frozen) throw FrozenViolation("warm_encoder: encoder is frozen");
    std::vector<std::vector<int>> usable;
    for (const auto& t : title_tokens)
        if (!t.empty()) usable.push_back(t);
    if (usable.empty()) throw DataError("warm_encoder: no usable titles");

    w.set_trainable(true);
    OptimizerState opt;
    opt.base_lr = lr;
    opt.weight_decay = 0.0;
    opt.total_steps = steps;

    Rng rng(seed);
    WarmupReport rep;
    const Tensor& tok_emb = w.p("enc.tok_emb");
    for (int step = 0; step < steps; ++step) {
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            for (int b = 0; b < batch_size; ++b) {
                std::vector<int> seq = usable[rng.below(usable.size())];
                const std::size_t pos = rng.below(seq.size());
                const int target = seq[pos];
                seq[pos] = 2;  // mask id
                LayerStates st = run_encoder(w, seq, {}, nullptr);
                Tensor row =
                    reshape(slice_rows(st.states.back(), static_cast<int>(pos),
                                       static_cast<int>(pos) + 1),
                            {w.cfg.hidden_dim});
                Tensor logits = matmul(tok_emb, row);  // [vocab]
                Tensor nll = sub(logsumexp(logits), select(logits, target));
                loss = b == 0 ? nll : add(loss, nll);
            }
            loss = scale(loss, 1.0 / batch_size);
        }
        if (!loss.all_finite())
            throw NumericError("warm_encoder: non-finite loss at step " + std::to_string(step));
        tape.backward(loss);
        GradMap grads = collect_grads(w.params);
        optimizer_step(w.params, grads, opt);
        zero_grads(w.params);
        if (step == 0) rep.first_loss = loss.item();
        rep.last_loss = loss.item();
    }
    w.set_trainable(false);
    return rep;
}

}  // namespace rarec

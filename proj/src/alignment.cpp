#include "rarec/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "rarec/checkpoint.hpp"
#include "rarec/ops.hpp"
#include "rarec/rng.hpp"

namespace rarec {

Variant variant_from(const std::string& name) {
    if (name == "full") return Variant::kFull;
    if (name == "no_reparam") return Variant::kNoReparam;
    if (name == "no_con_instruction") return Variant::kNoConInstruction;
    if (name == "inputs_only") return Variant::kInputsOnly;
    if (name == "project_inputs") return Variant::kProjectInputs;
    throw ConfigError("unknown alignment variant: " + name);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kNoReparam: return "no_reparam";
        case Variant::kNoConInstruction: return "no_con_instruction";
        case Variant::kInputsOnly: return "inputs_only";
        case Variant::kProjectInputs: return "project_inputs";
    }
    return "?";
}

namespace {

std::string pname(Side side, const char* kind, int layer) {
    return std::string("align.") + (side == Side::kUser ? "u" : "i") + "." + kind + "." +
           std::to_string(layer);
}

std::string qname(Side side) {
    return std::string("align.") + (side == Side::kUser ? "u" : "i") + ".q";
}

}  // namespace

AlignmentParams AlignmentParams::init(int num_layers, int id_dim, int hidden_dim,
                                      int prefix_len, Variant variant, std::uint64_t seed) {
    if (num_layers < 1 || id_dim < 1 || hidden_dim < 1)
        throw ConfigError("alignment params: bad dimensions");
    if (prefix_len < 0) throw ConfigError("alignment params: prefix_len must be >= 0");
    if (variant == Variant::kNoConInstruction) prefix_len = 0;

    AlignmentParams a;
    a.num_layers = num_layers;
    a.id_dim = id_dim;
    a.hidden_dim = hidden_dim;
    a.prefix_len = prefix_len;
    a.variant = variant;

    auto tn = [&](const std::string& name, Shape shape) {
        a.params.emplace(name, init_trunc_normal(std::move(shape), -0.02, 0.02, 0.01,
                                                 derive_seed(seed, name)));
    };

    const bool per_layer_proj =
        variant == Variant::kFull || variant == Variant::kNoConInstruction;
    const bool has_prefixes = variant == Variant::kFull ||
                              variant == Variant::kNoConInstruction ||
                              variant == Variant::kNoReparam;
    for (Side side : {Side::kUser, Side::kItem}) {
        const int proj_layers = per_layer_proj ? num_layers + 1 : 1;
        for (int l = 0; l < proj_layers; ++l) {
            tn(pname(side, "w", l), {hidden_dim, id_dim});
            tn(pname(side, "b", l), {hidden_dim});
        }
        if (has_prefixes)
            for (int l = 0; l <= num_layers; ++l)
                tn(pname(side, "c", l), {prefix_len, hidden_dim});
        if (variant == Variant::kProjectInputs)
            tn(qname(side), {prefix_len + 1, hidden_dim});
    }
    return a;
}

std::size_t AlignmentParams::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) {
        (void)name;
        n += t.size();
    }
    return n;
}

void AlignmentParams::set_trainable(bool trainable) {
    for (auto& [name, t] : params) {
        (void)name;
        t.set_requires_grad(trainable);
    }
}

Tensor reparameterize(const AlignmentParams& params, const Tensor& embedding, int layer,
                      Side side) {
    if (layer < 0 || layer > params.num_layers)
        throw ShapeError("reparameterize: layer out of range");
    if (embedding.rank() != 1 || embedding.dim(0) != params.id_dim)
        throw ShapeError("reparameterize: embedding dim mismatch");
    const int l = (params.variant == Variant::kFull ||
                   params.variant == Variant::kNoConInstruction)
                      ? layer
                      : 0;
    return add(matmul(params.p(pname(side, "w", l)), embedding), params.p(pname(side, "b", l)));
}

Tensor contextualize(const AlignmentParams& params, const Tensor& projected, int layer,
                     Side side) {
    if (projected.rank() != 1 || projected.dim(0) != params.hidden_dim)
        throw ShapeError("contextualize: hidden size mismatch");
    Tensor row = reshape(projected, {1, params.hidden_dim});
    const Tensor& ctx_prefix = params.p(pname(side, "c", layer));
    return concat(ctx_prefix, row, 0);
}

AlignmentContext AlignmentContext::build(const EncoderWeights& encoder,
                                         const IdEmbeddings& id_emb, const Dataset& data,
                                         const PromptTemplate& user_template,
                                         const PromptTemplate& item_template,
                                         int max_history_titles) {
    AlignmentContext ctx;
    ctx.encoder = &encoder;
    ctx.id_emb = &id_emb;
    ctx.data = &data;
    ctx.user_template = user_template;
    ctx.item_template = item_template;
    ctx.tokenizer = Tokenizer(encoder.cfg.vocab_size);
    ctx.max_history_titles = max_history_titles;
    ctx.item_tokens.reserve(data.num_items());
    for (std::size_t i = 0; i < data.num_items(); ++i) {
        const std::string text = render_item_prompt(item_template, data.item_titles[i]);
        ctx.item_tokens.push_back(ctx.tokenizer.tokenize(text));
    }
    ctx.tok_emb_transposed = transpose(encoder.p("enc.tok_emb"));
    return ctx;
}

std::vector<int> AlignmentContext::user_prompt_tokens(const std::vector<int>& history) const {
    std::vector<std::string> titles;
    titles.reserve(history.size());
    for (int it : history) titles.push_back(data->item_titles[static_cast<std::size_t>(it)]);
    const std::string text = render_hard_prompt(user_template, titles, max_history_titles);
    return tokenizer.tokenize(text);
}

namespace {

HybridEncodeResult encode_hybrid(const AlignmentContext& ctx, const AlignmentParams& params,
                                 const std::vector<int>& tokens, const Tensor& embedding,
                                 Side side) {
    const int L = ctx.encoder->cfg.num_layers;
    if (params.num_layers != L)
        throw ShapeError("alignment params cover " + std::to_string(params.num_layers) +
                         " layers but encoder has " + std::to_string(L));

    HybridEncodeResult out;
    LayerStates states;
    switch (params.variant) {
        case Variant::kFull:
        case Variant::kNoConInstruction:
        case Variant::kNoReparam: {
            std::vector<Tensor> prefixes;
            prefixes.reserve(static_cast<std::size_t>(L) + 1);
            for (int l = 0; l <= L; ++l) {
                Tensor p = reparameterize(params, embedding, l, side);
                Tensor d = contextualize(params, p, l, side);
                out.aligned.push_back(mean_rows(d));
                out.aligned_layers.push_back(l);
                prefixes.push_back(std::move(d));
            }
            states = encode_with_prefix(*ctx.encoder, tokens, prefixes);
            break;
        }
        case Variant::kInputsOnly: {
            Tensor p = reparameterize(params, embedding, 0, side);
            out.aligned.push_back(p);
            out.aligned_layers.push_back(0);
            states = encode_with_input_rows(*ctx.encoder, tokens,
                                            reshape(p, {1, params.hidden_dim}));
            break;
        }
        case Variant::kProjectInputs: {
            Tensor p = reparameterize(params, embedding, 0, side);
            Tensor queries = add(params.p(qname(side)), p);
            Tensor logits = scale(matmul(queries, ctx.tok_emb_transposed),
                                  1.0 / std::sqrt(static_cast<double>(params.hidden_dim)));
            Tensor pseudo = matmul(softmax_rows(logits), ctx.encoder->p("enc.tok_emb"));
            out.aligned.push_back(mean_rows(pseudo));
            out.aligned_layers.push_back(0);
            states = encode_with_input_rows(*ctx.encoder, tokens, pseudo);
            break;
        }
    }
    out.pooled_layers.reserve(states.states.size());
    for (std::size_t l = 0; l < states.states.size(); ++l)
        out.pooled_layers.push_back(mean_rows(states.states[l]));
    out.final_pooled = out.pooled_layers.back();
    return out;
}

}  // namespace

HybridEncodeResult encode_user(const AlignmentContext& ctx, const AlignmentParams& params,
                               const std::vector<int>& history) {
    if (history.empty()) throw ShapeError("encode_user: empty history");
    Tensor u = ctx.id_emb->user_embedding(history);
    return encode_hybrid(ctx, params, ctx.user_prompt_tokens(history), u, Side::kUser);
}

HybridEncodeResult encode_item(const AlignmentContext& ctx, const AlignmentParams& params,
                               int item) {
    Tensor e = ctx.id_emb->item_embedding(item);
    return encode_hybrid(ctx, params, ctx.item_tokens.at(static_cast<std::size_t>(item)), e,
                         Side::kItem);
}

Tensor score(const Tensor& user_repr, const Tensor& item_repr) {
    if (user_repr.rank() != 1 || user_repr.shape() != item_repr.shape())
        throw ShapeError("score: representation length mismatch");
    return dot(user_repr, item_repr);
}

Tensor bpr_pair_loss(const Tensor& pos_score, const Tensor& neg_score) {
    return scale(log_sigmoid(sub(pos_score, neg_score)), -1.0);
}

Tensor l2_penalty(const ParameterSet& params) {
    Tensor total;
    for (const auto& [name, t] : params) {
        (void)name;
        Tensor sq = sum(mul(t, t));
        total = total.defined() ? add(total, sq) : sq;
    }
    if (!total.defined()) return Tensor::scalar(0.0);
    return total;
}

namespace {

Tensor concat_many(std::vector<Tensor> parts) {
    // balanced fold keeps the graph shallow
    while (parts.size() > 1) {
        std::vector<Tensor> next;
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2)
            next.push_back(concat(parts[i], parts[i + 1], 0));
        if (parts.size() % 2) next.push_back(parts.back());
        parts = std::move(next);
    }
    return parts.front();
}

}  // namespace

Tensor infonce_alignment_loss(const std::vector<std::vector<Tensor>>& aligned,
                              const std::vector<std::vector<Tensor>>& targets,
                              double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("infonce: temperature must be > 0");
    const std::size_t n = aligned.size();
    if (n == 0 || targets.size() != n)
        throw ShapeError("infonce: batch size mismatch");
    const std::size_t layers = aligned[0].size();
    for (const auto& v : aligned)
        if (v.size() != layers) throw ShapeError("infonce: ragged aligned batch");
    for (const auto& v : targets)
        if (v.size() != layers) throw ShapeError("infonce: ragged target batch");

    Tensor total;
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<Tensor> sims;
            sims.reserve(n);
            for (std::size_t j = 0; j < n; ++j)
                sims.push_back(cosine_similarity(aligned[k][l], targets[j][l]));
            Tensor row = scale(concat_many(std::move(sims)), 1.0 / temperature);
            Tensor term = sub(logsumexp(row), select(row, static_cast<int>(k)));
            total = total.defined() ? add(total, term) : term;
        }
    }
    return scale(total, 1.0 / (static_cast<double>(n) * static_cast<double>(layers)));
}

Tensor total_loss(const Tensor& prediction_loss, const Tensor& user_align_loss,
                  const Tensor& item_align_loss, double lambda) {
    check_finite(prediction_loss, "total_loss inputs");
    check_finite(user_align_loss, "total_loss inputs");
    check_finite(item_align_loss, "total_loss inputs");
    return add(prediction_loss, scale(add(user_align_loss, item_align_loss), lambda));
}

namespace {

// Pooled hard-prompt-only states at the requested layers; frozen weights
// record nothing, so these are fixed alignment anchors.
std::vector<Tensor> plain_targets(const AlignmentContext& ctx, const std::vector<int>& tokens,
                                  const std::vector<int>& layers) {
    LayerStates st = encode_plain(*ctx.encoder, tokens);
    std::vector<Tensor> out;
    out.reserve(layers.size());
    for (int l : layers) out.push_back(pool_representation(st, l));
    return out;
}

double mean_alignment_cosine(const AlignmentContext& ctx, const AlignmentParams& params,
                             const std::vector<AlignSample>& batch) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& s : batch) {
        const HybridEncodeResult ur = encode_user(ctx, params, s.history);
        const auto ut = plain_targets(ctx, ctx.user_prompt_tokens(s.history), ur.aligned_layers);
        for (std::size_t l = 0; l < ur.aligned.size(); ++l) {
            total += cosine_similarity(ur.aligned[l], ut[l]).item();
            ++count;
        }
        const HybridEncodeResult ir = encode_item(ctx, params, s.pos_item);
        const auto it = plain_targets(
            ctx, ctx.item_tokens.at(static_cast<std::size_t>(s.pos_item)), ir.aligned_layers);
        for (std::size_t l = 0; l < ir.aligned.size(); ++l) {
            total += cosine_similarity(ir.aligned[l], it[l]).item();
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

AlignTrainReport train_alignment(const std::vector<AlignSample>& samples,
                                 const AlignmentContext& ctx, AlignmentParams& params,
                                 const AlignTrainConfig& cfg) {
    cfg.hyper.validate();
    if (samples.empty()) throw DataError("train_alignment: no samples");
    ctx.encoder->verify_frozen();
    ctx.id_emb->verify_frozen();

    // hold out one batch for the alignment-cosine measurement
    const std::size_t bs = static_cast<std::size_t>(cfg.hyper.batch_size);
    std::vector<AlignSample> train(samples);
    std::vector<AlignSample> heldout;
    if (train.size() > 2 * bs) {
        heldout.assign(train.end() - static_cast<std::ptrdiff_t>(bs), train.end());
        train.resize(train.size() - bs);
    } else {
        heldout = train;
    }

    params.set_trainable(true);
    AlignTrainReport rep;
    rep.trainable_count = params.trainable_count();
    rep.pre_cosine = mean_alignment_cosine(ctx, params, heldout);

    OptimizerState opt;
    opt.base_lr = cfg.hyper.learning_rate;
    opt.beta1 = cfg.adam_beta1;
    opt.beta2 = cfg.adam_beta2;
    opt.weight_decay = cfg.weight_decay;
    opt.total_steps = cfg.hyper.steps;

    // per-sample caches: prompt tokens, detached targets, per-epoch negative
    std::vector<std::vector<int>> tok_cache(train.size());
    std::vector<std::vector<Tensor>> user_target_cache(train.size());
    std::unordered_map<int, std::vector<Tensor>> item_target_cache;
    std::vector<int> negatives(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) negatives[i] = train[i].neg_item;

    std::vector<std::vector<char>> user_seen;
    auto resample_negatives = [&](int epoch) {
        if (user_seen.empty()) {
            user_seen.resize(ctx.data->num_users());
            for (std::size_t u = 0; u < user_seen.size(); ++u) {
                user_seen[u].assign(ctx.data->num_items(), 0);
                for (int it : ctx.data->user_seqs[u]) user_seen[u][static_cast<std::size_t>(it)] = 1;
            }
        }
        Rng rng(derive_seed(cfg.seed, "align-neg-epoch-" + std::to_string(epoch)));
        const std::uint64_t m = ctx.data->num_items();
        for (std::size_t i = 0; i < train.size(); ++i) {
            int neg;
            do {
                neg = static_cast<int>(rng.below(m));
            } while (user_seen[static_cast<std::size_t>(train[i].user)]
                              [static_cast<std::size_t>(neg)]);
            negatives[i] = neg;
        }
    };

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        Rng rng(derive_seed(cfg.seed, "align-shuffle-0"));
        rng.shuffle(order);
    }

    std::size_t cursor = 0;
    int epoch = 0;
    for (int step = 0; step < cfg.hyper.steps; ++step) {
        // assemble batch indices, reshuffling at epoch boundaries
        std::vector<std::size_t> batch;
        batch.reserve(bs);
        while (batch.size() < bs) {
            if (cursor == order.size()) {
                cursor = 0;
                ++epoch;
                Rng rng(derive_seed(cfg.seed, "align-shuffle-" + std::to_string(epoch)));
                rng.shuffle(order);
                resample_negatives(epoch);
            }
            batch.push_back(order[cursor++]);
            if (batch.size() == train.size()) break;  // tiny datasets
        }

        // fill caches outside the tape
        for (std::size_t i : batch) {
            if (tok_cache[i].empty()) tok_cache[i] = ctx.user_prompt_tokens(train[i].history);
        }

        Tape tape;
        Tensor lp, lua, lia, total;
        std::vector<std::vector<Tensor>> aligned_u, targets_u, aligned_i, targets_i;
        {
            TapeScope scope(tape);
            Tensor pair_sum;
            for (std::size_t i : batch) {
                const AlignSample& s = train[i];
                Tensor u_emb = ctx.id_emb->user_embedding(s.history);
                HybridEncodeResult ur =
                    encode_hybrid(ctx, params, tok_cache[i], u_emb, Side::kUser);
                HybridEncodeResult pr = encode_item(ctx, params, s.pos_item);
                HybridEncodeResult nr = encode_item(ctx, params, negatives[i]);
                Tensor pair = bpr_pair_loss(score(ur.final_pooled, pr.final_pooled),
                                            score(ur.final_pooled, nr.final_pooled));
                pair_sum = pair_sum.defined() ? add(pair_sum, pair) : pair;

                if (user_target_cache[i].empty())
                    user_target_cache[i] = plain_targets(ctx, tok_cache[i], ur.aligned_layers);
                if (!item_target_cache.count(s.pos_item))
                    item_target_cache[s.pos_item] = plain_targets(
                        ctx, ctx.item_tokens.at(static_cast<std::size_t>(s.pos_item)),
                        pr.aligned_layers);

                aligned_u.push_back(std::move(ur.aligned));
                targets_u.push_back(user_target_cache[i]);
                aligned_i.push_back(std::move(pr.aligned));
                targets_i.push_back(item_target_cache[s.pos_item]);
            }
            lp = add(pair_sum, scale(l2_penalty(params.params), cfg.hyper.lambda_reg));
            if (cfg.hyper.lambda_align > 0.0) {
                lua = infonce_alignment_loss(aligned_u, targets_u, cfg.hyper.temperature);
                lia = infonce_alignment_loss(aligned_i, targets_i, cfg.hyper.temperature);
                total = total_loss(lp, lua, lia, cfg.hyper.lambda_align);
            } else {
                total = lp;
            }
        }
        if (cfg.hyper.lambda_align <= 0.0) {
            // monitored only; no tape is active here
            lua = infonce_alignment_loss(aligned_u, targets_u, cfg.hyper.temperature);
            lia = infonce_alignment_loss(aligned_i, targets_i, cfg.hyper.temperature);
        }
        if (!total.all_finite())
            throw NumericError("train_alignment: non-finite loss at step " +
                               std::to_string(step));

        tape.backward(total);
        GradMap grads = collect_grads(params.params);
        optimizer_step(params.params, grads, opt);
        zero_grads(params.params);

        rep.history.push_back(
            {step, lp.item(), lua.item(), lia.item(), total.item()});
    }

    rep.post_cosine = mean_alignment_cosine(ctx, params, heldout);
    ctx.encoder->verify_frozen();
    ctx.id_emb->verify_frozen();
    return rep;
}

namespace {

class HybridRankingModel : public RankingModel {
public:
    HybridRankingModel(const AlignmentContext& ctx, const AlignmentParams& params)
        : ctx_(&ctx), params_(&params) {}
    std::string name() const override { return "hybrid_" + rarec::to_string(params_->variant); }
    int dim() const override { return ctx_->encoder->cfg.hidden_dim; }
    std::vector<double> user_vector(int, const std::vector<int>& history) const override {
        return encode_user(*ctx_, *params_, history).final_pooled.values();
    }
    std::vector<double> item_vector(int item) const override {
        return encode_item(*ctx_, *params_, item).final_pooled.values();
    }
    std::uint64_t checksum() const override {
        return ctx_->encoder->checksum ^ ctx_->id_emb->checksum ^
               content_checksum(params_->params);
    }

private:
    const AlignmentContext* ctx_;
    const AlignmentParams* params_;
};

class TextRankingModel : public RankingModel {
public:
    explicit TextRankingModel(const AlignmentContext& ctx) : ctx_(&ctx) {}
    std::string name() const override { return "text_only"; }
    int dim() const override { return ctx_->encoder->cfg.hidden_dim; }
    std::vector<double> user_vector(int, const std::vector<int>& history) const override {
        LayerStates st = encode_plain(*ctx_->encoder, ctx_->user_prompt_tokens(history));
        return mean_rows(st.states.back()).values();
    }
    std::vector<double> item_vector(int item) const override {
        LayerStates st = encode_plain(*ctx_->encoder,
                                      ctx_->item_tokens.at(static_cast<std::size_t>(item)));
        return mean_rows(st.states.back()).values();
    }
    std::uint64_t checksum() const override { return ctx_->encoder->checksum; }

private:
    const AlignmentContext* ctx_;
};

class IdRankingModel : public RankingModel {
public:
    explicit IdRankingModel(const IdEmbeddings& emb) : emb_(&emb) {}
    std::string name() const override { return "id_only"; }
    int dim() const override { return emb_->dim; }
    std::vector<double> user_vector(int, const std::vector<int>& history) const override {
        return emb_->user_embedding(history).values();
    }
    std::vector<double> item_vector(int item) const override {
        return emb_->item_embedding(item).values();
    }
    std::uint64_t checksum() const override { return emb_->checksum; }

private:
    const IdEmbeddings* emb_;
};

}  // namespace

std::unique_ptr<RankingModel> make_hybrid_model(const AlignmentContext& ctx,
                                                const AlignmentParams& params) {
    return std::make_unique<HybridRankingModel>(ctx, params);
}

std::unique_ptr<RankingModel> make_text_model(const AlignmentContext& ctx) {
    return std::make_unique<TextRankingModel>(ctx);
}

std::unique_ptr<RankingModel> make_id_ranker(const IdEmbeddings& emb) {
    return std::make_unique<IdRankingModel>(emb);
}

}  // namespace rarec

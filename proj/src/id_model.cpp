#include "rarec/id_model.hpp"

#include <algorithm>
#include <cmath>

#include "rarec/checkpoint.hpp"
#include "rarec/ops.hpp"
#include "rarec/optimizer.hpp"
#include "rarec/rng.hpp"

namespace rarec {

Tensor IdEmbeddings::user_embedding(const std::vector<int>& history) const {
    if (history.empty()) throw ShapeError("user_embedding: empty history");
    const Tensor& table = p("id.item_table");
    const int m = table.dim(0);
    for (int it : history)
        if (it < 0 || it >= m) throw DataError("user_embedding: unknown item " + std::to_string(it));

    std::vector<int> window = history;
    if (static_cast<int>(window.size()) > history_window)
        window.erase(window.begin(),
                     window.end() - static_cast<std::ptrdiff_t>(history_window));

    Tensor rows = embedding_lookup(table, window);                    // [T, d]
    Tensor scores = matmul(tanh_op(matmul(rows, p("id.pool_w"))), p("id.pool_v"));  // [T]
    Tensor weights = softmax_rows(scores);
    Tensor pooled = matmul(reshape(weights, {1, static_cast<int>(window.size())}), rows);
    return reshape(pooled, {dim});
}

Tensor IdEmbeddings::item_embedding(int item) const {
    const Tensor& table = p("id.item_table");
    if (item < 0 || item >= table.dim(0))
        throw DataError("item_embedding: unknown item " + std::to_string(item));
    return reshape(slice_rows(table, item, item + 1), {dim});
}

void IdEmbeddings::freeze() {
    for (auto& [name, t] : params) {
        (void)name;
        t.set_requires_grad(false);
    }
    snap_to_f32(params);
    checksum = content_checksum(params);
    frozen = true;
}

void IdEmbeddings::verify_frozen() const {
    if (!frozen) throw FrozenViolation("id embeddings were never frozen");
    if (content_checksum(params) != checksum)
        throw FrozenViolation("id embeddings changed while frozen");
}

namespace {

struct IdSample {
    int user;
    int pos;
    int hist_begin;  // window into the user's train sequence
    int hist_end;    // exclusive; positive sits at hist_end
};

double heldout_loss(const IdEmbeddings& emb, const SplitDataset& split, std::uint64_t seed) {
    Rng rng(seed);
    const int m = static_cast<int>(emb.num_items());
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t u = 0; u < split.data.num_users(); ++u) {
        const auto& hist = split.train_seq[u];
        if (hist.empty()) continue;
        Tensor uvec = emb.user_embedding(hist);
        const int pos = split.val_item[u];
        int neg = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        if (neg == pos) neg = (neg + 1) % m;
        const double delta =
            dot(uvec, emb.item_embedding(pos)).item() - dot(uvec, emb.item_embedding(neg)).item();
        total += -(delta >= 0.0 ? -std::log1p(std::exp(-delta)) : delta - std::log1p(std::exp(delta)));
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

IdEmbeddings train_id_model(const SplitDataset& split, const IdModelConfig& cfg,
                            IdTrainReport* report, const IdEmbeddings* resume_from) {
    cfg.validate();
    if (resume_from && resume_from->frozen)
        throw FrozenViolation("train_id_model: embeddings are frozen");
    const Dataset& data = split.data;
    if (data.num_users() == 0 || data.num_interactions() == 0)
        throw DataError("train_id_model: empty dataset");
    const int m = static_cast<int>(data.num_items());
    if (m < 2) throw DataError("train_id_model: need at least 2 items to sample negatives");

    IdEmbeddings emb;
    if (resume_from) {
        emb = *resume_from;
    } else {
        emb.dim = cfg.dim;
        emb.history_window = cfg.history_window;
        emb.params.emplace("id.item_table",
                           init_trunc_normal({m, cfg.dim}, -0.02, 0.02, 0.01,
                                             derive_seed(cfg.rng_seed, "id.item_table")));
        emb.params.emplace("id.pool_w",
                           init_trunc_normal({cfg.dim, cfg.dim}, -0.02, 0.02, 0.01,
                                             derive_seed(cfg.rng_seed, "id.pool_w")));
        emb.params.emplace("id.pool_v",
                           init_trunc_normal({cfg.dim}, -0.02, 0.02, 0.01,
                                             derive_seed(cfg.rng_seed, "id.pool_v")));
    }
    for (auto& [name, t] : emb.params) {
        (void)name;
        t.set_requires_grad(true);
    }

    // sequential expansion of the training split
    std::vector<IdSample> samples;
    for (std::size_t u = 0; u < data.num_users(); ++u) {
        const auto& seq = split.train_seq[u];
        for (std::size_t p = 1; p < seq.size(); ++p) {
            const int pi = static_cast<int>(p);
            samples.push_back({static_cast<int>(u), seq[p],
                               std::max(0, pi - cfg.history_window), pi});
        }
    }
    if (samples.empty()) throw DataError("train_id_model: no training pairs");

    std::vector<std::vector<char>> user_seen(data.num_users());
    for (std::size_t u = 0; u < data.num_users(); ++u) {
        user_seen[u].assign(static_cast<std::size_t>(m), 0);
        for (int it : data.user_seqs[u]) user_seen[u][static_cast<std::size_t>(it)] = 1;
    }

    IdTrainReport rep;
    rep.initial_heldout_loss = heldout_loss(emb, split, derive_seed(cfg.rng_seed, "id-heldout"));

    const std::int64_t steps_per_epoch =
        static_cast<std::int64_t>((samples.size() + cfg.batch_size - 1) / cfg.batch_size);
    OptimizerState opt;
    opt.base_lr = cfg.learning_rate;
    opt.weight_decay = 0.0;
    opt.total_steps = steps_per_epoch * cfg.epochs;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.rng_seed, "id-epoch-" + std::to_string(epoch)));
        rng.shuffle(order);
        double epoch_total = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                for (std::size_t i = start; i < end; ++i) {
                    const IdSample& s = samples[order[i]];
                    const auto& seq = split.train_seq[static_cast<std::size_t>(s.user)];
                    std::vector<int> hist(seq.begin() + s.hist_begin, seq.begin() + s.hist_end);
                    Tensor uvec = emb.user_embedding(hist);
                    Tensor pos_vec = emb.item_embedding(s.pos);
                    Tensor pos_score = dot(uvec, pos_vec);
                    for (int k = 0; k < cfg.negatives_per_positive; ++k) {
                        int neg;
                        do {
                            neg = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
                        } while (user_seen[static_cast<std::size_t>(s.user)]
                                          [static_cast<std::size_t>(neg)]);
                        Tensor neg_score = dot(uvec, emb.item_embedding(neg));
                        Tensor nll = scale(log_sigmoid(sub(pos_score, neg_score)), -1.0);
                        loss = loss.defined() ? add(loss, nll) : nll;
                    }
                }
            }
            check_finite(loss, "id-model batch loss");
            tape.backward(loss);
            GradMap grads = collect_grads(emb.params);
            optimizer_step(emb.params, grads, opt);
            zero_grads(emb.params);
            epoch_total += loss.item();
            epoch_count += end - start;
        }
        rep.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_count));
    }

    rep.final_heldout_loss = heldout_loss(emb, split, derive_seed(cfg.rng_seed, "id-heldout"));
    if (report) *report = rep;
    return emb;
}

}  // namespace rarec

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rarec/data.hpp"
#include "rarec/encoder.hpp"
#include "rarec/eval.hpp"
#include "rarec/id_model.hpp"
#include "rarec/optimizer.hpp"
#include "rarec/prompts.hpp"
#include "rarec/tokenizer.hpp"

namespace rarec {

enum class Variant { kFull, kNoReparam, kNoConInstruction, kInputsOnly, kProjectInputs };

Variant variant_from(const std::string& name);
std::string to_string(Variant v);

enum class Side { kUser, kItem };

// The only trainable state: per-layer affine projectors that map ID
// embeddings into the encoder's hidden space, and per-layer contextual
// prefix rows prepended to the projected embedding. Ablation variants keep
// only the tensors their architecture uses.
struct AlignmentParams {
    int num_layers = 0;  // L; projectors exist for layers 0..L
    int id_dim = 0;
    int hidden_dim = 0;
    int prefix_len = 2;
    Variant variant = Variant::kFull;
    ParameterSet params;

    static AlignmentParams init(int num_layers, int id_dim, int hidden_dim, int prefix_len,
                                Variant variant, std::uint64_t seed);

    const Tensor& p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw CheckpointError("alignment parameter missing: " + name);
        return it->second;
    }
    std::size_t trainable_count() const;
    void set_trainable(bool trainable);
};

struct AlignmentHyperparams {
    double temperature = 0.5;
    double lambda_align = 0.1;
    double lambda_reg = 1e-6;
    int batch_size = 16;
    int steps = 800;
    double learning_rate = 5e-4;
    int prefix_len = 2;
    int max_history_titles = 10;
    Variant variant = Variant::kFull;

    void validate() const {
        if (!(temperature > 0.0)) throw ConfigError("alignment: temperature must be > 0");
        if (lambda_align < 0.0 || lambda_reg < 0.0)
            throw ConfigError("alignment: loss weights must be >= 0");
        if (batch_size < 1 || steps < 1) throw ConfigError("alignment: batch/steps must be >= 1");
        if (prefix_len < 0) throw ConfigError("alignment: prefix_len must be >= 0");
    }
};

// Frozen components plus prompt/tokenizer wiring. Item prompt tokens are
// precomputed so concurrent readers never mutate shared state.
struct AlignmentContext {
    const EncoderWeights* encoder = nullptr;
    const IdEmbeddings* id_emb = nullptr;
    const Dataset* data = nullptr;
    PromptTemplate user_template;
    PromptTemplate item_template;
    Tokenizer tokenizer;
    int max_history_titles = 10;
    std::vector<std::vector<int>> item_tokens;
    Tensor tok_emb_transposed;  // for the project-inputs ablation

    static AlignmentContext build(const EncoderWeights& encoder, const IdEmbeddings& id_emb,
                                  const Dataset& data, const PromptTemplate& user_template,
                                  const PromptTemplate& item_template, int max_history_titles);

    std::vector<int> user_prompt_tokens(const std::vector<int>& history) const;
};

struct HybridEncodeResult {
    std::vector<Tensor> pooled_layers;  // pooled h^(l), l = 0..L
    std::vector<Tensor> aligned;        // pooled injected representations
    std::vector<int> aligned_layers;    // pairing layer per aligned vector
    Tensor final_pooled;                // the scoring representation
};

// p^(l) = W^(l) e + b^(l); the no-reparameterization variant reuses the
// layer-0 projector everywhere.
Tensor reparameterize(const AlignmentParams& params, const Tensor& embedding, int layer,
                      Side side);

// d^(l) = rows(c^(l)) followed by the projected embedding row.
Tensor contextualize(const AlignmentParams& params, const Tensor& projected, int layer,
                     Side side);

HybridEncodeResult encode_user(const AlignmentContext& ctx, const AlignmentParams& params,
                               const std::vector<int>& history);
HybridEncodeResult encode_item(const AlignmentContext& ctx, const AlignmentParams& params,
                               int item);

Tensor score(const Tensor& user_repr, const Tensor& item_repr);

// Per-pair -ln sigma(pos - neg); callers add the l2 penalty once per batch.
Tensor bpr_pair_loss(const Tensor& pos_score, const Tensor& neg_score);
Tensor l2_penalty(const ParameterSet& params);

// In-batch InfoNCE, averaged over batch and layers; sim is cosine, logits
// divided by tau, denominators via log-sum-exp.
Tensor infonce_alignment_loss(const std::vector<std::vector<Tensor>>& aligned,
                              const std::vector<std::vector<Tensor>>& targets,
                              double temperature);

Tensor total_loss(const Tensor& prediction_loss, const Tensor& user_align_loss,
                  const Tensor& item_align_loss, double lambda);

struct AlignTrainReport {
    struct Row {
        int step;
        double lp, lua, lia, total;
    };
    std::vector<Row> history;
    double pre_cosine = 0.0;   // mean per-layer cos(aligned, target) on held-out batch
    double post_cosine = 0.0;
    std::size_t trainable_count = 0;
};

struct AlignTrainConfig {
    AlignmentHyperparams hyper;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
};

// Trains only AlignmentParams; encoder and ID-embedding checksums are
// verified before and after, and a non-finite loss aborts with the step.
AlignTrainReport train_alignment(const std::vector<AlignSample>& samples,
                                 const AlignmentContext& ctx, AlignmentParams& params,
                                 const AlignTrainConfig& cfg);

// Ranking-model views over the trained artifacts.
std::unique_ptr<RankingModel> make_hybrid_model(const AlignmentContext& ctx,
                                                const AlignmentParams& params);
std::unique_ptr<RankingModel> make_text_model(const AlignmentContext& ctx);
std::unique_ptr<RankingModel> make_id_ranker(const IdEmbeddings& emb);

}  // namespace rarec

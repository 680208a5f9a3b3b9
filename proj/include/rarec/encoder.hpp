#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rarec/ops.hpp"
#include "rarec/tensor.hpp"

namespace rarec {

struct EncoderConfig {
    int num_layers = 4;
    int hidden_dim = 64;
    int num_heads = 4;
    int ffn_dim = 256;
    int vocab_size = 8192;
    int max_seq_len = 128;

    void validate() const {
        if (num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
        if (hidden_dim < 1 || num_heads < 1 || hidden_dim % num_heads != 0)
            throw ConfigError("encoder: hidden_dim must be divisible by num_heads");
        if (ffn_dim < 1) throw ConfigError("encoder: ffn_dim must be >= 1");
        if (vocab_size < 4) throw ConfigError("encoder: vocab_size too small");
        if (max_seq_len < 1) throw ConfigError("encoder: max_seq_len must be >= 1");
    }
};

// Frozen small bidirectional encoder standing in for the language model:
// token + learned position embeddings, post-LN blocks, GELU feed-forward.
// Attention logits are scaled by 1/sqrt(hidden_dim).
struct EncoderWeights {
    EncoderConfig cfg;
    ParameterSet params;
    bool frozen = false;
    std::uint64_t checksum = 0;

    static EncoderWeights init(const EncoderConfig& cfg, std::uint64_t seed);

    const Tensor& p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw CheckpointError("encoder parameter missing: " + name);
        return it->second;
    }

    void set_trainable(bool trainable);
    void freeze();                // snaps to f32, checksums, marks immutable
    void verify_frozen() const;   // throws FrozenViolation on any drift
};

// Hidden states h^(l), l = 0..L; h^(0) is the embedding output.
struct LayerStates {
    std::vector<Tensor> states;
};

// Per-layer, per-head attention matrices for tests.
struct AttentionCapture {
    std::vector<Tensor> probs;
};

LayerStates encode_plain(const EncoderWeights& w, const std::vector<int>& tokens,
                         AttentionCapture* capture = nullptr);

// Prefix-modified attention: queries come from text positions only, while
// keys and values extend over Concat(prefix, states). Expects L+1 prefix
// matrices [p, hidden]; block l consumes the prefix indexed by its input
// state l-1, so the last entry only feeds the alignment loss. Zero-row
// prefixes reproduce encode_plain bitwise.
LayerStates encode_with_prefix(const EncoderWeights& w, const std::vector<int>& tokens,
                               const std::vector<Tensor>& layer_prefixes,
                               AttentionCapture* capture = nullptr);

// Prepends already-projected rows to the embedding sequence (the
// feed-as-inputs ablations); the rows travel through every block as real
// positions.
LayerStates encode_with_input_rows(const EncoderWeights& w, const std::vector<int>& tokens,
                                   const Tensor& rows);

// Mean over sequence positions of h^(layer).
Tensor pool_representation(const LayerStates& states, int layer);

// Brief masked-word warmup on item titles so the frozen states carry word
// co-occurrence structure. Trains all encoder weights; callers freeze after.
struct WarmupReport {
    double first_loss = 0.0;
    double last_loss = 0.0;
};
WarmupReport warm_encoder(EncoderWeights& w, const std::vector<std::vector<int>>& title_tokens,
                          int steps, int batch_size, double lr, std::uint64_t seed);

}  // namespace rarec

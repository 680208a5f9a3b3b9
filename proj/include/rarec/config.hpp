#pragma once

#include <cstdint>
#include <string>

#include "rarec/alignment.hpp"
#include "rarec/data.hpp"
#include "rarec/encoder.hpp"
#include "rarec/id_model.hpp"

namespace rarec {

// Flat-sectioned `key = value` run configuration. Every field has a default;
// unknown sections or keys are rejected; the effective (merged) config is
// echoed into the output directory by every command.
struct RunConfig {
    // [run]
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    int threads = 1;

    // [dataset]
    std::string dataset_path;   // empty -> <out_dir>/dataset.jsonl
    std::string template_path;  // empty -> built-in default template

    // [synthetic]
    SyntheticConfig synthetic;

    // [id_model]
    IdModelConfig id_model;

    // [encoder]
    EncoderConfig encoder;
    int encoder_warm_steps = 200;
    int encoder_warm_batch = 16;
    double encoder_warm_lr = 1e-3;

    // [alignment]
    AlignmentHyperparams alignment;

    // [optimizer]
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double weight_decay = 0.01;

    // [align_set]
    std::uint64_t align_set_size = 0;  // 0 -> 10% of the pool
    std::string align_set_mode = "efficient";
    int user_buckets = 4;
    int item_buckets = 4;

    // [export]
    int export_count = 32;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    std::string serialize() const;

    std::string dataset_file() const {
        return dataset_path.empty() ? out_dir + "/dataset.jsonl" : dataset_path;
    }
};

}  // namespace rarec

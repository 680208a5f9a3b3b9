#pragma once

#include <string>
#include <vector>

#include "rarec/config.hpp"

namespace rarec {

// Pipeline commands behind the CLI subcommands; each echoes the effective
// config into the output directory and writes its artifacts there.
void cmd_generate(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_build_align_set(const RunConfig& cfg);
void cmd_train_align(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_export(const RunConfig& cfg);

// Shared loading helpers (also used by tests and the acceptance suite).
SplitDataset load_split(const RunConfig& cfg);
IdEmbeddings load_id_checkpoint(const std::string& stem);
EncoderWeights load_encoder_checkpoint(const std::string& stem);
AlignmentParams load_alignment_checkpoint(const std::string& stem);
std::vector<AlignSample> read_align_set(const std::string& path, const SplitDataset& split);
void write_align_set(const std::string& path, const std::vector<AlignSample>& samples,
                     const SplitDataset& split);

PromptTemplate user_template_for(const RunConfig& cfg);

}  // namespace rarec

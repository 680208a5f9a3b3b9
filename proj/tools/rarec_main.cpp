#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "rarec/commands.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string variant;
    std::string mode;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "run configuration file");
    sub->add_option("--out", args.out_dir, "output directory override");
    sub->add_option("--seed", args.seed, "global seed override")
        ->each([&args](const std::string&) { args.seed_given = true; });
}

rarec::RunConfig effective_config(const CommonArgs& args) {
    rarec::RunConfig cfg;
    if (!args.config_path.empty()) cfg = rarec::RunConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed_given) cfg.seed = args.seed;
    if (!args.variant.empty()) cfg.alignment.variant = rarec::variant_from(args.variant);
    if (!args.mode.empty()) {
        rarec::align_set_mode_from(args.mode);  // validate
        cfg.align_set_mode = args.mode;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RA-Rec pipeline: synthetic data, ID pretraining, alignment tuning, evaluation"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* generate = app.add_subcommand("generate", "write a synthetic interaction corpus");
    auto* pretrain = app.add_subcommand("pretrain", "train and freeze the ID model");
    auto* build = app.add_subcommand("build-align-set", "construct the alignment tuning set");
    auto* train = app.add_subcommand("train-align", "train the alignment parameters");
    auto* eval = app.add_subcommand("eval", "rank the test set and report metrics");
    auto* exp = app.add_subcommand("export", "dump aligned/text/id vectors for visualization");
    for (CLI::App* sub : {generate, pretrain, build, train, eval, exp}) add_common(sub, args);
    train->add_option("--variant", args.variant,
                      "full|no_reparam|no_con_instruction|inputs_only|project_inputs");
    build->add_option("--mode", args.mode, "efficient|random|all");

    CLI11_PARSE(app, argc, argv);

    try {
        const rarec::RunConfig cfg = effective_config(args);
        if (generate->parsed()) rarec::cmd_generate(cfg);
        if (pretrain->parsed()) rarec::cmd_pretrain(cfg);
        if (build->parsed()) rarec::cmd_build_align_set(cfg);
        if (train->parsed()) rarec::cmd_train_align(cfg);
        if (eval->parsed()) rarec::cmd_eval(cfg);
        if (exp->parsed()) rarec::cmd_export(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error class=%s msg=\"%s\"\n", rarec::error_class(e), e.what());
        return 1;
    }
    return 0;
}

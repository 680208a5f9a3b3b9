#include "rarec/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rarec/checkpoint.hpp"
#include "rarec/rng.hpp"

namespace rarec {

namespace {

namespace fs = std::filesystem;

void prepare_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream f(cfg.out_dir + "/effective_config.ini", std::ios::trunc);
    if (!f) throw DataError("cannot write effective config to " + cfg.out_dir);
    f << cfg.serialize();
}

std::string fmt17(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << text;
    f.close();
    if (!f) throw DataError("short write to " + path);
}

}  // namespace

PromptTemplate user_template_for(const RunConfig& cfg) {
    if (cfg.template_path.empty()) return PromptTemplate::default_user();
    return PromptTemplate::load(cfg.template_path);
}

SplitDataset load_split(const RunConfig& cfg) {
    LoadReport rep;
    auto raw = load_interactions(cfg.dataset_file(), &rep);
    if (rep.malformed > 0)
        std::fprintf(stderr, "[data] skipped %zu malformed of %zu lines\n", rep.malformed,
                     rep.total_lines);
    if (raw.empty()) std::fprintf(stderr, "[data] warning: empty interaction file\n");
    return leave_one_out_split(preprocess(raw));
}

void cmd_generate(const RunConfig& cfg) {
    SyntheticConfig syn = cfg.synthetic;
    syn.seed = derive_seed(cfg.seed, "generate");
    // validation happens before any file is touched
    auto rows = generate_synthetic(syn);
    prepare_out_dir(cfg);
    write_interactions(cfg.dataset_file(), rows);
    std::printf("generate: wrote %zu interactions (%d users, %d items, %d clusters) to %s\n",
                rows.size(), syn.num_users, syn.num_items, syn.num_clusters,
                cfg.dataset_file().c_str());
}

void cmd_pretrain(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    SplitDataset split = load_split(cfg);
    const Dataset& data = split.data;
    std::printf("pretrain: %zu users, %zu items, %zu interactions\n", data.num_users(),
                data.num_items(), data.num_interactions());

    // role-tagged split export
    {
        std::vector<Interaction> rows;
        std::vector<std::string> roles;
        for (std::size_t u = 0; u < data.num_users(); ++u) {
            const auto& seq = data.user_seqs[u];
            for (std::size_t k = 0; k < seq.size(); ++k) {
                rows.push_back({data.user_ids[u], data.item_ids[static_cast<std::size_t>(seq[k])],
                                data.user_times[u][k],
                                data.item_titles[static_cast<std::size_t>(seq[k])]});
                if (k + 2 < seq.size())
                    roles.push_back("train");
                else if (k + 2 == seq.size())
                    roles.push_back("val");
                else
                    roles.push_back("test");
            }
        }
        write_interactions(cfg.out_dir + "/split.jsonl", rows, &roles);
    }

    IdModelConfig idc = cfg.id_model;
    idc.rng_seed = derive_seed(cfg.seed, "pretrain");
    IdTrainReport rep;
    IdEmbeddings emb = train_id_model(split, idc, &rep);
    emb.freeze();

    std::printf("pretrain: heldout loss %.6f -> %.6f; epoch losses:", rep.initial_heldout_loss,
                rep.final_heldout_loss);
    for (double l : rep.epoch_loss) std::printf(" %.6f", l);
    std::printf("\n");

    Checkpoint ckpt;
    ckpt.tensors = emb.params;
    ckpt.set_meta("seed", std::to_string(cfg.seed));
    ckpt.set_meta("dim", std::to_string(emb.dim));
    ckpt.set_meta("history_window", std::to_string(emb.history_window));
    save_checkpoint(ckpt, cfg.out_dir + "/id_model");

    std::ostringstream map;
    for (std::size_t i = 0; i < data.num_items(); ++i)
        map << data.item_ids[i] << "\t" << i << "\n";
    write_text(cfg.out_dir + "/item_index.tsv", map.str());
    std::printf("pretrain: checkpoint at %s/id_model.{manifest,tensors}\n", cfg.out_dir.c_str());
}

IdEmbeddings load_id_checkpoint(const std::string& stem) {
    Checkpoint ckpt = load_checkpoint(stem);
    IdEmbeddings emb;
    emb.params = ckpt.tensors;
    emb.dim = std::stoi(ckpt.meta_or("dim", "0"));
    emb.history_window = std::stoi(ckpt.meta_or("history_window", "50"));
    if (emb.dim == 0) emb.dim = emb.p("id.item_table").dim(1);
    for (auto& [name, t] : emb.params) {
        (void)name;
        t.set_requires_grad(false);
    }
    emb.frozen = true;
    emb.checksum = content_checksum(emb.params);
    return emb;
}

EncoderWeights load_encoder_checkpoint(const std::string& stem) {
    Checkpoint ckpt = load_checkpoint(stem);
    EncoderWeights w;
    std::istringstream arch(ckpt.meta_or("arch", ""));
    arch >> w.cfg.num_layers >> w.cfg.hidden_dim >> w.cfg.num_heads >> w.cfg.ffn_dim >>
        w.cfg.vocab_size >> w.cfg.max_seq_len;
    if (!arch) throw CheckpointError("encoder checkpoint missing arch meta");
    w.cfg.validate();
    w.params = ckpt.tensors;
    for (auto& [name, t] : w.params) {
        (void)name;
        t.set_requires_grad(false);
    }
    w.frozen = true;
    w.checksum = content_checksum(w.params);
    return w;
}

AlignmentParams load_alignment_checkpoint(const std::string& stem) {
    Checkpoint ckpt = load_checkpoint(stem);
    AlignmentParams a;
    std::istringstream arch(ckpt.meta_or("arch", ""));
    std::string variant_name;
    arch >> a.num_layers >> a.id_dim >> a.hidden_dim >> a.prefix_len >> variant_name;
    if (!arch) throw CheckpointError("alignment checkpoint missing arch meta");
    a.variant = variant_from(variant_name);
    a.params = ckpt.tensors;
    a.set_trainable(false);
    return a;
}

void write_align_set(const std::string& path, const std::vector<AlignSample>& samples,
                     const SplitDataset& split) {
    const Dataset& data = split.data;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    for (const auto& s : samples) {
        nlohmann::json j;
        j["user_id"] = data.user_ids[static_cast<std::size_t>(s.user)];
        j["item_id"] = data.item_ids[static_cast<std::size_t>(s.pos_item)];
        j["timestamp"] = data.user_times[static_cast<std::size_t>(s.user)]
                                        [static_cast<std::size_t>(s.pos_index)];
        j["title"] = data.item_titles[static_cast<std::size_t>(s.pos_item)];
        j["role"] = "align";
        j["pos_index"] = s.pos_index;
        j["neg_item_id"] = data.item_ids[static_cast<std::size_t>(s.neg_item)];
        f << j.dump() << "\n";
    }
    f.close();
    if (!f) throw DataError("short write to " + path);
}

std::vector<AlignSample> read_align_set(const std::string& path, const SplitDataset& split) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open align set: " + path);
    const Dataset& data = split.data;
    std::vector<AlignSample> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        AlignSample s;
        s.user = data.user_index(j.at("user_id").get<std::string>());
        s.pos_item = data.item_index(j.at("item_id").get<std::string>());
        s.neg_item = data.item_index(j.at("neg_item_id").get<std::string>());
        s.pos_index = j.at("pos_index").get<int>();
        if (s.user < 0 || s.pos_item < 0 || s.neg_item < 0)
            throw DataError("align set references ids missing from the dataset");
        const auto& seq = split.train_seq[static_cast<std::size_t>(s.user)];
        if (s.pos_index < 1 || static_cast<std::size_t>(s.pos_index) >= seq.size() ||
            seq[static_cast<std::size_t>(s.pos_index)] != s.pos_item)
            throw DataError("align set out of sync with the dataset split");
        s.history.assign(seq.begin(), seq.begin() + s.pos_index);
        out.push_back(std::move(s));
    }
    if (out.empty()) throw DataError("align set is empty: " + path);
    return out;
}

void cmd_build_align_set(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    SplitDataset split = load_split(cfg);
    EfficientSetReport rep;
    auto samples = build_efficient_set(split, cfg.align_set_size,
                                       derive_seed(cfg.seed, "align-set"),
                                       align_set_mode_from(cfg.align_set_mode),
                                       cfg.user_buckets, cfg.item_buckets, &rep);
    write_align_set(cfg.out_dir + "/align_set.jsonl", samples, split);

    std::ostringstream report;
    report << "mode " << cfg.align_set_mode << "\n";
    report << "pool_size " << rep.pool_size << "\n";
    report << "after_denoise " << rep.after_denoise << "\n";
    report << "selected " << rep.selected << "\n";
    std::size_t sum = 0;
    for (const auto& [cell, count] : rep.cell_counts) {
        report << "cell " << cell << " " << count << "\n";
        sum += count;
    }
    if (!rep.cell_counts.empty()) report << "cell_total " << sum << "\n";
    write_text(cfg.out_dir + "/align_set_report.txt", report.str());
    std::printf("build-align-set: pool=%zu after_denoise=%zu selected=%zu (%s)\n", rep.pool_size,
                rep.after_denoise, rep.selected, cfg.align_set_mode.c_str());
}

void cmd_train_align(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    SplitDataset split = load_split(cfg);
    IdEmbeddings id_emb = load_id_checkpoint(cfg.out_dir + "/id_model");
    auto samples = read_align_set(cfg.out_dir + "/align_set.jsonl", split);

    EncoderWeights enc = EncoderWeights::init(cfg.encoder, derive_seed(cfg.seed, "encoder-init"));
    if (cfg.encoder_warm_steps > 0) {
        Tokenizer tok(cfg.encoder.vocab_size);
        std::vector<std::vector<int>> titles;
        for (const auto& t : split.data.item_titles) titles.push_back(tok.tokenize(t));
        WarmupReport wrep = warm_encoder(enc, titles, cfg.encoder_warm_steps,
                                         cfg.encoder_warm_batch, cfg.encoder_warm_lr,
                                         derive_seed(cfg.seed, "encoder-warm"));
        std::printf("train-align: encoder warmup loss %.4f -> %.4f\n", wrep.first_loss,
                    wrep.last_loss);
    }
    enc.freeze();
    {
        Checkpoint ckpt;
        ckpt.tensors = enc.params;
        std::ostringstream arch;
        arch << enc.cfg.num_layers << " " << enc.cfg.hidden_dim << " " << enc.cfg.num_heads << " "
             << enc.cfg.ffn_dim << " " << enc.cfg.vocab_size << " " << enc.cfg.max_seq_len;
        ckpt.set_meta("arch", arch.str());
        ckpt.set_meta("tokenizer",
                      std::string(Tokenizer::kHashId) + " " + std::to_string(enc.cfg.vocab_size));
        ckpt.set_meta("seed", std::to_string(cfg.seed));
        save_checkpoint(ckpt, cfg.out_dir + "/encoder");
    }

    AlignmentParams params = AlignmentParams::init(
        cfg.encoder.num_layers, id_emb.dim, cfg.encoder.hidden_dim, cfg.alignment.prefix_len,
        cfg.alignment.variant, derive_seed(cfg.seed, "align-init"));

    const std::size_t closed_form =
        2ull * static_cast<std::size_t>(cfg.encoder.num_layers + 1) *
            (static_cast<std::size_t>(cfg.encoder.hidden_dim) *
                 static_cast<std::size_t>(id_emb.dim) +
             static_cast<std::size_t>(cfg.encoder.hidden_dim)) +
        2ull * static_cast<std::size_t>(cfg.encoder.num_layers + 1) *
            (static_cast<std::size_t>(params.prefix_len) *
             static_cast<std::size_t>(cfg.encoder.hidden_dim));
    std::printf("train-align: variant=%s trainable parameters=%zu (full-variant closed form %zu)\n",
                to_string(params.variant).c_str(), params.trainable_count(), closed_form);

    AlignmentContext ctx =
        AlignmentContext::build(enc, id_emb, split.data, user_template_for(cfg),
                                PromptTemplate::default_item(), cfg.alignment.max_history_titles);

    AlignTrainConfig tc;
    tc.hyper = cfg.alignment;
    tc.adam_beta1 = cfg.adam_beta1;
    tc.adam_beta2 = cfg.adam_beta2;
    tc.weight_decay = cfg.weight_decay;
    tc.seed = derive_seed(cfg.seed, "train-align");
    AlignTrainReport rep = train_alignment(samples, ctx, params, tc);

    std::ostringstream log;
    log << "step\tL_p\tL_ua\tL_ia\ttotal\n";
    for (const auto& row : rep.history)
        log << row.step << "\t" << fmt17(row.lp) << "\t" << fmt17(row.lua) << "\t"
            << fmt17(row.lia) << "\t" << fmt17(row.total) << "\n";
    write_text(cfg.out_dir + "/align_loss.tsv", log.str());

    Checkpoint ckpt;
    ckpt.tensors = params.params;
    std::ostringstream arch;
    arch << params.num_layers << " " << params.id_dim << " " << params.hidden_dim << " "
         << params.prefix_len << " " << to_string(params.variant);
    ckpt.set_meta("arch", arch.str());
    ckpt.set_meta("seed", std::to_string(cfg.seed));
    ckpt.set_meta("pre_cosine", fmt17(rep.pre_cosine));
    ckpt.set_meta("post_cosine", fmt17(rep.post_cosine));
    ckpt.set_meta("encoder_checksum", to_hex(enc.checksum));
    ckpt.set_meta("id_checksum", to_hex(id_emb.checksum));
    save_checkpoint(ckpt, cfg.out_dir + "/alignment");

    std::printf("train-align: %d steps, final total loss %.6f, alignment cosine %.4f -> %.4f\n",
                cfg.alignment.steps, rep.history.back().total, rep.pre_cosine, rep.post_cosine);
}

void cmd_eval(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    SplitDataset split = load_split(cfg);
    IdEmbeddings id_emb = load_id_checkpoint(cfg.out_dir + "/id_model");
    EncoderWeights enc = load_encoder_checkpoint(cfg.out_dir + "/encoder");
    AlignmentParams params = load_alignment_checkpoint(cfg.out_dir + "/alignment");

    AlignmentContext ctx =
        AlignmentContext::build(enc, id_emb, split.data, user_template_for(cfg),
                                PromptTemplate::default_item(), cfg.alignment.max_history_titles);

    auto hybrid = make_hybrid_model(ctx, params);
    auto text = make_text_model(ctx);
    auto ident = make_id_ranker(id_emb);

    const int threads = cfg.threads;
    MetricsReport mh = evaluate(*hybrid, split, nullptr, threads);
    MetricsReport mt = evaluate(*text, split, nullptr, threads);
    MetricsReport mi = evaluate(*ident, split, nullptr, threads);

    write_text(cfg.out_dir + "/metrics_hybrid.txt", mh.table());
    write_text(cfg.out_dir + "/metrics_hybrid.line", mh.line() + "\n");
    write_text(cfg.out_dir + "/metrics_text.txt", mt.table());
    write_text(cfg.out_dir + "/metrics_text.line", mt.line() + "\n");
    write_text(cfg.out_dir + "/metrics_id.txt", mi.table());
    write_text(cfg.out_dir + "/metrics_id.line", mi.line() + "\n");

    CompareReport vs_text = compare(*hybrid, *text, split, threads);
    CompareReport vs_id = compare(*hybrid, *ident, split, threads);
    write_text(cfg.out_dir + "/compare_text.txt", vs_text.table(hybrid->name(), "text_only"));
    write_text(cfg.out_dir + "/compare_id.txt", vs_id.table(hybrid->name(), "id_only"));

    std::printf("eval hybrid: %s\n", mh.line().c_str());
    std::printf("eval text:   %s\n", mt.line().c_str());
    std::printf("eval id:     %s\n", mi.line().c_str());
}

void cmd_export(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    SplitDataset split = load_split(cfg);
    IdEmbeddings id_emb = load_id_checkpoint(cfg.out_dir + "/id_model");
    EncoderWeights enc = load_encoder_checkpoint(cfg.out_dir + "/encoder");
    AlignmentParams params = load_alignment_checkpoint(cfg.out_dir + "/alignment");
    AlignmentContext ctx =
        AlignmentContext::build(enc, id_emb, split.data, user_template_for(cfg),
                                PromptTemplate::default_item(), cfg.alignment.max_history_titles);

    const Dataset& data = split.data;
    Rng rng(derive_seed(cfg.seed, "export"));
    const std::size_t n_users =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.export_count), data.num_users());
    const std::size_t n_items =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.export_count), data.num_items());
    std::vector<std::size_t> users(data.num_users()), items(data.num_items());
    for (std::size_t i = 0; i < users.size(); ++i) users[i] = i;
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
    rng.shuffle(users);
    rng.shuffle(items);
    users.resize(n_users);
    items.resize(n_items);
    std::sort(users.begin(), users.end());
    std::sort(items.begin(), items.end());

    Checkpoint ckpt;
    std::ostringstream labels;
    labels << "matrix\trow\tsource\tside\tlayer\tentity_id\n";

    auto put_matrix = [&](const std::string& name, const std::vector<std::vector<double>>& rows,
                          int width) {
        std::vector<double> flat;
        flat.reserve(rows.size() * static_cast<std::size_t>(width));
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        ckpt.tensors.emplace(name, Tensor::from({static_cast<int>(rows.size()), width},
                                                std::move(flat)));
    };

    const int L = enc.cfg.num_layers;
    const int dh = enc.cfg.hidden_dim;

    for (Side side : {Side::kUser, Side::kItem}) {
        const bool is_user = side == Side::kUser;
        const auto& picks = is_user ? users : items;
        const char* side_name = is_user ? "user" : "item";
        std::vector<std::vector<std::vector<double>>> aligned(static_cast<std::size_t>(L) + 1),
            text(static_cast<std::size_t>(L) + 1);
        std::vector<std::vector<double>> raw;
        for (std::size_t p : picks) {
            HybridEncodeResult hr;
            std::vector<int> tokens;
            Tensor id_vec;
            if (is_user) {
                const auto hist = split.test_history(static_cast<int>(p));
                hr = encode_user(ctx, params, hist);
                tokens = ctx.user_prompt_tokens(hist);
                id_vec = id_emb.user_embedding(hist);
            } else {
                hr = encode_item(ctx, params, static_cast<int>(p));
                tokens = ctx.item_tokens[p];
                id_vec = id_emb.item_embedding(static_cast<int>(p));
            }
            raw.push_back(id_vec.values());
            LayerStates st = encode_plain(enc, tokens);
            for (int l = 0; l <= L; ++l)
                text[static_cast<std::size_t>(l)].push_back(
                    pool_representation(st, l).values());
            for (std::size_t k = 0; k < hr.aligned.size(); ++k)
                aligned[static_cast<std::size_t>(hr.aligned_layers[k])].push_back(
                    hr.aligned[k].values());
        }
        for (int l = 0; l <= L; ++l) {
            const std::string tname =
                "export." + std::string(side_name) + ".text.l" + std::to_string(l);
            put_matrix(tname, text[static_cast<std::size_t>(l)], dh);
            for (std::size_t r = 0; r < picks.size(); ++r)
                labels << tname << "\t" << r << "\ttext\t" << side_name << "\t" << l << "\t"
                       << (is_user ? data.user_ids[picks[r]] : data.item_ids[picks[r]]) << "\n";
            if (!aligned[static_cast<std::size_t>(l)].empty()) {
                const std::string aname =
                    "export." + std::string(side_name) + ".aligned.l" + std::to_string(l);
                put_matrix(aname, aligned[static_cast<std::size_t>(l)], dh);
                for (std::size_t r = 0; r < picks.size(); ++r)
                    labels << aname << "\t" << r << "\taligned\t" << side_name << "\t" << l
                           << "\t"
                           << (is_user ? data.user_ids[picks[r]] : data.item_ids[picks[r]])
                           << "\n";
            }
        }
        const std::string rname = "export." + std::string(side_name) + ".id";
        put_matrix(rname, raw, id_emb.dim);
        for (std::size_t r = 0; r < picks.size(); ++r)
            labels << rname << "\t" << r << "\tid\t" << side_name << "\t-\t"
                   << (is_user ? data.user_ids[picks[r]] : data.item_ids[picks[r]]) << "\n";
    }

    ckpt.set_meta("seed", std::to_string(cfg.seed));
    ckpt.set_meta("users", std::to_string(n_users));
    ckpt.set_meta("items", std::to_string(n_items));
    save_checkpoint(ckpt, cfg.out_dir + "/export");
    write_text(cfg.out_dir + "/export_labels.tsv", labels.str());
    std::printf("export: %zu users, %zu items to %s/export.{manifest,tensors}\n", n_users,
                n_items, cfg.out_dir.c_str());
}

}  // namespace rarec

#include "rarec/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rarec {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& v) {
    try {
        return std::stoull(v);
    } catch (...) {
        throw ConfigError("bad unsigned integer value: " + v);
    }
}

std::int64_t parse_i64(const std::string& v) {
    try {
        return std::stoll(v);
    } catch (...) {
        throw ConfigError("bad integer value: " + v);
    }
}

double parse_f64(const std::string& v) {
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError("bad number value: " + v);
    }
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
        {"run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
        {"run.threads",
         [](RunConfig& c, const std::string& v) { c.threads = static_cast<int>(parse_i64(v)); }},
        {"dataset.path", [](RunConfig& c, const std::string& v) { c.dataset_path = v; }},
        {"dataset.template_path", [](RunConfig& c, const std::string& v) { c.template_path = v; }},
        {"synthetic.num_users",
         [](RunConfig& c, const std::string& v) { c.synthetic.num_users = static_cast<int>(parse_i64(v)); }},
        {"synthetic.num_items",
         [](RunConfig& c, const std::string& v) { c.synthetic.num_items = static_cast<int>(parse_i64(v)); }},
        {"synthetic.num_clusters",
         [](RunConfig& c, const std::string& v) { c.synthetic.num_clusters = static_cast<int>(parse_i64(v)); }},
        {"synthetic.interactions_per_user",
         [](RunConfig& c, const std::string& v) {
             c.synthetic.interactions_per_user = static_cast<int>(parse_i64(v));
         }},
        {"synthetic.vocab_per_cluster",
         [](RunConfig& c, const std::string& v) {
             c.synthetic.vocab_per_cluster = static_cast<int>(parse_i64(v));
         }},
        {"synthetic.within_cluster_prob",
         [](RunConfig& c, const std::string& v) { c.synthetic.within_cluster_prob = parse_f64(v); }},
        {"id_model.dim",
         [](RunConfig& c, const std::string& v) { c.id_model.dim = static_cast<int>(parse_i64(v)); }},
        {"id_model.epochs",
         [](RunConfig& c, const std::string& v) { c.id_model.epochs = static_cast<int>(parse_i64(v)); }},
        {"id_model.batch_size",
         [](RunConfig& c, const std::string& v) { c.id_model.batch_size = static_cast<int>(parse_i64(v)); }},
        {"id_model.negatives_per_positive",
         [](RunConfig& c, const std::string& v) {
             c.id_model.negatives_per_positive = static_cast<int>(parse_i64(v));
         }},
        {"id_model.learning_rate",
         [](RunConfig& c, const std::string& v) { c.id_model.learning_rate = parse_f64(v); }},
        {"id_model.interest_count",
         [](RunConfig& c, const std::string& v) {
             c.id_model.interest_count = static_cast<int>(parse_i64(v));
         }},
        {"id_model.history_window",
         [](RunConfig& c, const std::string& v) {
             c.id_model.history_window = static_cast<int>(parse_i64(v));
         }},
        {"encoder.layers",
         [](RunConfig& c, const std::string& v) { c.encoder.num_layers = static_cast<int>(parse_i64(v)); }},
        {"encoder.hidden_dim",
         [](RunConfig& c, const std::string& v) { c.encoder.hidden_dim = static_cast<int>(parse_i64(v)); }},
        {"encoder.heads",
         [](RunConfig& c, const std::string& v) { c.encoder.num_heads = static_cast<int>(parse_i64(v)); }},
        {"encoder.ffn_dim",
         [](RunConfig& c, const std::string& v) { c.encoder.ffn_dim = static_cast<int>(parse_i64(v)); }},
        {"encoder.vocab_size",
         [](RunConfig& c, const std::string& v) { c.encoder.vocab_size = static_cast<int>(parse_i64(v)); }},
        {"encoder.max_seq_len",
         [](RunConfig& c, const std::string& v) { c.encoder.max_seq_len = static_cast<int>(parse_i64(v)); }},
        {"encoder.warm_steps",
         [](RunConfig& c, const std::string& v) { c.encoder_warm_steps = static_cast<int>(parse_i64(v)); }},
        {"encoder.warm_batch",
         [](RunConfig& c, const std::string& v) { c.encoder_warm_batch = static_cast<int>(parse_i64(v)); }},
        {"encoder.warm_lr",
         [](RunConfig& c, const std::string& v) { c.encoder_warm_lr = parse_f64(v); }},
        {"alignment.temperature",
         [](RunConfig& c, const std::string& v) { c.alignment.temperature = parse_f64(v); }},
        {"alignment.lambda_align",
         [](RunConfig& c, const std::string& v) { c.alignment.lambda_align = parse_f64(v); }},
        {"alignment.lambda_reg",
         [](RunConfig& c, const std::string& v) { c.alignment.lambda_reg = parse_f64(v); }},
        {"alignment.batch_size",
         [](RunConfig& c, const std::string& v) { c.alignment.batch_size = static_cast<int>(parse_i64(v)); }},
        {"alignment.steps",
         [](RunConfig& c, const std::string& v) { c.alignment.steps = static_cast<int>(parse_i64(v)); }},
        {"alignment.learning_rate",
         [](RunConfig& c, const std::string& v) { c.alignment.learning_rate = parse_f64(v); }},
        {"alignment.prefix_len",
         [](RunConfig& c, const std::string& v) { c.alignment.prefix_len = static_cast<int>(parse_i64(v)); }},
        {"alignment.max_history_titles",
         [](RunConfig& c, const std::string& v) {
             c.alignment.max_history_titles = static_cast<int>(parse_i64(v));
         }},
        {"alignment.variant",
         [](RunConfig& c, const std::string& v) { c.alignment.variant = variant_from(v); }},
        {"optimizer.beta1", [](RunConfig& c, const std::string& v) { c.adam_beta1 = parse_f64(v); }},
        {"optimizer.beta2", [](RunConfig& c, const std::string& v) { c.adam_beta2 = parse_f64(v); }},
        {"optimizer.weight_decay",
         [](RunConfig& c, const std::string& v) { c.weight_decay = parse_f64(v); }},
        {"align_set.size",
         [](RunConfig& c, const std::string& v) { c.align_set_size = parse_u64(v); }},
        {"align_set.mode", [](RunConfig& c, const std::string& v) {
             align_set_mode_from(v);  // validate
             c.align_set_mode = v;
         }},
        {"align_set.user_buckets",
         [](RunConfig& c, const std::string& v) { c.user_buckets = static_cast<int>(parse_i64(v)); }},
        {"align_set.item_buckets",
         [](RunConfig& c, const std::string& v) { c.item_buckets = static_cast<int>(parse_i64(v)); }},
        {"export.count",
         [](RunConfig& c, const std::string& v) { c.export_count = static_cast<int>(parse_i64(v)); }},
    };
    return table;
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        auto it = setters().find(full);
        if (it == setters().end()) throw ConfigError("unknown config key: " + full);
        it->second(cfg, value);
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "[run]\n";
    os << "seed = " << seed << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "threads = " << threads << "\n";
    os << "\n[dataset]\n";
    os << "path = " << dataset_path << "\n";
    os << "template_path = " << template_path << "\n";
    os << "\n[synthetic]\n";
    os << "num_users = " << synthetic.num_users << "\n";
    os << "num_items = " << synthetic.num_items << "\n";
    os << "num_clusters = " << synthetic.num_clusters << "\n";
    os << "interactions_per_user = " << synthetic.interactions_per_user << "\n";
    os << "vocab_per_cluster = " << synthetic.vocab_per_cluster << "\n";
    os << "within_cluster_prob = " << synthetic.within_cluster_prob << "\n";
    os << "\n[id_model]\n";
    os << "dim = " << id_model.dim << "\n";
    os << "epochs = " << id_model.epochs << "\n";
    os << "batch_size = " << id_model.batch_size << "\n";
    os << "negatives_per_positive = " << id_model.negatives_per_positive << "\n";
    os << "learning_rate = " << id_model.learning_rate << "\n";
    os << "interest_count = " << id_model.interest_count << "\n";
    os << "history_window = " << id_model.history_window << "\n";
    os << "\n[encoder]\n";
    os << "layers = " << encoder.num_layers << "\n";
    os << "hidden_dim = " << encoder.hidden_dim << "\n";
    os << "heads = " << encoder.num_heads << "\n";
    os << "ffn_dim = " << encoder.ffn_dim << "\n";
    os << "vocab_size = " << encoder.vocab_size << "\n";
    os << "max_seq_len = " << encoder.max_seq_len << "\n";
    os << "warm_steps = " << encoder_warm_steps << "\n";
    os << "warm_batch = " << encoder_warm_batch << "\n";
    os << "warm_lr = " << encoder_warm_lr << "\n";
    os << "\n[alignment]\n";
    os << "temperature = " << alignment.temperature << "\n";
    os << "lambda_align = " << alignment.lambda_align << "\n";
    os << "lambda_reg = " << alignment.lambda_reg << "\n";
    os << "batch_size = " << alignment.batch_size << "\n";
    os << "steps = " << alignment.steps << "\n";
    os << "learning_rate = " << alignment.learning_rate << "\n";
    os << "prefix_len = " << alignment.prefix_len << "\n";
    os << "max_history_titles = " << alignment.max_history_titles << "\n";
    os << "variant = " << to_string(alignment.variant) << "\n";
    os << "\n[optimizer]\n";
    os << "beta1 = " << adam_beta1 << "\n";
    os << "beta2 = " << adam_beta2 << "\n";
    os << "weight_decay = " << weight_decay << "\n";
    os << "\n[align_set]\n";
    os << "size = " << align_set_size << "\n";
    os << "mode = " << align_set_mode << "\n";
    os << "user_buckets = " << user_buckets << "\n";
    os << "item_buckets = " << item_buckets << "\n";
    os << "\n[export]\n";
    os << "count = " << export_count << "\n";
    return os.str();
}

}  // namespace rarec

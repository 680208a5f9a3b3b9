#include "rarec/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace rarec {

namespace {

constexpr const char* kDefaultUserTemplate =
    "Your task is to recommend the next product user may be interested based on "
    "their purchase history: <USER-ITEM>";
constexpr const char* kDefaultItemTemplate = "Product: <ITEM>";

bool placeholder_char(char c) { return (c >= 'A' && c <= 'Z') || c == '-'; }

}  // namespace

PromptTemplate PromptTemplate::parse(const std::string& text) {
    PromptTemplate t;
    std::string literal;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<') {
            std::size_t j = i + 1;
            while (j < text.size() && placeholder_char(text[j])) ++j;
            if (j < text.size() && text[j] == '>' && j > i + 1) {
                const std::string name = text.substr(i + 1, j - i - 1);
                Slot slot;
                if (name == "USER") slot = Slot::kUser;
                else if (name == "ITEM") slot = Slot::kItem;
                else if (name == "USER-ITEM") slot = Slot::kUserItem;
                else throw ConfigError("unknown placeholder <" + name + "> in prompt template");
                if (!literal.empty()) {
                    t.segments_.push_back({literal, Slot::kUser, false});
                    literal.clear();
                }
                t.segments_.push_back({"", slot, true});
                i = j + 1;
                continue;
            }
        }
        literal.push_back(text[i]);
        ++i;
    }
    if (!literal.empty()) t.segments_.push_back({literal, Slot::kUser, false});
    return t;
}

PromptTemplate PromptTemplate::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open template file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string text = ss.str();
    // a single trailing newline is an artifact of the file, not the prompt
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return parse(text);
}

const PromptTemplate& PromptTemplate::default_user() {
    static const PromptTemplate t = parse(kDefaultUserTemplate);
    return t;
}

const PromptTemplate& PromptTemplate::default_item() {
    static const PromptTemplate t = parse(kDefaultItemTemplate);
    return t;
}

std::string PromptTemplate::serialize() const {
    std::string out;
    for (const auto& s : segments_) {
        if (!s.is_slot) {
            out += s.literal;
        } else if (s.slot == Slot::kUser) {
            out += "<USER>";
        } else if (s.slot == Slot::kItem) {
            out += "<ITEM>";
        } else {
            out += "<USER-ITEM>";
        }
    }
    return out;
}

bool PromptTemplate::has_slot(Slot s) const {
    for (const auto& seg : segments_)
        if (seg.is_slot && seg.slot == s) return true;
    return false;
}

std::string PromptTemplate::render(const RenderInput& in) const {
    std::string out;
    auto trim_dangling_separator = [&out] {
        while (!out.empty() && (out.back() == ' ' || out.back() == ':' || out.back() == ','))
            out.pop_back();
    };
    for (const auto& seg : segments_) {
        if (!seg.is_slot) {
            out += seg.literal;
            continue;
        }
        std::string value;
        if (seg.slot == Slot::kUser) {
            if (!in.user_text) throw DataError("template needs <USER> but no user text given");
            value = *in.user_text;
        } else if (seg.slot == Slot::kItem) {
            if (!in.item_title || in.item_title->empty())
                throw DataError("template needs <ITEM> but no item title given");
            value = *in.item_title;
        } else {
            if (!in.history_titles)
                throw DataError("template needs <USER-ITEM> but no history given");
            const auto& h = *in.history_titles;
            const std::size_t keep =
                std::min<std::size_t>(h.size(), static_cast<std::size_t>(
                                                    in.max_history < 0 ? 0 : in.max_history));
            for (std::size_t k = h.size() - keep; k < h.size(); ++k) {
                if (h[k].empty()) throw DataError("missing title for a rendered history item");
                if (k > h.size() - keep) value += ", ";
                value += h[k];
            }
        }
        if (value.empty())
            trim_dangling_separator();
        else
            out += value;
    }
    return out;
}

std::string render_hard_prompt(const PromptTemplate& tmpl,
                               const std::vector<std::string>& history_titles,
                               int max_history) {
    PromptTemplate::RenderInput in;
    in.history_titles = &history_titles;
    in.max_history = max_history;
    return tmpl.render(in);
}

std::string render_item_prompt(const PromptTemplate& tmpl, const std::string& title) {
    if (title.empty()) throw DataError("render_item_prompt: empty title");
    PromptTemplate::RenderInput in;
    in.item_title = &title;
    return tmpl.render(in);
}

HybridPrompt build_hybrid_user(int user_index, std::size_t num_known_users,
                               std::string hard_text) {
    if (user_index < 0 || static_cast<std::size_t>(user_index) >= num_known_users)
        throw DataError("build_hybrid_user: unknown user " + std::to_string(user_index));
    HybridPrompt p;
    p.hard_text = std::move(hard_text);
    p.user_ref = user_index;
    return p;
}

HybridPrompt build_hybrid_item(int item_index, std::size_t num_known_items,
                               std::string hard_text) {
    if (item_index < 0 || static_cast<std::size_t>(item_index) >= num_known_items)
        throw DataError("build_hybrid_item: unknown item " + std::to_string(item_index));
    HybridPrompt p;
    p.hard_text = std::move(hard_text);
    p.item_ref = item_index;
    return p;
}

}  // namespace rarec

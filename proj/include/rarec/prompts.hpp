#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rarec/common.hpp"

namespace rarec {

// Prompt template: literal text with <USER>, <ITEM> and <USER-ITEM>
// placeholders. Parsing rejects any other <NAME> placeholder; serialization
// reproduces the source text exactly.
class PromptTemplate {
public:
    enum class Slot { kUser, kItem, kUserItem };
    struct Segment {
        std::string literal;       // used when !is_slot
        Slot slot = Slot::kUser;
        bool is_slot = false;
    };

    static PromptTemplate parse(const std::string& text);
    static PromptTemplate load(const std::string& path);

    // The default sequential-recommendation template and the item-side
    // description template.
    static const PromptTemplate& default_user();
    static const PromptTemplate& default_item();

    std::string serialize() const;
    const std::vector<Segment>& segments() const { return segments_; }
    bool has_slot(Slot s) const;

    struct RenderInput {
        const std::string* user_text = nullptr;
        const std::string* item_title = nullptr;
        const std::vector<std::string>* history_titles = nullptr;  // oldest first
        int max_history = 10;
    };
    std::string render(const RenderInput& in) const;

private:
    std::vector<Segment> segments_;
};

// Renders the task text over the user's recent history titles (oldest
// first); only the `max_history` most recent titles appear, joined ", ",
// most recent last.
std::string render_hard_prompt(const PromptTemplate& tmpl,
                               const std::vector<std::string>& history_titles,
                               int max_history);

std::string render_item_prompt(const PromptTemplate& tmpl, const std::string& title);

// Hard text plus references to the ID embeddings to inject; embeddings are
// referenced by index, never copied.
struct HybridPrompt {
    std::string hard_text;
    std::optional<int> user_ref;
    std::optional<int> item_ref;
};

HybridPrompt build_hybrid_user(int user_index, std::size_t num_known_users, std::string hard_text);
HybridPrompt build_hybrid_item(int item_index, std::size_t num_known_items, std::string hard_text);

}  // namespace rarec

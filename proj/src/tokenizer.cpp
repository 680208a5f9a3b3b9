#include "rarec/tokenizer.hpp"

#include <cctype>

namespace rarec {

std::vector<std::string> Tokenizer::words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char uc : text) {
        if (std::isalnum(uc)) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (uc >= 0x80) {
            // non-ASCII bytes are kept verbatim so UTF-8 words stay intact
            cur.push_back(static_cast<char>(uc));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : words(text)) ids.push_back(word_id(w));
    return ids;
}

}  // namespace rarec

#pragma once

#include <string>
#include <vector>

#include "rarec/common.hpp"

namespace rarec {

// Hashed word-level tokenizer. Text is case-folded and split into
// alphanumeric runs; each word hashes into one of the vocab buckets above
// the reserved ids. Fully defined by (hash function id, vocab_size), so a
// checkpoint manifest can reproduce it bit-exactly.
class Tokenizer {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kMaskId = 2;
    static constexpr int kReserved = 3;
    static constexpr const char* kHashId = "fnv1a64";

    Tokenizer() : vocab_size_(8192) {}
    explicit Tokenizer(int vocab_size) : vocab_size_(vocab_size) {
        if (vocab_size_ <= kReserved)
            throw ConfigError("tokenizer vocab_size must exceed reserved ids");
    }

    int vocab_size() const { return vocab_size_; }

    // Lowercased alphanumeric words, in order. Empty text yields no words.
    static std::vector<std::string> words(const std::string& text);

    std::vector<int> tokenize(const std::string& text) const;

    int word_id(const std::string& word) const {
        const std::uint64_t h = fnv1a64(word);
        return kReserved + static_cast<int>(h % static_cast<std::uint64_t>(vocab_size_ - kReserved));
    }

private:
    int vocab_size_;
};

}  // namespace rarec

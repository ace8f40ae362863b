#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace inkdiff {

// whitespace tokenizer over a tiny closed prompt set. reserved rows come
// first so their ids are stable across datasets; everything else is added
// in first-seen order. lookups are case-insensitive (prompts are lowercased),
// the identifier keeps its display form "[V]".
struct TokenVocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kNull = 2;
    static constexpr int kIdentifier = 3;
    static constexpr int kMaxTokens = 12;
    static constexpr const char* kIdentifierText = "[V]";

    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index; // lowercase form -> id

    static TokenVocabulary make_base();
    static TokenVocabulary from_list(const std::vector<std::string>& list);

    int size() const { return static_cast<int>(tokens.size()); }
    int add(const std::string& word);          // idempotent; returns id
    void add_prompt(const std::string& prompt);
    int lookup(const std::string& word) const; // kUnk when unknown

    // lowercase, split on whitespace, map, truncate/pad to kMaxTokens
    std::vector<int> tokenize(const std::string& prompt) const;

    // the context used when conditioning is dropped: [NULL, PAD, PAD, ...]
    static std::vector<int> null_ids();
};

std::vector<std::string> split_words(const std::string& text); // lowercased

} // namespace inkdiff

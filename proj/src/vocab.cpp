#include "inkdiff/vocab.hpp"

#include <cctype>
#include <stdexcept>

#include "inkdiff/errors.hpp"

namespace inkdiff {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                words.push_back(lower(cur));
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) words.push_back(lower(cur));
    return words;
}

TokenVocabulary TokenVocabulary::make_base() {
    TokenVocabulary v;
    v.tokens = {"<pad>", "<unk>", "<null>", kIdentifierText};
    for (size_t i = 0; i < v.tokens.size(); ++i) v.index[lower(v.tokens[i])] = static_cast<int>(i);
    return v;
}

TokenVocabulary TokenVocabulary::from_list(const std::vector<std::string>& list) {
    if (list.size() < 4 || list[3] != kIdentifierText)
        throw DataError("vocabulary list missing reserved tokens");
    TokenVocabulary v;
    v.tokens = list;
    for (size_t i = 0; i < list.size(); ++i) {
        auto [it, ok] = v.index.emplace(lower(list[i]), static_cast<int>(i));
        if (!ok) throw DataError("vocabulary list has duplicate token: " + list[i]);
    }
    return v;
}

int TokenVocabulary::add(const std::string& word) {
    std::string key = lower(word);
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(tokens.size());
    tokens.push_back(key);
    index.emplace(std::move(key), id);
    return id;
}

void TokenVocabulary::add_prompt(const std::string& prompt) {
    for (const std::string& w : split_words(prompt)) add(w);
}

int TokenVocabulary::lookup(const std::string& word) const {
    auto it = index.find(lower(word));
    return it == index.end() ? kUnk : it->second;
}

std::vector<int> TokenVocabulary::tokenize(const std::string& prompt) const {
    std::vector<std::string> words = split_words(prompt);
    if (words.empty()) throw std::invalid_argument("tokenize: empty prompt");
    std::vector<int> ids(kMaxTokens, kPad);
    for (size_t i = 0; i < words.size() && i < static_cast<size_t>(kMaxTokens); ++i)
        ids[i] = lookup(words[i]);
    return ids;
}

std::vector<int> TokenVocabulary::null_ids() {
    std::vector<int> ids(kMaxTokens, kPad);
    ids[0] = kNull;
    return ids;
}

} // namespace inkdiff

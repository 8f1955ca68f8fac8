#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace sfd {

// Closed vocabulary over the caption grammar plus reserved control tokens.
// Word order defines token ids; the serialized form is one word per line.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kPh0 = 2;
    static constexpr int kPh1 = 3;
    static constexpr int kMaxEntities = 2;  // one placeholder token per entity

    // the fixed vocabulary used across the project
    static Vocab standard();

    explicit Vocab(std::vector<std::string> words);

    int size() const { return static_cast<int>(words_.size()); }
    int id(const std::string& word) const;          // throws TokenError on unknown
    const std::string& word(int token_id) const;    // throws ContractError on range
    bool contains(const std::string& word) const { return table_.count(word) > 0; }
    static bool reserved(int token_id) { return token_id <= kPh1; }
    static int placeholder_id(int entity) { return entity == 0 ? kPh0 : kPh1; }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> table_;
};

// [BOS]-prefixed, [PAD]-suffixed to seq_len; words are whitespace-separated.
std::vector<int> tokenize(const Vocab& vocab, const std::string& text, int seq_len);

// inverse of tokenize: drops [PAD]/[BOS], joins the rest with single spaces
std::string detokenize(const Vocab& vocab, const std::vector<int>& ids);

}  // namespace sfd

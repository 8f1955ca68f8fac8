#include "encoders/vocab.hpp"

#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace sfd {

Vocab Vocab::standard() {
    return Vocab({
        "[PAD]", "[BOS]", "[PH_0]", "[PH_1]",
        // grammar scaffolding
        "a", "on", "background", "the", "is", ",", "of",
        // relations
        "left", "right", "above", "below",
        // shapes
        "circle", "square", "triangle", "cross",
        // colors
        "red", "green", "blue", "yellow", "purple", "orange",
        // background shades
        "dark", "gray", "pale", "light",
        // sizes
        "small", "big",
    });
}

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
    for (int i = 0; i < static_cast<int>(words_.size()); ++i) {
        if (!table_.emplace(words_[i], i).second)
            throw ContractError(cat("vocab: duplicate word '", words_[i], "'"));
    }
    for (int reserved_id : {kPad, kBos, kPh0, kPh1}) {
        static const char* names[] = {"[PAD]", "[BOS]", "[PH_0]", "[PH_1]"};
        if (reserved_id >= size() || words_[static_cast<size_t>(reserved_id)] != names[reserved_id])
            throw ContractError(cat("vocab: reserved token ", names[reserved_id],
                                    " missing or out of place"));
    }
}

int Vocab::id(const std::string& word) const {
    auto it = table_.find(word);
    if (it == table_.end()) throw TokenError(cat("word not in vocabulary: '", word, "'"));
    return it->second;
}

const std::string& Vocab::word(int token_id) const {
    if (token_id < 0 || token_id >= size())
        throw ContractError(cat("token id ", token_id, " outside vocabulary of ", size()));
    return words_[static_cast<size_t>(token_id)];
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(cat("cannot open for write: ", path));
    for (const auto& w : words_) f << w << "\n";
    if (!f) throw IoError(cat("short write: ", path));
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError(cat("cannot open for read: ", path));
    std::vector<std::string> words;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) words.push_back(line);
    return Vocab(std::move(words));
}

std::vector<int> tokenize(const Vocab& vocab, const std::string& text, int seq_len) {
    std::vector<int> ids;
    ids.push_back(Vocab::kBos);
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) ids.push_back(vocab.id(word));
    if (static_cast<int>(ids.size()) > seq_len)
        throw ContractError(cat("prompt of ", ids.size(), " tokens exceeds seq_len ", seq_len));
    ids.resize(static_cast<size_t>(seq_len), Vocab::kPad);
    return ids;
}

std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (id == Vocab::kPad || id == Vocab::kBos) continue;
        if (!out.empty()) out += ' ';
        out += vocab.word(id);
    }
    return out;
}

}  // namespace sfd

#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "increvec/common.hpp"

namespace increvec {

// Lowercase whitespace tokenizer vocabulary with special tokens and one
// dedicated token per class. Ids are dense; id = line number in the
// serialized form.
class Vocab {
public:
    static constexpr const char* kPad = "[pad]";
    static constexpr const char* kCls = "[cls]";
    static constexpr const char* kSep = "[sep]";
    static constexpr const char* kUnk = "[unk]";

    Vocab() = default;

    static std::string category_token(const std::string& class_name) {
        return "<cat_" + lowercase(class_name) + ">";
    }

    static std::string lowercase(const std::string& s) {
        std::string out = s;
        std::transform(out.begin(), out.end(), out.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return out;
    }

    // Builds from training texts: specials, then category tokens in class
    // order, then corpus tokens by descending frequency (ties lexicographic).
    static Vocab build(const std::vector<std::string>& texts, const std::vector<std::string>& class_names,
                       int min_freq = 1) {
        Vocab v;
        v.add(kPad);
        v.add(kCls);
        v.add(kSep);
        v.add(kUnk);
        for (const auto& name : class_names) {
            v.category_ids_.push_back(v.add(category_token(name)));
        }
        std::map<std::string, long> freq;
        for (const auto& text : texts) {
            for (const auto& tok : split_lower(text)) ++freq[tok];
        }
        std::vector<std::pair<long, std::string>> order;
        order.reserve(freq.size());
        for (auto& [tok, n] : freq) {
            if (n >= min_freq) order.emplace_back(-n, tok);
        }
        std::sort(order.begin(), order.end());
        for (auto& [negn, tok] : order) v.add(tok);
        return v;
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    int lookup(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? unk_id() : it->second;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    int pad_id() const { return ids_.at(kPad); }
    int cls_id() const { return ids_.at(kCls); }
    int sep_id() const { return ids_.at(kSep); }
    int unk_id() const { return ids_.at(kUnk); }

    int num_classes() const { return static_cast<int>(category_ids_.size()); }
    int category_id(int class_idx) const {
        if (class_idx < 0 || class_idx >= num_classes())
            throw std::out_of_range("Vocab: unknown class index");
        return category_ids_[static_cast<std::size_t>(class_idx)];
    }

    static std::vector<std::string> split_lower(const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : text) {
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!cur.empty()) {
                    out.push_back(lowercase(cur));
                    cur.clear();
                }
            } else {
                cur.push_back(ch);
            }
        }
        if (!cur.empty()) out.push_back(lowercase(cur));
        return out;
    }

    // One token per line; id = line number.
    std::string serialize() const {
        std::ostringstream os;
        for (const auto& t : tokens_) os << t << "\n";
        return os.str();
    }

    static Vocab deserialize(const std::string& text, int num_classes) {
        Vocab v;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty()) v.add(line);
        }
        for (int c = 0; c < num_classes; ++c) {
            // category tokens sit right after the four specials
            v.category_ids_.push_back(4 + c);
        }
        if (v.size() < 4 + num_classes) throw DataError("Vocab: truncated serialization");
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    std::vector<int> category_ids_;
};

// Token id sequence; ids[0] is always CLS. valid_len counts real tokens,
// positions beyond it are PAD and masked out of attention.
struct TokenSequence {
    std::vector<int> ids;
    int valid_len = 0;

    int length() const { return static_cast<int>(ids.size()); }

    void pad_to(int len, int pad_id) {
        while (length() < len) ids.push_back(pad_id);
    }
};

inline TokenSequence tokenize(const std::string& text, const Vocab& vocab, int max_len) {
    if (max_len < 1) throw ConfigError("tokenize: max_len < 1");
    TokenSequence seq;
    seq.ids.push_back(vocab.cls_id());
    for (const auto& tok : Vocab::split_lower(text)) {
        if (seq.length() >= max_len) break;
        seq.ids.push_back(vocab.lookup(tok));
    }
    seq.valid_len = seq.length();
    return seq;
}

// "k1 v1 [SEP] k2 v2 [SEP] ... [SEP] text", keys in sorted order so the
// result is independent of map iteration order.
inline std::string prepend_profile(const std::string& text,
                                   const std::vector<std::pair<std::string, std::string>>& profile) {
    if (profile.empty()) return text;
    std::vector<std::pair<std::string, std::string>> sorted = profile;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const auto& [k, val] : sorted) {
        out += k + " " + val + " [SEP] ";
    }
    out += text;
    return out;
}

inline std::string prepend_category(const std::string& text, int class_idx, const Vocab& vocab,
                                    const std::vector<std::string>& class_names) {
    if (class_idx < 0 || class_idx >= static_cast<int>(class_names.size()))
        throw std::out_of_range("prepend_category: unknown class");
    (void)vocab.category_id(class_idx);  // validates the token exists
    return "<cat_" + class_names[static_cast<std::size_t>(class_idx)] + "> " + text;
}

}  // namespace increvec

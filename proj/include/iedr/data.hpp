#pragma once

#include <algorithm>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rng.hpp"

namespace iedr {

enum class FieldGroup { user, item, context };

inline const char* group_name(FieldGroup g) {
    switch (g) {
        case FieldGroup::user: return "user";
        case FieldGroup::item: return "item";
        default: return "context";
    }
}

inline FieldGroup group_from_name(const std::string& s) {
    if (s == "user") return FieldGroup::user;
    if (s == "item") return FieldGroup::item;
    if (s == "context") return FieldGroup::context;
    throw std::runtime_error("unknown field group: " + s);
}

/// Dense feature dictionary. Every `field:value` token maps to one index;
/// each field belongs to exactly one of the user/item/context groups and owns
/// a reserved UNK index for values unseen at build time.
class Vocabulary {
public:
    static constexpr const char* kUnk = "<UNK>";

    struct Entry {
        std::string field, value;
        FieldGroup group;
    };

    std::size_t add(const std::string& field, const std::string& value, FieldGroup group) {
        ensure_field(field, group);
        const std::string key = field + ":" + value;
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        entries_.push_back({field, value, group});
        index_[key] = entries_.size() - 1;
        return entries_.size() - 1;
    }

    /// Lookup against a frozen vocabulary: unseen values map to the field's
    /// UNK index; unseen fields and group mismatches are rejected.
    std::size_t lookup(const std::string& field, const std::string& value,
                       FieldGroup group) const {
        auto fit = fields_.find(field);
        if (fit == fields_.end()) throw std::runtime_error("unknown field: " + field);
        if (fit->second.group != group)
            throw std::runtime_error("field '" + field + "' belongs to group " +
                                     group_name(fit->second.group) + ", not " + group_name(group));
        auto it = index_.find(field + ":" + value);
        return it != index_.end() ? it->second : fit->second.unk_index;
    }

    const Entry& entry(std::size_t id) const { return entries_.at(id); }
    std::size_t size() const { return entries_.size(); }
    bool has_field(const std::string& field) const { return fields_.count(field) != 0; }

    /// Feature ids of all entries in a group (UNK entries included).
    std::vector<std::size_t> group_ids(FieldGroup g) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].group == g) out.push_back(i);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
        for (std::size_t i = 0; i < entries_.size(); ++i)
            out << i << '\t' << group_name(entries_[i].group) << '\t' << entries_[i].field << ':'
                << entries_[i].value << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
        Vocabulary v;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string idx, grp, feat;
            if (!std::getline(ls, idx, '\t') || !std::getline(ls, grp, '\t') ||
                !std::getline(ls, feat))
                throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                         ": malformed");
            auto colon = feat.find(':');
            if (colon == std::string::npos)
                throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                         ": missing field:value");
            auto id = v.add(feat.substr(0, colon), feat.substr(colon + 1), group_from_name(grp));
            if (id != static_cast<std::size_t>(std::stoull(idx)))
                throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                         ": non-dense index");
        }
        return v;
    }

private:
    struct FieldInfo {
        FieldGroup group;
        std::size_t unk_index;
    };

    void ensure_field(const std::string& field, FieldGroup group) {
        auto it = fields_.find(field);
        if (it != fields_.end()) {
            if (it->second.group != group)
                throw std::runtime_error("field '" + field + "' already registered in group " +
                                         group_name(it->second.group));
            return;
        }
        // Reserve the UNK slot the first time a field appears.
        entries_.push_back({field, kUnk, group});
        const std::size_t unk = entries_.size() - 1;
        index_[field + ":" + std::string(kUnk)] = unk;
        fields_[field] = {group, unk};
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, FieldInfo> fields_;
};

/// One (user, item, context, label) record.
struct Instance {
    std::vector<std::size_t> user_feats, item_feats, context_feats;
    int label = 1;
    std::string user_key, item_key;
    long long order_key = 0;

    bool operator==(const Instance&) const = default;
};

struct SplitSpec {
    std::size_t min_records = 5;
    std::size_t eval_negatives = 99;
    std::size_t train_negatives = 2;
};

struct Split {
    std::vector<Instance> train, valid, test;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::vector<std::pair<std::string, std::string>> parse_feats(const std::string& cell,
                                                                    std::size_t lineno) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string tok;
    std::istringstream ss(cell);
    while (std::getline(ss, tok, ',')) {
        auto colon = tok.find(':');
        if (colon == std::string::npos || colon == 0)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": feature token '" + tok + "' is not field:value");
        out.emplace_back(tok.substr(0, colon), tok.substr(colon + 1));
    }
    return out;
}

} // namespace detail

/// Reads the canonical TSV:
///   label  user_key  item_key  order_key  user_feats  item_feats  context_feats
/// where each feats cell is a comma-separated list of field:value tokens.
/// With no vocabulary given, one is built (first pass); otherwise unknown
/// values map to per-field UNK indices.
inline std::pair<Vocabulary, std::vector<Instance>>
ingest_tsv(const std::string& path, std::optional<Vocabulary> existing = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    const bool building = !existing.has_value();
    Vocabulary vocab = building ? Vocabulary{} : std::move(*existing);
    std::vector<Instance> instances;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = detail::split_tabs(line);
        if (cells.size() != 7)
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected 7 columns, got " +
                                     std::to_string(cells.size()));
        Instance inst;
        if (cells[0] == "1")
            inst.label = 1;
        else if (cells[0] == "0")
            inst.label = 0;
        else
            throw std::runtime_error("line " + std::to_string(lineno) + ": label must be 0 or 1");
        inst.user_key = cells[1];
        inst.item_key = cells[2];
        try {
            inst.order_key = std::stoll(cells[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": bad order key '" +
                                     cells[3] + "'");
        }
        auto fill = [&](const std::string& cell, FieldGroup g, std::vector<std::size_t>& dst) {
            for (auto& [field, value] : detail::parse_feats(cell, lineno))
                dst.push_back(building ? vocab.add(field, value, g) : vocab.lookup(field, value, g));
            if (dst.empty())
                throw std::runtime_error("line " + std::to_string(lineno) + ": empty " +
                                         std::string(group_name(g)) + " feature set");
        };
        fill(cells[4], FieldGroup::user, inst.user_feats);
        fill(cells[5], FieldGroup::item, inst.item_feats);
        fill(cells[6], FieldGroup::context, inst.context_feats);
        instances.push_back(std::move(inst));
    }
    return {std::move(vocab), std::move(instances)};
}

inline void write_tsv(const std::string& path, const std::vector<Instance>& instances,
                      const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    auto feats = [&](const std::vector<std::size_t>& ids) {
        std::string s;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto& e = vocab.entry(ids[i]);
            if (i) s += ',';
            s += e.field + ":" + e.value;
        }
        return s;
    };
    for (const auto& inst : instances)
        out << inst.label << '\t' << inst.user_key << '\t' << inst.item_key << '\t'
            << inst.order_key << '\t' << feats(inst.user_feats) << '\t' << feats(inst.item_feats)
            << '\t' << feats(inst.context_feats) << '\n';
}

/// Per user: last record to test, second-last to valid, rest to train. Users
/// with fewer than min_records records are dropped entirely. Ordering is by
/// order_key with file order breaking ties.
inline Split split_leave_last_two(const std::vector<Instance>& instances, const SplitSpec& spec) {
    std::map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < instances.size(); ++i)
        by_user[instances[i].user_key].push_back(i);
    Split split;
    for (auto& [user, idxs] : by_user) {
        if (idxs.size() < spec.min_records) continue;
        std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            return instances[a].order_key < instances[b].order_key;
        });
        for (std::size_t k = 0; k + 2 < idxs.size(); ++k)
            split.train.push_back(instances[idxs[k]]);
        split.valid.push_back(instances[idxs[idxs.size() - 2]]);
        split.test.push_back(instances[idxs[idxs.size() - 1]]);
    }
    return split;
}

/// Unique items with their feature lists, for negative/candidate sampling.
class ItemCatalog {
public:
    explicit ItemCatalog(const std::vector<Instance>& instances) {
        for (const auto& inst : instances) {
            auto [it, inserted] = index_.try_emplace(inst.item_key, items_.size());
            if (inserted) items_.push_back({inst.item_key, inst.item_feats});
        }
    }

    std::size_t size() const { return items_.size(); }
    const std::string& key(std::size_t i) const { return items_[i].key; }
    const std::vector<std::size_t>& feats(std::size_t i) const { return items_[i].feats; }

    std::size_t index_of(const std::string& key) const {
        auto it = index_.find(key);
        if (it == index_.end()) throw std::out_of_range("unknown item: " + key);
        return it->second;
    }

private:
    struct Item {
        std::string key;
        std::vector<std::size_t> feats;
    };
    std::vector<Item> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// k negatives for one positive: same user and context, item replaced by a
/// uniformly drawn different catalog item, label 0.
inline std::vector<Instance> sample_train_negatives(const Instance& positive,
                                                    const ItemCatalog& catalog, std::size_t k,
                                                    RngStream& rng) {
    if (k < 1) throw std::invalid_argument("sample_train_negatives: k must be >= 1");
    if (catalog.size() < 2)
        throw std::runtime_error("sample_train_negatives: item catalog too small");
    std::vector<Instance> out;
    out.reserve(k);
    for (std::size_t n = 0; n < k; ++n) {
        std::size_t pick;
        do {
            pick = rng.index(catalog.size());
        } while (catalog.key(pick) == positive.item_key);
        Instance neg = positive;
        neg.label = 0;
        neg.item_key = catalog.key(pick);
        neg.item_feats = catalog.feats(pick);
        out.push_back(std::move(neg));
    }
    return out;
}

/// Candidate item indices for evaluation: up to k distinct items, excluding
/// the positive and any explicitly excluded items; sampled without
/// replacement. Returns fewer than k when the pool is smaller.
inline std::vector<std::size_t>
sample_eval_candidates(const Instance& positive, const ItemCatalog& catalog, std::size_t k,
                       RngStream& rng,
                       const std::unordered_set<std::size_t>* excluded = nullptr) {
    if (k < 1) throw std::invalid_argument("sample_eval_candidates: k must be >= 1");
    std::vector<std::size_t> pool;
    pool.reserve(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (catalog.key(i) == positive.item_key) continue;
        if (excluded && excluded->count(i)) continue;
        pool.push_back(i);
    }
    // Partial Fisher-Yates.
    const std::size_t take = std::min(k, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + rng.index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

/// Expands each positive with spec-count negatives, preserving order.
inline std::vector<Instance> augment_with_negatives(const std::vector<Instance>& positives,
                                                    const ItemCatalog& catalog, std::size_t k,
                                                    RngStream& rng) {
    std::vector<Instance> out;
    out.reserve(positives.size() * (1 + k));
    for (const auto& pos : positives) {
        out.push_back(pos);
        for (auto& neg : sample_train_negatives(pos, catalog, k, rng))
            out.push_back(std::move(neg));
    }
    return out;
}

/// Month-granularity time bucket of a unix timestamp (UTC), e.g. "2014-03".
inline std::string bucketize_time(long long unix_seconds) {
    std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    if (gmtime_r(&t, &tm) == nullptr) throw std::invalid_argument("bucketize_time: bad timestamp");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", tm.tm_year + 1900, tm.tm_mon + 1);
    return buf;
}

/// Items each user interacted with in the given instances (by catalog index).
inline std::unordered_map<std::string, std::unordered_set<std::size_t>>
user_item_history(const std::vector<Instance>& instances, const ItemCatalog& catalog) {
    std::unordered_map<std::string, std::unordered_set<std::size_t>> hist;
    for (const auto& inst : instances)
        if (inst.label == 1) hist[inst.user_key].insert(catalog.index_of(inst.item_key));
    return hist;
}

} // namespace iedr

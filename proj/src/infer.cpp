#include "fair/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fair/errors.hpp"

namespace fair {

using nlohmann::json;

std::vector<std::vector<double>> log_softmax_heads(
    const std::vector<std::vector<double>>& logits) {
    std::vector<std::vector<double>> out;
    out.reserve(logits.size());
    for (const auto& row : logits) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : row) mx = std::max(mx, v);
        double denom = 0.0;
        for (double v : row) denom += std::exp(v - mx);
        const double lse = mx + std::log(denom);
        std::vector<double> lp(row.size());
        for (std::size_t j = 0; j < row.size(); ++j) lp[j] = row[j] - lse;
        out.push_back(std::move(lp));
    }
    return out;
}

namespace {

void sort_ranked(std::vector<ScoredItem>& entries) {
    std::sort(entries.begin(), entries.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
}

}  // namespace

RankedList score_all_items(const std::vector<std::vector<double>>& logits,
                           const CodeLookup& lookup, std::size_t top_k) {
    const auto lp = log_softmax_heads(logits);
    if (lp.size() != lookup.num_codebooks)
        throw ContractError("score_all_items: " + std::to_string(lp.size()) + " heads for " +
                            std::to_string(lookup.num_codebooks) + " codebooks");
    RankedList out;
    out.entries.reserve(lookup.item_to_codes.size());
    for (std::size_t i = 0; i < lookup.item_to_codes.size(); ++i) {
        const auto& codes = lookup.item_to_codes[i];
        if (codes.size() != lp.size())
            throw DataError("score_all_items: item " + std::to_string(i) + " has " +
                            std::to_string(codes.size()) + " codes");
        double s = 0.0;
        for (std::size_t k = 0; k < lp.size(); ++k) s += lp[k][codes[k]];
        out.entries.push_back({static_cast<std::int32_t>(i), s});
    }
    sort_ranked(out.entries);
    if (top_k < out.entries.size()) out.entries.resize(top_k);
    return out;
}

namespace {

// Prefix trie over the corpus code tuples; each node lists its child codes.
struct TrieNode {
    std::unordered_map<std::int32_t, std::size_t> children;  // code → node index
};

struct Trie {
    std::vector<TrieNode> nodes;       // node 0 = root
    std::vector<std::vector<std::int32_t>> leaf_items;  // per node (only at depth L)

    explicit Trie(const CodeLookup& lookup) {
        nodes.emplace_back();
        leaf_items.emplace_back();
        for (const auto& [codes, items] : lookup.codes_to_items) {
            std::size_t cur = 0;
            for (auto c : codes) {
                auto it = nodes[cur].children.find(c);
                if (it == nodes[cur].children.end()) {
                    nodes[cur].children.emplace(c, nodes.size());
                    cur = nodes.size();
                    nodes.emplace_back();
                    leaf_items.emplace_back();
                } else {
                    cur = it->second;
                }
            }
            leaf_items[cur] = items;
        }
    }
};

struct BeamEntry {
    std::size_t node = 0;
    double logp = 0.0;
    CodeTuple prefix;
};

}  // namespace

RankedList beam_search_items(const std::vector<std::vector<double>>& logits,
                             const CodeLookup& lookup, std::size_t beam_size, std::size_t top_k,
                             std::string* warning) {
    if (beam_size < 1) throw ContractError("beam_search_items: beam_size must be >= 1");
    if (beam_size < top_k && warning)
        *warning = "beam size " + std::to_string(beam_size) + " below requested top-" +
                   std::to_string(top_k) + "; returning what survives";
    const auto lp = log_softmax_heads(logits);
    const Trie trie(lookup);

    std::vector<BeamEntry> beam = {BeamEntry{}};
    for (std::size_t level = 0; level < lookup.num_codebooks; ++level) {
        std::vector<BeamEntry> next;
        for (const auto& entry : beam) {
            for (const auto& [code, child] : trie.nodes[entry.node].children) {
                BeamEntry e;
                e.node = child;
                e.logp = entry.logp + lp[level][code];
                e.prefix = entry.prefix;
                e.prefix.push_back(code);
                next.push_back(std::move(e));
            }
        }
        std::sort(next.begin(), next.end(), [](const BeamEntry& a, const BeamEntry& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            return a.prefix < b.prefix;  // deterministic tie order
        });
        if (next.size() > beam_size) next.resize(beam_size);
        beam = std::move(next);
    }

    RankedList out;
    for (const auto& entry : beam)
        for (auto item : trie.leaf_items[entry.node]) out.entries.push_back({item, entry.logp});
    sort_ranked(out.entries);
    if (top_k < out.entries.size()) out.entries.resize(top_k);
    return out;
}

double recall_at_k(const RankedList& ranked, std::int32_t target, std::size_t k) {
    const std::size_t lim = std::min(k, ranked.entries.size());
    for (std::size_t i = 0; i < lim; ++i)
        if (ranked.entries[i].item == target) return 1.0;
    return 0.0;
}

double ndcg_at_k(const RankedList& ranked, std::int32_t target, std::size_t k) {
    const std::size_t lim = std::min(k, ranked.entries.size());
    for (std::size_t i = 0; i < lim; ++i)
        if (ranked.entries[i].item == target)
            return 1.0 / std::log2(static_cast<double>(i) + 2.0);  // rank is 1-based
    return 0.0;
}

std::string EvalReport::to_json(const std::string& split, const std::string& scorer) const {
    json rec, nd;
    for (const auto& [k, v] : recall) rec[std::to_string(k)] = v;
    for (const auto& [k, v] : ndcg) nd[std::to_string(k)] = v;
    json doc = {{"split", split},
                {"scorer", scorer},
                {"users", user_count},
                {"recall", rec},
                {"ndcg", nd}};
    return doc.dump(2);
}

std::vector<std::vector<double>> history_logits(const FairModel& model,
                                                std::span<const std::int32_t> history,
                                                const std::vector<CodeTuple>& item_codes) {
    const auto tokens = expand_items_to_tokens(history, item_codes);
    auto fwd = decoder_forward(model, tokens);
    auto logits = mtp_logits(model, fwd.hidden, tokens);
    std::vector<std::vector<double>> raw;
    raw.reserve(logits.size());
    for (const auto& t : logits) raw.emplace_back(t.values().begin(), t.values().end());
    return raw;
}

EvalReport evaluate(const FairModel& model, const InteractionDataset& ds,
                    const CodeLookup& lookup, EvalSplit split, const EvalOptions& opts) {
    if (ds.users.empty()) throw DataError("evaluate: empty dataset");
    std::size_t max_k = 0;
    for (auto k : opts.k_list) max_k = std::max(max_k, k);
    EvalReport report;
    const std::size_t users =
        opts.max_users > 0 ? std::min(opts.max_users, ds.users.size()) : ds.users.size();
    if (users == 0) throw DataError("evaluate: empty split");
    for (auto k : opts.k_list) {
        report.recall[k] = 0.0;
        report.ndcg[k] = 0.0;
    }
    for (std::size_t u = 0; u < users; ++u) {
        const auto history = split == EvalSplit::Valid ? ds.train_items(u) : ds.test_history(u);
        const std::int32_t target = split == EvalSplit::Valid ? ds.valid_item(u) : ds.test_item(u);
        const auto logits = history_logits(model, history, lookup.item_to_codes);
        const RankedList ranked =
            opts.scorer == Scorer::Exact
                ? score_all_items(logits, lookup, std::max(max_k, lookup.item_to_codes.size()))
                : beam_search_items(logits, lookup, opts.beam_size, max_k);
        for (auto k : opts.k_list) {
            report.recall[k] += recall_at_k(ranked, target, k);
            report.ndcg[k] += ndcg_at_k(ranked, target, k);
        }
    }
    for (auto k : opts.k_list) {
        report.recall[k] /= static_cast<double>(users);
        report.ndcg[k] /= static_cast<double>(users);
    }
    report.user_count = users;
    return report;
}

ItemAttentionProfile attention_dump(const FairModel& model, std::span<const std::int32_t> history,
                                    const std::vector<CodeTuple>& item_codes,
                                    std::int32_t target_item) {
    if (history.empty()) throw ContractError("attention_dump: empty history");
    const auto tokens = expand_items_to_tokens(history, item_codes);
    ForwardOptions opts;
    opts.capture_records = true;
    auto fwd = decoder_forward(model, tokens, opts);

    const std::size_t n = tokens.size();
    const std::size_t last = last_real_position(tokens);
    std::vector<double> token_mass(n, 0.0);
    for (const auto& rec : fwd.records)
        for (std::size_t j = 0; j < n; ++j) token_mass[j] += std::abs(rec.a[last * n + j]);
    const double inv_records = 1.0 / static_cast<double>(fwd.records.size());

    ItemAttentionProfile profile;
    profile.target_item = target_item;
    const std::size_t L = model.config.L;
    for (std::size_t i = 0; i < history.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < L; ++k) s += token_mass[i * L + k];
        profile.entries.push_back({history[i], s * inv_records});
    }
    return profile;
}

std::string attention_profile_json(const ItemAttentionProfile& profile,
                                   const std::vector<std::string>& vocab) {
    json items = json::array();
    for (const auto& e : profile.entries)
        items.push_back({{"item_id", vocab[e.item]}, {"mean_attention", e.score}});
    json doc = {{"target_item_id",
                 profile.target_item >= 0 ? json(vocab[profile.target_item]) : json(nullptr)},
                {"history", items}};
    return doc.dump(2);
}

std::string attention_profile_csv(const ItemAttentionProfile& profile,
                                  const std::vector<std::string>& vocab) {
    std::ostringstream os;
    os << "item_id,mean_attention\n";
    os.precision(17);
    for (const auto& e : profile.entries) os << vocab[e.item] << "," << e.score << "\n";
    return os.str();
}

std::string ranked_list_jsonl(const RankedList& ranked, const std::vector<std::string>& vocab) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
        json row = {{"rank", i + 1},
                    {"item_id", vocab[ranked.entries[i].item]},
                    {"score", ranked.entries[i].score}};
        os << row.dump() << "\n";
    }
    return os.str();
}

}  // namespace fair

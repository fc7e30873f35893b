#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fair/data.hpp"
#include "fair/model.hpp"
#include "fair/opq.hpp"

namespace fair {

struct ScoredItem {
    std::int32_t item = -1;
    double score = 0.0;  // sum of per-codebook log-probabilities
};

// Descending by score; ties broken by ascending item index.
struct RankedList {
    std::vector<ScoredItem> entries;
};

// Stable per-codebook log-softmax of raw logits.
std::vector<std::vector<double>> log_softmax_heads(const std::vector<std::vector<double>>& logits);

// Exact exhaustive scorer: score(item) = Σ_k logp_k[codes(item)_k] over the
// whole corpus. The reference path that beam search is checked against.
RankedList score_all_items(const std::vector<std::vector<double>>& logits,
                           const CodeLookup& lookup, std::size_t top_k);

// Parallel-code beam search constrained to the prefix trie of existing code
// tuples; completed tuples map back to items (collisions share the score).
RankedList beam_search_items(const std::vector<std::vector<double>>& logits,
                             const CodeLookup& lookup, std::size_t beam_size, std::size_t top_k,
                             std::string* warning = nullptr);

double recall_at_k(const RankedList& ranked, std::int32_t target, std::size_t k);
double ndcg_at_k(const RankedList& ranked, std::int32_t target, std::size_t k);

enum class Scorer { Exact, Beam };
enum class EvalSplit { Valid, Test };

struct EvalReport {
    std::map<std::size_t, double> recall;  // k → mean over users
    std::map<std::size_t, double> ndcg;
    std::size_t user_count = 0;
    std::string to_json(const std::string& split, const std::string& scorer) const;
};

struct EvalOptions {
    Scorer scorer = Scorer::Exact;
    std::vector<std::size_t> k_list = {5, 10};
    std::size_t beam_size = 200;
    std::size_t max_users = 0;  // 0 = all
};

// Raw (non-graph) MTP logits for an item history.
std::vector<std::vector<double>> history_logits(const FairModel& model,
                                                std::span<const std::int32_t> history,
                                                const std::vector<CodeTuple>& item_codes);

EvalReport evaluate(const FairModel& model, const InteractionDataset& ds,
                    const CodeLookup& lookup, EvalSplit split, const EvalOptions& opts = {});

// Per-history-item attention mass at the final query position: |A| summed
// over the item's code positions, averaged across heads and layers.
struct ItemAttentionProfile {
    struct Entry {
        std::int32_t item = -1;
        double score = 0.0;
    };
    std::vector<Entry> entries;  // one per history item, history order
    std::int32_t target_item = -1;
};

ItemAttentionProfile attention_dump(const FairModel& model, std::span<const std::int32_t> history,
                                    const std::vector<CodeTuple>& item_codes,
                                    std::int32_t target_item);

std::string attention_profile_json(const ItemAttentionProfile& profile,
                                   const std::vector<std::string>& vocab);
std::string attention_profile_csv(const ItemAttentionProfile& profile,
                                  const std::vector<std::string>& vocab);

std::string ranked_list_jsonl(const RankedList& ranked, const std::vector<std::string>& vocab);

}  // namespace fair

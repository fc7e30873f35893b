#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fair {

struct Interaction {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
};

enum class LogFormat { Csv, Jsonl };

// Per-user chronological item sequences with the leave-one-out split:
// test = last item, valid = second-to-last, train = the rest.
struct InteractionDataset {
    struct UserSeq {
        std::string user_id;
        std::vector<std::int32_t> items;  // vocab indices, chronological
        std::vector<std::int64_t> times;  // per-item timestamps, same order
    };

    std::vector<std::string> item_vocab;               // index → item_id
    std::unordered_map<std::string, std::int32_t> item_index;
    std::vector<UserSeq> users;                        // order of first appearance
    std::size_t excluded_users = 0;                    // dropped as too short

    std::size_t num_items() const { return item_vocab.size(); }
    std::size_t num_interactions() const;

    std::span<const std::int32_t> train_items(std::size_t u) const {
        const auto& seq = users[u].items;
        return {seq.data(), seq.size() - 2};
    }
    std::int32_t valid_item(std::size_t u) const { return users[u].items[users[u].items.size() - 2]; }
    std::int32_t test_item(std::size_t u) const { return users[u].items.back(); }
    // History visible when predicting the test item: train items plus valid.
    std::span<const std::int32_t> test_history(std::size_t u) const {
        const auto& seq = users[u].items;
        return {seq.data(), seq.size() - 1};
    }
};

std::vector<Interaction> parse_interactions(const std::string& path, LogFormat format);
void write_interactions_csv(const std::string& path, const std::vector<Interaction>& rows);
void write_interactions_jsonl(const std::string& path, const std::vector<Interaction>& rows);

// Iterates to fixpoint: every surviving user and item has ≥5 interactions.
std::vector<Interaction> five_core_filter(std::vector<Interaction> interactions);

InteractionDataset build_dataset(const std::vector<Interaction>& interactions,
                                 std::size_t max_items_per_user = 20);

std::string dataset_summary_json(const InteractionDataset& ds);
void save_dataset(const std::string& path, const InteractionDataset& ds);
InteractionDataset load_dataset(const std::string& path);

// Item embeddings, row-aligned to the dataset's item_vocab.
struct EmbeddingMatrix {
    std::size_t num_items = 0;
    std::size_t dim = 0;
    std::vector<float> data;  // row-major

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

// "FAIREMB1" | num_items:u64 | dim:u64 | num_items×dim f32, little-endian.
EmbeddingMatrix load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const EmbeddingMatrix& emb);
void check_embeddings_match(const EmbeddingMatrix& emb, const InteractionDataset& ds);

// Contiguous-block cluster assignment shared by the synthetic generator.
std::size_t item_cluster(std::size_t item, std::size_t num_items, std::size_t num_clusters);

// Cluster-structured random embeddings so the quantizer has signal to find.
EmbeddingMatrix synth_embeddings(std::size_t num_items, std::size_t dim, std::uint64_t seed,
                                 std::size_t planted_cluster_count);
inline EmbeddingMatrix synth_embeddings(const InteractionDataset& ds, std::size_t dim,
                                        std::uint64_t seed, std::size_t planted_cluster_count) {
    return synth_embeddings(ds.num_items(), dim, seed, planted_cluster_count);
}

}  // namespace fair

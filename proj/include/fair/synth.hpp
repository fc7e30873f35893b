#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fair/data.hpp"
#include "fair/opq.hpp"

namespace fair {

// Planted-pattern benchmark: items grouped into semantic clusters, each user
// following a hidden cluster-level Markov chain (advance to the next cluster
// with `advance_prob`, otherwise jump uniformly), items drawn Zipf-style
// within the active cluster, and a `noise` fraction of interactions replaced
// by uniform random items. Gives ground-truth relevant-vs-noise labels and a
// learnable next-item signal at desk scale.
struct SynthConfig {
    std::size_t users = 500;
    std::size_t items = 300;
    std::size_t clusters = 4;
    double noise = 0.3;
    std::size_t min_items_per_user = 10;
    std::size_t max_items_per_user = 14;
    double advance_prob = 0.9;
    double zipf_s = 1.2;
    std::size_t embed_dim = 64;
    std::size_t build_max_items = 20;  // truncation cap passed to build_dataset
    std::uint64_t seed = 2025;
};

struct SynthArtifacts {
    std::vector<Interaction> interactions;  // raw, pre-filter
    std::vector<bool> interaction_noise;    // aligned to `interactions`
    InteractionDataset dataset;             //5-core filtered and built
    EmbeddingMatrix embeddings;             // aligned to dataset vocab
    std::vector<std::size_t> item_cluster_by_vocab;
    std::vector<std::vector<bool>> user_noise_flags;  // aligned to dataset users[u].items
};

SynthArtifacts make_synth_benchmark(const SynthConfig& cfg);

// interactions.csv, dataset.json, embeddings.fairemb, truth.json
void write_synth_artifacts(const std::string& dir, const SynthConfig& cfg,
                           const SynthArtifacts& art);

}  // namespace fair

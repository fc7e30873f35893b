#include "fair/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include <json.hpp>

#include "fair/errors.hpp"
#include "fair/rng.hpp"
#include "fair/serialize.hpp"

namespace fair {

using nlohmann::json;

SynthArtifacts make_synth_benchmark(const SynthConfig& cfg) {
    if (cfg.clusters == 0 || cfg.items < cfg.clusters)
        throw ConfigError("synth: need at least one item per cluster");
    if (cfg.noise < 0.0 || cfg.noise > 1.0) throw ConfigError("synth: noise must be in [0,1]");
    if (cfg.min_items_per_user < 5)
        throw ConfigError("synth: sequences shorter than 5 cannot survive 5-core filtering");

    SynthArtifacts art;

    // Per-cluster Zipf tables over the cluster's item block.
    std::vector<std::vector<std::size_t>> cluster_items(cfg.clusters);
    for (std::size_t i = 0; i < cfg.items; ++i)
        cluster_items[item_cluster(i, cfg.items, cfg.clusters)].push_back(i);
    std::vector<std::vector<double>> zipf_cdf(cfg.clusters);
    for (std::size_t c = 0; c < cfg.clusters; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < cluster_items[c].size(); ++r) {
            acc += std::pow(static_cast<double>(r + 1), -cfg.zipf_s);
            zipf_cdf[c].push_back(acc);
        }
        for (auto& v : zipf_cdf[c]) v /= acc;
    }

    auto draw_zipf = [&](std::size_t c, std::mt19937_64& rng) {
        const double u = uniform_real(rng);
        const auto& cdf = zipf_cdf[c];
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::size_t r = std::min(static_cast<std::size_t>(it - cdf.begin()),
                                       cdf.size() - 1);
        return cluster_items[c][r];
    };

    for (std::size_t u = 0; u < cfg.users; ++u) {
        auto rng = make_rng(cfg.seed, mix64(0x5e9, u));
        const auto len = static_cast<std::size_t>(uniform_int(
            rng, static_cast<std::int64_t>(cfg.min_items_per_user),
            static_cast<std::int64_t>(cfg.max_items_per_user)));
        std::size_t cluster = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(cfg.clusters) - 1));
        for (std::size_t t = 0; t < len; ++t) {
            const bool is_noise = uniform_real(rng) < cfg.noise;
            const std::size_t item =
                is_noise ? static_cast<std::size_t>(
                               uniform_int(rng, 0, static_cast<std::int64_t>(cfg.items) - 1))
                         : draw_zipf(cluster, rng);
            art.interactions.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                                        static_cast<std::int64_t>(t)});
            art.interaction_noise.push_back(is_noise);
            // The hidden chain advances regardless of the observed noise.
            if (uniform_real(rng) < cfg.advance_prob)
                cluster = (cluster + 1) % cfg.clusters;
            else
                cluster = static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<std::int64_t>(cfg.clusters) - 1));
        }
    }

    // Noise labels keyed by (user, timestamp) so they survive filtering.
    std::map<std::pair<std::string, std::int64_t>, bool> noise_by_key;
    for (std::size_t i = 0; i < art.interactions.size(); ++i)
        noise_by_key[{art.interactions[i].user_id, art.interactions[i].timestamp}] =
            art.interaction_noise[i];

    auto filtered = five_core_filter(art.interactions);
    art.dataset = build_dataset(filtered, cfg.build_max_items);

    art.user_noise_flags.resize(art.dataset.users.size());
    for (std::size_t u = 0; u < art.dataset.users.size(); ++u) {
        const auto& seq = art.dataset.users[u];
        for (std::size_t i = 0; i < seq.items.size(); ++i)
            art.user_noise_flags[u].push_back(
                noise_by_key.at({seq.user_id, seq.times[i]}));
    }

    // Cluster-structured embeddings aligned to the post-filter vocab; the
    // draw for generator item g is keyed by g, not by vocab position, so the
    // matrix is stable under filtering.
    auto center_rng = make_rng(cfg.seed, 0xced);
    std::vector<double> centers(cfg.clusters * cfg.embed_dim);
    for (auto& v : centers) v = gaussian(center_rng);
    art.embeddings.num_items = art.dataset.num_items();
    art.embeddings.dim = cfg.embed_dim;
    art.embeddings.data.resize(art.embeddings.num_items * cfg.embed_dim);
    const double spread = 0.25;
    for (std::size_t v = 0; v < art.dataset.num_items(); ++v) {
        const std::size_t g = static_cast<std::size_t>(
            std::stoull(art.dataset.item_vocab[v].substr(1)));
        const std::size_t c = item_cluster(g, cfg.items, cfg.clusters);
        art.item_cluster_by_vocab.push_back(c);
        auto rng = make_rng(cfg.seed, mix64(0xe8b, g));
        for (std::size_t j = 0; j < cfg.embed_dim; ++j)
            art.embeddings.data[v * cfg.embed_dim + j] =
                static_cast<float>(centers[c * cfg.embed_dim + j] + spread * gaussian(rng));
    }
    return art;
}

void write_synth_artifacts(const std::string& dir, const SynthConfig& cfg,
                           const SynthArtifacts& art) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_interactions_csv((fs::path(dir) / "interactions.csv").string(), art.interactions);
    save_dataset((fs::path(dir) / "dataset.json").string(), art.dataset);
    save_embeddings((fs::path(dir) / "embeddings.fairemb").string(), art.embeddings);
    write_text_file((fs::path(dir) / "summary.json").string(),
                    dataset_summary_json(art.dataset));

    json users = json::array();
    for (std::size_t u = 0; u < art.dataset.users.size(); ++u) {
        std::vector<int> flags;
        for (bool b : art.user_noise_flags[u]) flags.push_back(b ? 1 : 0);
        users.push_back({{"user_id", art.dataset.users[u].user_id}, {"noise", flags}});
    }
    json truth = {{"params",
                   {{"users", cfg.users},
                    {"items", cfg.items},
                    {"clusters", cfg.clusters},
                    {"noise", cfg.noise},
                    {"advance_prob", cfg.advance_prob},
                    {"zipf_s", cfg.zipf_s},
                    {"seed", cfg.seed}}},
                  {"item_cluster_by_vocab", art.item_cluster_by_vocab},
                  {"users", users}};
    write_text_file((fs::path(dir) / "truth.json").string(), truth.dump(2));
}

}  // namespace fair

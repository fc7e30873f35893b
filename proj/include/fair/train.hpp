#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fair/infer.hpp"
#include "fair/model.hpp"
#include "fair/objectives.hpp"

namespace fair {

struct TrainConfig {
    double lr = 0.003;
    std::size_t warmup_steps = 100;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::string validate_metric = "NDCG@20";
    std::uint64_t seed = 2025;
    ObjectiveConfig objective;
    bool enable_fam = true;
    bool enable_nrt = true;
    bool enable_mim = true;
    bool all_prefix_examples = false;
    std::size_t max_steps = 0;          // 0 = no step cap (epochs/patience only)
    std::size_t validate_max_users = 0; // 0 = all users

    // Ablation flag algebra: no-nrt ⇔ α=0, no-mim ⇔ β=0; no-fam forces λ2=0
    // on the model config.
    ObjectiveConfig effective_objective() const;
    void validate() const;

    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// Everything needed to continue a run and reproduce its trajectory
// bit-exactly: rng streams are derived from (seed, epoch, batch), so the
// position counters plus Adam moments are the whole state.
struct TrainState {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::size_t batch_index = 0;  // next batch within `epoch`
    AdamState adam;
    double best_metric = -1.0;
    std::size_t epochs_since_improvement = 0;
};

void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

// Linear warmup to a constant: lr·min(1, step/warmup_steps).
double lr_at(std::size_t step, double lr, std::size_t warmup_steps);

// Training examples: by default one per user (last train item predicted from
// its prefix); all-prefix mode emits one example per predictable position.
std::vector<Example> build_examples(const InteractionDataset& ds,
                                    const std::vector<CodeTuple>& item_codes, bool all_prefix);

struct TrainResult {
    FairModel best_model;
    FairModel last_model;
    TrainState state;
    std::string step_log_jsonl;   // one line per optimizer step
    std::string valid_log_jsonl;  // one line per validation epoch
    double best_metric = -1.0;
    bool diverged = false;
    std::size_t skipped_tail_batches = 0;
};

TrainResult train(const ModelConfig& model_cfg, const InteractionDataset& ds,
                  const CodeLookup& lookup, const TrainConfig& cfg);

// Continues from existing weights and state (resume path). Pass the saved
// best checkpoint so early stopping can keep returning it; without one the
// historical best metric still gates improvements but the returned
// best_model falls back to the latest weights.
TrainResult train_from(FairModel model, TrainState state, const InteractionDataset& ds,
                       const CodeLookup& lookup, const TrainConfig& cfg,
                       const FairModel* best_so_far = nullptr);

struct AblationRow {
    std::string name;
    bool fam = false;
    bool nrt = false;
    bool mim = false;
    EvalReport report;
};

// The four nested variants (none / FAM / FAM+NRT / FAM+NRT+MIM) trained with
// shared seeds and evaluated on the test split.
std::vector<AblationRow> ablation_matrix(const InteractionDataset& ds, const CodeLookup& lookup,
                                         const ModelConfig& model_cfg, const TrainConfig& cfg);
std::string ablation_table_text(const std::vector<AblationRow>& rows);
std::string ablation_table_json(const std::vector<AblationRow>& rows);

// Parses "NDCG@20" / "Recall@10" style metric names.
std::pair<std::string, std::size_t> parse_metric(const std::string& name);

}  // namespace fair

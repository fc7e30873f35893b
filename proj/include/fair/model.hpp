#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fair/opq.hpp"
#include "fair/tensor.hpp"

namespace fair {

struct ModelConfig {
    std::size_t num_layers = 2;
    std::size_t d = 64;         // model width
    std::size_t num_heads = 2;
    std::size_t d_k = 32;
    std::size_t d_v = 32;
    std::size_t ffn_dim = 128;
    std::size_t L = 8;          // codebooks per item
    std::size_t K_cb = 64;      // codes per codebook
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double dropout_rate = 0.1;
    std::size_t max_positions = 160;
    bool use_focused_attention = true;

    void validate() const;
    // λ2 after applying the attention-ablation flag.
    double effective_lambda2() const { return use_focused_attention ? lambda2 : 0.0; }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// One token of the expanded code sequence. code == kPadCode marks PAD, which
// embeds as the zero code vector plus its position embedding.
constexpr std::int32_t kPadCode = -1;
struct CodeToken {
    std::int32_t codebook = 0;
    std::int32_t code = kPadCode;
    bool is_pad() const { return code < 0; }
};
using TokenSeq = std::vector<CodeToken>;

// Expands item history [i1, i2, ...] into L tokens per item, codebooks in
// order 0..L−1.
TokenSeq expand_items_to_tokens(std::span<const std::int32_t> items,
                                const std::vector<CodeTuple>& item_codes);

struct AttentionRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t n = 0;
    std::vector<double> a;   // n×n post-normalization attention matrix
    std::vector<double> a1;  // branch matrices, captured on request
    std::vector<double> a2;
    std::size_t degenerate_rows = 0;
};

struct HeadWeights {
    Tensor wq1, wk1, wq2, wk2, wv;
};

struct LayerWeights {
    std::vector<HeadWeights> heads;
    Tensor wo;         // (h·d_v)×d
    Tensor gain_attn;  // d, pre-attention norm gain
    Tensor gain_ffn;   // d, pre-FFN norm gain
    Tensor w1;         // d×ffn
    Tensor w2;         // ffn×d
};

struct FairModel {
    ModelConfig config;
    std::vector<Tensor> code_embeddings;  // L tables, K_cb×d
    Tensor position_embeddings;           // max_positions×d
    std::vector<LayerWeights> layers;
    std::vector<Tensor> mtp_heads;        // L matrices, d×K_cb

    static FairModel init(const ModelConfig& config, std::uint64_t seed);

    // Checkpoint order: code_embeddings, position_embeddings, then per layer
    // (per head wq1,wk1,wq2,wk2,wv), wo, gain_attn, gain_ffn, w1, w2, then
    // mtp_heads.
    std::vector<Tensor> parameters();
    std::vector<Tensor> parameters() const;
    FairModel clone_weights() const;
    std::uint64_t parameter_count() const;
};

struct ForwardOptions {
    bool training = false;
    bool capture_records = false;
    std::mt19937_64* dropout_rng = nullptr;  // required when training with dropout
};

struct ForwardResult {
    Tensor hidden;  // n×d
    std::vector<AttentionRecord> records;
    std::size_t degenerate_rows = 0;
};

Tensor embed_sequence(const FairModel& model, const TokenSeq& tokens);

// Single-head focused attention: two softmax branches, signed difference,
// row-wise signed-L1 normalization, then A·V. λ2 == 0 short-circuits the
// second branch and reduces exactly to standard causal attention.
std::pair<Tensor, AttentionRecord> focused_attention(const Tensor& x, const HeadWeights& w,
                                                     double lambda1, double lambda2,
                                                     bool capture = false);

std::pair<Tensor, std::vector<AttentionRecord>> multi_head_focused_attention(
    const Tensor& x, const LayerWeights& layer, double lambda1, double lambda2,
    bool capture = false);

ForwardResult decoder_forward(const FairModel& model, const TokenSeq& tokens,
                              const ForwardOptions& opts = {});

// L logit rows [1×K_cb] taken at the sequence's last non-PAD position.
std::vector<Tensor> mtp_logits(const FairModel& model, const Tensor& hidden,
                               const TokenSeq& tokens);
std::size_t last_real_position(const TokenSeq& tokens);

std::uint64_t count_parameters(const ModelConfig& config);
std::uint64_t estimate_flops(const ModelConfig& config, std::size_t seq_len);

// JSON config line + "FAIRCKPT1" + u64 count + weights (f64 LE) in
// parameters() order.
void save_checkpoint(const std::string& path, const FairModel& model);
FairModel load_checkpoint(const std::string& path);

constexpr double kRmsNormEps = 1e-6;
constexpr double kAttnNormEps = 1e-8;

}  // namespace fair

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fair/model.hpp"
#include "fair/tensor.hpp"

namespace fair {

// Stochastic code-sequence perturbation: PAD with p_mask, in-codebook
// substitution with p_sub, unchanged otherwise (mutually exclusive draw).
struct PerturbSpec {
    double p_mask = 0.1;
    double p_sub = 0.1;

    void validate(std::size_t codebook_size) const;
};

struct LossDiagnostics {
    std::size_t degenerate_rows = 0;
    std::size_t masked_tokens = 0;
    std::size_t substituted_tokens = 0;
    std::size_t perturbed_token_total = 0;
};

struct LossBreakdown {
    double l_mtp = 0.0;
    double l_nr = 0.0;
    double l_mim = 0.0;
    double total = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    LossDiagnostics diagnostics;
    Tensor total_tensor;  // graph handle; backward() trains all three terms
};

// One training example: an expanded token history and the next item to
// predict.
struct Example {
    TokenSeq tokens;
    CodeTuple target_codes;
    std::int32_t target_item = -1;
};

// Sum over codebooks of per-codebook cross-entropy, each averaged over the
// batch. logits[k] is [batch×K_cb]; targets[b] is the batch's code tuples.
Tensor mtp_loss(const std::vector<Tensor>& logits, const std::vector<CodeTuple>& targets);

// Input PAD positions are never perturbed; substitution draws uniformly from
// the same codebook excluding the current code.
TokenSeq perturb(const TokenSeq& tokens, const PerturbSpec& spec, std::size_t codebook_size,
                 std::mt19937_64& rng, LossDiagnostics* diag = nullptr);

// Triplet consistency loss with cosine distance d(a,b) = 1 − cos(a,b):
// mean over anchors i and in-batch negatives j≠i of
// max(0, d(h_i, h̃_i) − d(h_i, h_j) + margin).
Tensor nr_loss(const Tensor& h, const Tensor& h_tilde, double margin);

// InfoNCE over in-batch negatives with cosine similarity and temperature τ.
Tensor mim_loss(const Tensor& h_t, const Tensor& x_t, double tau);

struct CeIdentity {
    double ce = 0.0;
    double h_p = 0.0;
    double kl = 0.0;
};

// Evaluates CE, H(p) and KL(p‖p_θ) and asserts CE == H + KL within 1e-10
// with KL ≥ −1e-12; the decomposition itself, checked numerically.
CeIdentity cross_entropy_identity_check(std::span<const double> p,
                                        std::span<const double> p_theta);

// ln K − L_MIM; optimistic (the finite-negatives correction is not
// computable and is ignored).
double mi_lower_bound(std::size_t k, double mim_loss_value);

struct ObjectiveConfig {
    double alpha = 1.0;
    double beta = 0.01;
    double tau = 0.03;
    double margin = 0.2;
    PerturbSpec perturb;
};

// One clean forward (MTP logits + pooled states for MIM) plus, when α > 0,
// one perturbed forward for NR. total = l_mtp + α·l_nr + β·l_mim.
LossBreakdown combined_loss(const FairModel& model, const std::vector<Example>& batch,
                            const ObjectiveConfig& cfg, std::mt19937_64& perturb_rng,
                            std::mt19937_64* dropout_rng = nullptr, bool training = false);

}  // namespace fair

#include "fair/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "fair/errors.hpp"
#include "fair/rng.hpp"

namespace fair {

void PerturbSpec::validate(std::size_t codebook_size) const {
    if (p_mask < 0.0 || p_sub < 0.0 || p_mask + p_sub > 1.0)
        throw ConfigError("perturb: need p_mask, p_sub >= 0 with p_mask + p_sub <= 1");
    if (codebook_size <= 1 && p_sub > 0.0)
        throw ConfigError("perturb: substitution impossible with codebook size 1");
}

Tensor mtp_loss(const std::vector<Tensor>& logits, const std::vector<CodeTuple>& targets) {
    if (logits.empty()) throw ContractError("mtp_loss: no codebook logits");
    const std::size_t batch = logits[0].rows();
    if (targets.size() != batch)
        throw ContractError("mtp_loss: " + std::to_string(targets.size()) + " targets for batch " +
                            std::to_string(batch));
    Tensor total;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        std::vector<std::int64_t> t(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            if (targets[b].size() != logits.size())
                throw ContractError("mtp_loss: target tuple length mismatch at example " +
                                    std::to_string(b));
            t[b] = targets[b][k];
        }
        Tensor ce = softmax_cross_entropy_rows(logits[k], t);
        total = k == 0 ? ce : add(total, ce);
    }
    return total;
}

TokenSeq perturb(const TokenSeq& tokens, const PerturbSpec& spec, std::size_t codebook_size,
                 std::mt19937_64& rng, LossDiagnostics* diag) {
    spec.validate(codebook_size);
    TokenSeq out = tokens;
    for (auto& tok : out) {
        if (tok.is_pad()) continue;  // input PAD is never perturbed
        if (diag) ++diag->perturbed_token_total;
        const double u = uniform_real(rng);
        if (u < spec.p_mask) {
            tok.code = kPadCode;
            if (diag) ++diag->masked_tokens;
        } else if (u < spec.p_mask + spec.p_sub) {
            // uniform over the codebook excluding the current code
            const auto r = uniform_int(rng, 0, static_cast<std::int64_t>(codebook_size) - 2);
            tok.code = static_cast<std::int32_t>(r >= tok.code ? r + 1 : r);
            if (diag) ++diag->substituted_tokens;
        }
    }
    return out;
}

Tensor nr_loss(const Tensor& h, const Tensor& h_tilde, double margin) {
    const std::size_t batch = h.rows();
    if (h.shape() != h_tilde.shape())
        throw ShapeError("nr_loss: clean and perturbed shapes differ");
    if (batch < 2) throw ContractError("nr_loss: need a batch of >= 2 for in-batch negatives");

    // d(h,h̃) − d(h,h⁻) + m == cos(h,h⁻) − cos(h,h̃) + m
    Tensor cos_pos = cosine_rows(h, h_tilde);                 // [B]
    Tensor hn = l2_normalize_rows(h);
    Tensor cos_neg = matmul_nt(hn, hn);                       // [B×B]
    Tensor hinge = relu(add_scalar(sub_col_vector(cos_neg, cos_pos), margin));

    std::vector<double> offdiag(batch * batch, 1.0);
    for (std::size_t i = 0; i < batch; ++i) offdiag[i * batch + i] = 0.0;
    Tensor masked = mul(hinge, Tensor::from_values({batch, batch}, std::move(offdiag)));
    const double denom = static_cast<double>(batch) * static_cast<double>(batch - 1);
    return scale(sum(masked), 1.0 / denom);
}

Tensor mim_loss(const Tensor& h_t, const Tensor& x_t, double tau) {
    if (h_t.shape() != x_t.shape())
        throw ShapeError("mim_loss: representation shapes differ");
    if (tau <= 0.0) throw ConfigError("mim_loss: temperature must be positive");
    const std::size_t batch = h_t.rows();
    Tensor sims = matmul_nt(l2_normalize_rows(h_t), l2_normalize_rows(x_t));
    std::vector<std::int64_t> diag(batch);
    for (std::size_t i = 0; i < batch; ++i) diag[i] = static_cast<std::int64_t>(i);
    return softmax_cross_entropy_rows(scale(sims, 1.0 / tau), diag);
}

CeIdentity cross_entropy_identity_check(std::span<const double> p,
                                        std::span<const double> p_theta) {
    if (p.size() != p_theta.size() || p.empty())
        throw ContractError("cross_entropy_identity_check: size mismatch");
    auto check_dist = [](std::span<const double> d, const char* name) {
        double s = 0.0;
        for (double v : d) {
            if (v < 0.0) throw ContractError(std::string(name) + ": negative probability");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ContractError(std::string(name) + ": sums to " + std::to_string(s));
    };
    check_dist(p, "p");
    check_dist(p_theta, "p_theta");

    CeIdentity out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;  // 0·log 0 = 0
        out.ce -= p[i] * std::log(p_theta[i]);
        out.h_p -= p[i] * std::log(p[i]);
        out.kl += p[i] * std::log(p[i] / p_theta[i]);
    }
    if (std::abs(out.ce - (out.h_p + out.kl)) > 1e-10)
        throw NumericError("cross_entropy_identity_check: CE != H + KL beyond 1e-10");
    if (out.kl < -1e-12)
        throw NumericError("cross_entropy_identity_check: negative KL");
    return out;
}

double mi_lower_bound(std::size_t k, double mim_loss_value) {
    if (k < 2) throw ContractError("mi_lower_bound: need K >= 2");
    return std::log(static_cast<double>(k)) - mim_loss_value;
}

namespace {

std::vector<bool> non_pad_rows(const TokenSeq& tokens) {
    std::vector<bool> keep(tokens.size());
    bool any = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        keep[i] = !tokens[i].is_pad();
        any = any || keep[i];
    }
    if (!any) throw NumericError("pooling: no non-PAD positions left in sequence");
    return keep;
}

// Input-side target representation: mean of the target item's code
// embeddings across codebooks.
Tensor target_embedding(const FairModel& model, const CodeTuple& codes) {
    Tensor sum_t;
    for (std::size_t k = 0; k < codes.size(); ++k) {
        Tensor row = embedding_lookup(model.code_embeddings[k], {codes[k]});
        sum_t = k == 0 ? row : add(sum_t, row);
    }
    return scale(sum_t, 1.0 / static_cast<double>(codes.size()));
}

}  // namespace

LossBreakdown combined_loss(const FairModel& model, const std::vector<Example>& batch,
                            const ObjectiveConfig& cfg, std::mt19937_64& perturb_rng,
                            std::mt19937_64* dropout_rng, bool training) {
    if (batch.empty()) throw ContractError("combined_loss: empty batch");
    const std::size_t L = model.config.L;

    LossBreakdown out;
    out.alpha = cfg.alpha;
    out.beta = cfg.beta;

    ForwardOptions opts;
    opts.training = training;
    opts.dropout_rng = dropout_rng;

    // Clean forward: MTP logits and pooled states.
    std::vector<std::vector<Tensor>> per_example_logits(L);
    std::vector<Tensor> pooled_clean;
    std::vector<Tensor> pooled_targets;
    for (const auto& ex : batch) {
        auto fwd = decoder_forward(model, ex.tokens, opts);
        out.diagnostics.degenerate_rows += fwd.degenerate_rows;
        auto logits = mtp_logits(model, fwd.hidden, ex.tokens);
        for (std::size_t k = 0; k < L; ++k) per_example_logits[k].push_back(logits[k]);
        pooled_clean.push_back(mean_pool_rows(fwd.hidden, non_pad_rows(ex.tokens)));
        if (cfg.beta != 0.0) pooled_targets.push_back(target_embedding(model, ex.target_codes));
    }
    std::vector<Tensor> logits_stacked(L);
    for (std::size_t k = 0; k < L; ++k)
        logits_stacked[k] = batch.size() == 1 ? per_example_logits[k][0]
                                              : concat_rows(per_example_logits[k]);
    std::vector<CodeTuple> targets;
    targets.reserve(batch.size());
    for (const auto& ex : batch) targets.push_back(ex.target_codes);
    Tensor l_mtp = mtp_loss(logits_stacked, targets);

    Tensor h = concat_rows(pooled_clean);
    Tensor total = l_mtp;

    if (cfg.alpha != 0.0) {
        std::vector<Tensor> pooled_noisy;
        for (const auto& ex : batch) {
            auto noisy = perturb(ex.tokens, cfg.perturb, model.config.K_cb, perturb_rng,
                                 &out.diagnostics);
            auto fwd = decoder_forward(model, noisy, opts);
            out.diagnostics.degenerate_rows += fwd.degenerate_rows;
            pooled_noisy.push_back(mean_pool_rows(fwd.hidden, non_pad_rows(noisy)));
        }
        Tensor l_nr = nr_loss(h, concat_rows(pooled_noisy), cfg.margin);
        out.l_nr = l_nr.item();
        total = add(total, scale(l_nr, cfg.alpha));
    }

    if (cfg.beta != 0.0) {
        Tensor l_mim = mim_loss(h, concat_rows(pooled_targets), cfg.tau);
        out.l_mim = l_mim.item();
        total = add(total, scale(l_mim, cfg.beta));
    }

    out.l_mtp = l_mtp.item();
    out.total = total.item();
    out.total_tensor = total;
    return out;
}

}  // namespace fair

// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exit code = number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fair/data.hpp"
#include "fair/infer.hpp"
#include "fair/model.hpp"
#include "fair/objectives.hpp"
#include "fair/opq.hpp"
#include "fair/rng.hpp"
#include "fair/serialize.hpp"
#include "fair/synth.hpp"
#include "fair/tensor.hpp"
#include "fair/train.hpp"

using namespace fair;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0) {
    auto rng = make_rng(seed);
    return Tensor::randn(std::move(shape), rng, stddev);
}

// ---- shared benchmark fixtures (criteria 9, 10, 11) ----

struct BenchmarkRun {
    SynthArtifacts art;
    CodeLookup lookup;
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    TrainResult full;
    TrainResult none;
    double full_recall10 = 0.0;
    double none_recall10 = 0.0;
    double full_train_seconds = 0.0;
    double none_train_seconds = 0.0;
};

ModelConfig benchmark_model_config() {
    ModelConfig c;
    c.num_layers = 2;
    c.d = 64;
    c.num_heads = 2;
    c.d_k = 32;
    c.d_v = 32;
    c.ffn_dim = 128;
    c.L = 8;
    c.K_cb = 64;
    c.lambda1 = 1.0;
    c.lambda2 = 1.0;
    c.dropout_rate = 0.1;
    c.max_positions = 160;
    return c;
}

TrainConfig benchmark_train_config(std::uint64_t seed) {
    TrainConfig t;
    t.lr = 0.005;
    t.warmup_steps = 30;
    t.batch_size = 32;
    t.max_epochs = 12;
    t.patience = 4;
    t.validate_metric = "NDCG@20";
    t.validate_max_users = 200;
    t.seed = seed;
    return t;
}

BenchmarkRun run_benchmark(std::uint64_t seed) {
    BenchmarkRun run;
    SynthConfig sc;
    sc.users = 500;
    sc.items = 300;
    sc.clusters = 4;
    sc.noise = 0.3;
    sc.embed_dim = 64;
    sc.seed = seed;
    run.art = make_synth_benchmark(sc);

    OpqConfig oc;
    oc.num_codebooks = 8;
    oc.codebook_size = 64;
    oc.iterations = 8;
    oc.seed = seed;
    auto opq = fit_opq(run.art.embeddings, oc);
    build_lookup(opq, run.art.embeddings);
    run.lookup = opq.lookup;

    run.model_cfg = benchmark_model_config();
    run.train_cfg = benchmark_train_config(seed);

    EvalOptions eval_opts;
    eval_opts.scorer = Scorer::Exact;
    eval_opts.k_list = {10};

    auto t0 = Clock::now();
    run.full = train(run.model_cfg, run.art.dataset, run.lookup, run.train_cfg);
    run.full_train_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    run.full_recall10 = evaluate(run.full.best_model, run.art.dataset, run.lookup,
                                 EvalSplit::Test, eval_opts)
                            .recall.at(10);

    TrainConfig none_cfg = run.train_cfg;
    none_cfg.enable_fam = false;
    none_cfg.enable_nrt = false;
    none_cfg.enable_mim = false;
    t0 = Clock::now();
    run.none = train(run.model_cfg, run.art.dataset, run.lookup, none_cfg);
    run.none_train_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    run.none_recall10 = evaluate(run.none.best_model, run.art.dataset, run.lookup,
                                 EvalSplit::Test, eval_opts)
                            .recall.at(10);
    return run;
}

std::vector<BenchmarkRun>& benchmark_runs() {
    static std::vector<BenchmarkRun> runs;
    if (runs.empty())
        for (std::uint64_t seed : {0, 1, 2}) runs.push_back(run_benchmark(seed));
    return runs;
}

// ---- criterion 1: gradient soundness ----

Outcome criterion_gradients() {
    const auto start = Clock::now();
    double worst_op = 0.0;

    auto mate = random_tensor({3, 4}, 900);
    auto weights = random_tensor({3, 4}, 901);
    auto gain = random_tensor({4}, 902, 0.5);
    std::vector<std::function<Tensor(const Tensor&)>> ops = {
        [&](const Tensor& x) { return sum(mul(add(x, mate), weights)); },
        [&](const Tensor& x) { return sum(mul(sub(x, mate), weights)); },
        [&](const Tensor& x) { return sum(mul(mul(x, mate), weights)); },
        [&](const Tensor& x) { return sum(mul(scale(x, 1.7), weights)); },
        [&](const Tensor& x) { return sum(mul(add_scalar(x, -0.4), weights)); },
        [&](const Tensor& x) { return sum(mul(silu(x), weights)); },
        [&](const Tensor& x) { return sum(mul(relu(x), weights)); },
        [&](const Tensor& x) { return sum(mul(exp_t(x), weights)); },
        [&](const Tensor& x) { return sum(mul(log_t(add_scalar(mul(x, x), 0.7)), weights)); },
        [&](const Tensor& x) { return sum(mul(softmax_rows(x), weights)); },
        [&](const Tensor& x) { return sum(mul(rms_norm(x, gain), weights)); },
        [&](const Tensor& x) { return sum(mul(l1_normalize_rows_signed(x), weights)); },
        [&](const Tensor& x) { return sum(mul(l2_normalize_rows(x), weights)); },
        [&](const Tensor& x) { return sum(mul(cosine_rows(x, mate), random_tensor({3}, 903))); },
        [&](const Tensor& x) { return sum(mul(mean_pool_rows(x), random_tensor({4}, 904))); },
        [&](const Tensor& x) { return sum(mul(matmul(x, transpose(mate)), random_tensor({3, 3}, 905))); },
        [&](const Tensor& x) { return sum(mul(matmul_nt(x, mate), random_tensor({3, 3}, 906))); },
        [&](const Tensor& x) { return softmax_cross_entropy_rows(x, {1, 0, 3}); },
    };
    for (std::uint64_t seed = 0; seed <= 4; ++seed)
        for (auto& f : ops)
            worst_op = std::max(worst_op, finite_diff_check(f, random_tensor({3, 4}, 910 + seed)));
    if (worst_op >= 1e-5)
        return {false, "per-op gradient error " + fmt(worst_op) + " >= 1e-5"};

    // focused-attention block
    double worst_block = 0.0;
    for (std::uint64_t seed = 0; seed <= 4; ++seed) {
        auto rng = make_rng(920 + seed);
        LayerWeights layer;
        for (int h = 0; h < 2; ++h) {
            HeadWeights w;
            w.wq1 = Tensor::randn({6, 3}, rng);
            w.wk1 = Tensor::randn({6, 3}, rng);
            w.wq2 = Tensor::randn({6, 3}, rng);
            w.wk2 = Tensor::randn({6, 3}, rng);
            w.wv = Tensor::randn({6, 3}, rng);
            layer.heads.push_back(w);
        }
        layer.wo = Tensor::randn({6, 6}, rng);
        auto pick = Tensor::randn({4, 6}, rng);
        auto f = [&](const Tensor& x) {
            auto [out, recs] = multi_head_focused_attention(x, layer, 1.0, 1.0);
            return sum(mul(out, pick));
        };
        worst_block = std::max(worst_block, finite_diff_check(f, Tensor::randn({4, 6}, rng)));
    }
    if (worst_block >= 1e-4)
        return {false, "attention block gradient error " + fmt(worst_block) + " >= 1e-4"};

    // full combined loss on a tiny model, probed coordinates
    ModelConfig mc;
    mc.num_layers = 1;
    mc.d = 8;
    mc.num_heads = 2;
    mc.d_k = 4;
    mc.d_v = 4;
    mc.ffn_dim = 16;
    mc.L = 2;
    mc.K_cb = 4;
    mc.dropout_rate = 0.0;
    mc.max_positions = 16;
    double worst_combined = 0.0;
    for (std::uint64_t seed = 0; seed <= 4; ++seed) {
        auto model = FairModel::init(mc, 930 + seed);
        std::vector<Example> batch;
        auto rng = make_rng(940 + seed);
        for (int b = 0; b < 3; ++b) {
            Example ex;
            for (int i = 0; i < 2; ++i)
                for (std::size_t k = 0; k < mc.L; ++k)
                    ex.tokens.push_back({static_cast<std::int32_t>(k),
                                         static_cast<std::int32_t>(uniform_int(rng, 0, 3))});
            for (std::size_t k = 0; k < mc.L; ++k)
                ex.target_codes.push_back(static_cast<std::int32_t>(uniform_int(rng, 0, 3)));
            batch.push_back(std::move(ex));
        }
        ObjectiveConfig oc;
        auto eval_loss = [&]() {
            auto prng = make_rng(950 + seed);
            return combined_loss(model, batch, oc, prng);
        };
        auto params = model.parameters();
        zero_grads(params);
        backward(eval_loss().total_tensor);
        auto probe_rng = make_rng(960 + seed);
        for (int probe = 0; probe < 25; ++probe) {
            const auto pi = static_cast<std::size_t>(
                uniform_int(probe_rng, 0, static_cast<std::int64_t>(params.size()) - 1));
            const auto ci = static_cast<std::size_t>(
                uniform_int(probe_rng, 0, static_cast<std::int64_t>(params[pi].size()) - 1));
            const double analytic = params[pi].has_grad() ? params[pi].grad()[ci] : 0.0;
            auto vals = params[pi].values_mut();
            const double orig = vals[ci], h = 1e-5;
            vals[ci] = orig + h;
            const double fp = eval_loss().total;
            vals[ci] = orig - h;
            const double fm = eval_loss().total;
            vals[ci] = orig;
            const double numeric = (fp - fm) / (2 * h);
            worst_combined = std::max(
                worst_combined, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
        }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (worst_combined >= 1e-3)
        return {false, "combined-loss gradient error " + fmt(worst_combined) + " >= 1e-3"};
    if (secs >= 60.0) return {false, "runtime " + fmt(secs) + "s >= 60s"};
    return {true, "op<=" + fmt(worst_op) + " block<=" + fmt(worst_block) +
                      " combined<=" + fmt(worst_combined) + " in " + fmt(secs) + "s"};
}

// ---- criterion 2: focused-attention reduction ----

Outcome criterion_reduction() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rng = make_rng(1000 + seed);
        const std::size_t n = 3 + seed % 5, d = 6, dk = 3;
        HeadWeights w;
        w.wq1 = Tensor::randn({d, dk}, rng);
        w.wk1 = Tensor::randn({d, dk}, rng);
        w.wq2 = Tensor::randn({d, dk}, rng);
        w.wk2 = Tensor::randn({d, dk}, rng);
        w.wv = Tensor::randn({d, dk}, rng);
        auto x = Tensor::randn({n, d}, rng);
        auto [out, rec] = focused_attention(x, w, 1.0, 0.0, true);

        // независимый straight-line causal softmax
        auto q = matmul(x, w.wq1);
        auto k = matmul(x, w.wk1);
        const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(i + 1);
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0;
                for (std::size_t c = 0; c < dk; ++c) s += q.at(i, c) * k.at(j, c);
                row[j] = s * inv;
                mx = std::max(mx, row[j]);
            }
            double z = 0;
            for (std::size_t j = 0; j <= i; ++j) z += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < n; ++j) {
                const double want = j <= i ? std::exp(row[j] - mx) / z : 0.0;
                worst = std::max(worst, std::abs(rec.a[i * n + j] - want));
            }
        }
    }
    if (worst >= 1e-12) return {false, "reduction deviation " + fmt(worst) + " >= 1e-12"};

    // symmetry: shared branch weights at λ1=λ2 → exactly zero
    auto rng = make_rng(2000);
    HeadWeights w;
    w.wq1 = Tensor::randn({5, 2}, rng);
    w.wk1 = Tensor::randn({5, 2}, rng);
    w.wq2 = w.wq1;
    w.wk2 = w.wk1;
    w.wv = Tensor::randn({5, 2}, rng);
    auto [out, rec] = focused_attention(Tensor::randn({4, 5}, rng), w, 1.0, 1.0, true);
    for (double v : rec.a)
        if (v != 0.0) return {false, "symmetric branches gave nonzero attention"};
    for (double v : out.values())
        if (v != 0.0) return {false, "symmetric branches gave nonzero output"};
    return {true, "max deviation " + fmt(worst) + "; symmetric case exactly zero"};
}

// ---- criterion 3: loss closed forms ----

Outcome criterion_loss_closed_forms() {
    std::vector<Tensor> logits(32, Tensor::zeros({1, 256}));
    std::vector<CodeTuple> targets(1, CodeTuple(32, 5));
    const double mtp = mtp_loss(logits, targets).item();
    if (std::abs(mtp - 32.0 * std::log(256.0)) >= 1e-9)
        return {false, "uniform MTP " + fmt(mtp) + " != 32·ln256"};

    std::vector<double> rows;
    for (int b = 0; b < 8; ++b) {
        rows.push_back(0.6);
        rows.push_back(-0.8);
    }
    auto h = Tensor::from_values({8, 2}, rows);
    const double mim = mim_loss(h, h, 0.03).item();
    if (std::abs(mim - std::log(8.0)) >= 1e-9)
        return {false, "all-equal-sims InfoNCE " + fmt(mim) + " != ln 8"};

    auto anchors = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    auto noisy = Tensor::from_values({2, 2}, {0, 1, 1, 0});
    const double nr = nr_loss(anchors, noisy, 0.2).item();
    if (std::abs(nr - 0.2) >= 1e-9)
        return {false, "distance-equality triplet " + fmt(nr) + " != 0.2"};
    return {true, "MTP=" + fmt(mtp) + " InfoNCE=" + fmt(mim) + " triplet=" + fmt(nr)};
}

// ---- criterion 4: cross-entropy identity ----

Outcome criterion_ce_identity() {
    auto rng = make_rng(4100);
    double worst = 0.0, min_kl = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + trial % 9;
        std::vector<double> p(k), q(k);
        double sp = 0, sq = 0;
        for (std::size_t i = 0; i < k; ++i) {
            p[i] = uniform_real(rng, 1e-3, 1.0);
            q[i] = uniform_real(rng, 1e-3, 1.0);
            sp += p[i];
            sq += q[i];
        }
        for (std::size_t i = 0; i < k; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        const auto out = cross_entropy_identity_check(p, q);  // throws beyond 1e-10
        worst = std::max(worst, std::abs(out.ce - (out.h_p + out.kl)));
        min_kl = std::min(min_kl, out.kl);
    }
    if (min_kl < 0.0) return {false, "negative KL " + fmt(min_kl)};
    return {true, "max |CE-(H+KL)| = " + fmt(worst) + ", min KL = " + fmt(min_kl)};
}

// ---- criterion 5: MI bound sanity ----

Outcome criterion_mi_bound() {
    const auto start = Clock::now();
    const std::size_t n = 4;
    std::vector<double> joint(n * n, 0.2 / 12.0);
    for (std::size_t i = 0; i < n; ++i) joint[i * n + i] = 0.2;
    double exact = 0.0;
    std::vector<double> pa(n, 0.0), pb(n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            pa[a] += joint[a * n + b];
            pb[b] += joint[a * n + b];
        }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            exact += joint[a * n + b] * std::log(joint[a * n + b] / (pa[a] * pb[b]));

    auto rng = make_rng(5100);
    const std::size_t dim = 8, batch = 8;
    auto u = Tensor::randn({n, dim}, rng, 0.5);
    auto v = Tensor::randn({n, dim}, rng, 0.5);
    u.set_requires_grad(true);
    v.set_requires_grad(true);
    std::vector<Tensor> params = {u, v};
    AdamState adam;
    auto sample = [&](std::mt19937_64& r) {
        const double x = uniform_real(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < n * n; ++c) {
            acc += joint[c];
            if (acc >= x) return std::pair<std::int64_t, std::int64_t>(c / n, c % n);
        }
        return std::pair<std::int64_t, std::int64_t>(n - 1, n - 1);
    };
    auto batch_loss = [&](std::mt19937_64& r) {
        std::vector<std::int64_t> as, bs;
        for (std::size_t i = 0; i < batch; ++i) {
            auto [a, b] = sample(r);
            as.push_back(a);
            bs.push_back(b);
        }
        return mim_loss(embedding_lookup(u, as), embedding_lookup(v, bs), 0.1);
    };
    for (int step = 0; step < 600; ++step) {
        zero_grads(params);
        backward(batch_loss(rng));
        adam_step(params, adam, 0.02);
    }
    auto eval_rng = make_rng(5200);
    double mean_loss = 0.0;
    for (int i = 0; i < 400; ++i) mean_loss += batch_loss(eval_rng).item();
    mean_loss /= 400.0;
    const double bound = mi_lower_bound(batch, mean_loss);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (bound > exact + 0.05)
        return {false, "bound " + fmt(bound) + " exceeds exact MI " + fmt(exact) + " + 0.05"};
    if (secs >= 120.0) return {false, "runtime " + fmt(secs) + "s >= 120s"};
    return {true, "exact MI=" + fmt(exact) + " bound=" + fmt(bound) + " in " + fmt(secs) + "s"};
}

// ---- criterion 6: perturbation statistics ----

Outcome criterion_perturbation() {
    const std::size_t n = 100000;
    TokenSeq toks;
    auto seed_rng = make_rng(6100);
    for (std::size_t i = 0; i < n; ++i)
        toks.push_back({static_cast<std::int32_t>(i % 8),
                        static_cast<std::int32_t>(uniform_int(seed_rng, 0, 63))});
    PerturbSpec spec{0.1, 0.1};
    LossDiagnostics diag;
    auto rng = make_rng(6200);
    auto noisy = perturb(toks, spec, 64, rng, &diag);
    const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(n));
    const double mask_frac = static_cast<double>(diag.masked_tokens) / n;
    const double sub_frac = static_cast<double>(diag.substituted_tokens) / n;
    // every reported substitution must be observably different from the
    // original; changed-token count equals the substitution count exactly
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!noisy[i].is_pad() && noisy[i].code != toks[i].code) ++changed;
    const std::size_t self_subs = diag.substituted_tokens - changed;
    if (std::abs(mask_frac - 0.1) >= 3 * sigma)
        return {false, "mask fraction " + fmt(mask_frac) + " outside 3σ band"};
    if (std::abs(sub_frac - 0.1) >= 3 * sigma)
        return {false, "substitution fraction " + fmt(sub_frac) + " outside 3σ band"};
    if (self_subs != 0) return {false, std::to_string(self_subs) + " self-substitutions"};
    return {true, "mask=" + fmt(mask_frac) + " sub=" + fmt(sub_frac) + " self-subs=0"};
}

// ---- criterion 7: OPQ ----

Outcome criterion_opq() {
    EmbeddingMatrix emb;
    emb.num_items = 400;
    emb.dim = 32;
    auto rng = make_rng(7100);
    for (std::size_t i = 0; i < emb.num_items * emb.dim; ++i)
        emb.data.push_back(static_cast<float>(gaussian(rng)));
    OpqConfig cfg;
    cfg.num_codebooks = 4;
    cfg.codebook_size = 16;
    cfg.iterations = 10;
    cfg.seed = 7;
    OpqFitReport report;
    auto model = fit_opq(emb, cfg, &report);
    if (report.errors.size() != 10) return {false, "expected 10 recorded alternations"};
    double prev = report.initial_error;
    for (double e : report.errors) {
        if (e > prev + 1e-9) return {false, "error increased: " + fmt(prev) + " -> " + fmt(e)};
        prev = e;
    }
    for (double o : report.orthogonality)
        if (o >= 1e-6) return {false, "orthogonality " + fmt(o) + " >= 1e-6"};

    // encode vs exhaustive nearest-centroid search
    const std::size_t sd = model.sub_dim();
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(model.dim);
        for (auto& v : x) v = gaussian(rng);
        const auto got = model.encode(std::span<const double>(x));
        const auto y = model.rotate(x);
        for (std::size_t m = 0; m < model.num_codebooks; ++m) {
            double best = 1e300;
            std::int32_t best_k = 0;
            for (std::size_t k = 0; k < model.codebook_size; ++k) {
                double s = 0;
                for (std::size_t j = 0; j < sd; ++j) {
                    const double d = y[m * sd + j] - model.centroid(m, k)[j];
                    s += d * d;
                }
                if (s < best) {
                    best = s;
                    best_k = static_cast<std::int32_t>(k);
                }
            }
            if (got[m] != best_k)
                return {false, "encode disagrees with exhaustive search at trial " +
                                   std::to_string(trial)};
        }
    }
    return {true, "error " + fmt(report.initial_error) + " -> " + fmt(report.errors.back()) +
                      ", orthogonality <= " + fmt(*std::max_element(report.orthogonality.begin(),
                                                                    report.orthogonality.end()))};
}

// ---- criterion 8: beam–exact equivalence ----

Outcome criterion_beam_equivalence() {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_rng(8100 + seed);
        const std::size_t items = 50 + static_cast<std::size_t>(uniform_int(rng, 0, 450));
        const std::size_t L = 4, K = 12;
        std::vector<CodeTuple> codes;
        for (std::size_t i = 0; i < items; ++i) {
            CodeTuple c(L);
            for (auto& v : c) v = static_cast<std::int32_t>(uniform_int(rng, 0, K - 1));
            codes.push_back(std::move(c));
        }
        CodeLookup lookup;
        lookup.build(std::move(codes), L, K);
        std::vector<std::vector<double>> logits(L, std::vector<double>(K));
        for (auto& row : logits)
            for (auto& v : row) v = gaussian(rng);
        auto exact = score_all_items(logits, lookup, 10);
        auto beam = beam_search_items(logits, lookup, items, 10);
        if (beam.entries.size() != exact.entries.size())
            return {false, "top-10 size mismatch at seed " + std::to_string(seed)};
        for (std::size_t i = 0; i < exact.entries.size(); ++i) {
            if (beam.entries[i].item != exact.entries[i].item)
                return {false, "item mismatch at seed " + std::to_string(seed) + " rank " +
                                   std::to_string(i)};
            if (std::abs(beam.entries[i].score - exact.entries[i].score) >= 1e-12)
                return {false, "score gap at seed " + std::to_string(seed)};
        }
    }
    return {true, "20 corpora of 50-500 items, beam == exact top-10"};
}

// ---- criterion 9: metric correctness + chance level ----

Outcome criterion_metrics() {
    auto rng = make_rng(9100);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 39));
        std::vector<std::int32_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        RankedList ranked;
        for (std::size_t i = 0; i < n; ++i)
            ranked.entries.push_back({perm[i], 1000.0 - static_cast<double>(i)});
        const auto target = static_cast<std::int32_t>(uniform_int(rng, 0, n - 1));
        const std::size_t k = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 19));
        std::size_t rank = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (ranked.entries[i].item == target) rank = i + 1;
        const double want_recall = rank <= k ? 1.0 : 0.0;
        const double want_ndcg = rank <= k ? 1.0 / std::log2(rank + 1.0) : 0.0;
        if (recall_at_k(ranked, target, k) != want_recall)
            return {false, "recall mismatch at trial " + std::to_string(trial)};
        if (std::abs(ndcg_at_k(ranked, target, k) - want_ndcg) > 1e-14)
            return {false, "ndcg mismatch at trial " + std::to_string(trial)};
    }

    // chance level of an untrained model on the synthetic benchmark
    const auto& run = benchmark_runs()[0];
    auto untrained = FairModel::init(benchmark_model_config(), 424242);
    EvalOptions opts;
    opts.scorer = Scorer::Exact;
    opts.k_list = {10};
    const auto report = evaluate(untrained, run.art.dataset, run.lookup, EvalSplit::Test, opts);
    const double corpus = static_cast<double>(run.art.dataset.num_items());
    const double p = 10.0 / corpus;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(report.user_count));
    const double got = report.recall.at(10);
    if (std::abs(got - p) >= 3 * sigma)
        return {false, "untrained recall@10 " + fmt(got) + " vs chance " + fmt(p) + " ± " +
                           fmt(3 * sigma)};
    return {true, "1000 ranked lists exact; untrained recall@10 " + fmt(got) + " ≈ " + fmt(p) +
                      " (3σ=" + fmt(3 * sigma) + ")"};
}

// ---- criterion 10: end-to-end learning ----

Outcome criterion_end_to_end() {
    const auto& runs = benchmark_runs();
    std::vector<double> full_r, none_r;
    std::ostringstream detail;
    for (const auto& run : runs) {
        full_r.push_back(run.full_recall10);
        none_r.push_back(run.none_recall10);
        detail << "[full " << fmt(run.full_recall10) << " none " << fmt(run.none_recall10)
               << " " << fmt(run.full_train_seconds) << "s/" << fmt(run.none_train_seconds)
               << "s] ";
        if (run.full_train_seconds >= 900.0 || run.none_train_seconds >= 900.0)
            return {false, "variant exceeded 15 min: " + detail.str()};
    }
    const double chance5 = 5.0 * 10.0 / 300.0;
    const double full_med = median(full_r), none_med = median(none_r);
    if (full_med < chance5)
        return {false, "median full recall@10 " + fmt(full_med) + " < 5×chance " + fmt(chance5) +
                           " " + detail.str()};
    if (none_med > full_med)
        return {false, "ablated median " + fmt(none_med) + " exceeds full median " +
                           fmt(full_med) + " " + detail.str()};
    return {true, detail.str() + "medians: full " + fmt(full_med) + " none " + fmt(none_med) +
                      " chance×5 " + fmt(chance5)};
}

// ---- criterion 11: attention-dump trend ----

Outcome criterion_attention_trend() {
    std::vector<double> consistent_medians, noise_medians;
    for (const auto& run : benchmark_runs()) {
        std::vector<double> consistent, noisy;
        for (std::size_t u = 0; u < run.art.dataset.users.size(); ++u) {
            const auto history = run.art.dataset.test_history(u);
            const auto profile = attention_dump(run.full.best_model, history,
                                                run.lookup.item_to_codes,
                                                run.art.dataset.test_item(u));
            for (std::size_t i = 0; i < profile.entries.size(); ++i) {
                if (run.art.user_noise_flags[u][i])
                    noisy.push_back(profile.entries[i].score);
                else
                    consistent.push_back(profile.entries[i].score);
            }
        }
        consistent_medians.push_back(median(consistent));
        noise_medians.push_back(median(noisy));
    }
    const double cm = median(consistent_medians), nm = median(noise_medians);
    std::ostringstream detail;
    for (std::size_t i = 0; i < consistent_medians.size(); ++i)
        detail << "[seed" << i << " consistent " << fmt(consistent_medians[i]) << " noise "
               << fmt(noise_medians[i]) << "] ";
    if (!(cm > nm))
        return {false, "median consistent " + fmt(cm) + " not above noise " + fmt(nm) + " " +
                           detail.str()};
    return {true, detail.str() + "medians: consistent " + fmt(cm) + " > noise " + fmt(nm)};
}

// ---- criterion 12: cost report ----

Outcome criterion_cost() {
    ModelConfig tiny;
    tiny.num_layers = 1;
    tiny.d = 8;
    tiny.num_heads = 2;
    tiny.d_k = 4;
    tiny.d_v = 4;
    tiny.ffn_dim = 16;
    tiny.L = 2;
    tiny.K_cb = 4;
    tiny.max_positions = 8;
    const std::uint64_t hand = 64 + 64 + 2 * (4 * 8 * 4 + 8 * 4) + 8 * 8 + (8 * 16 + 16 * 8) +
                               2 * 8 + 2 * 8 * 4;
    if (count_parameters(tiny) != hand)
        return {false, "tiny config count " + std::to_string(count_parameters(tiny)) +
                           " != hand sum " + std::to_string(hand)};
    const auto model = FairModel::init(tiny, 1);
    if (model.parameter_count() != hand)
        return {false, "instantiated parameter count disagrees with the hand sum"};

    ModelConfig published;
    published.num_layers = 2;
    published.d = 512;
    published.num_heads = 4;
    published.d_k = 128;
    published.d_v = 128;
    published.ffn_dim = 1024;
    published.L = 32;
    published.K_cb = 256;
    published.max_positions = 640;
    const auto n = count_parameters(published);
    if (n < 11000000ull || n > 33000000ull)
        return {false, "published config count " + std::to_string(n) + " outside [11M, 33M]"};
    return {true, "tiny = " + std::to_string(hand) + " exact; published config = " +
                      std::to_string(n) + " in [11M, 33M]"};
}

// ---- criterion 13: CLI train determinism ----

Outcome criterion_determinism() {
#ifndef FAIR_CLI_PATH
    return {false, "CLI path not provided at build time"};
#else
    const std::string cli = FAIR_CLI_PATH;
    if (!fs::exists(cli)) return {false, "CLI binary missing: " + cli};
    const auto base = fs::temp_directory_path() / ("fair_accept_" + std::to_string(::getpid()));
    fs::remove_all(base);
    fs::create_directories(base);
    auto shellquote = [](const std::string& s) { return "'" + s + "'"; };
    auto run_cmd = [&](const std::string& args) {
        const std::string cmd = shellquote(cli) + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string synth_dir = (base / "synth").string();
    if (run_cmd("--out-dir " + shellquote(synth_dir) +
                " --seed 5 synth --users 40 --items 30 --clusters 3 --noise 0.2 --embed-dim 16 "
                "--min-len 8 --max-len 10") != 0)
        return {false, "synth run failed"};
    const std::string tok_dir = (base / "tok").string();
    if (run_cmd("--out-dir " + shellquote(tok_dir) + " --seed 5 tokenize --dataset " +
                shellquote(synth_dir + "/dataset.json") + " --embeddings " +
                shellquote(synth_dir + "/embeddings.fairemb") +
                " --codebooks 4 --codebook-size 8 --iters 3") != 0)
        return {false, "tokenize run failed"};

    const std::string cfg_path = (base / "cfg.json").string();
    write_text_file(cfg_path, R"({
      "model": {"num_layers": 1, "d": 16, "num_heads": 2, "d_k": 8, "d_v": 8,
                "ffn_dim": 32, "L": 4, "K_cb": 8, "dropout_rate": 0.1, "max_positions": 60},
      "train": {"lr": 0.005, "warmup_steps": 10, "batch_size": 8, "max_epochs": 3,
                "patience": 5, "seed": 5}
    })");
    for (const char* dir : {"t1", "t2"}) {
        if (run_cmd("--config " + shellquote(cfg_path) + " --out-dir " +
                    shellquote((base / dir).string()) + " train --dataset " +
                    shellquote(synth_dir + "/dataset.json") + " --codes " +
                    shellquote(tok_dir + "/codes.jsonl")) != 0)
            return {false, std::string("train run ") + dir + " failed"};
    }
    for (const char* name :
         {"manifest.json", "train_log.jsonl", "valid_log.jsonl", "checkpoint.ckpt", "last.ckpt"}) {
        const auto a = read_text_file((base / "t1" / name).string());
        const auto b = read_text_file((base / "t2" / name).string());
        if (a != b) return {false, std::string(name) + " differs between identical runs"};
    }
    fs::remove_all(base);
    return {true, "two CLI train runs byte-identical (logs, checkpoints, manifest)"};
#endif
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient soundness (ops, attention block, combined loss)", criterion_gradients},
        {2, "focused-attention reduction and symmetry", criterion_reduction},
        {3, "loss closed forms (MTP, InfoNCE, triplet)", criterion_loss_closed_forms},
        {4, "cross-entropy identity CE = H + KL", criterion_ce_identity},
        {5, "MI lower bound vs exact MI on a toy joint", criterion_mi_bound},
        {6, "perturbation statistics at p_mask = p_sub = 0.1", criterion_perturbation},
        {7, "OPQ monotonicity, orthogonality, exact encoding", criterion_opq},
        {8, "beam-exact oracle equivalence", criterion_beam_equivalence},
        {9, "metric correctness and untrained chance level", criterion_metrics},
        {10, "end-to-end learning on the planted benchmark", criterion_end_to_end},
        {11, "attention-dump relevance trend", criterion_attention_trend},
        {12, "cost report parameter counts", criterion_cost},
        {13, "bit-identical CLI training runs", criterion_determinism},
    };

    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);
    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = Clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        std::printf("[%2d] %s  %s (%.1fs)\n      %s\n", c.id, out.pass ? "PASS" : "FAIL", c.name,
                    secs, out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    if (failures == 0)
        std::printf("all criteria passed\n");
    else
        std::printf("%d criteria FAILED\n", failures);
    return failures;
}

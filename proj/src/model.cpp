#include "fair/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fair/errors.hpp"
#include "fair/rng.hpp"
#include "fair/serialize.hpp"

namespace fair {

using nlohmann::json;

void ModelConfig::validate() const {
    if (num_heads == 0 || d == 0 || L == 0 || K_cb < 1)
        throw ConfigError("model config: zero-sized dimension");
    if (d != num_heads * d_v)
        throw ConfigError("model config: d (" + std::to_string(d) + ") != num_heads*d_v (" +
                          std::to_string(num_heads * d_v) + ")");
    if (d_k != d_v || d_k != d / num_heads)
        throw ConfigError("model config: expected d_k == d_v == d/num_heads");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ConfigError("model config: attention coefficients must be >= 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("model config: dropout_rate out of [0,1)");
}

std::string ModelConfig::to_json() const {
    json j = {{"num_layers", num_layers},
              {"d", d},
              {"num_heads", num_heads},
              {"d_k", d_k},
              {"d_v", d_v},
              {"ffn_dim", ffn_dim},
              {"L", L},
              {"K_cb", K_cb},
              {"lambda1", lambda1},
              {"lambda2", lambda2},
              {"dropout_rate", dropout_rate},
              {"max_positions", max_positions},
              {"use_focused_attention", use_focused_attention}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    ModelConfig c;
    c.num_layers = j.value("num_layers", c.num_layers);
    c.d = j.value("d", c.d);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.d_k = j.value("d_k", c.d / c.num_heads);
    c.d_v = j.value("d_v", c.d / c.num_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.L = j.value("L", c.L);
    c.K_cb = j.value("K_cb", c.K_cb);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.use_focused_attention = j.value("use_focused_attention", c.use_focused_attention);
    c.validate();
    return c;
}

TokenSeq expand_items_to_tokens(std::span<const std::int32_t> items,
                                const std::vector<CodeTuple>& item_codes) {
    TokenSeq tokens;
    for (auto item : items) {
        if (item < 0 || static_cast<std::size_t>(item) >= item_codes.size())
            throw DataError("expand_items_to_tokens: item " + std::to_string(item) +
                            " has no codes");
        const auto& codes = item_codes[item];
        for (std::size_t k = 0; k < codes.size(); ++k)
            tokens.push_back({static_cast<std::int32_t>(k), codes[k]});
    }
    return tokens;
}

FairModel FairModel::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    FairModel m;
    m.config = config;
    auto rng = make_rng(seed, 0x70d);
    const double w_std = 0.02;
    auto weight = [&](Shape shape) {
        auto t = Tensor::randn(std::move(shape), rng, w_std);
        t.set_requires_grad(true);
        return t;
    };
    auto ones = [&](Shape shape) {
        auto t = Tensor::full(std::move(shape), 1.0);
        t.set_requires_grad(true);
        return t;
    };
    for (std::size_t k = 0; k < config.L; ++k)
        m.code_embeddings.push_back(weight({config.K_cb, config.d}));
    m.position_embeddings = weight({config.max_positions, config.d});
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        LayerWeights lw;
        for (std::size_t h = 0; h < config.num_heads; ++h) {
            HeadWeights hw;
            hw.wq1 = weight({config.d, config.d_k});
            hw.wk1 = weight({config.d, config.d_k});
            hw.wq2 = weight({config.d, config.d_k});
            hw.wk2 = weight({config.d, config.d_k});
            hw.wv = weight({config.d, config.d_v});
            lw.heads.push_back(std::move(hw));
        }
        lw.wo = weight({config.num_heads * config.d_v, config.d});
        lw.gain_attn = ones({config.d});
        lw.gain_ffn = ones({config.d});
        lw.w1 = weight({config.d, config.ffn_dim});
        lw.w2 = weight({config.ffn_dim, config.d});
        m.layers.push_back(std::move(lw));
    }
    for (std::size_t k = 0; k < config.L; ++k)
        m.mtp_heads.push_back(weight({config.d, config.K_cb}));
    return m;
}

std::vector<Tensor> FairModel::parameters() {
    std::vector<Tensor> ps;
    for (auto& t : code_embeddings) ps.push_back(t);
    ps.push_back(position_embeddings);
    for (auto& l : layers) {
        for (auto& h : l.heads) {
            ps.push_back(h.wq1);
            ps.push_back(h.wk1);
            ps.push_back(h.wq2);
            ps.push_back(h.wk2);
            ps.push_back(h.wv);
        }
        ps.push_back(l.wo);
        ps.push_back(l.gain_attn);
        ps.push_back(l.gain_ffn);
        ps.push_back(l.w1);
        ps.push_back(l.w2);
    }
    for (auto& t : mtp_heads) ps.push_back(t);
    return ps;
}

std::vector<Tensor> FairModel::parameters() const {
    return const_cast<FairModel*>(this)->parameters();
}

FairModel FairModel::clone_weights() const {
    FairModel copy;
    copy.config = config;
    for (const auto& t : code_embeddings)
        copy.code_embeddings.push_back(t.clone().set_requires_grad(true));
    copy.position_embeddings = position_embeddings.clone().set_requires_grad(true);
    for (const auto& l : layers) {
        LayerWeights lw;
        for (const auto& h : l.heads) {
            HeadWeights hw;
            hw.wq1 = h.wq1.clone().set_requires_grad(true);
            hw.wk1 = h.wk1.clone().set_requires_grad(true);
            hw.wq2 = h.wq2.clone().set_requires_grad(true);
            hw.wk2 = h.wk2.clone().set_requires_grad(true);
            hw.wv = h.wv.clone().set_requires_grad(true);
            lw.heads.push_back(std::move(hw));
        }
        lw.wo = l.wo.clone().set_requires_grad(true);
        lw.gain_attn = l.gain_attn.clone().set_requires_grad(true);
        lw.gain_ffn = l.gain_ffn.clone().set_requires_grad(true);
        lw.w1 = l.w1.clone().set_requires_grad(true);
        lw.w2 = l.w2.clone().set_requires_grad(true);
        copy.layers.push_back(std::move(lw));
    }
    for (const auto& t : mtp_heads) copy.mtp_heads.push_back(t.clone().set_requires_grad(true));
    return copy;
}

std::uint64_t FairModel::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
}

Tensor embed_sequence(const FairModel& model, const TokenSeq& tokens) {
    const auto& cfg = model.config;
    const std::size_t n = tokens.size();
    if (n == 0) throw ContractError("embed_sequence: empty token sequence");
    if (n > cfg.max_positions)
        throw ContractError("embed_sequence: sequence of " + std::to_string(n) +
                            " tokens exceeds max_positions " + std::to_string(cfg.max_positions));
    for (const auto& t : tokens) {
        if (t.codebook < 0 || static_cast<std::size_t>(t.codebook) >= cfg.L)
            throw ContractError("embed_sequence: codebook index " + std::to_string(t.codebook) +
                                " out of range");
        if (!t.is_pad() && static_cast<std::size_t>(t.code) >= cfg.K_cb)
            throw ContractError("embed_sequence: code " + std::to_string(t.code) + " out of range");
    }

    std::vector<std::int64_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<std::int64_t>(i);
    Tensor out = embedding_lookup(model.position_embeddings, positions);
    for (std::size_t k = 0; k < cfg.L; ++k) {
        std::vector<std::int64_t> idx(n, -1);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i)
            if (!tokens[i].is_pad() && tokens[i].codebook == static_cast<std::int32_t>(k)) {
                idx[i] = tokens[i].code;
                any = true;
            }
        if (any) out = add(out, embedding_lookup(model.code_embeddings[k], idx));
    }
    return out;
}

namespace {

Tensor causal_mask(std::size_t n) {
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1.0;
    return Tensor::from_values({n, n}, std::move(m));
}

std::vector<double> snapshot(const Tensor& t) {
    return {t.values().begin(), t.values().end()};
}

}  // namespace

std::pair<Tensor, AttentionRecord> focused_attention(const Tensor& x, const HeadWeights& w,
                                                     double lambda1, double lambda2,
                                                     bool capture) {
    const std::size_t n = x.rows();
    const std::size_t dk = w.wq1.cols();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const Tensor mask = causal_mask(n);

    auto branch = [&](const Tensor& wq, const Tensor& wk) {
        Tensor q = matmul(x, wq);
        Tensor k = matmul(x, wk);
        return softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk), mask);
    };

    Tensor a1 = branch(w.wq1, w.wk1);
    Tensor diff;
    Tensor a2;
    if (lambda2 != 0.0) {
        a2 = branch(w.wq2, w.wk2);
        diff = sub(scale(a1, lambda1), scale(a2, lambda2));
    } else {
        diff = scale(a1, lambda1);
    }
    Tensor attn = l1_normalize_rows_signed(diff, kAttnNormEps);

    AttentionRecord rec;
    rec.n = n;
    rec.degenerate_rows = count_degenerate_rows(diff, kAttnNormEps);
    rec.a = snapshot(attn);
    if (capture) {
        rec.a1 = snapshot(a1);
        if (lambda2 != 0.0) rec.a2 = snapshot(a2);
    }

    Tensor v = matmul(x, w.wv);
    return {matmul(attn, v), std::move(rec)};
}

std::pair<Tensor, std::vector<AttentionRecord>> multi_head_focused_attention(
    const Tensor& x, const LayerWeights& layer, double lambda1, double lambda2, bool capture) {
    std::vector<Tensor> head_outs;
    std::vector<AttentionRecord> records;
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        auto [out, rec] = focused_attention(x, layer.heads[h], lambda1, lambda2, capture);
        rec.head = h;
        head_outs.push_back(std::move(out));
        records.push_back(std::move(rec));
    }
    Tensor cat = head_outs.size() == 1 ? head_outs[0] : concat_cols(head_outs);
    if (cat.cols() != layer.wo.rows())
        throw ConfigError("multi_head_focused_attention: head concat width " +
                          std::to_string(cat.cols()) + " does not match wo rows " +
                          std::to_string(layer.wo.rows()));
    return {matmul(cat, layer.wo), std::move(records)};
}

namespace {

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
    std::vector<double> mask(x.size());
    const double keep = 1.0 - rate;
    for (auto& v : mask) v = uniform_real(rng) < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor::from_values(x.shape(), std::move(mask)));
}

}  // namespace

ForwardResult decoder_forward(const FairModel& model, const TokenSeq& tokens,
                              const ForwardOptions& opts) {
    const auto& cfg = model.config;
    const bool dropping = opts.training && cfg.dropout_rate > 0.0;
    if (dropping && opts.dropout_rng == nullptr)
        throw ContractError("decoder_forward: training with dropout requires a dropout rng");
    const double lambda2 = cfg.effective_lambda2();

    ForwardResult result;
    Tensor x = embed_sequence(model, tokens);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        Tensor normed = rms_norm(x, layer.gain_attn, kRmsNormEps);

        // Attention-row dropout is applied inside by re-running the heads
        // here so the record still holds the pre-dropout matrix.
        std::vector<Tensor> head_outs;
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            const auto& hw = layer.heads[h];
            const std::size_t n = tokens.size();
            const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
            const Tensor mask = causal_mask(n);
            auto branch = [&](const Tensor& wq, const Tensor& wk) {
                return softmax_rows(scale(matmul_nt(matmul(normed, wq), matmul(normed, wk)),
                                          inv_sqrt_dk),
                                    mask);
            };
            Tensor a1 = branch(hw.wq1, hw.wk1);
            Tensor diff;
            Tensor a2;
            if (lambda2 != 0.0) {
                a2 = branch(hw.wq2, hw.wk2);
                diff = sub(scale(a1, cfg.lambda1), scale(a2, lambda2));
            } else {
                diff = scale(a1, cfg.lambda1);
            }
            Tensor attn = l1_normalize_rows_signed(diff, kAttnNormEps);

            AttentionRecord rec;
            rec.layer = l;
            rec.head = h;
            rec.n = n;
            rec.degenerate_rows = count_degenerate_rows(diff, kAttnNormEps);
            result.degenerate_rows += rec.degenerate_rows;
            if (opts.capture_records) {
                rec.a = snapshot(attn);
                rec.a1 = snapshot(a1);
                if (lambda2 != 0.0) rec.a2 = snapshot(a2);
                result.records.push_back(std::move(rec));
            }

            if (dropping) attn = dropout(attn, cfg.dropout_rate, *opts.dropout_rng);
            head_outs.push_back(matmul(attn, matmul(normed, hw.wv)));
        }
        Tensor cat = head_outs.size() == 1 ? head_outs[0] : concat_cols(head_outs);
        x = add(x, matmul(cat, layer.wo));

        Tensor ffn = matmul(silu(matmul(rms_norm(x, layer.gain_ffn, kRmsNormEps), layer.w1)),
                            layer.w2);
        if (dropping) ffn = dropout(ffn, cfg.dropout_rate, *opts.dropout_rng);
        x = add(x, ffn);

        for (double v : x.values())
            if (!std::isfinite(v))
                throw NumericError("decoder_forward: non-finite hidden state in layer " +
                                   std::to_string(l));
    }
    result.hidden = std::move(x);
    return result;
}

std::size_t last_real_position(const TokenSeq& tokens) {
    for (std::size_t i = tokens.size(); i > 0; --i)
        if (!tokens[i - 1].is_pad()) return i - 1;
    throw ContractError("mtp_logits: all-PAD sequence");
}

std::vector<Tensor> mtp_logits(const FairModel& model, const Tensor& hidden,
                               const TokenSeq& tokens) {
    const auto last = static_cast<std::int64_t>(last_real_position(tokens));
    Tensor h_last = select_rows(hidden, {last});
    std::vector<Tensor> logits;
    logits.reserve(model.config.L);
    for (const auto& head : model.mtp_heads) logits.push_back(matmul(h_last, head));
    return logits;
}

std::uint64_t count_parameters(const ModelConfig& c) {
    const std::uint64_t code_emb = static_cast<std::uint64_t>(c.L) * c.K_cb * c.d;
    const std::uint64_t pos_emb = static_cast<std::uint64_t>(c.max_positions) * c.d;
    const std::uint64_t per_head = 4ull * c.d * c.d_k + static_cast<std::uint64_t>(c.d) * c.d_v;
    const std::uint64_t per_layer = c.num_heads * per_head +
                                    static_cast<std::uint64_t>(c.num_heads) * c.d_v * c.d +
                                    2ull * c.d * c.ffn_dim + 2ull * c.d;
    const std::uint64_t heads = static_cast<std::uint64_t>(c.L) * c.d * c.K_cb;
    return code_emb + pos_emb + c.num_layers * per_layer + heads;
}

std::uint64_t estimate_flops(const ModelConfig& c, std::size_t seq_len) {
    const std::uint64_t n = seq_len;
    // 2·m·k·n per matmul, one forward pass.
    const std::uint64_t proj = 2ull * n * c.d * c.d_k * 4 + 2ull * n * c.d * c.d_v;  // per head
    const std::uint64_t scores = 2ull * 2 * n * n * c.d_k;                           // two branches
    const std::uint64_t apply = 2ull * n * n * c.d_v;
    const std::uint64_t per_layer = c.num_heads * (proj + scores + apply) +
                                    2ull * n * (c.num_heads * c.d_v) * c.d +
                                    2ull * n * c.d * c.ffn_dim + 2ull * n * c.ffn_dim * c.d;
    const std::uint64_t heads = 2ull * c.L * c.d * c.K_cb;  // logits at the last position
    return c.num_layers * per_layer + heads;
}

void save_checkpoint(const std::string& path, const FairModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << model.config.to_json() << "\n";
    write_magic(out, "FAIRCKPT1");
    auto params = model.parameters();
    std::uint64_t total = 0;
    for (const auto& p : params) total += p.size();
    write_u64(out, total);
    for (const auto& p : params) write_f64_array(out, p.values().data(), p.size());
}

FairModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw DataError(path + ": missing config header");
    FairModel model = FairModel::init(ModelConfig::from_json(header), 0);
    expect_magic(in, "FAIRCKPT1", path);
    const std::uint64_t total = read_u64(in, "parameter count");
    if (total != model.parameter_count())
        throw DataError(path + ": checkpoint holds " + std::to_string(total) +
                        " parameters, config implies " + std::to_string(model.parameter_count()));
    for (auto& p : model.parameters())
        read_f64_array(in, p.values_mut().data(), p.size(), "weights");
    return model;
}

}  // namespace fair

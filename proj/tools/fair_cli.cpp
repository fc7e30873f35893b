// Command-line front end: ingestion, tokenization, training, evaluation,
// ablations, attention dumps, cost reports, sweeps, and the synthetic
// benchmark generator. Every run writes a manifest before any artifact.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fair/data.hpp"
#include "fair/errors.hpp"
#include "fair/infer.hpp"
#include "fair/model.hpp"
#include "fair/objectives.hpp"
#include "fair/opq.hpp"
#include "fair/serialize.hpp"
#include "fair/synth.hpp"
#include "fair/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fair;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct ConfigFile {
    json doc;

    static ConfigFile load(const std::string& path) {
        ConfigFile cf;
        if (path.empty()) {
            cf.doc = json::object();
            return cf;
        }
        try {
            cf.doc = json::parse(read_text_file(path));
        } catch (const json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
        return cf;
    }

    ModelConfig model() const {
        if (!doc.contains("model")) return ModelConfig{};
        return ModelConfig::from_json(doc.at("model").dump());
    }
    TrainConfig train() const {
        if (!doc.contains("train")) return TrainConfig{};
        return TrainConfig::from_json(doc.at("train").dump());
    }
    OpqConfig opq() const {
        OpqConfig c;
        if (!doc.contains("opq")) return c;
        const auto& o = doc.at("opq");
        c.num_codebooks = o.value("L", c.num_codebooks);
        c.codebook_size = o.value("K_cb", c.codebook_size);
        c.iterations = o.value("iterations", c.iterations);
        c.lloyd_iterations = o.value("lloyd_iterations", c.lloyd_iterations);
        c.seed = o.value("seed", c.seed);
        return c;
    }
};

// Written to <out>/manifest.json before any artifact. No volatile fields:
// identical manifests must reproduce identical artifacts.
void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& artifact_names) {
    fs::create_directories(out_dir);
    json inputs = json::object();
    for (const auto& p : input_paths) inputs[p] = hex64(fnv1a_file(p));
    json artifacts = json::array();
    for (const auto& a : artifact_names) artifacts.push_back(a);
    json doc = {{"tool_version", kToolVersion},
                {"command", command},
                {"config", config},
                {"inputs", inputs},
                {"artifacts", artifacts}};
    write_text_file((fs::path(out_dir) / "manifest.json").string(), doc.dump(2));
}

std::string out_file(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fair: semantic-ID generative recommender (tokenize, train, evaluate)"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run";
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_option("--out-dir", out_dir, "run directory for artifacts");
    app.add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed_flag = s; seed_set = true; }, "seed override");

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand("synth", "generate the planted-pattern benchmark");
    SynthConfig synth_cfg;
    synth_cmd->add_option("--users", synth_cfg.users);
    synth_cmd->add_option("--items", synth_cfg.items);
    synth_cmd->add_option("--clusters", synth_cfg.clusters);
    synth_cmd->add_option("--noise", synth_cfg.noise);
    synth_cmd->add_option("--min-len", synth_cfg.min_items_per_user);
    synth_cmd->add_option("--max-len", synth_cfg.max_items_per_user);
    synth_cmd->add_option("--advance-prob", synth_cfg.advance_prob);
    synth_cmd->add_option("--zipf-s", synth_cfg.zipf_s);
    synth_cmd->add_option("--embed-dim", synth_cfg.embed_dim);

    // ---- ingest ----
    auto* ingest_cmd = app.add_subcommand("ingest", "parse + 5-core filter + split interactions");
    std::string in_interactions, in_format = "csv", in_embeddings;
    std::size_t max_items_per_user = 20;
    ingest_cmd->add_option("--interactions", in_interactions)->required();
    ingest_cmd->add_option("--format", in_format)->check(CLI::IsMember({"csv", "jsonl"}));
    ingest_cmd->add_option("--embeddings", in_embeddings, "optional: validate row alignment");
    ingest_cmd->add_option("--max-items", max_items_per_user, "per-user history cap");

    // ---- tokenize ----
    auto* tok_cmd = app.add_subcommand("tokenize", "fit OPQ and export semantic-ID codes");
    std::string tok_dataset, tok_embeddings;
    OpqConfig tok_opq_flags;
    bool tok_L_set = false, tok_K_set = false, tok_iters_set = false;
    tok_cmd->add_option("--dataset", tok_dataset)->required();
    tok_cmd->add_option("--embeddings", tok_embeddings)->required();
    tok_cmd->add_option_function<std::size_t>(
        "--codebooks", [&](std::size_t v) { tok_opq_flags.num_codebooks = v; tok_L_set = true; },
        "codebook count L");
    tok_cmd->add_option_function<std::size_t>(
        "--codebook-size", [&](std::size_t v) { tok_opq_flags.codebook_size = v; tok_K_set = true; },
        "codes per codebook K_cb");
    tok_cmd->add_option_function<std::size_t>(
        "--iters", [&](std::size_t v) { tok_opq_flags.iterations = v; tok_iters_set = true; },
        "alternation count");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train with the combined objective");
    std::string tr_dataset, tr_codes;
    bool no_fam = false, no_nrt = false, no_mim = false;
    std::optional<double> tr_lr;
    std::optional<std::size_t> tr_epochs, tr_batch, tr_patience, tr_warmup, tr_max_steps;
    std::optional<bool> tr_all_prefix;
    train_cmd->add_option("--dataset", tr_dataset)->required();
    train_cmd->add_option("--codes", tr_codes)->required();
    train_cmd->add_flag("--no-fam", no_fam, "disable focused attention (λ2=0)");
    train_cmd->add_flag("--no-nrt", no_nrt, "disable the noise-robustness loss (α=0)");
    train_cmd->add_flag("--no-mim", no_mim, "disable the InfoNCE loss (β=0)");
    train_cmd->add_option("--lr", tr_lr);
    train_cmd->add_option("--epochs", tr_epochs);
    train_cmd->add_option("--batch", tr_batch);
    train_cmd->add_option("--patience", tr_patience);
    train_cmd->add_option("--warmup", tr_warmup);
    train_cmd->add_option("--max-steps", tr_max_steps);
    train_cmd->add_option("--all-prefix", tr_all_prefix);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "Recall@k / NDCG@k over a split");
    std::string ev_ckpt, ev_dataset, ev_codes, ev_split = "test", ev_scorer = "exact";
    std::size_t ev_beam = 200;
    std::string ev_klist = "5,10";
    eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
    eval_cmd->add_option("--dataset", ev_dataset)->required();
    eval_cmd->add_option("--codes", ev_codes)->required();
    eval_cmd->add_option("--split", ev_split)->check(CLI::IsMember({"valid", "test"}));
    eval_cmd->add_option("--scorer", ev_scorer)->check(CLI::IsMember({"exact", "beam"}));
    eval_cmd->add_option("--beam-size", ev_beam);
    eval_cmd->add_option("--k", ev_klist, "comma-separated cutoffs");

    // ---- infer ----
    auto* infer_cmd = app.add_subcommand("infer", "rank items for an item history");
    std::string if_ckpt, if_dataset, if_codes, if_items, if_user, if_scorer = "beam";
    std::size_t if_beam = 200, if_topk = 10;
    infer_cmd->add_option("--checkpoint", if_ckpt)->required();
    infer_cmd->add_option("--dataset", if_dataset)->required();
    infer_cmd->add_option("--codes", if_codes)->required();
    infer_cmd->add_option("--items", if_items, "comma-separated item ids as history");
    infer_cmd->add_option("--user", if_user, "use this user's test-time history");
    infer_cmd->add_option("--scorer", if_scorer)->check(CLI::IsMember({"exact", "beam"}));
    infer_cmd->add_option("--beam-size", if_beam);
    infer_cmd->add_option("--top-k", if_topk);

    // ---- attn-dump ----
    auto* attn_cmd = app.add_subcommand("attn-dump", "per-item attention profile for a user");
    std::string at_ckpt, at_dataset, at_codes, at_user;
    attn_cmd->add_option("--checkpoint", at_ckpt)->required();
    attn_cmd->add_option("--dataset", at_dataset)->required();
    attn_cmd->add_option("--codes", at_codes)->required();
    attn_cmd->add_option("--user", at_user)->required();

    // ---- ablate ----
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the 4 nested variants");
    std::string ab_dataset, ab_codes;
    ablate_cmd->add_option("--dataset", ab_dataset)->required();
    ablate_cmd->add_option("--codes", ab_codes)->required();

    // ---- report-cost ----
    auto* cost_cmd = app.add_subcommand("report-cost", "parameter count and forward GFLOPs");
    std::size_t cost_seq_len = 640;
    cost_cmd->add_option("--seq-len", cost_seq_len, "sequence length for the FLOPs estimate");

    // ---- sweep ----
    auto* sweep_cmd = app.add_subcommand("sweep", "grid over one knob, train+eval per value");
    std::string sw_dataset, sw_codes, sw_param, sw_values;
    sweep_cmd->add_option("--dataset", sw_dataset)->required();
    sweep_cmd->add_option("--codes", sw_codes)->required();
    sweep_cmd->add_option("--param", sw_param)
        ->required()
        ->check(CLI::IsMember({"alpha", "beta", "dropout", "p_mask", "p_sub"}));
    sweep_cmd->add_option("--values", sw_values, "comma-separated values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_name() == "CallForHelp" ? kExitOk : kExitUsage;
    }

    try {
        const ConfigFile cf = ConfigFile::load(config_path);

        auto parse_csv_sizes = [](const std::string& s) {
            std::vector<std::size_t> out;
            std::size_t pos = 0;
            while (pos < s.size()) {
                auto comma = s.find(',', pos);
                if (comma == std::string::npos) comma = s.size();
                out.push_back(std::stoull(s.substr(pos, comma - pos)));
                pos = comma + 1;
            }
            if (out.empty()) throw ConfigError("empty k list");
            return out;
        };
        auto parse_csv_strings = [](const std::string& s) {
            std::vector<std::string> out;
            std::size_t pos = 0;
            while (pos < s.size()) {
                auto comma = s.find(',', pos);
                if (comma == std::string::npos) comma = s.size();
                out.push_back(s.substr(pos, comma - pos));
                pos = comma + 1;
            }
            return out;
        };

        if (app.got_subcommand(synth_cmd)) {
            if (seed_set) synth_cfg.seed = seed_flag;
            json cfg_snapshot = {{"users", synth_cfg.users},         {"items", synth_cfg.items},
                                 {"clusters", synth_cfg.clusters},   {"noise", synth_cfg.noise},
                                 {"min_len", synth_cfg.min_items_per_user},
                                 {"max_len", synth_cfg.max_items_per_user},
                                 {"advance_prob", synth_cfg.advance_prob},
                                 {"zipf_s", synth_cfg.zipf_s},       {"embed_dim", synth_cfg.embed_dim},
                                 {"seed", synth_cfg.seed}};
            write_manifest(out_dir, "synth", cfg_snapshot, {},
                           {"interactions.csv", "dataset.json", "embeddings.fairemb",
                            "truth.json", "summary.json"});
            auto art = make_synth_benchmark(synth_cfg);
            write_synth_artifacts(out_dir, synth_cfg, art);
            std::cout << dataset_summary_json(art.dataset) << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(ingest_cmd)) {
            json cfg_snapshot = {{"format", in_format}, {"max_items", max_items_per_user}};
            std::vector<std::string> inputs = {in_interactions};
            if (!in_embeddings.empty()) inputs.push_back(in_embeddings);
            write_manifest(out_dir, "ingest", cfg_snapshot, inputs,
                           {"dataset.json", "summary.json"});
            auto rows = parse_interactions(
                in_interactions, in_format == "csv" ? LogFormat::Csv : LogFormat::Jsonl);
            auto filtered = five_core_filter(std::move(rows));
            auto ds = build_dataset(filtered, max_items_per_user);
            if (!in_embeddings.empty()) check_embeddings_match(load_embeddings(in_embeddings), ds);
            save_dataset(out_file(out_dir, "dataset.json"), ds);
            write_text_file(out_file(out_dir, "summary.json"), dataset_summary_json(ds));
            std::cout << dataset_summary_json(ds) << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(tok_cmd)) {
            OpqConfig oc = cf.opq();
            if (tok_L_set) oc.num_codebooks = tok_opq_flags.num_codebooks;
            if (tok_K_set) oc.codebook_size = tok_opq_flags.codebook_size;
            if (tok_iters_set) oc.iterations = tok_opq_flags.iterations;
            if (seed_set) oc.seed = seed_flag;
            json cfg_snapshot = {{"L", oc.num_codebooks},
                                 {"K_cb", oc.codebook_size},
                                 {"iterations", oc.iterations},
                                 {"lloyd_iterations", oc.lloyd_iterations},
                                 {"seed", oc.seed}};
            write_manifest(out_dir, "tokenize", cfg_snapshot, {tok_dataset, tok_embeddings},
                           {"opq.bin", "codes.jsonl", "tokenize_report.json"});
            auto ds = load_dataset(tok_dataset);
            auto emb = load_embeddings(tok_embeddings);
            check_embeddings_match(emb, ds);
            OpqFitReport report;
            auto model = fit_opq(emb, oc, &report);
            build_lookup(model, emb);
            save_opq(out_file(out_dir, "opq.bin"), model);
            export_codes_jsonl(out_file(out_dir, "codes.jsonl"), ds.item_vocab,
                               model.lookup.item_to_codes);
            json rep = {{"initial_error", report.initial_error},
                        {"errors", report.errors},
                        {"orthogonality", report.orthogonality},
                        {"collision_groups", model.lookup.collision_groups()},
                        {"collided_items", model.lookup.collided_items()},
                        {"items", ds.num_items()}};
            write_text_file(out_file(out_dir, "tokenize_report.json"), rep.dump(2));
            std::cout << rep.dump(2) << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(train_cmd)) {
            ModelConfig mc = cf.model();
            TrainConfig tc = cf.train();
            if (seed_set) tc.seed = seed_flag;
            if (no_fam) tc.enable_fam = false;
            if (no_nrt) tc.enable_nrt = false;
            if (no_mim) tc.enable_mim = false;
            if (tr_lr) tc.lr = *tr_lr;
            if (tr_epochs) tc.max_epochs = *tr_epochs;
            if (tr_batch) tc.batch_size = *tr_batch;
            if (tr_patience) tc.patience = *tr_patience;
            if (tr_warmup) tc.warmup_steps = *tr_warmup;
            if (tr_max_steps) tc.max_steps = *tr_max_steps;
            if (tr_all_prefix) tc.all_prefix_examples = *tr_all_prefix;
            tc.validate();
            json cfg_snapshot = {{"model", json::parse(mc.to_json())},
                                 {"train", json::parse(tc.to_json())}};
            write_manifest(out_dir, "train", cfg_snapshot, {tr_dataset, tr_codes},
                           {"checkpoint.ckpt", "last.ckpt", "train_state.bin",
                            "train_log.jsonl", "valid_log.jsonl"});
            auto ds = load_dataset(tr_dataset);
            CodeLookup lookup;
            {
                auto codes = import_codes_jsonl(tr_codes, ds.item_vocab);
                std::size_t kmax = 0;
                for (const auto& c : codes)
                    for (auto v : c) kmax = std::max<std::size_t>(kmax, v + 1);
                if (codes[0].size() != mc.L)
                    throw ConfigError("codes have L=" + std::to_string(codes[0].size()) +
                                      " but model expects L=" + std::to_string(mc.L));
                if (kmax > mc.K_cb)
                    throw ConfigError("codes exceed the model codebook size");
                lookup.build(std::move(codes), mc.L, mc.K_cb);
            }
            auto result = train(mc, ds, lookup, tc);
            save_checkpoint(out_file(out_dir, "checkpoint.ckpt"), result.best_model);
            save_checkpoint(out_file(out_dir, "last.ckpt"), result.last_model);
            save_train_state(out_file(out_dir, "train_state.bin"), result.state);
            write_text_file(out_file(out_dir, "train_log.jsonl"), result.step_log_jsonl);
            write_text_file(out_file(out_dir, "valid_log.jsonl"), result.valid_log_jsonl);
            json summary = {{"steps", result.state.step},
                            {"best_metric", result.best_metric},
                            {"metric", tc.validate_metric},
                            {"diverged", result.diverged}};
            std::cout << summary.dump(2) << "\n";
            if (result.diverged) return kExitNumeric;
            return kExitOk;
        }

        if (app.got_subcommand(eval_cmd)) {
            json cfg_snapshot = {{"split", ev_split},
                                 {"scorer", ev_scorer},
                                 {"beam_size", ev_beam},
                                 {"k", ev_klist}};
            write_manifest(out_dir, "eval", cfg_snapshot, {ev_ckpt, ev_dataset, ev_codes},
                           {"eval.json"});
            auto ds = load_dataset(ev_dataset);
            auto model = load_checkpoint(ev_ckpt);
            CodeLookup lookup;
            lookup.build(import_codes_jsonl(ev_codes, ds.item_vocab), model.config.L,
                         model.config.K_cb);
            EvalOptions opts;
            opts.scorer = ev_scorer == "exact" ? Scorer::Exact : Scorer::Beam;
            opts.beam_size = ev_beam;
            opts.k_list = parse_csv_sizes(ev_klist);
            auto report = evaluate(model, ds, lookup,
                                   ev_split == "valid" ? EvalSplit::Valid : EvalSplit::Test, opts);
            const auto text = report.to_json(ev_split, ev_scorer);
            write_text_file(out_file(out_dir, "eval.json"), text);
            std::cout << text << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(infer_cmd)) {
            json cfg_snapshot = {{"scorer", if_scorer},
                                 {"beam_size", if_beam},
                                 {"top_k", if_topk},
                                 {"items", if_items},
                                 {"user", if_user}};
            write_manifest(out_dir, "infer", cfg_snapshot, {if_ckpt, if_dataset, if_codes},
                           {"ranked.jsonl"});
            auto ds = load_dataset(if_dataset);
            auto model = load_checkpoint(if_ckpt);
            CodeLookup lookup;
            lookup.build(import_codes_jsonl(if_codes, ds.item_vocab), model.config.L,
                         model.config.K_cb);
            std::vector<std::int32_t> history;
            if (!if_items.empty()) {
                for (const auto& id : parse_csv_strings(if_items)) {
                    auto it = ds.item_index.find(id);
                    if (it == ds.item_index.end())
                        throw DataError("unknown item id '" + id + "'");
                    history.push_back(it->second);
                }
            } else if (!if_user.empty()) {
                bool found = false;
                for (std::size_t u = 0; u < ds.users.size(); ++u)
                    if (ds.users[u].user_id == if_user) {
                        auto h = ds.test_history(u);
                        history.assign(h.begin(), h.end());
                        found = true;
                        break;
                    }
                if (!found) throw DataError("unknown user id '" + if_user + "'");
            } else {
                throw ConfigError("infer: provide --items or --user");
            }
            auto logits = history_logits(model, history, lookup.item_to_codes);
            std::string warning;
            auto ranked = if_scorer == "exact"
                              ? score_all_items(logits, lookup, if_topk)
                              : beam_search_items(logits, lookup, if_beam, if_topk, &warning);
            if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
            const auto text = ranked_list_jsonl(ranked, ds.item_vocab);
            write_text_file(out_file(out_dir, "ranked.jsonl"), text);
            std::cout << text;
            return kExitOk;
        }

        if (app.got_subcommand(attn_cmd)) {
            json cfg_snapshot = {{"user", at_user}};
            write_manifest(out_dir, "attn-dump", cfg_snapshot, {at_ckpt, at_dataset, at_codes},
                           {"attention.json", "attention.csv"});
            auto ds = load_dataset(at_dataset);
            auto model = load_checkpoint(at_ckpt);
            CodeLookup lookup;
            lookup.build(import_codes_jsonl(at_codes, ds.item_vocab), model.config.L,
                         model.config.K_cb);
            std::optional<std::size_t> user;
            for (std::size_t u = 0; u < ds.users.size(); ++u)
                if (ds.users[u].user_id == at_user) user = u;
            if (!user) throw DataError("unknown user id '" + at_user + "'");
            auto history = ds.test_history(*user);
            auto profile = attention_dump(model, history, lookup.item_to_codes,
                                          ds.test_item(*user));
            write_text_file(out_file(out_dir, "attention.json"),
                            attention_profile_json(profile, ds.item_vocab));
            write_text_file(out_file(out_dir, "attention.csv"),
                            attention_profile_csv(profile, ds.item_vocab));
            std::cout << attention_profile_json(profile, ds.item_vocab) << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(ablate_cmd)) {
            ModelConfig mc = cf.model();
            TrainConfig tc = cf.train();
            if (seed_set) tc.seed = seed_flag;
            json cfg_snapshot = {{"model", json::parse(mc.to_json())},
                                 {"train", json::parse(tc.to_json())}};
            write_manifest(out_dir, "ablate", cfg_snapshot, {ab_dataset, ab_codes},
                           {"ablation.json", "ablation.txt"});
            auto ds = load_dataset(ab_dataset);
            CodeLookup lookup;
            lookup.build(import_codes_jsonl(ab_codes, ds.item_vocab), mc.L, mc.K_cb);
            auto rows = ablation_matrix(ds, lookup, mc, tc);
            write_text_file(out_file(out_dir, "ablation.json"), ablation_table_json(rows));
            write_text_file(out_file(out_dir, "ablation.txt"), ablation_table_text(rows));
            std::cout << ablation_table_text(rows);
            return kExitOk;
        }

        if (app.got_subcommand(cost_cmd)) {
            ModelConfig mc = cf.model();
            mc.validate();
            const auto params = count_parameters(mc);
            const auto flops = estimate_flops(mc, cost_seq_len);
            json doc = {{"parameters", params},
                        {"parameters_millions", static_cast<double>(params) / 1e6},
                        {"seq_len", cost_seq_len},
                        {"forward_flops", flops},
                        {"forward_gflops", static_cast<double>(flops) / 1e9}};
            write_manifest(out_dir, "report-cost", json::parse(mc.to_json()), {},
                           {"cost.json"});
            write_text_file(out_file(out_dir, "cost.json"), doc.dump(2));
            std::cout << doc.dump(2) << "\n";
            return kExitOk;
        }

        if (app.got_subcommand(sweep_cmd)) {
            ModelConfig mc = cf.model();
            TrainConfig tc = cf.train();
            if (seed_set) tc.seed = seed_flag;
            std::vector<double> values;
            for (const auto& v : parse_csv_strings(sw_values)) values.push_back(std::stod(v));
            if (values.empty()) throw ConfigError("sweep: no values given");
            json cfg_snapshot = {{"param", sw_param},
                                 {"values", values},
                                 {"model", json::parse(mc.to_json())},
                                 {"train", json::parse(tc.to_json())}};
            write_manifest(out_dir, "sweep", cfg_snapshot, {sw_dataset, sw_codes},
                           {"sweep.json"});
            auto ds = load_dataset(sw_dataset);
            CodeLookup lookup;
            lookup.build(import_codes_jsonl(sw_codes, ds.item_vocab), mc.L, mc.K_cb);
            json results = json::array();
            for (double v : values) {
                ModelConfig m = mc;
                TrainConfig t = tc;
                if (sw_param == "alpha") t.objective.alpha = v;
                else if (sw_param == "beta") t.objective.beta = v;
                else if (sw_param == "dropout") m.dropout_rate = v;
                else if (sw_param == "p_mask") t.objective.perturb.p_mask = v;
                else if (sw_param == "p_sub") t.objective.perturb.p_sub = v;
                auto trained = train(m, ds, lookup, t);
                EvalOptions opts;
                opts.scorer = Scorer::Exact;
                opts.k_list = {5, 10};
                auto report = evaluate(trained.best_model, ds, lookup, EvalSplit::Test, opts);
                results.push_back({{"value", v},
                                   {"recall@10", report.recall.at(10)},
                                   {"ndcg@10", report.ndcg.at(10)},
                                   {"recall@5", report.recall.at(5)},
                                   {"ndcg@5", report.ndcg.at(5)},
                                   {"best_valid", trained.best_metric}});
                std::cout << sw_param << "=" << v << " recall@10=" << report.recall.at(10)
                          << "\n";
            }
            write_text_file(out_file(out_dir, "sweep.json"), results.dump(2));
            return kExitOk;
        }

        throw ConfigError("no subcommand dispatched");
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

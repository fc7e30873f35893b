#include "fair/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fair/errors.hpp"
#include "fair/rng.hpp"
#include "fair/serialize.hpp"

namespace fair {

using nlohmann::json;

std::size_t InteractionDataset::num_interactions() const {
    std::size_t n = 0;
    for (const auto& u : users) n += u.items.size();
    return n;
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::int64_t parse_timestamp(const std::string& s, std::size_t line_no) {
    const std::string t = trim(s);
    if (t.empty()) throw DataError("line " + std::to_string(line_no) + ": missing timestamp");
    std::size_t pos = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(t, &pos);
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad timestamp '" + t + "'");
    }
    if (pos != t.size())
        throw DataError("line " + std::to_string(line_no) + ": bad timestamp '" + t + "'");
    if (v < 0) throw DataError("line " + std::to_string(line_no) + ": negative timestamp");
    return v;
}

std::vector<Interaction> parse_csv(std::ifstream& in, const std::string& path) {
    std::vector<Interaction> rows;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError(path + ": empty input");
    ++line_no;
    auto header = split_csv_line(line);
    if (header.size() != 3 || trim(header[0]) != "user_id" || trim(header[1]) != "item_id" ||
        trim(header[2]) != "timestamp")
        throw DataError(path + ": expected header 'user_id,item_id,timestamp', got '" + line + "'");
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw DataError("line " + std::to_string(line_no) + ": expected 3 fields, got " +
                            std::to_string(fields.size()));
        Interaction it;
        it.user_id = trim(fields[0]);
        it.item_id = trim(fields[1]);
        if (it.user_id.empty() || it.item_id.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty user_id or item_id");
        it.timestamp = parse_timestamp(fields[2], line_no);
        rows.push_back(std::move(it));
    }
    if (rows.empty()) throw DataError(path + ": empty input");
    return rows;
}

std::vector<Interaction> parse_jsonl(std::ifstream& in, const std::string& path) {
    std::vector<Interaction> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.contains("user_id") || !obj.contains("item_id") || !obj.contains("timestamp"))
            throw DataError("line " + std::to_string(line_no) +
                            ": missing user_id/item_id/timestamp");
        Interaction it;
        it.user_id = obj["user_id"].get<std::string>();
        it.item_id = obj["item_id"].get<std::string>();
        if (!obj["timestamp"].is_number_integer() || obj["timestamp"].get<std::int64_t>() < 0)
            throw DataError("line " + std::to_string(line_no) + ": bad timestamp");
        it.timestamp = obj["timestamp"].get<std::int64_t>();
        rows.push_back(std::move(it));
    }
    if (rows.empty()) throw DataError(path + ": empty input");
    return rows;
}

}  // namespace

std::vector<Interaction> parse_interactions(const std::string& path, LogFormat format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open interactions file: " + path);
    return format == LogFormat::Csv ? parse_csv(in, path) : parse_jsonl(in, path);
}

void write_interactions_csv(const std::string& path, const std::vector<Interaction>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << "user_id,item_id,timestamp\n";
    for (const auto& r : rows) out << r.user_id << "," << r.item_id << "," << r.timestamp << "\n";
}

void write_interactions_jsonl(const std::string& path, const std::vector<Interaction>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& r : rows) {
        json obj = {{"user_id", r.user_id}, {"item_id", r.item_id}, {"timestamp", r.timestamp}};
        out << obj.dump() << "\n";
    }
}

std::vector<Interaction> five_core_filter(std::vector<Interaction> interactions) {
    for (;;) {
        std::unordered_map<std::string, std::size_t> user_count, item_count;
        for (const auto& it : interactions) {
            ++user_count[it.user_id];
            ++item_count[it.item_id];
        }
        std::vector<Interaction> kept;
        kept.reserve(interactions.size());
        for (auto& it : interactions)
            if (user_count[it.user_id] >= 5 && item_count[it.item_id] >= 5)
                kept.push_back(std::move(it));
        const bool stable = kept.size() == interactions.size();
        interactions = std::move(kept);
        if (interactions.empty()) throw DataError("five_core_filter: nothing survives filtering");
        if (stable) return interactions;
    }
}

InteractionDataset build_dataset(const std::vector<Interaction>& interactions,
                                 std::size_t max_items_per_user) {
    InteractionDataset ds;
    // Vocab in order of first appearance; stable across runs for one file.
    for (const auto& it : interactions) {
        if (!ds.item_index.count(it.item_id)) {
            ds.item_index.emplace(it.item_id, static_cast<std::int32_t>(ds.item_vocab.size()));
            ds.item_vocab.push_back(it.item_id);
        }
    }

    std::unordered_map<std::string, std::size_t> user_slot;
    struct Row {
        std::int64_t ts;
        std::int32_t item;
    };
    std::vector<std::string> user_order;
    std::vector<std::vector<Row>> rows;
    for (const auto& it : interactions) {
        auto [slot, fresh] = user_slot.try_emplace(it.user_id, user_order.size());
        if (fresh) {
            user_order.push_back(it.user_id);
            rows.emplace_back();
        }
        rows[slot->second].push_back({it.timestamp, ds.item_index.at(it.item_id)});
    }

    for (std::size_t u = 0; u < user_order.size(); ++u) {
        auto& seq = rows[u];
        // Ties keep input file order.
        std::stable_sort(seq.begin(), seq.end(),
                         [](const Row& a, const Row& b) { return a.ts < b.ts; });
        std::size_t start = seq.size() > max_items_per_user ? seq.size() - max_items_per_user : 0;
        if (seq.size() - start < 3) {
            ++ds.excluded_users;
            continue;
        }
        InteractionDataset::UserSeq us;
        us.user_id = user_order[u];
        for (std::size_t i = start; i < seq.size(); ++i) {
            us.items.push_back(seq[i].item);
            us.times.push_back(seq[i].ts);
        }
        ds.users.push_back(std::move(us));
    }
    return ds;
}

std::string dataset_summary_json(const InteractionDataset& ds) {
    const double denom = static_cast<double>(ds.users.size()) * static_cast<double>(ds.num_items());
    json s = {{"users", ds.users.size()},
              {"items", ds.num_items()},
              {"interactions", ds.num_interactions()},
              {"density", denom > 0 ? static_cast<double>(ds.num_interactions()) / denom : 0.0},
              {"excluded_users", ds.excluded_users}};
    return s.dump(2);
}

void save_dataset(const std::string& path, const InteractionDataset& ds) {
    json users = json::array();
    for (const auto& u : ds.users)
        users.push_back({{"user_id", u.user_id}, {"items", u.items}, {"times", u.times}});
    json doc = {{"item_vocab", ds.item_vocab},
                {"users", users},
                {"excluded_users", ds.excluded_users}};
    write_text_file(path, doc.dump());
}

InteractionDataset load_dataset(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataError(path + ": " + e.what());
    }
    InteractionDataset ds;
    ds.item_vocab = doc.at("item_vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < ds.item_vocab.size(); ++i)
        ds.item_index.emplace(ds.item_vocab[i], static_cast<std::int32_t>(i));
    for (const auto& u : doc.at("users")) {
        InteractionDataset::UserSeq us;
        us.user_id = u.at("user_id").get<std::string>();
        us.items = u.at("items").get<std::vector<std::int32_t>>();
        us.times = u.value("times", std::vector<std::int64_t>(us.items.size(), 0));
        if (us.items.size() < 3) throw DataError(path + ": user sequence shorter than 3");
        if (us.times.size() != us.items.size())
            throw DataError(path + ": times/items length mismatch");
        for (auto i : us.items)
            if (i < 0 || static_cast<std::size_t>(i) >= ds.item_vocab.size())
                throw DataError(path + ": item index out of vocab range");
        ds.users.push_back(std::move(us));
    }
    ds.excluded_users = doc.value("excluded_users", 0);
    return ds;
}

EmbeddingMatrix load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embeddings file: " + path);
    expect_magic(in, "FAIREMB1", path);
    EmbeddingMatrix emb;
    emb.num_items = read_u64(in, "num_items");
    emb.dim = read_u64(in, "dim");
    emb.data.resize(emb.num_items * emb.dim);
    read_f32_array(in, emb.data.data(), emb.data.size(), "embedding rows");
    for (float v : emb.data)
        if (!std::isfinite(v)) throw DataError(path + ": non-finite embedding value");
    return emb;
}

void save_embeddings(const std::string& path, const EmbeddingMatrix& emb) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    write_magic(out, "FAIREMB1");
    write_u64(out, emb.num_items);
    write_u64(out, emb.dim);
    write_f32_array(out, emb.data.data(), emb.data.size());
}

void check_embeddings_match(const EmbeddingMatrix& emb, const InteractionDataset& ds) {
    if (emb.num_items != ds.num_items())
        throw DataError("embedding rows (" + std::to_string(emb.num_items) +
                        ") do not match item vocab (" + std::to_string(ds.num_items()) + ")");
}

std::size_t item_cluster(std::size_t item, std::size_t num_items, std::size_t num_clusters) {
    const std::size_t block = (num_items + num_clusters - 1) / num_clusters;
    return std::min(item / block, num_clusters - 1);
}

EmbeddingMatrix synth_embeddings(std::size_t num_items, std::size_t dim, std::uint64_t seed,
                                 std::size_t planted_cluster_count) {
    if (planted_cluster_count == 0) throw ConfigError("synth_embeddings: need >= 1 cluster");
    auto rng = make_rng(seed, 0xe8b);
    std::vector<double> centers(planted_cluster_count * dim);
    for (auto& v : centers) v = gaussian(rng);
    EmbeddingMatrix emb;
    emb.num_items = num_items;
    emb.dim = dim;
    emb.data.resize(num_items * dim);
    const double spread = 0.25;  // within-cluster noise relative to unit centers
    for (std::size_t i = 0; i < num_items; ++i) {
        const std::size_t c = item_cluster(i, num_items, planted_cluster_count);
        for (std::size_t j = 0; j < dim; ++j)
            emb.data[i * dim + j] =
                static_cast<float>(centers[c * dim + j] + spread * gaussian(rng));
    }
    return emb;
}

}  // namespace fair

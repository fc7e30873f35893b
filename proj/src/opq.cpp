#include "fair/opq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <json.hpp>

#include "fair/errors.hpp"
#include "fair/rng.hpp"
#include "fair/serialize.hpp"

namespace fair {

using nlohmann::json;

void CodeLookup::build(std::vector<CodeTuple> codes, std::size_t L, std::size_t K) {
    num_codebooks = L;
    codebook_size = K;
    item_to_codes = std::move(codes);
    codes_to_items.clear();
    for (std::size_t i = 0; i < item_to_codes.size(); ++i) {
        const auto& c = item_to_codes[i];
        if (c.size() != L) throw DataError("code tuple length " + std::to_string(c.size()) +
                                           " for item " + std::to_string(i) + ", expected " +
                                           std::to_string(L));
        for (auto v : c)
            if (v < 0 || static_cast<std::size_t>(v) >= K)
                throw DataError("code " + std::to_string(v) + " out of range for item " +
                                std::to_string(i));
        codes_to_items[c].push_back(static_cast<std::int32_t>(i));
    }
}

std::size_t CodeLookup::collision_groups() const {
    std::size_t n = 0;
    for (const auto& [c, items] : codes_to_items)
        if (items.size() > 1) ++n;
    return n;
}

std::size_t CodeLookup::collided_items() const {
    std::size_t n = 0;
    for (const auto& [c, items] : codes_to_items)
        if (items.size() > 1) n += items.size();
    return n;
}

std::vector<double> OpqModel::rotate(std::span<const double> x) const {
    std::vector<double> y(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        const double* row = rotation.data() + i * dim;
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

CodeTuple OpqModel::encode(std::span<const double> x) const {
    if (x.size() != dim)
        throw ShapeError("encode: vector size " + std::to_string(x.size()) + ", expected " +
                         std::to_string(dim));
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("encode: non-finite input value");
    const auto y = rotate(x);
    const std::size_t sd = sub_dim();
    CodeTuple codes(num_codebooks);
    for (std::size_t m = 0; m < num_codebooks; ++m) {
        const double* sub = y.data() + m * sd;
        double best = std::numeric_limits<double>::infinity();
        std::int32_t best_k = 0;
        for (std::size_t k = 0; k < codebook_size; ++k) {
            const double d = sq_dist(sub, centroid(m, k), sd);
            if (d < best) {  // ties keep the lowest index
                best = d;
                best_k = static_cast<std::int32_t>(k);
            }
        }
        codes[m] = best_k;
    }
    return codes;
}

CodeTuple OpqModel::encode(std::span<const float> x) const {
    std::vector<double> xd(x.begin(), x.end());
    return encode(std::span<const double>(xd));
}

std::vector<double> OpqModel::reconstruct(const CodeTuple& codes) const {
    std::vector<double> r(dim);
    const std::size_t sd = sub_dim();
    for (std::size_t m = 0; m < num_codebooks; ++m) {
        const double* c = centroid(m, codes[m]);
        for (std::size_t j = 0; j < sd; ++j) r[m * sd + j] = c[j];
    }
    return r;
}

double OpqModel::reconstruction_error(std::span<const double> x) const {
    const auto y = rotate(x);
    const auto q = reconstruct(encode(x));
    return sq_dist(y.data(), q.data(), dim);
}

namespace {

// One sub-space k-means state over rotated rows.
struct SubKmeans {
    std::size_t n, k, d;
    std::vector<double> centroids;       // k×d
    std::vector<std::int32_t> assign;    // n

    double assign_all(const double* data) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = data + i * d;
            double best = std::numeric_limits<double>::infinity();
            std::int32_t best_k = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = sq_dist(x, centroids.data() + c * d, d);
                if (dd < best) {
                    best = dd;
                    best_k = static_cast<std::int32_t>(c);
                }
            }
            assign[i] = best_k;
            total += best;
        }
        return total;
    }

    void update_centroids(const double* data) {
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::int32_t c = assign[i];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += data[i * d + j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // handled below
            for (std::size_t j = 0; j < d; ++j)
                centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        }
        // Empty clusters re-seed from the point farthest from its centroid.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double far = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dd = sq_dist(data + i * d, centroids.data() + assign[i] * d, d);
                if (dd > far) {
                    far = dd;
                    far_i = i;
                }
            }
            for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = data[far_i * d + j];
            assign[far_i] = static_cast<std::int32_t>(c);
        }
    }

    // k-means++ over the rows; sampling is inverse-CDF so the draws are
    // reproducible from the documented stream.
    void seed_pp(const double* data, std::mt19937_64& rng) {
        centroids.assign(k * d, 0.0);
        std::vector<double> d2(n, std::numeric_limits<double>::infinity());
        const std::size_t first = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
        std::copy(data + first * d, data + (first + 1) * d, centroids.begin());
        for (std::size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dd = sq_dist(data + i * d, centroids.data() + (c - 1) * d, d);
                d2[i] = std::min(d2[i], dd);
                total += d2[i];
            }
            std::size_t pick;
            if (total <= 0.0) {
                pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
            } else {
                const double r = uniform_real(rng, 0.0, total);
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
            }
            std::copy(data + pick * d, data + (pick + 1) * d, centroids.begin() + c * d);
        }
    }
};

}  // namespace

OpqModel fit_opq(const EmbeddingMatrix& emb, const OpqConfig& cfg, OpqFitReport* report) {
    const std::size_t n = emb.num_items, dim = emb.dim;
    const std::size_t L = cfg.num_codebooks, K = cfg.codebook_size;
    if (L == 0 || dim % L != 0)
        throw ConfigError("fit_opq: dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(L) + " codebooks");
    if (n < K)
        throw ConfigError("fit_opq: " + std::to_string(n) + " items for codebook size " +
                          std::to_string(K));
    const std::size_t sd = dim / L;

    std::vector<double> x(n * dim);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(emb.data[i]);

    OpqModel model;
    model.dim = dim;
    model.num_codebooks = L;
    model.codebook_size = K;
    model.seed = cfg.seed;
    model.rotation.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) model.rotation[i * dim + i] = 1.0;

    // Rotated data Y = X·Rᵀ, regrouped per sub-space for the k-means passes.
    std::vector<double> y(n * dim);
    auto rotate_all = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = x.data() + i * dim;
            double* yi = y.data() + i * dim;
            for (std::size_t r = 0; r < dim; ++r) {
                const double* rot = model.rotation.data() + r * dim;
                double acc = 0.0;
                for (std::size_t j = 0; j < dim; ++j) acc += rot[j] * xi[j];
                yi[r] = acc;
            }
        }
    };
    rotate_all();

    std::vector<SubKmeans> books(L);
    std::vector<double> sub_data(n * sd);
    auto gather_sub = [&](std::size_t m) {
        for (std::size_t i = 0; i < n; ++i)
            std::copy(y.data() + i * dim + m * sd, y.data() + i * dim + (m + 1) * sd,
                      sub_data.data() + i * sd);
    };

    double init_err = 0.0;
    for (std::size_t m = 0; m < L; ++m) {
        auto& b = books[m];
        b.n = n;
        b.k = K;
        b.d = sd;
        b.assign.assign(n, 0);
        gather_sub(m);
        auto rng = make_rng(cfg.seed, m);
        b.seed_pp(sub_data.data(), rng);
        init_err += b.assign_all(sub_data.data());
    }
    if (report) report->initial_error = init_err;

    auto write_codebooks = [&]() {
        model.codebooks.assign(L * K * sd, 0.0);
        for (std::size_t m = 0; m < L; ++m)
            std::copy(books[m].centroids.begin(), books[m].centroids.end(),
                      model.codebooks.begin() + m * K * sd);
    };
    write_codebooks();

    std::vector<double> q(n * dim);  // reconstructions in rotated space
    auto build_q = [&]() {
        for (std::size_t m = 0; m < L; ++m)
            for (std::size_t i = 0; i < n; ++i) {
                const double* c = books[m].centroids.data() + books[m].assign[i] * sd;
                std::copy(c, c + sd, q.data() + i * dim + m * sd);
            }
    };
    auto total_error_vs_q = [&]() {
        rotate_all();
        double s = 0.0;
        for (std::size_t i = 0; i < n * dim; ++i) {
            const double d = y[i] - q[i];
            s += d * d;
        }
        return s;
    };

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        rotate_all();
        for (std::size_t m = 0; m < L; ++m) {
            gather_sub(m);
            auto& b = books[m];
            for (std::size_t li = 0; li < cfg.lloyd_iterations; ++li) {
                b.assign_all(sub_data.data());
                b.update_centroids(sub_data.data());
            }
            b.assign_all(sub_data.data());
        }
        write_codebooks();
        build_q();

        if (cfg.learn_rotation) {
            // Procrustes: min_R ‖X·Rᵀ − Q‖_F over orthogonal R.
            Eigen::MatrixXd xm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                                Eigen::Dynamic, Eigen::RowMajor>>(
                x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
            Eigen::MatrixXd qm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                                Eigen::Dynamic, Eigen::RowMajor>>(
                q.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
            Eigen::MatrixXd cross = xm.transpose() * qm;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Eigen::MatrixXd r = svd.matrixV() * svd.matrixU().transpose();
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j)
                    model.rotation[i * dim + j] = r(static_cast<Eigen::Index>(i),
                                                    static_cast<Eigen::Index>(j));
        }

        if (report) {
            report->errors.push_back(total_error_vs_q());
            double fro = 0.0;
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) {
                    double v = 0.0;
                    for (std::size_t r = 0; r < dim; ++r)
                        v += model.rotation[r * dim + i] * model.rotation[r * dim + j];
                    if (i == j) v -= 1.0;
                    fro += v * v;
                }
            report->orthogonality.push_back(std::sqrt(fro));
        }
    }
    return model;
}

void build_lookup(OpqModel& model, const EmbeddingMatrix& emb) {
    std::vector<CodeTuple> codes;
    codes.reserve(emb.num_items);
    for (std::size_t i = 0; i < emb.num_items; ++i) codes.push_back(model.encode(emb.row(i)));
    model.lookup.build(std::move(codes), model.num_codebooks, model.codebook_size);
}

void save_opq(const std::string& path, const OpqModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    json header = {{"L", model.num_codebooks},
                   {"K_cb", model.codebook_size},
                   {"d_e", model.dim},
                   {"seed", model.seed}};
    const std::string h = header.dump();
    out << h << "\n";
    write_magic(out, "FAIROPQ1");
    std::vector<float> buf(model.rotation.begin(), model.rotation.end());
    write_f32_array(out, buf.data(), buf.size());
    buf.assign(model.codebooks.begin(), model.codebooks.end());
    write_f32_array(out, buf.data(), buf.size());
}

OpqModel load_opq(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": bad header: " + e.what());
    }
    OpqModel model;
    model.num_codebooks = header.at("L").get<std::size_t>();
    model.codebook_size = header.at("K_cb").get<std::size_t>();
    model.dim = header.at("d_e").get<std::size_t>();
    model.seed = header.at("seed").get<std::uint64_t>();
    expect_magic(in, "FAIROPQ1", path);
    std::vector<float> buf(model.dim * model.dim);
    read_f32_array(in, buf.data(), buf.size(), "rotation");
    model.rotation.assign(buf.begin(), buf.end());
    buf.assign(model.num_codebooks * model.codebook_size * model.sub_dim(), 0.0f);
    read_f32_array(in, buf.data(), buf.size(), "codebooks");
    model.codebooks.assign(buf.begin(), buf.end());
    return model;
}

void export_codes_jsonl(const std::string& path, const std::vector<std::string>& item_vocab,
                        const std::vector<CodeTuple>& codes) {
    if (item_vocab.size() != codes.size())
        throw DataError("export_codes_jsonl: vocab and codes sizes differ");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        json row = {{"item_id", item_vocab[i]}, {"codes", codes[i]}};
        out << row.dump() << "\n";
    }
}

std::vector<CodeTuple> import_codes_jsonl(const std::string& path,
                                          const std::vector<std::string>& item_vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::unordered_map<std::string, CodeTuple> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        by_id[row.at("item_id").get<std::string>()] = row.at("codes").get<CodeTuple>();
    }
    std::vector<CodeTuple> codes;
    codes.reserve(item_vocab.size());
    for (const auto& id : item_vocab) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError(path + ": no codes for item '" + id + "'");
        codes.push_back(it->second);
    }
    return codes;
}

}  // namespace fair

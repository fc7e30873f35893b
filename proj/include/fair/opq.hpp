#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fair/data.hpp"

namespace fair {

// An item's semantic ID: one code per codebook, codes[k] ∈ [0, K_cb).
using CodeTuple = std::vector<std::int32_t>;

struct CodeTupleHash {
    std::size_t operator()(const CodeTuple& c) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (auto v : c) {
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

// Bidirectional item ↔ codes map used at ranking time. Colliding code
// tuples list every owning item.
struct CodeLookup {
    std::size_t num_codebooks = 0;
    std::size_t codebook_size = 0;
    std::vector<CodeTuple> item_to_codes;
    std::unordered_map<CodeTuple, std::vector<std::int32_t>, CodeTupleHash> codes_to_items;

    void build(std::vector<CodeTuple> codes, std::size_t L, std::size_t K);
    std::size_t collision_groups() const;  // tuples shared by >1 item
    std::size_t collided_items() const;    // items involved in a collision
};

struct OpqConfig {
    std::size_t num_codebooks = 8;   // L
    std::size_t codebook_size = 64;  // K_cb
    std::size_t iterations = 10;     // alternations
    std::size_t lloyd_iterations = 25;
    std::uint64_t seed = 2025;
    bool learn_rotation = true;
};

struct OpqFitReport {
    double initial_error = 0.0;
    std::vector<double> errors;         // total quantization error per alternation
    std::vector<double> orthogonality;  // ‖RᵀR−I‖_F after each rotation update
};

// Orthogonal rotation + per-sub-space codebooks fitted by alternating
// minimization: Lloyd k-means per sub-space on rotated data, then a
// Procrustes rotation update from the SVD of XᵀQ.
//
// Determinism contract: sub-space m draws from mt19937_64(mix64(seed, m));
// k-means++ picks the first centroid with uniform_int over rows and the
// rest by inverse-CDF sampling of the squared-distance mass with
// uniform_real. Empty clusters re-seed from the globally farthest point.
struct OpqModel {
    std::size_t dim = 0;             // d_e
    std::size_t num_codebooks = 0;   // L
    std::size_t codebook_size = 0;   // K_cb
    std::uint64_t seed = 0;
    std::vector<double> rotation;    // dim×dim row-major; rotated = R·x
    std::vector<double> codebooks;   // [L][K][dim/L]
    CodeLookup lookup;

    std::size_t sub_dim() const { return dim / num_codebooks; }
    const double* centroid(std::size_t book, std::size_t code) const {
        return codebooks.data() + (book * codebook_size + code) * sub_dim();
    }

    std::vector<double> rotate(std::span<const double> x) const;
    CodeTuple encode(std::span<const double> x) const;
    CodeTuple encode(std::span<const float> x) const;
    // Reconstruction in rotated space and its squared error against R·x.
    std::vector<double> reconstruct(const CodeTuple& codes) const;
    double reconstruction_error(std::span<const double> x) const;
};

OpqModel fit_opq(const EmbeddingMatrix& emb, const OpqConfig& cfg, OpqFitReport* report = nullptr);

// Encodes every embedding row and fills model.lookup.
void build_lookup(OpqModel& model, const EmbeddingMatrix& emb);

// JSON header line + "FAIROPQ1" binary block (rotation, codebooks; f32 LE).
void save_opq(const std::string& path, const OpqModel& model);
OpqModel load_opq(const std::string& path);

// JSONL rows {"item_id": ..., "codes": [...]}, aligned to the vocab order.
void export_codes_jsonl(const std::string& path, const std::vector<std::string>& item_vocab,
                        const std::vector<CodeTuple>& codes);
std::vector<CodeTuple> import_codes_jsonl(const std::string& path,
                                          const std::vector<std::string>& item_vocab);

}  // namespace fair

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "imsat/matrix.hpp"

namespace imsat {

// Ground-truth class ids, one per point, values in [0, classes).
struct LabelSet {
    std::vector<int> ids;
    std::size_t classes = 0;

    std::size_t size() const { return ids.size(); }
};

// Discrete model outputs: per-point cluster id, or a packed code with bit d
// set when P(bit d = 1) crossed 1/2. Soft probabilities ride along.
struct CodeBook {
    std::vector<std::uint64_t> assignments;
    Matrix soft_probs;        // clusters: N x K; hashes: N x D with P(bit=1)
    std::size_t width = 0;    // K or D
    bool is_hash = false;

    std::size_t size() const { return assignments.size(); }
};

struct AccuracyResult {
    double acc = 0.0;
    std::vector<std::size_t> mapping;  // mapping[cluster id] = class id
};

// Best one-to-one cluster-to-class accuracy (optimal assignment on the
// contingency table, O(K^3)). Requires codes.width == labels.classes.
AccuracyResult clustering_accuracy(const CodeBook& codes, const LabelSet& labels);

// Minimum-cost perfect assignment on a square cost matrix; returns the column
// chosen for each row. Exposed for direct testing against brute force.
std::vector<std::size_t> min_cost_assignment(const Matrix& cost);

inline unsigned hamming_distance(std::uint64_t a, std::uint64_t b) {
    return static_cast<unsigned>(std::popcount(a ^ b));
}

struct RetrievalMetrics {
    double map = 0.0;
    double p_at_n = 0.0;
    double p_at_r = 0.0;
    std::size_t empty_retrievals = 0;  // queries with nothing inside radius r
    std::size_t excluded_queries = 0;  // queries with no relevant gallery item
};

// Retrieval ranks gallery items by ascending Hamming distance, ties broken by
// ascending gallery index; class labels define relevance.

// Mean average precision over queries that have at least one relevant item;
// queries without any are skipped and counted into *excluded.
double mean_average_precision(const std::vector<std::uint64_t>& query_codes,
                              const std::vector<int>& query_labels,
                              const std::vector<std::uint64_t>& gallery_codes,
                              const std::vector<int>& gallery_labels,
                              std::size_t* excluded = nullptr);

// Mean fraction of relevant items among the top n. Requires gallery size >= n.
double precision_at_n(const std::vector<std::uint64_t>& query_codes,
                      const std::vector<int>& query_labels,
                      const std::vector<std::uint64_t>& gallery_codes,
                      const std::vector<int>& gallery_labels, std::size_t n = 500);

// Mean precision over items within Hamming radius r; a query that retrieves
// nothing contributes 0 and is counted into *empty.
double precision_at_radius(const std::vector<std::uint64_t>& query_codes,
                           const std::vector<int>& query_labels,
                           const std::vector<std::uint64_t>& gallery_codes,
                           const std::vector<int>& gallery_labels, unsigned r = 2,
                           std::size_t* empty = nullptr);

// Picks the candidate column maximizing sum over dataset rows of
// acc(row, candidate) / best(row); ties go to the smallest index.
std::size_t select_shared_hyperparameter(const Matrix& acc_grid);

}  // namespace imsat

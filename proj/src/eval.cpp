#include "imsat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "imsat/errors.hpp"

namespace imsat {

std::vector<std::size_t> min_cost_assignment(const Matrix& cost) {
    if (cost.rows != cost.cols || cost.rows == 0)
        throw ShapeError("min_cost_assignment: square nonempty cost matrix required");
    const std::size_t n = cost.rows;
    const double inf = std::numeric_limits<double>::infinity();

    // potentials-based shortest augmenting path, 1-indexed internally
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // match[col] = row
    std::vector<std::size_t> way(n + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

AccuracyResult clustering_accuracy(const CodeBook& codes, const LabelSet& labels) {
    if (codes.size() != labels.size() || codes.size() == 0)
        throw ShapeError("clustering_accuracy: " + std::to_string(codes.size()) +
                         " assignments vs " + std::to_string(labels.size()) + " labels");
    if (codes.width != labels.classes)
        throw ShapeError("clustering_accuracy: cluster count " + std::to_string(codes.width) +
                         " != class count " + std::to_string(labels.classes));
    const std::size_t k = codes.width;

    Matrix counts(k, k, 0.0);  // counts(cluster, class)
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const std::uint64_t c = codes.assignments[i];
        const int l = labels.ids[i];
        if (c >= k) throw InputError("clustering_accuracy: cluster id out of range");
        if (l < 0 || static_cast<std::size_t>(l) >= k)
            throw InputError("clustering_accuracy: label out of range");
        counts(c, static_cast<std::size_t>(l)) += 1.0;
    }

    const double top = *std::max_element(counts.data.begin(), counts.data.end());
    Matrix cost(k, k);
    for (std::size_t i = 0; i < cost.size(); ++i) cost.data[i] = top - counts.data[i];

    AccuracyResult result;
    result.mapping = min_cost_assignment(cost);
    double hit = 0.0;
    for (std::size_t c = 0; c < k; ++c) hit += counts(c, result.mapping[c]);
    result.acc = hit / static_cast<double>(codes.size());
    return result;
}

namespace {

void check_retrieval_inputs(const std::vector<std::uint64_t>& qc, const std::vector<int>& ql,
                            const std::vector<std::uint64_t>& gc, const std::vector<int>& gl) {
    if (qc.empty() || gc.empty()) throw InputError("retrieval: empty query or gallery");
    if (qc.size() != ql.size()) throw ShapeError("retrieval: query codes/labels length mismatch");
    if (gc.size() != gl.size()) throw ShapeError("retrieval: gallery codes/labels length mismatch");
}

// Gallery indices by (hamming distance to q, index)
std::vector<std::size_t> ranked_gallery(std::uint64_t q, const std::vector<std::uint64_t>& gc) {
    std::vector<std::size_t> order(gc.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return hamming_distance(q, gc[a]) < hamming_distance(q, gc[b]);
    });
    return order;
}

}  // namespace

double mean_average_precision(const std::vector<std::uint64_t>& query_codes,
                              const std::vector<int>& query_labels,
                              const std::vector<std::uint64_t>& gallery_codes,
                              const std::vector<int>& gallery_labels, std::size_t* excluded) {
    check_retrieval_inputs(query_codes, query_labels, gallery_codes, gallery_labels);

    double ap_sum = 0.0;
    std::size_t counted = 0, skipped = 0;
    for (std::size_t q = 0; q < query_codes.size(); ++q) {
        const std::vector<std::size_t> order = ranked_gallery(query_codes[q], gallery_codes);
        double relevant_seen = 0.0, ap = 0.0;
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            if (gallery_labels[order[rank]] == query_labels[q]) {
                relevant_seen += 1.0;
                ap += relevant_seen / static_cast<double>(rank + 1);
            }
        }
        if (relevant_seen == 0.0) {
            ++skipped;
            continue;
        }
        ap_sum += ap / relevant_seen;
        ++counted;
    }
    if (excluded) *excluded = skipped;
    if (counted == 0) throw InputError("mean_average_precision: no query has a relevant item");
    return ap_sum / static_cast<double>(counted);
}

double precision_at_n(const std::vector<std::uint64_t>& query_codes,
                      const std::vector<int>& query_labels,
                      const std::vector<std::uint64_t>& gallery_codes,
                      const std::vector<int>& gallery_labels, std::size_t n) {
    check_retrieval_inputs(query_codes, query_labels, gallery_codes, gallery_labels);
    if (n == 0) throw ConfigError("precision_at_n: n must be >= 1");
    if (gallery_codes.size() < n)
        throw ConfigError("precision_at_n: gallery holds " +
                          std::to_string(gallery_codes.size()) + " items, need " +
                          std::to_string(n));

    double total = 0.0;
    for (std::size_t q = 0; q < query_codes.size(); ++q) {
        const std::vector<std::size_t> order = ranked_gallery(query_codes[q], gallery_codes);
        std::size_t hits = 0;
        for (std::size_t rank = 0; rank < n; ++rank)
            if (gallery_labels[order[rank]] == query_labels[q]) ++hits;
        total += static_cast<double>(hits) / static_cast<double>(n);
    }
    return total / static_cast<double>(query_codes.size());
}

double precision_at_radius(const std::vector<std::uint64_t>& query_codes,
                           const std::vector<int>& query_labels,
                           const std::vector<std::uint64_t>& gallery_codes,
                           const std::vector<int>& gallery_labels, unsigned r,
                           std::size_t* empty) {
    check_retrieval_inputs(query_codes, query_labels, gallery_codes, gallery_labels);

    double total = 0.0;
    std::size_t empties = 0;
    for (std::size_t q = 0; q < query_codes.size(); ++q) {
        std::size_t retrieved = 0, relevant = 0;
        for (std::size_t g = 0; g < gallery_codes.size(); ++g) {
            if (hamming_distance(query_codes[q], gallery_codes[g]) <= r) {
                ++retrieved;
                if (gallery_labels[g] == query_labels[q]) ++relevant;
            }
        }
        if (retrieved == 0)
            ++empties;  // contributes 0
        else
            total += static_cast<double>(relevant) / static_cast<double>(retrieved);
    }
    if (empty) *empty = empties;
    return total / static_cast<double>(query_codes.size());
}

std::size_t select_shared_hyperparameter(const Matrix& acc_grid) {
    if (acc_grid.rows == 0 || acc_grid.cols == 0)
        throw InputError("select_shared_hyperparameter: empty grid");
    for (double v : acc_grid.data)
        if (v < 0.0 || v > 1.0)
            throw InputError("select_shared_hyperparameter: accuracy outside [0,1]");

    std::vector<double> best(acc_grid.rows, 0.0);
    for (std::size_t d = 0; d < acc_grid.rows; ++d) {
        for (std::size_t c = 0; c < acc_grid.cols; ++c) best[d] = std::max(best[d], acc_grid(d, c));
        if (best[d] == 0.0)
            throw InputError("select_shared_hyperparameter: dataset " + std::to_string(d) +
                             " has zero best accuracy");
    }

    std::size_t winner = 0;
    double winner_score = -1.0;
    for (std::size_t c = 0; c < acc_grid.cols; ++c) {
        double score = 0.0;
        for (std::size_t d = 0; d < acc_grid.rows; ++d) score += acc_grid(d, c) / best[d];
        if (score > winner_score) {  // strict: ties keep the earlier candidate
            winner_score = score;
            winner = c;
        }
    }
    return winner;
}

}  // namespace imsat

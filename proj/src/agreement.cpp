#include "srl/agreement.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "srl/core.hpp"
#include "srl/csv.hpp"

namespace srl {

namespace {

// Entropy (nats) of a count vector.
double entropy(const std::vector<std::size_t>& counts, double total) {
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

std::vector<int> sorted_labels(const std::map<std::string, int>& labels) {
    std::set<int> s;
    for (const auto& [id, l] : labels) s.insert(l);
    return {s.begin(), s.end()};
}

std::size_t index_of(const std::vector<int>& labels, int l) {
    return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), l) - labels.begin());
}

}  // namespace

std::vector<std::size_t> ContingencyTable::row_totals() const {
    std::vector<std::size_t> out(rows(), 0);
    for (std::size_t i = 0; i < rows(); ++i)
        for (std::size_t c : counts[i]) out[i] += c;
    return out;
}

std::vector<std::size_t> ContingencyTable::col_totals() const {
    std::vector<std::size_t> out(cols(), 0);
    for (const auto& row : counts)
        for (std::size_t j = 0; j < cols(); ++j) out[j] += row[j];
    return out;
}

std::size_t ContingencyTable::total() const {
    std::size_t t = 0;
    for (const auto& row : counts)
        for (std::size_t c : row) t += c;
    return t;
}

ContingencyTable ContingencyTable::transposed() const {
    ContingencyTable t{col_labels, row_labels, std::vector<std::vector<std::size_t>>(cols(), std::vector<std::size_t>(rows()))};
    for (std::size_t i = 0; i < rows(); ++i)
        for (std::size_t j = 0; j < cols(); ++j) t.counts[j][i] = counts[i][j];
    return t;
}

ContingencyTable contingency(const std::map<std::string, int>& labels_a, const std::map<std::string, int>& labels_b) {
    std::vector<std::string> only_a;
    std::vector<std::string> only_b;
    for (const auto& [id, l] : labels_a)
        if (!labels_b.count(id)) only_a.push_back(id);
    for (const auto& [id, l] : labels_b)
        if (!labels_a.count(id)) only_b.push_back(id);
    if (!only_a.empty() || !only_b.empty()) {
        auto join = [](const std::vector<std::string>& ids) {
            std::string s;
            const std::size_t shown = std::min<std::size_t>(ids.size(), 20);
            for (std::size_t i = 0; i < shown; ++i) s += (i ? ", " : "") + ids[i];
            if (ids.size() > shown) s += ", ... (" + std::to_string(ids.size()) + " total)";
            return s.empty() ? std::string("none") : s;
        };
        throw ValidationError("labelings cover different learners; only in A: [" + join(only_a) + "]; only in B: [" +
                              join(only_b) + "]");
    }
    ContingencyTable t;
    t.row_labels = sorted_labels(labels_a);
    t.col_labels = sorted_labels(labels_b);
    t.counts.assign(t.rows(), std::vector<std::size_t>(t.cols(), 0));
    for (const auto& [id, la] : labels_a) {
        ++t.counts[index_of(t.row_labels, la)][index_of(t.col_labels, labels_b.at(id))];
    }
    return t;
}

ContingencyTable contingency_from_counts(std::vector<std::vector<std::size_t>> counts) {
    if (counts.empty() || counts.front().empty()) throw ValidationError("contingency table must be nonempty");
    for (const auto& row : counts) {
        if (row.size() != counts.front().size()) throw ValidationError("contingency table rows differ in length");
    }
    ContingencyTable t;
    for (std::size_t i = 0; i < counts.size(); ++i) t.row_labels.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < counts.front().size(); ++j) t.col_labels.push_back(static_cast<int>(j));
    t.counts = std::move(counts);
    return t;
}

AgreementScores homogeneity_completeness_v(const ContingencyTable& table) {
    const std::size_t n = table.total();
    if (n == 0) throw ValidationError("homogeneity_completeness_v: empty table");
    const double total = static_cast<double>(n);
    const auto rt = table.row_totals();
    const auto ct = table.col_totals();
    const double h_rows = entropy(rt, total);
    const double h_cols = entropy(ct, total);

    // H(R|C) = -sum n_ij/n log(n_ij / n_.j), H(C|R) likewise with row totals
    double h_rows_given_cols = 0.0;
    double h_cols_given_rows = 0.0;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < table.cols(); ++j) {
            const double nij = static_cast<double>(table.counts[i][j]);
            if (nij == 0.0) continue;
            h_rows_given_cols -= nij / total * std::log(nij / static_cast<double>(ct[j]));
            h_cols_given_rows -= nij / total * std::log(nij / static_cast<double>(rt[i]));
        }
    }
    AgreementScores s;
    s.homogeneity = h_rows == 0.0 ? 1.0 : 1.0 - h_rows_given_cols / h_rows;
    s.completeness = h_cols == 0.0 ? 1.0 : 1.0 - h_cols_given_rows / h_cols;
    const double sum = s.homogeneity + s.completeness;
    s.v_measure = sum == 0.0 ? 0.0 : 2.0 * s.homogeneity * s.completeness / sum;
    return s;
}

std::vector<SankeyLink> sankey_links(const ContingencyTable& table) {
    std::vector<SankeyLink> links;
    for (std::size_t i = 0; i < table.rows(); ++i)
        for (std::size_t j = 0; j < table.cols(); ++j)
            if (table.counts[i][j] > 0) links.push_back({table.row_labels[i], table.col_labels[j], table.counts[i][j]});
    return links;
}

void write_contingency_csv(const std::string& path, const ContingencyTable& table, const std::string& row_name,
                           const std::string& col_name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::Row header{row_name + "\\" + col_name};
    for (int l : table.col_labels) header.push_back(std::to_string(l));
    csv::write_row(out, header);
    for (std::size_t i = 0; i < table.rows(); ++i) {
        csv::Row row{std::to_string(table.row_labels[i])};
        for (std::size_t c : table.counts[i]) row.push_back(std::to_string(c));
        csv::write_row(out, row);
    }
}

ContingencyTable read_contingency_csv(const std::string& path) {
    const auto doc = csv::read_file(path);
    auto parse_int = [&](const std::string& text, std::size_t line) {
        long long v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || v < 0) {
            throw IngestError(path + ":" + std::to_string(line) + ": expected a nonnegative integer, got '" + text + "'");
        }
        return v;
    };
    if (doc.header.size() < 2) throw IngestError(path + ": contingency table needs at least one column");
    if (doc.rows.empty()) throw IngestError(path + ": contingency table has no rows");
    ContingencyTable t;
    for (std::size_t j = 1; j < doc.header.size(); ++j) t.col_labels.push_back(static_cast<int>(parse_int(doc.header[j], 1)));
    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        const auto line = doc.line_numbers[r];
        t.row_labels.push_back(static_cast<int>(parse_int(doc.rows[r][0], line)));
        std::vector<std::size_t> counts;
        for (std::size_t j = 1; j < doc.rows[r].size(); ++j) {
            counts.push_back(static_cast<std::size_t>(parse_int(doc.rows[r][j], line)));
        }
        t.counts.push_back(std::move(counts));
    }
    auto distinct_sorted = [](std::vector<int> v) {
        return std::is_sorted(v.begin(), v.end()) && std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!distinct_sorted(t.row_labels) || !distinct_sorted(t.col_labels)) {
        throw IngestError(path + ": row and column labels must be distinct and ascending");
    }
    return t;
}

nlohmann::json to_json(const AgreementScores& scores, const ContingencyTable& table) {
    return {
        {"reference", "rows"},
        {"homogeneity", scores.homogeneity},
        {"completeness", scores.completeness},
        {"v_measure", scores.v_measure},
        {"n_learners", table.total()},
        {"row_labels", table.row_labels},
        {"col_labels", table.col_labels},
        {"counts", table.counts},
    };
}

nlohmann::json sankey_json(const ContingencyTable& table, const std::string& row_name, const std::string& col_name) {
    nlohmann::json nodes = nlohmann::json::array();
    const auto rt = table.row_totals();
    const auto ct = table.col_totals();
    for (std::size_t i = 0; i < table.rows(); ++i) {
        nodes.push_back({{"id", row_name + ":" + std::to_string(table.row_labels[i])},
                         {"side", "source"},
                         {"cluster", table.row_labels[i]},
                         {"size", rt[i]}});
    }
    for (std::size_t j = 0; j < table.cols(); ++j) {
        nodes.push_back({{"id", col_name + ":" + std::to_string(table.col_labels[j])},
                         {"side", "target"},
                         {"cluster", table.col_labels[j]},
                         {"size", ct[j]}});
    }
    nlohmann::json links = nlohmann::json::array();
    for (const auto& l : sankey_links(table)) {
        links.push_back({{"source", row_name + ":" + std::to_string(l.source)},
                         {"target", col_name + ":" + std::to_string(l.target)},
                         {"value", l.count}});
    }
    return {{"nodes", std::move(nodes)}, {"links", std::move(links)}};
}

}  // namespace srl

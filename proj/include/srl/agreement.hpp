#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace srl {

/// Learner counts cross-tabulated by two clusterings: rows = clustering A,
/// columns = clustering B.
struct ContingencyTable {
    std::vector<int> row_labels;  // ascending
    std::vector<int> col_labels;  // ascending
    std::vector<std::vector<std::size_t>> counts;

    std::size_t rows() const noexcept { return row_labels.size(); }
    std::size_t cols() const noexcept { return col_labels.size(); }
    std::vector<std::size_t> row_totals() const;
    std::vector<std::size_t> col_totals() const;
    std::size_t total() const;
    ContingencyTable transposed() const;
};

/// Throws ValidationError listing ids present in only one labeling.
ContingencyTable contingency(const std::map<std::string, int>& labels_a, const std::map<std::string, int>& labels_b);

/// Table from raw counts; labels default to 0..r-1 and 0..c-1.
ContingencyTable contingency_from_counts(std::vector<std::vector<std::size_t>> counts);

struct AgreementScores {
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v_measure = 0.0;
};

/// Rows are the reference classes: h = 1 - H(R|C)/H(R), c = 1 - H(C|R)/H(C).
/// H(R) = 0 gives h = 1, H(C) = 0 gives c = 1, h = c = 0 gives v = 0.
AgreementScores homogeneity_completeness_v(const ContingencyTable& table);

struct SankeyLink {
    int source = 0;  // row label
    int target = 0;  // column label
    std::size_t count = 0;
};

/// One link per nonzero cell, row-major.
std::vector<SankeyLink> sankey_links(const ContingencyTable& table);

void write_contingency_csv(const std::string& path, const ContingencyTable& table,
                           const std::string& row_name = "A", const std::string& col_name = "B");
ContingencyTable read_contingency_csv(const std::string& path);

nlohmann::json to_json(const AgreementScores& scores, const ContingencyTable& table);

/// {"nodes": [{"id", "side", "cluster", "size"}], "links": [{"source", "target", "value"}]}
/// where node ids are "<row_name>:<label>" / "<col_name>:<label>".
nlohmann::json sankey_json(const ContingencyTable& table, const std::string& row_name = "A",
                           const std::string& col_name = "B");

}  // namespace srl

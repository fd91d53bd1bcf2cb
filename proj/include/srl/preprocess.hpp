#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "srl/trace_model.hpp"

namespace srl {

struct Exclusion {
    std::string learner_id;
    std::string reason;  // no_genai_use | empty_after_cleaning | length_outlier
};

/// Learner counts along the fixed filter order
/// GenAI filter -> uninformative-entry removal -> length outlier removal.
struct CohortFilterReport {
    std::size_t n_input = 0;
    std::size_t n_after_genai_filter = 0;
    std::size_t n_after_uninformative = 0;
    std::size_t n_after_outlier_removal = 0;
    bool genai_filter_applied = true;
    double z_max = 3.0;
    bool sample_sd = true;
    double length_mean = 0.0;
    double length_sd = 0.0;
    std::vector<Exclusion> exclusions;
    std::vector<std::string> warnings;
};

struct PreprocessOptions {
    bool genai_filter = true;
    double z_max = 3.0;
    bool sample_sd = true;  // n-1 denominator; false uses n
};

/// Keeps learners whose sequence contains at least one CHATGPT code.
std::vector<ProcessSequence> filter_genai_users(std::span<const ProcessSequence> sequences,
                                                std::vector<Exclusion>* excluded = nullptr);

/// Removes NOT_RECOGNIZED and nan entries, preserving order. The result may
/// be empty; callers drop such learners.
ProcessSequence drop_uninformative(const ProcessSequence& sequence);

struct OutlierFilterResult {
    std::vector<ProcessSequence> kept;
    std::vector<Exclusion> excluded;
    double mean = 0.0;
    double sd = 0.0;
};

/// Drops learners with |len - mean| / sd > z_max, mean and sd computed once
/// on the incoming cohort. sd == 0 removes nothing. Needs >= 2 sequences.
OutlierFilterResult remove_length_outliers(std::span<const ProcessSequence> sequences, double z_max = 3.0,
                                           bool sample_sd = true);

struct PreprocessResult {
    std::vector<ProcessSequence> sequences;
    CohortFilterReport report;
};

/// Applies all three filters in order, the outlier step exactly once.
PreprocessResult preprocess_cohort(std::span<const ProcessSequence> sequences, const PreprocessOptions& options = {});

nlohmann::json to_json(const CohortFilterReport& report);

}  // namespace srl

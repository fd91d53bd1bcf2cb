#include "srl/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "srl/core.hpp"

namespace srl {

std::vector<ProcessSequence> filter_genai_users(std::span<const ProcessSequence> sequences,
                                                std::vector<Exclusion>* excluded) {
    std::vector<ProcessSequence> kept;
    for (const auto& seq : sequences) {
        if (std::find(seq.codes.begin(), seq.codes.end(), kChatGpt) != seq.codes.end()) {
            kept.push_back(seq);
        } else if (excluded) {
            excluded->push_back({seq.learner_id, "no_genai_use"});
        }
    }
    return kept;
}

ProcessSequence drop_uninformative(const ProcessSequence& sequence) {
    ProcessSequence out{sequence.learner_id, {}};
    out.codes.reserve(sequence.codes.size());
    for (const auto& code : sequence.codes) {
        if (code != kNotRecognized && code != kNan) out.codes.push_back(code);
    }
    return out;
}

OutlierFilterResult remove_length_outliers(std::span<const ProcessSequence> sequences, double z_max, bool sample_sd) {
    if (sequences.size() < 2) {
        throw ValidationError("length outlier removal needs at least 2 sequences, got " +
                              std::to_string(sequences.size()));
    }
    if (!(z_max > 0.0)) throw ValidationError("z_max must be positive");

    const double n = static_cast<double>(sequences.size());
    double mean = 0.0;
    for (const auto& seq : sequences) mean += static_cast<double>(seq.codes.size());
    mean /= n;
    double ss = 0.0;
    for (const auto& seq : sequences) {
        const double d = static_cast<double>(seq.codes.size()) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (sample_sd ? n - 1.0 : n));

    OutlierFilterResult result;
    result.mean = mean;
    result.sd = sd;
    for (const auto& seq : sequences) {
        const double z = sd > 0.0 ? std::abs(static_cast<double>(seq.codes.size()) - mean) / sd : 0.0;
        if (z > z_max) {
            result.excluded.push_back({seq.learner_id, "length_outlier"});
        } else {
            result.kept.push_back(seq);
        }
    }
    return result;
}

PreprocessResult preprocess_cohort(std::span<const ProcessSequence> sequences, const PreprocessOptions& options) {
    PreprocessResult out;
    auto& report = out.report;
    report.n_input = sequences.size();
    report.genai_filter_applied = options.genai_filter;
    report.z_max = options.z_max;
    report.sample_sd = options.sample_sd;

    std::vector<ProcessSequence> stage;
    if (options.genai_filter) {
        stage = filter_genai_users(sequences, &report.exclusions);
        if (stage.empty()) report.warnings.push_back("GenAI filter removed every learner");
    } else {
        stage.assign(sequences.begin(), sequences.end());
    }
    report.n_after_genai_filter = stage.size();

    std::vector<ProcessSequence> cleaned;
    cleaned.reserve(stage.size());
    for (const auto& seq : stage) {
        auto clean = drop_uninformative(seq);
        if (clean.codes.empty()) {
            report.exclusions.push_back({seq.learner_id, "empty_after_cleaning"});
        } else {
            cleaned.push_back(std::move(clean));
        }
    }
    report.n_after_uninformative = cleaned.size();

    if (cleaned.size() < 2) {
        throw ValidationError("preprocessing left " + std::to_string(cleaned.size()) +
                              " learner(s); at least 2 are needed");
    }
    auto outliers = remove_length_outliers(cleaned, options.z_max, options.sample_sd);
    report.length_mean = outliers.mean;
    report.length_sd = outliers.sd;
    for (auto& e : outliers.excluded) report.exclusions.push_back(std::move(e));
    out.sequences = std::move(outliers.kept);
    report.n_after_outlier_removal = out.sequences.size();
    return out;
}

nlohmann::json to_json(const CohortFilterReport& report) {
    nlohmann::json exclusions = nlohmann::json::array();
    for (const auto& e : report.exclusions) exclusions.push_back({{"learner_id", e.learner_id}, {"reason", e.reason}});
    return {
        {"n_input", report.n_input},
        {"n_after_genai_filter", report.n_after_genai_filter},
        {"n_after_uninformative", report.n_after_uninformative},
        {"n_after_outlier_removal", report.n_after_outlier_removal},
        {"genai_filter_applied", report.genai_filter_applied},
        {"z_max", report.z_max},
        {"sample_sd", report.sample_sd},
        {"length_mean", report.length_mean},
        {"length_sd", report.length_sd},
        {"exclusions", std::move(exclusions)},
        {"warnings", report.warnings},
    };
}

}  // namespace srl

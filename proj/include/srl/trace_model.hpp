#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace srl {

inline constexpr std::string_view kNotRecognized = "NOT_RECOGNIZED";
inline constexpr std::string_view kChatGpt = "CHATGPT";
/// Missing-value marker found in pre-coded exports.
inline constexpr std::string_view kNan = "nan";

/// Every code a process library may emit: the seven regulation processes,
/// CHATGPT, and the NOT_RECOGNIZED fallback.
const std::vector<std::string>& process_code_alphabet();

/// The eight informative codes (process_code_alphabet without NOT_RECOGNIZED).
/// This is the observation alphabet of the tactic HMM.
const std::vector<std::string>& informative_process_codes();

struct TraceRecord {
    std::string learner_id;
    std::int64_t timestamp_ms = 0;
    std::string event_kind;
    std::string detail;
    std::size_t source_line = 0;
};

/// One learner's records, sorted by timestamp (stable: ties keep file order).
struct LearnerTrace {
    std::string learner_id;
    std::vector<TraceRecord> records;
};

struct ActionSequence {
    std::string learner_id;
    std::vector<std::string> actions;
};

struct ProcessSequence {
    std::string learner_id;
    std::vector<std::string> codes;

    bool operator==(const ProcessSequence&) const = default;
};

/// Whether a rule applies to the first or to later occurrences of the same
/// (event_kind, detail) pair within a learner's trace.
enum class VisitFilter { any, first, repeat };

struct ActionRule {
    std::string action;
    std::optional<std::string> event_kind;       // exact match
    std::optional<std::string> detail_equals;
    std::optional<std::string> detail_contains;
    std::optional<std::string> detail_prefix;
    VisitFilter visit = VisitFilter::any;

    bool matches(const TraceRecord& record, bool seen_before) const;
};

/// Ordered event -> action rules; the first matching rule wins and records
/// matching nothing get the fallback label.
class ActionLibrary {
public:
    ActionLibrary(std::vector<std::string> labels, std::vector<ActionRule> rules,
                  std::string fallback = std::string(kNotRecognized));

    static ActionLibrary from_json(const nlohmann::json& doc);
    static ActionLibrary from_file(const std::string& path);
    /// Bundled default (17 actions), identical to data/libraries/default_actions.json.
    static ActionLibrary default_library();

    nlohmann::json to_json() const;

    const std::string& label_for(const TraceRecord& record, bool seen_before) const;

    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<ActionRule>& rules() const noexcept { return rules_; }
    const std::string& fallback() const noexcept { return fallback_; }

private:
    std::vector<std::string> labels_;
    std::vector<ActionRule> rules_;
    std::string fallback_;
};

struct ProcessRule {
    std::vector<std::string> pattern;
    std::string code;
};

/// Action n-gram -> process code rules, matched greedily left to right with
/// the longest pattern first. Matched windows do not overlap.
class ProcessLibrary {
public:
    /// Throws ValidationError on an empty pattern, a code outside the
    /// process alphabet, or two identical patterns (ambiguous at equal length).
    explicit ProcessLibrary(std::vector<ProcessRule> rules);

    static ProcessLibrary from_json(const nlohmann::json& doc);
    static ProcessLibrary from_file(const std::string& path);
    /// Bundled default, identical to data/libraries/default_processes.json.
    static ProcessLibrary default_library();

    nlohmann::json to_json() const;

    /// Longest rule matching `stream` at `pos` (first declared on equal
    /// length), or nullptr.
    const ProcessRule* match_at(std::span<const std::string> stream, std::size_t pos) const;

    const std::vector<ProcessRule>& rules() const noexcept { return rules_; }
    std::size_t max_pattern_length() const noexcept { return max_len_; }

private:
    std::vector<ProcessRule> rules_;
    // rule indices sorted by decreasing pattern length, ties by rule order
    std::vector<std::size_t> match_order_;
    std::size_t max_len_ = 0;
};

/// Groups records by learner (first-appearance order) and stable-sorts each
/// learner's records by timestamp.
std::vector<LearnerTrace> group_by_learner(std::vector<TraceRecord> records);

/// One action per record, order preserved. Records must belong to one
/// learner and be sorted by timestamp.
ActionSequence code_actions(std::span<const TraceRecord> records, const ActionLibrary& lib);

ProcessSequence code_processes(const ActionSequence& actions, const ProcessLibrary& lib);

/// Reads `learner_id,timestamp_ms,event_kind,detail`.
std::vector<TraceRecord> read_trace_csv(const std::string& path);
/// Reads `learner_id,seq_index,action`, grouped and ordered by seq_index.
std::vector<ActionSequence> read_action_csv(const std::string& path);
/// Reads `learner_id,seq_index,process_code`. Empty codes become "nan";
/// any other code must be in process_code_alphabet() or be "nan".
std::vector<ProcessSequence> read_process_csv(const std::string& path);

/// Generic `learner_id,seq_index,<value_column>` reader: learners in first
/// appearance order, values ordered by seq_index.
std::vector<std::pair<std::string, std::vector<std::string>>> read_indexed_csv(const std::string& path,
                                                                               std::string_view value_column);

void write_action_csv(const std::string& path, std::span<const ActionSequence> sequences);
void write_process_csv(const std::string& path, std::span<const ProcessSequence> sequences);

}  // namespace srl

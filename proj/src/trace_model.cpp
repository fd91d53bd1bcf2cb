#include "srl/trace_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>

#include "default_libraries.inc"
#include "srl/core.hpp"
#include "srl/csv.hpp"
#include "srl/json_util.hpp"

namespace srl {

using nlohmann::json;

const std::vector<std::string>& process_code_alphabet() {
    static const std::vector<std::string> codes = {"MCO", "MCP", "MCE", "MCM", "LCF",
                                                   "LCR", "HCEO", "CHATGPT", "NOT_RECOGNIZED"};
    return codes;
}

const std::vector<std::string>& informative_process_codes() {
    static const std::vector<std::string> codes = {"MCO", "MCP", "MCE", "MCM", "LCF", "LCR", "HCEO", "CHATGPT"};
    return codes;
}

namespace {

bool contains(const std::vector<std::string>& values, std::string_view x) {
    return std::find(values.begin(), values.end(), x) != values.end();
}

std::string_view visit_name(VisitFilter v) {
    switch (v) {
        case VisitFilter::any: return "any";
        case VisitFilter::first: return "first";
        case VisitFilter::repeat: return "repeat";
    }
    return "any";
}

VisitFilter parse_visit(const std::string& s, std::string_view context) {
    if (s == "any") return VisitFilter::any;
    if (s == "first") return VisitFilter::first;
    if (s == "repeat") return VisitFilter::repeat;
    throw ValidationError(std::string(context) + ": visit must be any|first|repeat, got '" + s + "'");
}

std::int64_t parse_int(const std::string& text, std::string_view what, const std::string& where) {
    std::int64_t value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw IngestError(where + ": " + std::string(what) + " is not an integer: '" + text + "'");
    }
    return value;
}

std::string where(const std::string& path, const csv::Table& table, std::size_t row) {
    return path + ":" + std::to_string(table.line_numbers[row]);
}

// Groups (learner, seq_index, value) rows into per-learner ordered lists.
std::vector<std::pair<std::string, std::vector<std::string>>> read_indexed_impl(const std::string& path,
                                                                                std::string_view value_column) {
    const csv::Table table = csv::read_file(path);
    const std::size_t c_id = table.column("learner_id", path);
    const std::size_t c_idx = table.column("seq_index", path);
    const std::size_t c_val = table.column(value_column, path);

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::pair<std::int64_t, std::string>>> by_learner;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row[c_id].empty()) throw IngestError(where(path, table, r) + ": empty learner_id");
        const std::int64_t idx = parse_int(row[c_idx], "seq_index", where(path, table, r));
        auto [it, inserted] = by_learner.try_emplace(row[c_id]);
        if (inserted) order.push_back(row[c_id]);
        it->second.emplace_back(idx, row[c_val]);
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        auto& items = by_learner[id];
        std::stable_sort(items.begin(), items.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t k = 1; k < items.size(); ++k) {
            if (items[k].first == items[k - 1].first) {
                throw IngestError(path + ": learner '" + id + "' repeats seq_index " + std::to_string(items[k].first));
            }
        }
        std::vector<std::string> values;
        values.reserve(items.size());
        for (auto& [_, v] : items) values.push_back(std::move(v));
        out.emplace_back(id, std::move(values));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- actions

bool ActionRule::matches(const TraceRecord& record, bool seen_before) const {
    if (visit == VisitFilter::first && seen_before) return false;
    if (visit == VisitFilter::repeat && !seen_before) return false;
    if (event_kind && record.event_kind != *event_kind) return false;
    if (detail_equals && record.detail != *detail_equals) return false;
    if (detail_contains && record.detail.find(*detail_contains) == std::string::npos) return false;
    if (detail_prefix && !record.detail.starts_with(*detail_prefix)) return false;
    return true;
}

ActionLibrary::ActionLibrary(std::vector<std::string> labels, std::vector<ActionRule> rules, std::string fallback)
    : labels_(std::move(labels)), rules_(std::move(rules)), fallback_(std::move(fallback)) {
    if (fallback_.empty()) throw ValidationError("action library: empty fallback label");
    std::set<std::string> seen;
    for (const auto& label : labels_) {
        if (label.empty()) throw ValidationError("action library: empty action label");
        if (!seen.insert(label).second) throw ValidationError("action library: duplicate label '" + label + "'");
    }
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        const std::string ctx = "action library rule " + std::to_string(i);
        if (!contains(labels_, rule.action) && rule.action != fallback_) {
            throw ValidationError(ctx + ": action '" + rule.action + "' is not a declared label");
        }
        if (!rule.event_kind && !rule.detail_equals && !rule.detail_contains && !rule.detail_prefix) {
            throw ValidationError(ctx + ": needs at least one match predicate");
        }
    }
}

ActionLibrary ActionLibrary::from_json(const json& doc) {
    const std::string_view ctx = "action library";
    jsonu::require_keys(doc, {"fallback", "labels", "rules"}, ctx);
    auto labels = jsonu::get<std::vector<std::string>>(doc, "labels", ctx);
    auto fallback = jsonu::get_or<std::string>(doc, "fallback", std::string(kNotRecognized), ctx);
    if (!doc.contains("rules") || !doc["rules"].is_array()) {
        throw ValidationError("action library: 'rules' must be an array");
    }
    const auto& rules_doc = doc["rules"];
    std::vector<ActionRule> rules;
    for (std::size_t i = 0; i < rules_doc.size(); ++i) {
        const auto& r = rules_doc[i];
        const std::string rctx = "action library rule " + std::to_string(i);
        jsonu::require_keys(r, {"action", "event_kind", "detail_equals", "detail_contains", "detail_prefix", "visit"},
                            rctx);
        ActionRule rule;
        rule.action = jsonu::get<std::string>(r, "action", rctx);
        auto opt = [&](std::string_view key) -> std::optional<std::string> {
            if (!r.contains(key)) return std::nullopt;
            return jsonu::get<std::string>(r, key, rctx);
        };
        rule.event_kind = opt("event_kind");
        rule.detail_equals = opt("detail_equals");
        rule.detail_contains = opt("detail_contains");
        rule.detail_prefix = opt("detail_prefix");
        rule.visit = parse_visit(jsonu::get_or<std::string>(r, "visit", "any", rctx), rctx);
        rules.push_back(std::move(rule));
    }
    return ActionLibrary(std::move(labels), std::move(rules), std::move(fallback));
}

ActionLibrary ActionLibrary::from_file(const std::string& path) { return from_json(jsonu::read_file(path)); }

ActionLibrary ActionLibrary::default_library() { return from_json(json::parse(embedded::kDefaultActionLibrary)); }

json ActionLibrary::to_json() const {
    json rules = json::array();
    for (const auto& rule : rules_) {
        json r = {{"action", rule.action}};
        if (rule.event_kind) r["event_kind"] = *rule.event_kind;
        if (rule.detail_equals) r["detail_equals"] = *rule.detail_equals;
        if (rule.detail_contains) r["detail_contains"] = *rule.detail_contains;
        if (rule.detail_prefix) r["detail_prefix"] = *rule.detail_prefix;
        if (rule.visit != VisitFilter::any) r["visit"] = visit_name(rule.visit);
        rules.push_back(std::move(r));
    }
    return {{"fallback", fallback_}, {"labels", labels_}, {"rules", std::move(rules)}};
}

const std::string& ActionLibrary::label_for(const TraceRecord& record, bool seen_before) const {
    for (const auto& rule : rules_) {
        if (rule.matches(record, seen_before)) return rule.action;
    }
    return fallback_;
}

// -------------------------------------------------------------- processes

ProcessLibrary::ProcessLibrary(std::vector<ProcessRule> rules) : rules_(std::move(rules)) {
    std::set<std::vector<std::string>> patterns;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        const std::string ctx = "process library rule " + std::to_string(i);
        if (rule.pattern.empty()) throw ValidationError(ctx + ": pattern length must be >= 1");
        if (!contains(process_code_alphabet(), rule.code)) {
            throw ValidationError(ctx + ": code '" + rule.code + "' is not in the process alphabet");
        }
        if (!patterns.insert(rule.pattern).second) {
            throw ValidationError(ctx + ": ambiguous pattern, an identical pattern appears in an earlier rule");
        }
        max_len_ = std::max(max_len_, rule.pattern.size());
    }
    match_order_.resize(rules_.size());
    for (std::size_t i = 0; i < rules_.size(); ++i) match_order_[i] = i;
    std::stable_sort(match_order_.begin(), match_order_.end(), [&](std::size_t a, std::size_t b) {
        return rules_[a].pattern.size() > rules_[b].pattern.size();
    });
}

const ProcessRule* ProcessLibrary::match_at(std::span<const std::string> stream, std::size_t pos) const {
    for (std::size_t idx : match_order_) {
        const auto& pattern = rules_[idx].pattern;
        if (pos + pattern.size() > stream.size()) continue;
        if (std::equal(pattern.begin(), pattern.end(), stream.begin() + static_cast<std::ptrdiff_t>(pos))) {
            return &rules_[idx];
        }
    }
    return nullptr;
}

ProcessLibrary ProcessLibrary::from_json(const json& doc) {
    const std::string_view ctx = "process library";
    jsonu::require_keys(doc, {"rules"}, ctx);
    if (!doc.contains("rules") || !doc["rules"].is_array()) {
        throw ValidationError("process library: 'rules' must be an array");
    }
    const auto& rules_doc = doc["rules"];
    std::vector<ProcessRule> rules;
    for (std::size_t i = 0; i < rules_doc.size(); ++i) {
        const std::string rctx = "process library rule " + std::to_string(i);
        jsonu::require_keys(rules_doc[i], {"pattern", "process"}, rctx);
        rules.push_back({jsonu::get<std::vector<std::string>>(rules_doc[i], "pattern", rctx),
                         jsonu::get<std::string>(rules_doc[i], "process", rctx)});
    }
    return ProcessLibrary(std::move(rules));
}

ProcessLibrary ProcessLibrary::from_file(const std::string& path) { return from_json(jsonu::read_file(path)); }

ProcessLibrary ProcessLibrary::default_library() { return from_json(json::parse(embedded::kDefaultProcessLibrary)); }

json ProcessLibrary::to_json() const {
    json rules = json::array();
    for (const auto& rule : rules_) rules.push_back({{"pattern", rule.pattern}, {"process", rule.code}});
    return {{"rules", std::move(rules)}};
}

// ----------------------------------------------------------------- coding

std::vector<LearnerTrace> group_by_learner(std::vector<TraceRecord> records) {
    std::vector<LearnerTrace> out;
    std::unordered_map<std::string, std::size_t> index;
    for (auto& record : records) {
        auto [it, inserted] = index.try_emplace(record.learner_id, out.size());
        if (inserted) out.push_back({record.learner_id, {}});
        out[it->second].records.push_back(std::move(record));
    }
    for (auto& learner : out) {
        std::stable_sort(learner.records.begin(), learner.records.end(),
                         [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp_ms < b.timestamp_ms; });
    }
    return out;
}

ActionSequence code_actions(std::span<const TraceRecord> records, const ActionLibrary& lib) {
    ActionSequence out;
    if (records.empty()) return out;
    out.learner_id = records.front().learner_id;
    out.actions.reserve(records.size());
    std::set<std::pair<std::string_view, std::string_view>> visited;
    for (const auto& record : records) {
        const bool seen = !visited.emplace(record.event_kind, record.detail).second;
        out.actions.push_back(lib.label_for(record, seen));
    }
    return out;
}

ProcessSequence code_processes(const ActionSequence& actions, const ProcessLibrary& lib) {
    ProcessSequence out{actions.learner_id, {}};
    const auto& stream = actions.actions;
    out.codes.reserve(stream.size());
    std::size_t pos = 0;
    while (pos < stream.size()) {
        if (const ProcessRule* hit = lib.match_at(stream, pos)) {
            out.codes.push_back(hit->code);
            pos += hit->pattern.size();
        } else {
            out.codes.emplace_back(kNotRecognized);
            ++pos;
        }
    }
    return out;
}

// -------------------------------------------------------------- ingestion

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
    const csv::Table table = csv::read_file(path);
    const std::size_t c_id = table.column("learner_id", path);
    const std::size_t c_ts = table.column("timestamp_ms", path);
    const std::size_t c_kind = table.column("event_kind", path);
    const std::size_t c_detail = table.column("detail", path);

    std::vector<TraceRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string loc = where(path, table, r);
        if (row[c_id].empty()) throw IngestError(loc + ": missing learner_id");
        if (row[c_ts].empty()) throw IngestError(loc + ": missing timestamp_ms");
        if (row[c_kind].empty()) throw IngestError(loc + ": missing event_kind");
        const std::int64_t ts = parse_int(row[c_ts], "timestamp_ms", loc);
        if (ts < 0) throw IngestError(loc + ": negative timestamp_ms");
        records.push_back({row[c_id], ts, row[c_kind], row[c_detail], table.line_numbers[r]});
    }
    return records;
}

std::vector<ActionSequence> read_action_csv(const std::string& path) {
    std::vector<ActionSequence> out;
    for (auto& [id, values] : read_indexed_impl(path, "action")) out.push_back({id, std::move(values)});
    return out;
}

std::vector<ProcessSequence> read_process_csv(const std::string& path) {
    std::vector<ProcessSequence> out;
    for (auto& [id, values] : read_indexed_impl(path, "process_code")) {
        for (auto& code : values) {
            if (code.empty() || code == "NaN" || code == "NAN") code = std::string(kNan);
            if (code != kNan && !contains(process_code_alphabet(), code)) {
                throw IngestError(path + ": learner '" + id + "' has unknown process code '" + code + "'");
            }
        }
        out.push_back({id, std::move(values)});
    }
    return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_indexed_csv(const std::string& path,
                                                                               std::string_view value_column) {
    return read_indexed_impl(path, value_column);
}

void write_action_csv(const std::string& path, std::span<const ActionSequence> sequences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::write_row(out, {"learner_id", "seq_index", "action"});
    for (const auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.actions.size(); ++i) {
            csv::write_row(out, {seq.learner_id, std::to_string(i), seq.actions[i]});
        }
    }
}

void write_process_csv(const std::string& path, std::span<const ProcessSequence> sequences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::write_row(out, {"learner_id", "seq_index", "process_code"});
    for (const auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.codes.size(); ++i) {
            csv::write_row(out, {seq.learner_id, std::to_string(i), seq.codes[i]});
        }
    }
}

}  // namespace srl

#include "ffprid/alert_board.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>

#include <json.hpp>

#include "ffprid/error.hpp"

namespace ffprid {

std::string_view status_name(AlertStatus status) {
    switch (status) {
        case AlertStatus::Pending: return "pending";
        case AlertStatus::Confirmed: return "confirmed";
        case AlertStatus::Rejected: return "rejected";
    }
    return "?";
}

std::optional<AlertStatus> parse_status(std::string_view name) {
    if (name == "pending") return AlertStatus::Pending;
    if (name == "confirmed") return AlertStatus::Confirmed;
    if (name == "rejected") return AlertStatus::Rejected;
    return std::nullopt;
}

std::string_view decision_name(Decision decision) {
    return decision == Decision::Confirm ? "confirm" : "reject";
}

std::optional<Decision> parse_decision(std::string_view name) {
    if (name == "confirm") return Decision::Confirm;
    if (name == "reject") return Decision::Reject;
    return std::nullopt;
}

std::vector<AlertRecord> replay(const PipelineRun& run, double speed_factor) {
    if (!(speed_factor > 0.0)) throw ValidationError("replay speed factor must be > 0");

    std::vector<const SegmentResult*> alerting;
    for (const auto& s : run.segments) {
        if (is_alert(s.outcome)) alerting.push_back(&s);
    }
    std::unordered_map<std::string, std::size_t> query_order;
    for (std::size_t i = 0; i < run.queries.size(); ++i) query_order.emplace(run.queries[i], i);
    const auto rank_of = [&](const std::string& q) {
        const auto it = query_order.find(q);
        return it == query_order.end() ? query_order.size() : it->second;
    };
    std::stable_sort(alerting.begin(), alerting.end(), [&](const auto* a, const auto* b) {
        if (a->segment.index != b->segment.index) return a->segment.index < b->segment.index;
        return rank_of(a->query_id) < rank_of(b->query_id);
    });

    std::vector<AlertRecord> out;
    out.reserve(alerting.size());
    for (std::size_t i = 0; i < alerting.size(); ++i) {
        const auto& s = *alerting[i];
        AlertRecord a;
        char id[32];
        std::snprintf(id, sizeof(id), "alert-%04zu", i + 1);
        a.alert_id = id;
        a.query_id = s.query_id;
        a.segment = s.segment;
        a.candidates = s.top_eta;
        if (a.candidates.size() > static_cast<std::size_t>(run.params.eta)) {
            a.candidates.resize(static_cast<std::size_t>(run.params.eta));
        }
        a.created_at = std::isinf(speed_factor) ? 0.0 : s.segment.end / (kReplayFramesPerSecond * speed_factor);
        a.machine_outcome = s.outcome;
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

HybridMetrics finish_metrics(const PipelineRun& run, std::int64_t validated_tc, std::int64_t confirmations,
                             std::int64_t rejections) {
    HybridMetrics m;
    m.machine = run.counts;
    m.machine_fr = finding_rate(run.counts);
    m.machine_tvr = true_validation_rate(run.counts);
    m.workload = run.counts.alerts();
    m.confirmations = confirmations;
    m.rejections = rejections;
    m.pending = m.workload - confirmations - rejections;
    m.validated_tc = validated_tc;
    m.validated_fr = MetricValue::ratio(validated_tc, run.counts.present());
    m.validated_tvr = MetricValue::ratio(validated_tc, run.counts.alerts());
    return m;
}

// A confirmation counts as a validated true call only when the query was
// really among the candidates, and a picked item (if any) is the query.
bool validates(const AlertRecord& alert, const std::optional<std::string>& matched_item) {
    if (alert.machine_outcome != Outcome::TrueCall) return false;
    if (!matched_item) return true;
    for (const auto& c : alert.candidates) {
        if (c.item_id == *matched_item) return c.true_identity && *c.true_identity == alert.query_id;
    }
    return false;
}

}  // namespace

HybridMetrics reconstruct_metrics(const PipelineRun& run, std::span<const AuditEntry> log) {
    const auto alerts = replay(run, std::numeric_limits<double>::infinity());
    std::unordered_map<std::string, const AlertRecord*> by_id;
    for (const auto& a : alerts) by_id.emplace(a.alert_id, &a);

    std::int64_t validated = 0, confirms = 0, rejects = 0;
    std::unordered_map<std::string, bool> seen;
    for (const auto& e : log) {
        const auto it = by_id.find(e.alert_id);
        if (it == by_id.end()) throw ValidationError("audit log names unknown alert " + e.alert_id);
        if (!seen.emplace(e.alert_id, true).second) throw ValidationError("audit log decides " + e.alert_id + " twice");
        if (e.decision == Decision::Confirm) {
            ++confirms;
            if (validates(*it->second, e.matched_item)) ++validated;
        } else {
            ++rejects;
        }
    }
    return finish_metrics(run, validated, confirms, rejects);
}

AlertBoard::AlertBoard(PipelineRun run, double speed_factor, Clock clock)
    : run_(std::move(run)), clock_(std::move(clock)) {
    if (!clock_) {
        const auto start = std::chrono::steady_clock::now();
        clock_ = [start] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
    }
    alerts_ = replay(run_, speed_factor);
    for (std::size_t i = 0; i < alerts_.size(); ++i) index_.emplace(alerts_[i].alert_id, i);
}

std::vector<AlertRecord> AlertBoard::alerts(std::optional<AlertStatus> status) const {
    const double t = clock_();
    std::shared_lock lock(mutex_);
    std::vector<AlertRecord> out;
    for (const auto& a : alerts_) {
        if (a.created_at > t) break;  // queue order is release order
        if (!status || a.status == *status) out.push_back(a);
    }
    return out;
}

std::optional<AlertRecord> AlertBoard::find(std::string_view alert_id) const {
    const double t = clock_();
    std::shared_lock lock(mutex_);
    const auto it = index_.find(std::string(alert_id));
    if (it == index_.end() || alerts_[it->second].created_at > t) return std::nullopt;
    return alerts_[it->second];
}

AlertRecord AlertBoard::record_decision(std::string_view alert_id, Decision decision,
                                        std::optional<std::string> matched_item) {
    const double t = clock_();
    std::unique_lock lock(mutex_);
    const auto it = index_.find(std::string(alert_id));
    if (it == index_.end() || alerts_[it->second].created_at > t) {
        throw NotFoundError("no alert " + std::string(alert_id));
    }
    auto& a = alerts_[it->second];
    if (a.status != AlertStatus::Pending) {
        throw ConflictError("alert " + a.alert_id + " was already " + std::string(status_name(a.status)));
    }
    if (matched_item) {
        const bool listed = std::any_of(a.candidates.begin(), a.candidates.end(),
                                        [&](const auto& c) { return c.item_id == *matched_item; });
        if (!listed) throw ValidationError("item " + *matched_item + " is not a candidate of " + a.alert_id);
    }

    AuditEntry entry{log_.size() + 1, a.alert_id, decision, matched_item, t};
    if (decision == Decision::Confirm) {
        a.status = AlertStatus::Confirmed;
        ++confirmations_;
        if (validates(a, matched_item)) ++validated_tc_;
    } else {
        a.status = AlertStatus::Rejected;
        ++rejections_;
    }
    a.decided_item = std::move(matched_item);
    if (audit_file_.is_open()) {
        audit_file_ << audit_entry_to_json(entry) << '\n';
        audit_file_.flush();
    }
    log_.push_back(std::move(entry));
    return a;
}

HybridMetrics AlertBoard::metrics_snapshot() const {
    std::shared_lock lock(mutex_);
    return finish_metrics(run_, validated_tc_, confirmations_, rejections_);
}

std::vector<AuditEntry> AlertBoard::audit_log() const {
    std::shared_lock lock(mutex_);
    return log_;
}

void AlertBoard::set_audit_file(const std::filesystem::path& path) {
    std::unique_lock lock(mutex_);
    audit_file_.open(path, std::ios::app);
    if (!audit_file_) throw IoError("cannot open audit log '" + path.string() + "'");
}

std::string audit_entry_to_json(const AuditEntry& entry) {
    nlohmann::json j{{"sequence", entry.sequence},
                     {"alert_id", entry.alert_id},
                     {"decision", std::string(decision_name(entry.decision))},
                     {"decided_at", entry.decided_at}};
    j["matched_item_id"] = entry.matched_item ? nlohmann::json(*entry.matched_item) : nlohmann::json(nullptr);
    return j.dump();
}

}  // namespace ffprid

#pragma once

// Replays a pipeline run as an operator alert queue and tracks the
// decisions taken on it.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ffprid/pipeline.hpp"

namespace ffprid {

inline constexpr double kReplayFramesPerSecond = 25.0;

enum class AlertStatus { Pending, Confirmed, Rejected };
enum class Decision { Confirm, Reject };

std::string_view status_name(AlertStatus status);
std::optional<AlertStatus> parse_status(std::string_view name);
std::string_view decision_name(Decision decision);
std::optional<Decision> parse_decision(std::string_view name);

struct AlertRecord {
    std::string alert_id;
    std::string query_id;
    Segment segment;
    std::vector<ScoredGalleryItem> candidates;  // top-eta, ranked
    double created_at = 0.0;                    // replay seconds
    AlertStatus status = AlertStatus::Pending;
    std::optional<std::string> decided_item;
    Outcome machine_outcome = Outcome::FalseCall;
};

/// One alert per TC, TMC or FC segment, ordered by segment then by query
/// order. created_at = end_frame / (25 fps * speed_factor); an infinite speed
/// releases everything at 0. Throws ValidationError unless speed_factor > 0.
std::vector<AlertRecord> replay(const PipelineRun& run, double speed_factor);

struct AuditEntry {
    std::uint64_t sequence = 0;
    std::string alert_id;
    Decision decision = Decision::Reject;
    std::optional<std::string> matched_item;
    double decided_at = 0.0;
};

struct HybridMetrics {
    OutcomeCounts machine;
    MetricValue machine_fr;
    MetricValue machine_tvr;
    std::int64_t workload = 0;  // alerts issued, tc + tmc + fc
    std::int64_t confirmations = 0;
    std::int64_t rejections = 0;
    std::int64_t pending = 0;
    // Confirmations of alerts that truly showed the query (and, when an item
    // was picked, picked a query item).
    std::int64_t validated_tc = 0;
    MetricValue validated_fr;
    MetricValue validated_tvr;
};

/// Recomputes hybrid metrics from the machine run and a decision log.
HybridMetrics reconstruct_metrics(const PipelineRun& run, std::span<const AuditEntry> log);

class AlertBoard {
public:
    /// Seconds since the session started.
    using Clock = std::function<double()>;

    AlertBoard(PipelineRun run, double speed_factor, Clock clock = {});

    /// Released alerts in queue order, optionally filtered by status.
    std::vector<AlertRecord> alerts(std::optional<AlertStatus> status = std::nullopt) const;
    std::optional<AlertRecord> find(std::string_view alert_id) const;

    /// Throws NotFoundError for an unknown or not yet released alert,
    /// ConflictError when it was already decided, and ValidationError when
    /// matched_item is not one of the alert's candidates.
    AlertRecord record_decision(std::string_view alert_id, Decision decision,
                                std::optional<std::string> matched_item = std::nullopt);

    HybridMetrics metrics_snapshot() const;
    std::vector<AuditEntry> audit_log() const;
    const PipelineRun& run() const { return run_; }
    double now() const { return clock_(); }

    /// Also append every decision as a JSON line to this file.
    void set_audit_file(const std::filesystem::path& path);

private:
    PipelineRun run_;
    Clock clock_;
    mutable std::shared_mutex mutex_;
    std::vector<AlertRecord> alerts_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<AuditEntry> log_;
    std::int64_t validated_tc_ = 0;
    std::int64_t confirmations_ = 0;
    std::int64_t rejections_ = 0;
    std::ofstream audit_file_;
};

std::string audit_entry_to_json(const AuditEntry& entry);

}  // namespace ffprid

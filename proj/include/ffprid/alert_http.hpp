#pragma once

// HTTP + JSON front end of the alert board.
//
//   GET  /api/alerts?status=pending|confirmed|rejected|all
//   POST /api/alerts/{alert_id}/decision   {"decision": "confirm"|"reject", "matched_item_id": "..."}
//   GET  /api/metrics
//   GET  /api/images/{ref}
//
// Image refs are "query~{query_id}" and "{alert_id}~{item_id}". A candidate
// whose detection names a crop file is served from disk; everything else gets
// an SVG placeholder showing the item id and its similarity.

#include <filesystem>
#include <memory>
#include <string>

#include "ffprid/alert_board.hpp"

namespace ffprid {

inline constexpr int kDefaultServicePort = 8707;

std::string alert_to_json(const AlertRecord& alert);
std::string metrics_to_json(const HybridMetrics& metrics);
std::string placeholder_svg(const std::string& title, const std::string& subtitle);

class AlertHttpServer {
public:
    /// Relative crop paths resolve against crop_root.
    explicit AlertHttpServer(AlertBoard& board, std::filesystem::path crop_root = {});
    ~AlertHttpServer();
    AlertHttpServer(const AlertHttpServer&) = delete;
    AlertHttpServer& operator=(const AlertHttpServer&) = delete;

    /// Binds to port (0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop() is called.
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ffprid

#include "ffprid/alert_http.hpp"

#include <algorithm>
#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "ffprid/dataset_io.hpp"
#include "ffprid/error.hpp"

namespace ffprid {

using nlohmann::json;

namespace {

constexpr char kRefSeparator = '~';

std::string item_ref(const AlertRecord& a, const ScoredGalleryItem& item) {
    return a.alert_id + kRefSeparator + item.item_id;
}

json alert_json(const AlertRecord& a) {
    json candidates = json::array();
    for (const auto& c : a.candidates) {
        candidates.push_back({{"item_id", c.item_id},
                              {"similarity", c.similarity},
                              {"frame", c.frame},
                              {"image_url", "/api/images/" + item_ref(a, c)}});
    }
    json j{{"alert_id", a.alert_id},
           {"query_id", a.query_id},
           {"segment", {{"index", a.segment.index}, {"start_frame", a.segment.start}, {"end_frame", a.segment.end}}},
           {"query_image_url", "/api/images/query" + std::string(1, kRefSeparator) + a.query_id},
           {"candidates", std::move(candidates)},
           {"created_at", a.created_at},
           {"status", std::string(status_name(a.status))}};
    j["decided_item_id"] = a.decided_item ? json(*a.decided_item) : json(nullptr);
    return j;
}

json metric_or_null(const MetricValue& m) {
    return m.defined() ? json(*m.value()) : json(nullptr);
}

json error_json(const std::string& message) {
    return {{"error", message}};
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string content_type_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".bmp") return "image/bmp";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

std::string alert_to_json(const AlertRecord& alert) {
    return alert_json(alert).dump();
}

std::string metrics_to_json(const HybridMetrics& m) {
    json j{{"machine",
            {{"tc", m.machine.tc}, {"tmc", m.machine.tmc}, {"fs", m.machine.fs}, {"fc", m.machine.fc},
             {"ts", m.machine.ts}}},
           {"fr", metric_or_null(m.machine_fr)},
           {"tvr", metric_or_null(m.machine_tvr)},
           {"validated", {{"tc", m.validated_tc}, {"fr", metric_or_null(m.validated_fr)}, {"tvr", metric_or_null(m.validated_tvr)}}},
           {"workload", m.workload},
           {"confirmations", m.confirmations},
           {"rejections", m.rejections},
           {"pending", m.pending}};
    return j.dump();
}

std::string placeholder_svg(const std::string& title, const std::string& subtitle) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"128\" height=\"256\" viewBox=\"0 0 128 256\">"
                  "<rect width=\"128\" height=\"256\" fill=\"#d8dde3\"/>"
                  "<rect x=\"34\" y=\"40\" width=\"60\" height=\"150\" rx=\"24\" fill=\"#9aa5b1\"/>"
                  "<text x=\"64\" y=\"220\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">%s</text>"
                  "<text x=\"64\" y=\"240\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">%s</text>"
                  "</svg>",
                  xml_escape(title).c_str(), xml_escape(subtitle).c_str());
    return buf;
}

struct AlertHttpServer::Impl {
    AlertBoard& board;
    std::filesystem::path crop_root;
    httplib::Server server;

    Impl(AlertBoard& b, std::filesystem::path root) : board(b), crop_root(std::move(root)) { routes(); }

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        server.Get("/api/alerts", [this](const httplib::Request& req, httplib::Response& res) {
            std::optional<AlertStatus> filter = AlertStatus::Pending;
            if (req.has_param("status")) {
                const auto s = req.get_param_value("status");
                if (s == "all") {
                    filter.reset();
                } else if (auto parsed = parse_status(s)) {
                    filter = parsed;
                } else {
                    return send_json(res, 400, error_json("unknown status '" + s + "'"));
                }
            }
            json list = json::array();
            for (const auto& a : board.alerts(filter)) list.push_back(alert_json(a));
            send_json(res, 200, {{"alerts", std::move(list)}});
        });

        server.Post(R"(/api/alerts/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object() || !body.contains("decision") ||
                !body["decision"].is_string()) {
                return send_json(res, 400, error_json("body must be {\"decision\": \"confirm\"|\"reject\"}"));
            }
            const auto decision = parse_decision(body["decision"].get<std::string>());
            if (!decision) return send_json(res, 400, error_json("decision must be 'confirm' or 'reject'"));
            std::optional<std::string> item;
            if (const auto it = body.find("matched_item_id"); it != body.end() && !it->is_null()) {
                if (!it->is_string()) return send_json(res, 400, error_json("matched_item_id must be a string"));
                item = it->get<std::string>();
            }
            try {
                send_json(res, 200, alert_json(board.record_decision(id, *decision, item)));
            } catch (const NotFoundError& e) {
                send_json(res, 404, error_json(e.what()));
            } catch (const ConflictError& e) {
                json j = error_json(e.what());
                if (auto current = board.find(id)) j["alert"] = alert_json(*current);
                send_json(res, 409, j);
            } catch (const ValidationError& e) {
                send_json(res, 400, error_json(e.what()));
            }
        });

        server.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
            res.status = 200;
            res.set_content(metrics_to_json(board.metrics_snapshot()), "application/json");
        });

        server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string ref = req.matches[1];
            const auto sep = ref.find(kRefSeparator);
            if (sep == std::string::npos) return send_json(res, 404, error_json("unknown image " + ref));
            const auto owner = ref.substr(0, sep);
            const auto item_id = ref.substr(sep + 1);
            if (owner == "query") {
                const auto& qs = board.run().queries;
                if (std::find(qs.begin(), qs.end(), item_id) == qs.end()) {
                    return send_json(res, 404, error_json("unknown query " + item_id));
                }
                res.set_content(placeholder_svg("query", item_id), "image/svg+xml");
                return;
            }
            const auto alert = board.find(owner);
            if (!alert) return send_json(res, 404, error_json("unknown image " + ref));
            for (const auto& c : alert->candidates) {
                if (c.item_id != item_id) continue;
                if (c.crop_ref) {
                    auto path = std::filesystem::path(*c.crop_ref);
                    if (path.is_relative() && !crop_root.empty()) path = crop_root / path;
                    std::error_code ec;
                    if (std::filesystem::is_regular_file(path, ec)) {
                        try {
                            res.set_content(read_text_file(path), content_type_for(path));
                            return;
                        } catch (const IoError&) {
                            // fall through to the placeholder
                        }
                    }
                }
                char sim[32];
                std::snprintf(sim, sizeof(sim), "sim %.3f", c.similarity);
                res.set_content(placeholder_svg(c.item_id, sim), "image/svg+xml");
                return;
            }
            send_json(res, 404, error_json("unknown image " + ref));
        });
    }
};

AlertHttpServer::AlertHttpServer(AlertBoard& board, std::filesystem::path crop_root)
    : impl_(std::make_unique<Impl>(board, std::move(crop_root))) {}

AlertHttpServer::~AlertHttpServer() {
    stop();
}

int AlertHttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AlertHttpServer::listen_after_bind() {
    return impl_->server.listen_after_bind();
}

void AlertHttpServer::stop() {
    if (impl_) impl_->server.stop();
}

void AlertHttpServer::wait_until_ready() const {
    impl_->server.wait_until_ready();
}

}  // namespace ffprid

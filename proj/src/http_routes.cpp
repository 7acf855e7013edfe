#include "vdss/http_routes.hpp"

#include <functional>

namespace vdss {

using nlohmann::json;

int http_status_for(const std::string& code) {
    if (code == "not_found") return 404;
    if (code == "conflict") return 409;
    if (code == "invalid_request") return 400;
    if (code == "unauthorized") return 401;
    return 500;
}

namespace {

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw ServiceError("invalid_request", "request body is not valid JSON");
    return j;
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

}  // namespace

void mount_routes(httplib::Server& server, ReviewService& service, std::string token) {
    auto guarded = [token](Handler h) {
        return [token, h](const httplib::Request& req, httplib::Response& res) {
            try {
                if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token)
                    throw ServiceError("unauthorized", "missing or invalid bearer token", "Authorization");
                h(req, res);
            } catch (const ServiceError& e) {
                send(res, http_status_for(e.code()), e.body());
            } catch (const std::exception& e) {
                send(res, 500, json{{"code", "internal"}, {"message", e.what()}, {"path", ""}});
            }
        };
    };

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"status", "ok"}}); });
    server.Post("/datasets/load", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.load_dataset(parse_body(req)));
    }));
    server.Post(R"(/encounters/([^/]+)/cycles)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        const auto opts = StartOptions::from_json(parse_body(req));
        const auto id = service.start_cycle(req.matches[1], opts);
        send(res, 202, json{{"cycle_id", id}, {"status", "running"}});
    }));
    server.Get(R"(/cycles/([^/]+)/review)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.review(req.matches[1]));
    }));
    server.Post(R"(/cycles/([^/]+)/feedback)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.submit_feedback(req.matches[1], parse_body(req)));
    }));
    server.Get(R"(/cycles/([^/]+)/trail)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.trail(req.matches[1]));
    }));
    server.Get(R"(/clinicians/([^/]+)/preferences)",
               guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   send(res, 200, service.preferences(req.matches[1]));
               }));
    server.Get(R"(/clinicians/([^/]+)/regret)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.regret(req.matches[1]));
    }));
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 404 ? "not_found" : "invalid_request";
        send(res, res.status, json{{"code", code}, {"message", "no route for " + req.method + " " + req.path}, {"path", req.path}});
    });
}

}  // namespace vdss

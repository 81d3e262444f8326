#include "cmap/service.hpp"

#include <charconv>
#include <cmath>

#include "httplib.h"

#include "cmap/schema.hpp"

namespace cmap {

namespace {

json error_body(const std::string& error, const std::string& detail) { return {{"error", error}, {"detail", detail}}; }

std::optional<std::string> param(const std::map<std::string, std::string>& q, const std::string& key) {
    auto it = q.find(key);
    if (it == q.end()) return std::nullopt;
    return it->second;
}

std::optional<long long> int_param(const std::map<std::string, std::string>& q, const std::string& key) {
    const auto raw = param(q, key);
    if (!raw) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
    if (raw->empty() || ec != std::errc{} || ptr != raw->data() + raw->size()) {
        throw BadRequest(key + " must be an integer, got '" + *raw + "'");
    }
    return v;
}

std::optional<double> number_param(const std::map<std::string, std::string>& q, const std::string& key) {
    const auto raw = param(q, key);
    if (!raw) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
    if (raw->empty() || ec != std::errc{} || ptr != raw->data() + raw->size() || !std::isfinite(v)) {
        throw BadRequest(key + " must be a finite number, got '" + *raw + "'");
    }
    return v;
}

bool take_prefix(const std::string& path, const std::string& prefix, std::string& rest) {
    if (path.size() <= prefix.size() || path.compare(0, prefix.size(), prefix) != 0) return false;
    rest = path.substr(prefix.size());
    return true;
}

json route_get(const SummaryBundle& b, const std::string& path, const std::map<std::string, std::string>& q) {
    std::string rest;
    if (path == "/api/manifest") return b.manifest_json();
    if (path == "/api/layers") return b.layers_json();
    if (path == "/api/clusters") return b.clusters_json(param(q, "layer"));
    if (path == "/api/embedding") return b.embedding_view(param(q, "filter").value_or("all"), param(q, "pinned").value_or(""));
    if (take_prefix(path, "/api/neighbors/", rest)) return b.neighbors_json(rest, int_param(q, "k"));
    if (take_prefix(path, "/api/patches/", rest)) return b.patches_json(rest, int_param(q, "limit"));
    if (take_prefix(path, "/api/graph/", rest)) return b.graph_json(rest, number_param(q, "min_importance"));
    if (path == "/api/schemas") return schema_names();
    if (take_prefix(path, "/api/schemas/", rest)) {
        try {
            return schema(rest);
        } catch (const Error& e) {
            throw NotFound(e.what());
        }
    }
    throw NotFound("no route for GET " + path);
}

}  // namespace

ApiResponse handle_api(const SummaryBundle& bundle, const std::string& method, const std::string& path,
                       const std::map<std::string, std::string>& query, const std::string& body) {
    try {
        if (method == "GET") return {200, route_get(bundle, path, query)};
        if (method == "POST" && path == "/api/cascade") {
            json request;
            try {
                request = json::parse(body);
            } catch (const json::exception& e) {
                throw BadRequest(std::string("request body is not valid JSON: ") + e.what());
            }
            return {200, bundle.cascade_json(request)};
        }
        throw NotFound("no route for " + method + " " + path);
    } catch (const NotFound& e) {
        return {404, error_body("not_found", e.what())};
    } catch (const BadRequest& e) {
        return {400, error_body("bad_request", e.what())};
    } catch (const std::exception& e) {
        return {500, error_body("internal_error", e.what())};
    }
}

struct Service::Impl {
    std::shared_ptr<const SummaryBundle> bundle;
    httplib::Server server;
};

Service::Service(std::shared_ptr<const SummaryBundle> bundle) : impl_(std::make_unique<Impl>()) {
    impl_->bundle = std::move(bundle);
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query.emplace(k, v);
        const auto r = handle_api(*impl_->bundle, req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    impl_->server.Get(R"(/.*)", handler);
    impl_->server.Post(R"(/.*)", handler);
    impl_->server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto kind = res.status == 404 ? "not_found" : res.status < 500 ? "bad_request" : "internal_error";
        res.set_content(error_body(kind, "HTTP " + std::to_string(res.status) + " for " + req.method + " " + req.path)
                            .dump(),
                        "application/json; charset=utf-8");
    });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::run() {
    if (!impl_->server.listen_after_bind()) throw Error("server stopped unexpectedly");
}

void Service::start() {
    worker_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void Service::stop() {
    impl_->server.stop();
    if (worker_.joinable()) worker_.join();
}

}  // namespace cmap

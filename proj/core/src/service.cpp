// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/service.hpp"

#include "ldla/errors.hpp"
#include "ldla/image_io.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace ldla {

using nlohmann::ordered_json;

struct AgingService::Loaded {
    InferenceModels models;
    std::string checkpoint_hash;
};

struct AgingService::Http {
    httplib::Server server;
    std::thread thread;
};

namespace {

struct FieldError {
    std::string field;
    std::string message;
};

HttpReply json_reply(int status, const ordered_json& body) { return {status, "application/json", body.dump(), {}}; }

HttpReply validation_reply(const std::vector<FieldError>& errors, const ZoneRegistry& registry) {
    ordered_json j;
    j["error"] = "validation";
    j["fields"] = ordered_json::array();
    for (const auto& e : errors) {
        j["fields"].push_back({{"field", e.field}, {"message", e.message}});
    }
    j["valid_zones"] = registry.ids();
    return json_reply(400, j);
}

std::atomic<std::uint64_t> g_error_counter{0};

std::string next_error_id() {
    const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
    const std::uint64_t n = g_error_counter.fetch_add(1);
    const std::uint64_t mixed = static_cast<std::uint64_t>(now) * 0x9e3779b97f4a7c15ULL ^ n;
    return to_hex(mixed).substr(0, 12);
}

}  // namespace

int port_from_env(int fallback) {
    const char* v = std::getenv("LDLA_PORT");
    if (!v || !*v) {
        return fallback;
    }
    char* end = nullptr;
    const long p = std::strtol(v, &end, 10);
    if (*end != '\0' || p < 1 || p > 65535) {
        throw ConfigError(std::string("LDLA_PORT is not a valid port: ") + v);
    }
    return static_cast<int>(p);
}

AgingService::AgingService(ServiceConfig config, ZoneRegistry registry)
    : config_(std::move(config)), registry_(std::move(registry)) {
    if (registry_.empty()) {
        throw ConfigError("service needs a non-empty zone registry");
    }
    if (config_.workers < 1) {
        throw ConfigError("service needs at least one worker");
    }
    if (config_.refiner != "identity" && config_.refiner != "img2img") {
        throw ConfigError("refiner must be \"identity\" or \"img2img\"");
    }
}

AgingService::~AgingService() { stop(); }

void AgingService::load(InferenceModels models, std::string checkpoint_hash) {
    if (config_.refiner == "img2img") {
        models.refiner = std::make_shared<Img2ImgRefiner>(models.codec, models.predictor, models.text,
                                                          models.schedule);
    }
    auto l = std::make_shared<Loaded>(Loaded{std::move(models), std::move(checkpoint_hash)});
    std::lock_guard lock(mutex_);
    loaded_ = std::move(l);
}

void AgingService::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open checkpoint");
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto h = fnv1a({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
    load(load_inference_models(path), to_hex(h));
}

bool AgingService::loaded() const { return snapshot() != nullptr; }

std::shared_ptr<const AgingService::Loaded> AgingService::snapshot() const {
    std::lock_guard lock(mutex_);
    return loaded_;
}

HttpReply AgingService::handle_zones() const {
    ordered_json arr = ordered_json::array();
    for (const auto& z : registry_.zones()) {
        arr.push_back({{"zone_id", z.zone_id},
                       {"display_noun", z.display_noun},
                       {"scale_max", z.scale_max},
                       {"default_box", {z.default_box.x0, z.default_box.y0, z.default_box.x1, z.default_box.y1}}});
    }
    return json_reply(200, arr);
}

HttpReply AgingService::handle_healthz() const {
    const auto l = snapshot();
    if (!l) {
        return json_reply(503, {{"status", "loading"}});
    }
    return json_reply(200, {{"status", "ok"},
                            {"checkpoint_hash", l->checkpoint_hash},
                            {"registry_hash", to_hex(registry_.hash())}});
}

HttpReply AgingService::handle_infer(const std::string& image_png, const std::string& request_json) const {
    const auto l = snapshot();
    if (!l) {
        return json_reply(503, {{"error", "model not loaded"}});
    }
    if (image_png.size() > config_.max_payload) {
        return json_reply(413, {{"error", "payload too large"}, {"limit_bytes", config_.max_payload}});
    }

    std::vector<FieldError> errors;
    ordered_json req;
    try {
        req = request_json.empty() ? ordered_json::object() : ordered_json::parse(request_json);
    } catch (const ordered_json::parse_error& e) {
        return validation_reply({{"request", std::string("invalid JSON: ") + e.what()}}, registry_);
    }
    if (!req.is_object()) {
        return validation_reply({{"request", "must be a JSON object"}}, registry_);
    }
    for (const auto& [k, _] : req.items()) {
        if (k != "targets" && k != "ethnicity" && k != "params" && k != "refine") {
            errors.push_back({k, "unknown field"});
        }
    }

    std::vector<ZoneTarget> targets;
    ordered_json applied = ordered_json::object();
    if (req.contains("targets")) {
        const auto& t = req["targets"];
        if (!t.is_object()) {
            errors.push_back({"targets", "must be an object mapping zone_id to an integer percent"});
        } else {
            for (const auto& [zone, pct] : t.items()) {
                const std::string field = "targets." + zone;
                if (!registry_.find(zone)) {
                    errors.push_back({field, "unknown zone; valid zones: " + registry_.ids_joined()});
                    continue;
                }
                if (!pct.is_number_integer() || pct.get<long long>() < 0 || pct.get<long long>() > 100) {
                    errors.push_back({field, "must be an integer percent in [0, 100]"});
                    continue;
                }
                const auto p = pct.get<int>();
                targets.push_back({zone, normalized_from_percent(p)});
                applied[zone] = p;
            }
        }
    }

    std::string ethnicity = "Caucasian";
    if (req.contains("ethnicity")) {
        if (!req["ethnicity"].is_string() || req["ethnicity"].get<std::string>().empty()) {
            errors.push_back({"ethnicity", "must be a non-empty string"});
        } else {
            ethnicity = req["ethnicity"].get<std::string>();
        }
    }

    InferenceParams params;
    if (req.contains("params")) {
        const auto& p = req["params"];
        if (!p.is_object()) {
            errors.push_back({"params", "must be an object"});
        } else {
            for (const auto& [k, v] : p.items()) {
                const std::string field = "params." + k;
                if (k == "gamma_n" && v.is_number()) {
                    params.gamma_n = v.get<double>();
                } else if (k == "gamma_inf" && v.is_number_integer()) {
                    params.gamma_inf = v.get<int>();
                } else if (k == "gamma_g" && v.is_number()) {
                    params.gamma_g = v.get<double>();
                } else if (k == "seed" && v.is_number_unsigned()) {
                    params.seed = v.get<std::uint64_t>();
                } else if (k == "seed" && v.is_number_integer()) {
                    errors.push_back({field, "must be a non-negative integer"});
                } else if (k == "gamma_n" || k == "gamma_inf" || k == "gamma_g" || k == "seed") {
                    errors.push_back({field, "wrong type"});
                } else {
                    errors.push_back({field, "unknown parameter"});
                }
            }
            try {
                params.validate();
            } catch (const ValidationError& e) {
                errors.push_back({"params", e.what()});
            }
        }
    }

    bool refine = false;
    if (req.contains("refine")) {
        if (!req["refine"].is_boolean()) {
            errors.push_back({"refine", "must be a boolean"});
        } else {
            refine = req["refine"].get<bool>();
        }
    }

    Tensor face;
    try {
        face = decode_png({reinterpret_cast<const unsigned char*>(image_png.data()), image_png.size()});
    } catch (const ParseError& e) {
        errors.push_back({"image", std::string("not a readable PNG: ") + e.what()});
    }
    if (!errors.empty()) {
        return validation_reply(errors, registry_);
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        Tensor out = age_face(face, targets, ethnicity, params, l->models, registry_);
        if (refine) {
            out = refine_face(out, *l->models.refiner, config_.refiner_strength);
        }
        const auto ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

        HttpReply r;
        r.content_type = "image/png";
        // An unchanged face returns the uploaded bytes so no-op requests round-trip exactly.
        if (out == face) {
            r.body = image_png;
        } else {
            const auto png = encode_png(out);
            r.body.assign(png.begin(), png.end());
        }
        r.headers["X-LDLA-Seed"] = std::to_string(params.seed);
        r.headers["X-LDLA-Applied"] = applied.dump();
        std::ostringstream os;
        os.precision(3);
        os << std::fixed << ms;
        r.headers["X-LDLA-Elapsed-Ms"] = os.str();
        return r;
    } catch (const ValidationError& e) {
        return validation_reply({{"targets", e.what()}}, registry_);
    } catch (const std::exception& e) {
        const std::string id = next_error_id();
        std::cerr << "ldla service: internal error " << id << ": " << e.what() << '\n';
        return json_reply(500, {{"error", "internal"}, {"id", id}});
    }
}

void AgingService::wire() {
    http_ = std::make_unique<Http>();
    auto& svr = http_->server;
    const int workers = config_.workers;
    svr.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
    svr.set_payload_max_length(config_.max_payload + (1u << 16));

    const std::string origin = config_.cors_origin;
    auto send = [origin](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        for (const auto& [k, v] : r.headers) {
            res.set_header(k, v);
        }
        if (!origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Expose-Headers", "X-LDLA-Seed, X-LDLA-Applied, X-LDLA-Elapsed-Ms");
        }
        res.set_content(r.body, r.content_type);
    };

    svr.Get("/zones", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_zones()); });
    svr.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_healthz()); });
    svr.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
        if (!origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        }
        res.status = 204;
    });
    svr.Post("/infer", [this, send](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data() || !req.has_file("image")) {
            send(res, validation_reply({{"image", "multipart field \"image\" is required"}}, registry_));
            return;
        }
        const std::string request = req.has_file("request") ? req.get_file_value("request").content : "";
        send(res, handle_infer(req.get_file_value("image").content, request));
    });
    svr.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
        if (res.status == 413) {
            send(res, json_reply(413, {{"error", "payload too large"}}));
        }
    });
}

int AgingService::start() {
    stop();
    wire();
    int port = config_.port;
    if (port == 0) {
        port = http_->server.bind_to_any_port(config_.host);
    } else if (!http_->server.bind_to_port(config_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw IoError(config_.host + ":" + std::to_string(config_.port), "cannot bind");
    }
    http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    return port;
}

void AgingService::run() {
    stop();
    wire();
    if (!http_->server.listen(config_.host, config_.port)) {
        throw IoError(config_.host + ":" + std::to_string(config_.port), "cannot listen");
    }
}

void AgingService::stop() {
    if (!http_) {
        return;
    }
    http_->server.stop();
    if (http_->thread.joinable()) {
        http_->thread.join();
    }
}

}  // namespace ldla

// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/inference.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace ldla {

inline constexpr int kDefaultServicePort = 8742;
inline constexpr std::size_t kMaxPayloadBytes = 16u << 20;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = kDefaultServicePort;
    int workers = 2;
    std::size_t max_payload = kMaxPayloadBytes;
    std::string cors_origin = "*";
    std::string refiner = "identity";  // or "img2img"
    double refiner_strength = kDefaultRefinerStrength;
};

// LDLA_PORT when set to a valid port, otherwise the default.
int port_from_env(int fallback = kDefaultServicePort);

struct HttpReply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

/// Loads models once and answers zone, health, and aging requests.
///
/// Handlers are const and share immutable model state, so concurrent requests
/// behave exactly like sequential ones. The handle_* members are the whole
/// protocol; start() only wires them to HTTP.
class AgingService {
public:
    // Throws ConfigError for an empty registry.
    AgingService(ServiceConfig config, ZoneRegistry registry);
    ~AgingService();

    AgingService(const AgingService&) = delete;
    AgingService& operator=(const AgingService&) = delete;

    void load(InferenceModels models, std::string checkpoint_hash);
    void load_checkpoint(const std::string& path);
    bool loaded() const;

    HttpReply handle_zones() const;
    HttpReply handle_healthz() const;
    // request_json: {"targets": {zone: percent}, "ethnicity": str, "params": {...}, "refine": bool}
    HttpReply handle_infer(const std::string& image_png, const std::string& request_json) const;

    // Binds (port 0 picks a free port), serves on a background thread, returns the port.
    int start();
    // Blocks serving on config.port until stop() is called from another thread.
    void run();
    void stop();

    const ServiceConfig& config() const noexcept { return config_; }
    const ZoneRegistry& registry() const noexcept { return registry_; }

private:
    struct Loaded;
    struct Http;

    std::shared_ptr<const Loaded> snapshot() const;
    void wire();

    ServiceConfig config_;
    ZoneRegistry registry_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Loaded> loaded_;
    std::unique_ptr<Http> http_;
};

}  // namespace ldla

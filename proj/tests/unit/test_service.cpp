// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "ldla/atlas.hpp"
#include "ldla/errors.hpp"
#include "ldla/image_io.hpp"
#include "ldla/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

using namespace ldla;
using nlohmann::json;

namespace {

std::string png_bytes(const Tensor& img) {
    const auto v = encode_png(img);
    return {v.begin(), v.end()};
}

std::unique_ptr<AgingService> loaded_service(ServiceConfig cfg = {}) {
    auto s = std::make_unique<AgingService>(cfg, default_zone_registry());
    s->load(ldla::test::tiny_models(32), "deadbeef");
    return s;
}

std::vector<std::string> error_fields(const HttpReply& r) {
    std::vector<std::string> out;
    const json j = json::parse(r.body);
    for (const auto& f : j["fields"]) out.push_back(f["field"].get<std::string>());
    return out;
}

}  // namespace

TEST_CASE("zones and health") {
    AgingService s({}, default_zone_registry());
    const HttpReply z = s.handle_zones();
    CHECK(z.status == 200);
    const json arr = json::parse(z.body);
    REQUIRE(arr.size() == 8);
    CHECK(arr[0]["zone_id"] == "forehead");
    CHECK(arr[0]["default_box"].size() == 4);

    const HttpReply h = s.handle_healthz();
    CHECK(h.status == 503);
    CHECK(json::parse(h.body)["status"] == "loading");
    CHECK(s.handle_infer(png_bytes(Tensor::grid(3, 8, 8)), "{}").status == 503);

    s.load(ldla::test::tiny_models(32), "abc123");
    CHECK(s.loaded());
    const json ok = json::parse(s.handle_healthz().body);
    CHECK(ok["status"] == "ok");
    CHECK(ok["checkpoint_hash"] == "abc123");

    CHECK_THROWS_AS(AgingService({}, ZoneRegistry{}), ConfigError);
}

TEST_CASE("infer validation lists every bad field") {
    const auto s = loaded_service();
    const std::string img = png_bytes(ldla::test::random_image(64, 64, 1));
    const HttpReply r = s->handle_infer(
        img, R"({"targets": {"chin": 20, "forehead": 150, "glabellar": 2.5}, "ethnicity": "",
                 "params": {"gamma_n": 2, "bogus": 1, "seed": -4}, "refine": "yes", "extra": 1})");
    CHECK(r.status == 400);
    const json j = json::parse(r.body);
    CHECK(j["error"] == "validation");
    CHECK(j["valid_zones"].size() == 8);
    const auto fields = error_fields(r);
    for (const char* f : {"extra", "targets.chin", "targets.forehead", "targets.glabellar", "ethnicity", "params.bogus",
                          "params.seed", "params", "refine"}) {
        CHECK_MESSAGE(std::find(fields.begin(), fields.end(), f) != fields.end(), f);
    }
    CHECK(error_fields(s->handle_infer("not a png", "{}")) == std::vector<std::string>{"image"});
    CHECK(error_fields(s->handle_infer(img, "{oops")) == std::vector<std::string>{"request"});
    CHECK(error_fields(s->handle_infer(img, "[1]")) == std::vector<std::string>{"request"});
}

TEST_CASE("infer success and no-op round trip") {
    ServiceConfig cfg;
    cfg.max_payload = 1 << 20;
    const auto s = loaded_service(cfg);
    const std::string img = png_bytes(ldla::test::random_image(64, 64, 2));

    const HttpReply noop = s->handle_infer(img, "{}");
    CHECK(noop.status == 200);
    CHECK(noop.body == img);
    CHECK(noop.headers.at("X-LDLA-Applied") == "{}");

    const HttpReply r = s->handle_infer(img, R"({"targets": {"glabellar": 40}, "params": {"seed": 17}})");
    REQUIRE(r.status == 200);
    CHECK(r.content_type == "image/png");
    CHECK(r.headers.at("X-LDLA-Seed") == "17");
    CHECK(json::parse(r.headers.at("X-LDLA-Applied")) == json{{"glabellar", 40}});
    CHECK(std::stod(r.headers.at("X-LDLA-Elapsed-Ms")) >= 0.0);
    const Tensor out = decode_png({reinterpret_cast<const unsigned char*>(r.body.data()), r.body.size()});
    CHECK(out.shape() == std::vector<int>{3, 64, 64});
    CHECK(r.body != img);
    CHECK(s->handle_infer(img, R"({"targets": {"glabellar": 40}, "params": {"seed": 17}})").body == r.body);

    CHECK(s->handle_infer(std::string((1 << 20) + 1, 'x'), "{}").status == 413);
}

TEST_CASE("port from environment") {
    ::unsetenv("LDLA_PORT");
    CHECK(port_from_env(1234) == 1234);
    ::setenv("LDLA_PORT", "9001", 1);
    CHECK(port_from_env() == 9001);
    ::setenv("LDLA_PORT", "70000", 1);
    CHECK_THROWS_AS(port_from_env(), ConfigError);
    ::unsetenv("LDLA_PORT");
}

TEST_CASE("http endpoints") {
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.max_payload = 200000;
    cfg.workers = 4;
    AgingService s(cfg, default_zone_registry());
    const int port = s.start();
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 503);
    s.load(ldla::test::tiny_models(32), "feed");
    health = cli.Get("/healthz");
    CHECK(health->status == 200);

    auto zones = cli.Get("/zones");
    REQUIRE(zones);
    CHECK(zones->status == 200);
    CHECK(zones->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(json::parse(zones->body).size() == 8);

    auto pre = cli.Options("/infer");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    const std::string img = png_bytes(ldla::test::random_image(64, 64, 3));
    const std::string req = R"({"targets": {"forehead": 60}, "params": {"seed": 5}})";
    const httplib::MultipartFormDataItems items = {{"image", img, "face.png", "image/png"},
                                                   {"request", req, "", "application/json"}};
    auto res = cli.Post("/infer", items);
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    CHECK(res->get_header_value("X-LDLA-Seed") == "5");
    CHECK(res->get_header_value("Access-Control-Expose-Headers").find("X-LDLA-Applied") != std::string::npos);

    // Concurrent identical requests give identical bytes.
    std::vector<std::string> bodies(4);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        threads.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            c.set_read_timeout(60, 0);
            if (auto r = c.Post("/infer", items); r && r->status == 200) bodies[i] = r->body;
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& b : bodies) CHECK(b == res->body);

    auto missing = cli.Post("/infer", httplib::MultipartFormDataItems{{"request", req, "", "application/json"}});
    REQUIRE(missing);
    CHECK(missing->status == 400);
    CHECK(json::parse(missing->body)["fields"][0]["field"] == "image");

    auto big = cli.Post("/infer", httplib::MultipartFormDataItems{{"image", std::string(400000, 'x'), "f.png", "image/png"}});
    REQUIRE(big);
    CHECK(big->status == 413);

    auto bad = cli.Post("/infer", httplib::MultipartFormDataItems{{"image", img, "face.png", "image/png"},
                                                                  {"request", R"({"targets": {"chin": 5}})", "", ""}});
    REQUIRE(bad);
    CHECK(bad->status == 400);
    s.stop();
}

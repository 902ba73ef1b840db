#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "support.hpp"
#include "valresp/error.hpp"
#include "valresp/service.hpp"

using namespace valresp;
using namespace valresp::service;
using nlohmann::json;

namespace {

struct FakeClock {
    std::shared_ptr<std::atomic<long long>> seconds = std::make_shared<std::atomic<long long>>(1'000'000);
    Clock fn() const {
        auto s = seconds;
        return [s] { return std::chrono::system_clock::time_point(std::chrono::seconds(s->load())); };
    }
    void advance(long long by) { *seconds += by; }
};

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const HttpError& e) {
        return e.status();
    }
    return 200;
}

std::string code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const HttpError& e) {
        return e.code();
    }
    return "";
}

// Decision JSON with the wall-clock fields dropped.
json stable(json d) {
    d.erase("latency_ms");
    return d;
}

std::vector<std::string> script(int session) {
    const std::vector<std::string> pool = {"昨日蛾が出て怖かった", "明日は晴れるらしい", "蛾が怖い", "晴れ",
                                           "昨日は雨", "怖かった"};
    std::vector<std::string> out;
    for (int i = 0; i < 6; ++i) out.push_back(pool[static_cast<std::size_t>((session * 7 + i * 3) % 6)]);
    return out;
}

struct RunningServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    explicit RunningServer(SessionManager& manager) {
        server.set_payload_max_length(manager.config().max_message_bytes * 8 + 1024);
        register_routes(server, manager);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~RunningServer() {
        server.stop();
        thread.join();
    }
};

}  // namespace

TEST_CASE("calls before models are loaded return 503") {
    SessionManager m(ServiceConfig{});
    CHECK_FALSE(m.ready());
    CHECK(status_of([&] { m.create_session(); }) == 503);
    CHECK(status_of([&] { m.post_message("abc", "蛾"); }) == 503);
    CHECK(m.checkpoint_ids().empty());
    m.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(true, corpus::Emotion::Fear)));
    CHECK(m.ready());
    CHECK(m.checkpoint_ids().size() == 2);
}

TEST_CASE("unknown sessions and bad messages") {
    ServiceConfig cfg;
    cfg.max_message_bytes = 32;
    SessionManager m(cfg);
    m.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(true, corpus::Emotion::Fear)));
    const auto id = m.create_session();
    CHECK(id.size() == 32);
    CHECK(status_of([&] { m.post_message("0123", "蛾"); }) == 404);
    CHECK(status_of([&] { m.history("0123"); }) == 404);
    CHECK(code_of([&] { m.post_message(id, std::string(33, 'a')); }) == "message_too_large");
    CHECK(status_of([&] { m.post_message(id, std::string(33, 'a')); }) == 400);
    CHECK(status_of([&] { m.post_message(id, std::string(32, 'a')); }) == 200);
    CHECK(code_of([&] { m.post_message(id, "  　"); }) == "empty_message");
    CHECK(code_of([&] { m.post_message(id, std::string("\xff\xfe")); }) == "invalid_text");
    // rejected messages leave no trace
    CHECK(m.history(id).decisions.size() == 1);
}

TEST_CASE("history grows by one or two turns per message") {
    for (bool validate : {true, false}) {
        SessionManager m(ServiceConfig{});
        m.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(validate, corpus::Emotion::Fear)));
        const auto id = m.create_session();
        const int n = 4;
        for (int i = 0; i < n; ++i) m.post_message(id, "昨日蛾が出て怖かった");
        const auto h = m.history(id);
        CHECK(h.decisions.size() == n);
        CHECK(h.turns.size() == (validate ? 2u * n : 1u * n));
        CHECK(h.turns.size() <= 2u * n);
        for (std::size_t i = 0; i < h.turns.size(); ++i) CHECK(h.turns[i].index == i);
        if (validate) {
            CHECK(h.turns[1].speaker == corpus::Speaker::B);
            CHECK(h.decisions[0]["response"] == h.turns[1].text);
        }
        const auto j = h.to_json();
        CHECK(j["turns"][0]["speaker"] == "user");
    }
}

TEST_CASE("idle sessions expire after the TTL") {
    FakeClock clock;
    ServiceConfig cfg;
    cfg.ttl = std::chrono::seconds(60);
    SessionManager m(cfg, clock.fn());
    m.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(false, corpus::Emotion::Joy)));
    const auto a = m.create_session();
    const auto b = m.create_session();
    clock.advance(59);
    m.post_message(a, "晴れ");  // refreshes a
    clock.advance(1);
    CHECK(status_of([&] { m.history(b); }) == 404);
    CHECK(status_of([&] { m.history(a); }) == 200);
    clock.advance(60);
    CHECK(m.expire_idle() == 1);
    CHECK(m.session_count() == 0);
    CHECK(status_of([&] { m.post_message(a, "晴れ"); }) == 404);
}

TEST_CASE("decisions are appended to the persistence log") {
    testing::TempDir dir("service-log");
    ServiceConfig cfg;
    cfg.persistence_path = dir.path / "sessions.jsonl";
    SessionManager m(cfg);
    m.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(true, corpus::Emotion::Fear)));
    const auto id = m.create_session();
    m.post_message(id, "蛾が怖い");
    m.post_message(id, "晴れ");
    std::istringstream lines(testing::slurp(*cfg.persistence_path));
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto rec = json::parse(line);
        CHECK(rec["session"] == id);
        CHECK(rec["turn"].get<std::size_t>() == 2 * count);
        ++count;
    }
    CHECK(count == 2);
}

TEST_CASE("service config from JSON and environment") {
    auto cfg = ServiceConfig::from_json({{"port", 9000}, {"ttl_seconds", 5}, {"cors_origins", {"*"}}});
    CHECK(cfg.port == 9000);
    CHECK(cfg.ttl == std::chrono::seconds(5));
    CHECK(ServiceConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    CHECK_THROWS_AS(ServiceConfig::from_json({{"port", 70000}}), ConfigError);
    CHECK_THROWS_AS(ServiceConfig::from_json({{"ttl_seconds", 0}}), ConfigError);

    const std::map<std::string, std::string> env = {{"VALRESP_BIND", "0.0.0.0:8123"},
                                                    {"VALRESP_SESSION_TTL", "90"},
                                                    {"VALRESP_TIMING_CKPT", "t.json"}};
    cfg.apply_env([&](const char* k) -> const char* {
        const auto it = env.find(k);
        return it == env.end() ? nullptr : it->second.c_str();
    });
    CHECK(cfg.host == "0.0.0.0");
    CHECK(cfg.port == 8123);
    CHECK(cfg.ttl == std::chrono::seconds(90));
    CHECK(cfg.timing_checkpoint == "t.json");
    CHECK_THROWS_AS(cfg.apply_env([](const char* k) -> const char* {
        return std::string(k) == "VALRESP_SESSION_TTL" ? "soon" : nullptr;
    }),
                    ConfigError);
}

TEST_CASE("session ids are unique hex strings") {
    std::set<std::string> ids;
    for (int i = 0; i < 200; ++i) {
        const auto id = new_session_id();
        CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
        ids.insert(id);
    }
    CHECK(ids.size() == 200);
}

TEST_CASE("HTTP routes") {
    ServiceConfig cfg;
    cfg.max_message_bytes = 64;
    cfg.cors_origins = {"http://localhost:5173"};
    SessionManager manager(cfg);
    RunningServer srv(manager);
    httplib::Client cli("127.0.0.1", srv.port);

    auto res = cli.Post("/api/session", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 503);
    CHECK(json::parse(res->body)["error"] == "not_ready");
    CHECK(json::parse(cli.Get("/healthz")->body)["ready"] == false);

    manager.set_models(std::make_shared<pipeline::Models>(testing::fixed_models(true, corpus::Emotion::Fear)));
    res = cli.Post("/api/session", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const std::string id = json::parse(res->body)["session_id"];

    res = cli.Post("/api/session/" + id + "/message", json{{"text", "昨日蛾が出て怖かった"}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto d = json::parse(res->body);
    CHECK(d["validate"] == true);
    CHECK(d["emotion"] == "fear");
    CHECK(d["response"].is_string());
    CHECK(d.contains("latency_ms"));

    res = cli.Post("/api/session/" + id + "/message", json{{"text", std::string(65, 'x')}}.dump(), "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "message_too_large");
    res = cli.Post("/api/session/" + id + "/message", "{\"txt\": 1}", "application/json");
    CHECK(res->status == 400);
    res = cli.Post("/api/session/" + id + "/message", "not json", "application/json");
    CHECK(res->status == 400);
    res = cli.Post("/api/session/ffff/message", json{{"text", "蛾"}}.dump(), "application/json");
    CHECK(res->status == 404);

    res = cli.Get("/api/session/" + id + "/history");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto h = json::parse(res->body);
    CHECK(h["turns"].size() == 2);
    CHECK(h["decisions"].size() == 1);

    const httplib::Headers origin = {{"Origin", "http://localhost:5173"}};
    res = cli.Get("/healthz", origin);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    res = cli.Get("/healthz", httplib::Headers{{"Origin", "http://evil.example"}});
    CHECK_FALSE(res->has_header("Access-Control-Allow-Origin"));
}

TEST_CASE("interleaved sessions match a serial replay") {
    const auto models = std::make_shared<pipeline::Models>(testing::random_models(4));
    const int sessions = 6;

    SessionManager serial(ServiceConfig{});
    serial.set_models(models);
    std::vector<std::vector<json>> expected(sessions);
    for (int s = 0; s < sessions; ++s) {
        const auto id = serial.create_session();
        for (const auto& msg : script(s)) expected[static_cast<std::size_t>(s)].push_back(stable(serial.post_message(id, msg).to_json()));
    }

    SessionManager shared(ServiceConfig{});
    shared.set_models(models);
    std::vector<std::string> ids;
    for (int s = 0; s < sessions; ++s) ids.push_back(shared.create_session());
    std::vector<std::thread> workers;
    for (int s = 0; s < sessions; ++s) {
        workers.emplace_back([&, s] {
            for (const auto& msg : script(s)) shared.post_message(ids[static_cast<std::size_t>(s)], msg);
        });
    }
    for (auto& w : workers) w.join();

    bool mixed = false;
    for (int s = 0; s < sessions; ++s) {
        const auto h = shared.history(ids[static_cast<std::size_t>(s)]);
        REQUIRE(h.decisions.size() == expected[static_cast<std::size_t>(s)].size());
        for (std::size_t i = 0; i < h.decisions.size(); ++i) {
            CHECK(stable(h.decisions[i]) == expected[static_cast<std::size_t>(s)][i]);
            mixed = mixed || h.decisions[i]["validate"] != h.decisions[0]["validate"];
        }
    }
    CHECK(mixed);  // the fixture exercises both gate outcomes
}

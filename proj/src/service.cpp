#include "valresp/service.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include <httplib.h>

#include "valresp/error.hpp"
#include "valresp/text.hpp"
#include "valresp/unicode.hpp"

namespace valresp::service {

using nlohmann::json;

ServiceConfig ServiceConfig::from_json(const json& j) {
    try {
        ServiceConfig c;
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.max_message_bytes = j.value("max_message_bytes", c.max_message_bytes);
        c.ttl = std::chrono::seconds(j.value("ttl_seconds", static_cast<long long>(c.ttl.count())));
        if (j.contains("persistence_path") && !j.at("persistence_path").is_null()) {
            c.persistence_path = j.at("persistence_path").get<std::string>();
        }
        c.cors_origins = j.value("cors_origins", c.cors_origins);
        c.timing_checkpoint = j.value("timing_checkpoint", std::string());
        c.emotion_checkpoint = j.value("emotion_checkpoint", std::string());
        if (c.port < 0 || c.port > 65535) throw ConfigError("port out of range");
        if (c.max_message_bytes == 0) throw ConfigError("max_message_bytes must be positive");
        if (c.ttl.count() <= 0) throw ConfigError("ttl_seconds must be positive");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed service config: ") + e.what());
    }
}

json ServiceConfig::to_json() const {
    json j = {{"host", host},
              {"port", port},
              {"max_message_bytes", max_message_bytes},
              {"ttl_seconds", ttl.count()},
              {"cors_origins", cors_origins},
              {"timing_checkpoint", timing_checkpoint.string()},
              {"emotion_checkpoint", emotion_checkpoint.string()},
              {"persistence_path", nullptr}};
    if (persistence_path) j["persistence_path"] = persistence_path->string();
    return j;
}

void ServiceConfig::apply_env(const EnvLookup& getenv_fn) {
    if (const char* bind = getenv_fn("VALRESP_BIND"); bind && *bind) {
        std::string b(bind);
        const auto colon = b.rfind(':');
        if (colon != std::string::npos) {
            try {
                port = std::stoi(b.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError("VALRESP_BIND has a malformed port: " + b);
            }
            b.resize(colon);
        }
        if (!b.empty()) host = b;
    }
    if (const char* p = getenv_fn("VALRESP_TIMING_CKPT"); p && *p) timing_checkpoint = p;
    if (const char* p = getenv_fn("VALRESP_EMOTION_CKPT"); p && *p) emotion_checkpoint = p;
    if (const char* p = getenv_fn("VALRESP_SESSION_TTL"); p && *p) {
        long long secs = 0;
        try {
            secs = std::stoll(p);
        } catch (const std::exception&) {
            throw ConfigError(std::string("VALRESP_SESSION_TTL is not an integer: ") + p);
        }
        if (secs <= 0) throw ConfigError("VALRESP_SESSION_TTL must be positive");
        ttl = std::chrono::seconds(secs);
    }
}

json SessionView::to_json() const {
    json t = json::array();
    for (const auto& u : turns) {
        t.push_back({{"index", u.index}, {"speaker", u.speaker == corpus::Speaker::A ? "user" : "system"}, {"text", u.text}});
    }
    return {{"turns", t}, {"decisions", decisions}};
}

std::string new_session_id() {
    static thread_local std::random_device device;
    char buf[33];
    const std::uint64_t hi = (static_cast<std::uint64_t>(device()) << 32) ^ device();
    const std::uint64_t lo = (static_cast<std::uint64_t>(device()) << 32) ^ device();
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                  static_cast<unsigned long long>(lo));
    return buf;
}

SessionManager::SessionManager(ServiceConfig cfg, Clock clock) : cfg_(std::move(cfg)), clock_(std::move(clock)) {
    if (!clock_) clock_ = [] { return std::chrono::system_clock::now(); };
}

void SessionManager::set_models(std::shared_ptr<const pipeline::Models> models) {
    if (models) models->validate();
    std::lock_guard lock(models_mu_);
    models_ = std::move(models);
}

std::shared_ptr<const pipeline::Models> SessionManager::models() const {
    std::lock_guard lock(models_mu_);
    return models_;
}

bool SessionManager::ready() const { return models() != nullptr; }

std::vector<std::string> SessionManager::checkpoint_ids() const {
    const auto m = models();
    if (!m) return {};
    return {m->timing.id(), m->emotion.id()};
}

std::string SessionManager::create_session() {
    if (!ready()) throw HttpError(503, "not_ready", "models are not loaded yet");
    auto s = std::make_shared<Session>();
    s->created = s->last_active = clock_();
    std::unique_lock lock(sessions_mu_);
    std::string id;
    do {
        id = new_session_id();
    } while (sessions_.count(id) != 0);
    sessions_.emplace(id, std::move(s));
    return id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) {
    std::shared_ptr<Session> s;
    {
        std::shared_lock lock(sessions_mu_);
        const auto it = sessions_.find(id);
        if (it != sessions_.end()) s = it->second;
    }
    if (!s) throw HttpError(404, "unknown_session", "no session with id " + id);
    return s;
}

std::size_t SessionManager::session_count() const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.size();
}

std::size_t SessionManager::expire_idle() {
    const auto now = clock_();
    std::unique_lock lock(sessions_mu_);
    std::size_t removed = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::lock_guard session_lock(it->second->mu);
        if (now - it->second->last_active >= cfg_.ttl) {
            it = sessions_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

// Called without the session lock held; the map lock is always taken first.
void SessionManager::drop_expired(const std::string& id) {
    {
        std::unique_lock lock(sessions_mu_);
        sessions_.erase(id);
    }
    throw HttpError(404, "unknown_session", "session " + id + " has expired");
}

void SessionManager::persist(const std::string& id, std::size_t turn, std::string_view text, const json& decision) {
    if (!cfg_.persistence_path) return;
    const json rec = {{"session", id}, {"turn", turn}, {"text", text}, {"decision", decision}};
    std::lock_guard lock(persist_mu_);
    std::ofstream out(*cfg_.persistence_path, std::ios::binary | std::ios::app);
    if (out) out << rec.dump() << '\n';
}

pipeline::TurnDecision SessionManager::post_message(const std::string& id, std::string_view text) {
    const auto m = models();
    if (!m) throw HttpError(503, "not_ready", "models are not loaded yet");
    const auto session = find(id);
    std::unique_lock lock(session->mu);
    const auto now = clock_();
    if (now - session->last_active >= cfg_.ttl) {
        lock.unlock();
        drop_expired(id);
    }
    if (text.size() > cfg_.max_message_bytes) {
        throw HttpError(400, "message_too_large",
                        "message is " + std::to_string(text.size()) + " bytes; limit is " +
                            std::to_string(cfg_.max_message_bytes));
    }
    if (!unicode::valid_utf8(text)) throw HttpError(400, "invalid_text", "message is not valid UTF-8");
    if (unicode::strip_whitespace(text::normalize_model_text(text)).empty()) {
        throw HttpError(400, "empty_message", "message is empty");
    }

    pipeline::TurnDecision d;
    try {
        d = pipeline::decide_turn(*m, session->turns, text);
    } catch (const PreconditionError& e) {
        throw HttpError(400, "invalid_text", e.what());
    } catch (const std::exception& e) {
        throw HttpError(500, "stage_failure", std::string("stage 'decide_turn': ") + e.what());
    }

    const std::size_t turn = session->turns.size();
    session->turns.push_back({corpus::Speaker::A, std::string(text), turn});
    if (d.response) session->turns.push_back({corpus::Speaker::B, *d.response, turn + 1});
    const json dj = d.to_json();
    session->decisions.push_back(dj);
    session->last_active = now;
    persist(id, turn, text, dj);
    return d;
}

SessionView SessionManager::history(const std::string& id) {
    const auto session = find(id);
    std::unique_lock lock(session->mu);
    if (clock_() - session->last_active >= cfg_.ttl) {
        lock.unlock();
        drop_expired(id);
    }
    return {session->turns, session->decisions};
}

// ---- HTTP -------------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, const HttpError& e) {
    send_json(res, e.status(), {{"error", e.code()}, {"message", e.what()}});
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const HttpError& e) {
        send_error(res, e);
    } catch (const std::exception& e) {
        send_error(res, HttpError(500, "internal", e.what()));
    }
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
    const auto origins = manager.config().cors_origins;
    server.set_post_routing_handler([origins](const httplib::Request& req, httplib::Response& res) {
        if (origins.empty()) return;
        const std::string origin = req.get_header_value("Origin");
        for (const auto& allowed : origins) {
            if (allowed == "*" || (!origin.empty() && allowed == origin)) {
                res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                return;
            }
        }
    });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [&manager](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"ready", manager.ready()}, {"checkpoint_ids", manager.checkpoint_ids()}});
    });

    server.Post("/api/session", [&manager](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            manager.expire_idle();
            send_json(res, 200, {{"session_id", manager.create_session()}});
        });
    });

    server.Post(R"(/api/session/([0-9A-Za-z]+)/message)", [&manager](const httplib::Request& req,
                                                                     httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error&) {
                throw HttpError(400, "bad_request", "body must be JSON of the form {\"text\": ...}");
            }
            if (!body.is_object() || !body.contains("text") || !body.at("text").is_string()) {
                throw HttpError(400, "bad_request", "body must be JSON of the form {\"text\": ...}");
            }
            const auto decision = manager.post_message(id, body.at("text").get<std::string>());
            send_json(res, 200, decision.to_json());
        });
    });

    server.Get(R"(/api/session/([0-9A-Za-z]+)/history)", [&manager](const httplib::Request& req,
                                                                    httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, manager.history(req.matches[1]).to_json()); });
    });
}

void serve(SessionManager& manager) {
    httplib::Server server;
    // Leave headroom over the text limit for the JSON envelope; oversize text is rejected with 400 by the handler.
    server.set_payload_max_length(manager.config().max_message_bytes * 8 + 1024);
    register_routes(server, manager);
    const auto& cfg = manager.config();
    if (!server.listen(cfg.host, cfg.port)) {
        throw RuntimeError("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
    }
}

}  // namespace valresp::service

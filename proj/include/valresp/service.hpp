#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/corpus.hpp"
#include "valresp/pipeline.hpp"

namespace httplib {
class Server;
}

namespace valresp::service {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t max_message_bytes = 4096;
    std::chrono::seconds ttl{1800};
    std::optional<std::filesystem::path> persistence_path;  // append-only JSON Lines
    std::vector<std::string> cors_origins;                  // "*" allows any origin
    std::filesystem::path timing_checkpoint;
    std::filesystem::path emotion_checkpoint;

    static ServiceConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // VALRESP_BIND (host or host:port), VALRESP_TIMING_CKPT, VALRESP_EMOTION_CKPT, VALRESP_SESSION_TTL (seconds).
    using EnvLookup = std::function<const char*(const char*)>;
    void apply_env(const EnvLookup& getenv_fn);
};

// Errors carrying an HTTP status.
class HttpError : public std::runtime_error {
public:
    HttpError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct SessionView {
    std::vector<corpus::Utterance> turns;  // user = A, system = B
    std::vector<nlohmann::json> decisions;
    nlohmann::json to_json() const;
};

class SessionManager {
public:
    explicit SessionManager(ServiceConfig cfg, Clock clock = {});

    // Models become visible atomically; until then session calls fail with 503.
    void set_models(std::shared_ptr<const pipeline::Models> models);
    bool ready() const;
    std::vector<std::string> checkpoint_ids() const;

    std::string create_session();
    pipeline::TurnDecision post_message(const std::string& session_id, std::string_view text);
    SessionView history(const std::string& session_id);
    std::size_t session_count() const;
    std::size_t expire_idle();  // drops sessions past their TTL; returns how many

    const ServiceConfig& config() const { return cfg_; }

private:
    struct Session {
        std::mutex mu;
        std::vector<corpus::Utterance> turns;
        std::vector<nlohmann::json> decisions;
        std::chrono::system_clock::time_point created;
        std::chrono::system_clock::time_point last_active;
    };

    std::shared_ptr<Session> find(const std::string& id);
    std::shared_ptr<const pipeline::Models> models() const;
    [[noreturn]] void drop_expired(const std::string& id);
    void persist(const std::string& id, std::size_t turn, std::string_view text, const nlohmann::json& decision);

    ServiceConfig cfg_;
    Clock clock_;
    mutable std::mutex models_mu_;
    std::shared_ptr<const pipeline::Models> models_;
    mutable std::shared_mutex sessions_mu_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex persist_mu_;
};

// 128 random bits as 32 hex characters.
std::string new_session_id();

void register_routes(httplib::Server& server, SessionManager& manager);

// Blocks until the server stops.
void serve(SessionManager& manager);

}  // namespace valresp::service

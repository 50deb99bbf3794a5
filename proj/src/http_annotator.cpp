#include "modfactory/annotator.hpp"

#include "modfactory/rng.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace modfactory::annotator {

using nlohmann::json;

struct HttpAnnotator::Impl {
    httplib::Client client;
    explicit Impl(const std::string& base_url) : client(base_url) {}
};

HttpAnnotator::HttpAnnotator(HttpAnnotatorConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_.base_url)) {
    if (config_.base_url.empty()) throw ConfigError("annotator base_url is empty");
    if (config_.bearer_token.empty()) {
        if (const char* tok = std::getenv("MODFACTORY_ANNOTATOR_TOKEN"))
            config_.bearer_token = tok;
    }
    impl_->client.set_connection_timeout(0, config_.timeout_ms * 1000LL);
    impl_->client.set_read_timeout(config_.timeout_ms / 1000,
                                   (config_.timeout_ms % 1000) * 1000);
    impl_->client.set_write_timeout(config_.timeout_ms / 1000,
                                    (config_.timeout_ms % 1000) * 1000);
}

HttpAnnotator::~HttpAnnotator() = default;

namespace {

AnnotationResponse parse_response(const std::string& body, bool want_logits) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed response body: ") + e.what());
    }
    AnnotationResponse resp;
    if (!j.contains("text") || !j["text"].is_string())
        throw ProtocolError("response missing 'text'");
    resp.text = j["text"].get<std::string>();
    resp.latency_ms = j.value("latency_ms", 0);
    if (resp.latency_ms < 0) throw ProtocolError("negative latency_ms");
    if (j.contains("label_logits") && !j["label_logits"].is_null()) {
        LabelLogits lg;
        lg.yes = j["label_logits"].value("yes", 0.0);
        lg.no = j["label_logits"].value("no", 0.0);
        if (!std::isfinite(lg.yes) || !std::isfinite(lg.no))
            throw ProtocolError("non-finite label logits");
        resp.label_logits = lg;
    } else if (want_logits) {
        // backend does not support logits; leave them absent
    }
    return resp;
}

}  // namespace

AnnotationResponse HttpAnnotator::annotate(const AnnotationRequest& req) {
    json body;
    body["prompt"] = req.prompt;
    body["frame_refs"] = req.frame_refs;
    body["max_tokens"] = req.max_tokens;
    body["want_label_logits"] = req.want_label_logits;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!config_.bearer_token.empty())
        headers.emplace("Authorization", "Bearer " + config_.bearer_token);

    Rng jitter_rng(fnv1a64(payload) ^
                   static_cast<std::uint64_t>(
                       std::chrono::steady_clock::now().time_since_epoch().count()));

    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            double delay = config_.retry.base_delay_ms *
                           std::pow(config_.retry.factor, attempt - 2);
            delay *= 1.0 + config_.retry.jitter * (2.0 * jitter_rng.uniform() - 1.0);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(delay)));
        }
        auto res = impl_->client.Post("/v1/annotate", headers, payload,
                                      "application/json");
        if (!res) {
            auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout ||
                err == httplib::Error::Read || err == httplib::Error::Write) {
                last_error = "timeout talking to " + config_.base_url;
                continue;  // transient
            }
            last_error = "connection failure: " + httplib::to_string(err);
            continue;
        }
        if (res->status >= 500) {
            last_error = "backend returned " + std::to_string(res->status);
            continue;
        }
        if (res->status == 429) {
            int retry_after = 0;
            if (res->has_header("Retry-After"))
                retry_after = std::atoi(res->get_header_value("Retry-After").c_str());
            throw RateLimited("rate limited by " + config_.base_url, retry_after);
        }
        if (res->status >= 400)
            throw ProtocolError("backend rejected request with status " +
                                std::to_string(res->status));
        return parse_response(res->body, req.want_label_logits);
    }
    if (last_error.find("timeout") != std::string::npos)
        throw Timeout(last_error + " after " +
                      std::to_string(config_.retry.max_attempts) + " attempts");
    throw BackendError(last_error + " after " +
                       std::to_string(config_.retry.max_attempts) + " attempts");
}

}  // namespace modfactory::annotator

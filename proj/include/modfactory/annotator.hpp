#pragma once

#include "modfactory/common.hpp"
#include "modfactory/corpus.hpp"
#include "modfactory/guideline.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace modfactory::annotator {

struct AnnotationRequest {
    std::string prompt;
    std::vector<std::string> frame_refs;
    int max_tokens = 512;
    bool want_label_logits = false;
};

struct LabelLogits {
    double yes = 0;
    double no = 0;
};

struct AnnotationResponse {
    std::string text;
    std::optional<LabelLogits> label_logits;
    std::int64_t latency_ms = 0;
};

class AnnotatorError : public Error {
  public:
    using Error::Error;
};

class Timeout : public AnnotatorError {
  public:
    using AnnotatorError::AnnotatorError;
};

class BackendError : public AnnotatorError {
  public:
    using AnnotatorError::AnnotatorError;
};

class RateLimited : public AnnotatorError {
  public:
    RateLimited(const std::string& msg, int retry_after_s)
        : AnnotatorError(msg), retry_after_s(retry_after_s) {}
    int retry_after_s;
};

class ProtocolError : public AnnotatorError {
  public:
    using AnnotatorError::AnnotatorError;
};

class AnnotatorClient {
  public:
    virtual ~AnnotatorClient() = default;
    virtual AnnotationResponse annotate(const AnnotationRequest& request) = 0;
    virtual std::string backend_id() const = 0;
};

struct BatchOutcome {
    std::optional<AnnotationResponse> response;
    std::string error;  // empty on success
    bool ok() const { return error.empty(); }
};

// Responses come back in request order; failures are per-item.
std::vector<BatchOutcome> annotate_batch(AnnotatorClient& client,
                                         const std::vector<AnnotationRequest>& requests,
                                         int parallelism);

enum class AnswerFormat { answer_then_reason, reason_then_answer };

AnswerFormat answer_format_from_string(const std::string& s);
const char* to_string(AnswerFormat f);

struct MockAnnotatorConfig {
    double flip_rate = 0.0;  // per sub-question answer flip probability
    std::uint64_t seed = 0;
    AnswerFormat answer_format = AnswerFormat::answer_then_reason;
    // reason_then_answer only: probability the final answer contradicts
    // the emitted reasoning
    double inconsistency_rate = 0.0;
};

// Deterministic stand-in for the annotator model. Answers are read from the
// synthetic corpus' latent truth and flipped with probability flip_rate,
// keyed purely by (seed, request content).
class MockAnnotator : public AnnotatorClient {
  public:
    MockAnnotator(MockAnnotatorConfig config, guideline::GuidelineSet guidelines,
                  std::vector<corpus::VideoRecord> videos);

    AnnotationResponse annotate(const AnnotationRequest& request) override;
    std::string backend_id() const override { return "mock"; }

    const MockAnnotatorConfig& config() const { return config_; }

  private:
    MockAnnotatorConfig config_;
    guideline::GuidelineSet guidelines_;
    std::map<std::string, corpus::VideoRecord> videos_;

    const corpus::VideoRecord& video_for(const AnnotationRequest& request) const;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 200;
    double factor = 4.0;
    double jitter = 0.25;  // fraction of the delay
};

struct HttpAnnotatorConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    int timeout_ms = 30000;
    RetryPolicy retry;
    std::string bearer_token;  // usually from MODFACTORY_ANNOTATOR_TOKEN
};

// POST {base_url}/v1/annotate with the request as JSON. Retries 5xx and
// timeouts with exponential backoff; 4xx is surfaced immediately.
class HttpAnnotator : public AnnotatorClient {
  public:
    explicit HttpAnnotator(HttpAnnotatorConfig config);
    ~HttpAnnotator() override;

    AnnotationResponse annotate(const AnnotationRequest& request) override;
    std::string backend_id() const override { return "http:" + config_.base_url; }

  private:
    HttpAnnotatorConfig config_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Prompt markers the mock relies on to classify a request. The datagen and
// eval templates keep these phrases so the two sides stay in sync.
namespace prompts {
inline constexpr const char* kCaptionMarker = "Describe the video";
inline constexpr const char* kMultiChoiceMarker = "Select which issues";
inline constexpr const char* kJudgmentMarker = "Does the video violate";
inline constexpr const char* kNoneOption = "None of the above";
}  // namespace prompts

}  // namespace modfactory::annotator

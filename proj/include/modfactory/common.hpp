#pragma once

#include <stdexcept>
#include <string>

namespace modfactory {

enum class Label { negative, positive };

enum class Split { pretrain, sft, eval };

enum class TaskKind { caption, vqa_binary, vqa_multi, cot };

inline const char* to_string(Label l) {
    return l == Label::positive ? "positive" : "negative";
}

inline const char* to_string(Split s) {
    switch (s) {
        case Split::pretrain: return "pretrain";
        case Split::sft: return "sft";
        default: return "eval";
    }
}

inline const char* to_string(TaskKind t) {
    switch (t) {
        case TaskKind::caption: return "caption";
        case TaskKind::vqa_binary: return "vqa_binary";
        case TaskKind::vqa_multi: return "vqa_multi";
        default: return "cot";
    }
}

Label label_from_string(const std::string& s);
Split split_from_string(const std::string& s);
TaskKind task_from_string(const std::string& s);

// Base for all domain errors so the CLI can map them to exit codes.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class DataError : public Error {
  public:
    using Error::Error;
};

class IoError : public DataError {
  public:
    using DataError::DataError;
};

// No yes/no decision could be read out of a model response. Shared between
// the data generators and the eval harness.
class UnparseableAnswer : public DataError {
  public:
    using DataError::DataError;
};

}  // namespace modfactory

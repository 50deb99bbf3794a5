#include "modfactory/common.hpp"
#include "modfactory/rng.hpp"

#include <array>
#include <cstdio>

namespace modfactory {

Label label_from_string(const std::string& s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    throw DataError("unknown label: " + s);
}

Split split_from_string(const std::string& s) {
    if (s == "pretrain") return Split::pretrain;
    if (s == "sft") return Split::sft;
    if (s == "eval") return Split::eval;
    throw DataError("unknown split: " + s);
}

TaskKind task_from_string(const std::string& s) {
    if (s == "caption") return TaskKind::caption;
    if (s == "vqa_binary") return TaskKind::vqa_binary;
    if (s == "vqa_multi") return TaskKind::vqa_multi;
    if (s == "cot") return TaskKind::cot;
    throw DataError("unknown task kind: " + s);
}

std::string to_hex(std::uint64_t v) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx",
                  static_cast<unsigned long long>(v));
    return std::string(buf.data(), 16);
}

}  // namespace modfactory

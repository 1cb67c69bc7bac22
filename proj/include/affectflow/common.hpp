#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace affectflow {

// Exit-code contract used by the CLI: input_error -> 2, numeric_error -> 3.
// Precondition violations on library entry points throw std::invalid_argument
// and are treated as input errors by the CLI layer.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int kNumEmotions = 6;

// Fixed label order; index j in e0..e5 columns and wire protocols.
inline constexpr std::array<const char*, kNumEmotions> kEmotionLabels = {
    "sadness", "joy", "love", "anger", "fear", "surprise"};

}  // namespace affectflow

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dalc/matrix.hpp"

namespace dalc {

// Raw diversity weights summing below this trigger the uniform fallback.
inline constexpr double kWeightFloor = 1e-9;

// Vote/grading key extracted from free-form model output. Numeric answers
// are stored as a canonical decimal string (no separators, no symbols, no
// trailing zeros) so equality is exact; anything that does not parse falls
// back to lowercased trimmed text.
struct CanonicalAnswer {
    enum class Kind { Numeric, Text };
    Kind kind = Kind::Text;
    std::string value;

    bool is_numeric() const { return kind == Kind::Numeric; }
    friend bool operator==(const CanonicalAnswer&, const CanonicalAnswer&) = default;
};

// Normalizes a token like "$1,234.50" to "1234.5". Empty result means the
// token is not a plain decimal.
std::optional<std::string> canonical_decimal(std::string_view token);

// Extraction pipeline: the segment after the last "####" marker if present,
// else the text after the last case-insensitive "answer is", else the last
// number-like token anywhere. The chosen candidate is parsed as an exact
// decimal; failing that it becomes a Text answer.
CanonicalAnswer canonicalize_answer(std::string_view text);

using WeightVector = std::vector<double>;

// w_i proportional to max(0, 1 - mean cosine of agent i to the rest),
// normalized to sum to 1. A fully collapsed committee (all cosines 1) yields
// all-zero raw weights; the fallback is the uniform vector, which degrades
// the weighted vote to plain majority.
WeightVector diversity_weights(const Matrix& cosine);

// argmax over answer values of the total weight of their proposers. Ties are
// broken toward the value whose first proposer has the lowest agent index.
CanonicalAnswer weighted_vote(const std::vector<CanonicalAnswer>& answers,
                              const WeightVector& weights);

// Modal answer with the same tie-break rule; integer counts, no weights.
CanonicalAnswer majority_vote(const std::vector<CanonicalAnswer>& answers);

}  // namespace dalc

#include "dalc/consensus.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace dalc {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Drops one leading currency marker; the euro and pound signs arrive as
// multi-byte UTF-8 sequences.
void strip_currency_prefix(std::string_view& s) {
    if (!s.empty() && s.front() == '$') {
        s.remove_prefix(1);
    } else if (s.size() >= 3 && s.substr(0, 3) == "\xE2\x82\xAC") {
        s.remove_prefix(3);
    } else if (s.size() >= 2 && s.substr(0, 2) == "\xC2\xA3") {
        s.remove_prefix(2);
    }
}

bool is_trailing_junk(char c) {
    switch (c) {
        case '.': case ',': case '!': case '?': case ':': case ';':
        case ')': case ']': case '"': case '\'': case '%':
            return true;
        default:
            return false;
    }
}

}  // namespace

std::optional<std::string> canonical_decimal(std::string_view token) {
    std::string_view s = trim(token);
    strip_currency_prefix(s);
    // A trailing '.' is junk only when nothing follows it, so strip from the
    // end before validating; "3.5." loses one dot, "42." loses its dot.
    while (!s.empty() && is_trailing_junk(s.back())) s.remove_suffix(1);
    strip_currency_prefix(s);
    if (s.empty()) return std::nullopt;

    bool negative = false;
    if (s.front() == '+' || s.front() == '-') {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }

    std::string integer, fraction;
    bool seen_dot = false, seen_digit = false;
    for (char c : s) {
        if (is_digit(c)) {
            (seen_dot ? fraction : integer).push_back(c);
            seen_digit = true;
        } else if (c == '.') {
            if (seen_dot) return std::nullopt;
            seen_dot = true;
        } else if (c == ',') {
            if (seen_dot) return std::nullopt;  // commas only group the integer part
        } else {
            return std::nullopt;
        }
    }
    if (!seen_digit) return std::nullopt;

    std::size_t first = integer.find_first_not_of('0');
    integer = first == std::string::npos ? "0" : integer.substr(first);
    if (integer.empty()) integer = "0";
    std::size_t last = fraction.find_last_not_of('0');
    fraction = last == std::string::npos ? "" : fraction.substr(0, last + 1);

    std::string out = integer;
    if (!fraction.empty()) out += "." + fraction;
    if (negative && out != "0") out.insert(out.begin(), '-');
    return out;
}

namespace {

bool is_token_char(char c) {
    return is_digit(c) || c == '.' || c == ',' || c == '$' || c == '%' || c == '+' || c == '-';
}

// Last maximal number-like run that survives canonical_decimal, scanning
// from the end of the text. Currency prefixes widen the run leftward.
std::optional<std::string> last_decimal_token(std::string_view text) {
    std::size_t end = text.size();
    while (end > 0) {
        std::size_t stop = end;
        while (stop > 0 && !is_token_char(text[stop - 1])) --stop;
        if (stop == 0) break;
        std::size_t start = stop;
        while (start > 0 && is_token_char(text[start - 1])) --start;
        std::string_view run = text.substr(start, stop - start);
        bool has_digit = std::any_of(run.begin(), run.end(), is_digit);
        if (has_digit) {
            std::size_t widened = start;
            if (widened >= 3 && text.substr(widened - 3, 3) == "\xE2\x82\xAC") widened -= 3;
            else if (widened >= 2 && text.substr(widened - 2, 2) == "\xC2\xA3") widened -= 2;
            if (auto parsed = canonical_decimal(text.substr(widened, stop - widened)))
                return parsed;
        }
        end = start;
    }
    return std::nullopt;
}

std::size_t find_last_ci(std::string_view haystack, std::string_view needle) {
    const std::string lowered = lowercase(haystack);
    return lowered.rfind(std::string(needle));
}

CanonicalAnswer from_candidate(std::string_view candidate) {
    if (auto parsed = canonical_decimal(candidate))
        return {CanonicalAnswer::Kind::Numeric, std::move(*parsed)};
    if (auto parsed = last_decimal_token(candidate))
        return {CanonicalAnswer::Kind::Numeric, std::move(*parsed)};
    return {CanonicalAnswer::Kind::Text, lowercase(trim(candidate))};
}

}  // namespace

CanonicalAnswer canonicalize_answer(std::string_view text) {
    if (std::size_t pos = text.rfind("####"); pos != std::string_view::npos)
        return from_candidate(text.substr(pos + 4));
    if (std::size_t pos = find_last_ci(text, "answer is"); pos != std::string_view::npos)
        return from_candidate(text.substr(pos + 9));
    return from_candidate(text);
}

WeightVector diversity_weights(const Matrix& cosine) {
    if (cosine.rows() != cosine.cols())
        throw std::invalid_argument("cosine matrix must be square");
    const std::size_t n = cosine.rows();
    if (n == 0) throw std::invalid_argument("cosine matrix must be nonempty");
    if (n == 1) return {1.0};

    WeightVector raw(n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) mean += cosine(i, j);
        mean /= static_cast<double>(n - 1);
        raw[i] = std::max(0.0, 1.0 - mean);
        sum += raw[i];
    }
    if (sum <= kWeightFloor)
        return WeightVector(n, 1.0 / static_cast<double>(n));
    for (double& w : raw) w /= sum;
    return raw;
}

namespace {

struct Tally {
    const CanonicalAnswer* answer;
    double total = 0.0;
};

CanonicalAnswer vote(const std::vector<CanonicalAnswer>& answers,
                     const WeightVector& weights) {
    // Tallies keep first-proposal order; a strictly-greater comparison then
    // breaks ties toward the value proposed earliest.
    std::vector<Tally> tallies;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        auto it = std::find_if(tallies.begin(), tallies.end(),
                               [&](const Tally& t) { return *t.answer == answers[i]; });
        if (it == tallies.end())
            tallies.push_back({&answers[i], weights[i]});
        else
            it->total += weights[i];
    }
    const Tally* best = &tallies.front();
    for (const Tally& t : tallies)
        if (t.total > best->total) best = &t;
    return *best->answer;
}

}  // namespace

CanonicalAnswer weighted_vote(const std::vector<CanonicalAnswer>& answers,
                              const WeightVector& weights) {
    if (answers.empty()) throw std::invalid_argument("empty committee");
    if (answers.size() != weights.size())
        throw std::invalid_argument("answers and weights must have equal length");
    return vote(answers, weights);
}

CanonicalAnswer majority_vote(const std::vector<CanonicalAnswer>& answers) {
    if (answers.empty()) throw std::invalid_argument("empty committee");
    return vote(answers, WeightVector(answers.size(), 1.0));
}

}  // namespace dalc

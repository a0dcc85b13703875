#include "dalc/backends.hpp"

#include <chrono>
#include <cmath>
#include <semaphore>

#include <httplib.h>
#include <json.hpp>

#include "dalc/rng.hpp"

namespace dalc {

using nlohmann::json;

namespace {

long whitespace_token_count(const std::string& text) {
    long count = 0;
    bool in_token = false;
    for (char c : text) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_token) ++count;
        in_token = !space;
    }
    return count;
}

json parse_or_throw(const std::string& body, const char* route) {
    json parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded())
        throw MalformedResponseError(std::string(route) + " returned unparseable JSON");
    return parsed;
}

}  // namespace

class HttpBackend::Gate {
public:
    explicit Gate(int slots) : semaphore_(slots) {}
    void acquire() { semaphore_.acquire(); }
    void release() { semaphore_.release(); }

private:
    std::counting_semaphore<> semaphore_;
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), gate_(std::make_unique<Gate>(config_.max_inflight)) {
    if (config_.max_inflight < 1) throw std::invalid_argument("max_inflight must be positive");
    if (config_.transport_retries < 0)
        throw std::invalid_argument("transport_retries must be nonnegative");
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::id() const { return "http(" + config_.base_url + ")"; }

std::string HttpBackend::post_json(const std::string& path, const std::string& body) {
    gate_->acquire();
    struct Release {
        Gate* gate;
        ~Release() { gate->release(); }
    } release{gate_.get()};

    const auto timeout = std::chrono::milliseconds(
        static_cast<long>(config_.timeout_seconds * 1000.0));
    std::string last_error;
    for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
        // A fresh connection per attempt: a half-dead keep-alive socket must
        // not poison the retry.
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto result = client.Post(path, body, "application/json");
        if (!result) {
            last_error = httplib::to_string(result.error());
            continue;
        }
        if (result->status < 200 || result->status >= 300)
            throw HttpStatusError(result->status, "POST " + config_.base_url + path +
                                                      " returned status " +
                                                      std::to_string(result->status));
        return result->body;
    }
    throw TransportError("POST " + config_.base_url + path + " failed after " +
                         std::to_string(config_.transport_retries + 1) +
                         " attempts: " + last_error);
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
    const json body = {
        {"model", request.model},
        {"system", request.system},
        {"prompt", request.prompt},
        {"options",
         {{"num_predict", request.max_tokens},
          {"temperature", request.temperature},
          {"seed", request.seed}}},
        {"stream", false},
    };
    const json parsed = parse_or_throw(post_json(config_.generate_path, body.dump()), "generate");
    if (!parsed.contains("response") || !parsed["response"].is_string())
        throw MalformedResponseError("generate response lacks a text field");

    GenerationResponse out;
    out.text = parsed["response"].get<std::string>();
    out.model = request.model;
    if (parsed.contains("eval_count") && parsed["eval_count"].is_number_integer()) {
        out.token_count = parsed["eval_count"].get<long>();
    } else {
        out.token_count = whitespace_token_count(out.text);
        out.token_count_estimated = true;
    }
    return out;
}

EmbeddingResponse HttpBackend::embed(const EmbedRequest& request) {
    const json body = {{"model", request.model}, {"input", request.input}};
    const json parsed = parse_or_throw(post_json(config_.embed_path, body.dump()), "embed");

    const json* vector = nullptr;
    if (parsed.contains("embeddings") && parsed["embeddings"].is_array() &&
        !parsed["embeddings"].empty() && parsed["embeddings"][0].is_array())
        vector = &parsed["embeddings"][0];
    else if (parsed.contains("embedding") && parsed["embedding"].is_array())
        vector = &parsed["embedding"];
    else
        throw MalformedResponseError("embed response lacks an embedding vector");

    EmbeddingResponse out;
    out.values.reserve(vector->size());
    for (const json& v : *vector) {
        if (!v.is_number()) throw MalformedResponseError("embedding vector has a non-number");
        out.values.push_back(v.get<double>());
    }
    check_dimension(out.dimension());
    return out;
}

void HttpBackend::check_dimension(std::size_t dim) {
    std::lock_guard lock(dim_mutex_);
    const std::size_t expected =
        config_.expected_embedding_dim != 0 ? config_.expected_embedding_dim : locked_dim_;
    if (expected != 0 && dim != expected)
        throw DimensionMismatchError("encoder returned dimension " + std::to_string(dim) +
                                     ", expected " + std::to_string(expected));
    if (locked_dim_ == 0) locked_dim_ = dim;
}

namespace {

void require_target(double target) {
    if (!(target >= 0.0) || target >= 1.0)
        throw std::invalid_argument("target mean cosine must lie in [0, 1)");
}

// Unit row on the cone: sqrt(t) along the shared axis plus sqrt(1 - t)
// along an independent random direction. Cross terms vanish in high
// dimension, so pairwise cosines concentrate near t.
void cone_row(std::span<double> out, std::span<const double> axis, double target, Rng& rng) {
    std::vector<double> g(out.size());
    rng.unit_vector(g);
    const double along = std::sqrt(target);
    const double across = std::sqrt(1.0 - target);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = along * axis[j] + across * g[j];
    const double norm = l2_norm(out);
    for (double& v : out) v /= norm;
}

const char* const kFillerBank[] = {
    "first", "collect", "the",   "given",  "numbers", "then",    "combine", "them",
    "step",  "by",      "values", "total", "running", "check",   "each",    "carefully",
};
constexpr std::size_t kFillerBankSize = sizeof(kFillerBank) / sizeof(kFillerBank[0]);

}  // namespace

SimulatedBackend::SimulatedBackend(SimulatorConfig config) : config_(config) {
    require_target(config_.target_cosine);
    if (config_.embedding_dim == 0) throw std::invalid_argument("embedding_dim must be positive");
    if (config_.wrong_answer_rate < 0.0 || config_.wrong_answer_rate > 1.0)
        throw std::invalid_argument("wrong_answer_rate must lie in [0, 1]");
    axis_.resize(config_.embedding_dim);
    Rng rng(mix64(config_.seed, fnv1a64("axis")));
    rng.unit_vector(axis_);
}

EmbeddingResponse SimulatedBackend::embed(const EmbedRequest& request) {
    EmbeddingResponse out;
    out.values.resize(config_.embedding_dim);
    Rng rng(mix64(mix64(config_.seed, fnv1a64("embed")), fnv1a64(request.input)));
    cone_row(out.values, axis_, config_.target_cosine, rng);
    return out;
}

GenerationResponse SimulatedBackend::generate(const GenerationRequest& request) {
    // The question is the text of the first "Question:" line; its integer
    // values sum to the intended answer.
    std::string_view scope = request.prompt;
    if (std::size_t pos = scope.find("Question:"); pos != std::string_view::npos) {
        scope.remove_prefix(pos);
        if (std::size_t eol = scope.find('\n'); eol != std::string_view::npos)
            scope = scope.substr(0, eol);
    }
    long long sum = 0;
    long long current = 0;
    bool in_number = false;
    for (char c : scope) {
        if (c >= '0' && c <= '9') {
            current = std::min<long long>(current * 10 + (c - '0'), 1'000'000'000'000LL);
            in_number = true;
        } else if (in_number) {
            sum += current;
            current = 0;
            in_number = false;
        }
    }
    if (in_number) sum += current;

    const std::uint64_t h = mix64(mix64(config_.seed, request.seed), fnv1a64(request.prompt));
    const double coin = static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
    long long answer = sum;
    if (coin < config_.wrong_answer_rate)
        answer += 1 + static_cast<long long>(splitmix64(h ^ 0x6a09e667f3bcc909ULL) % 7);

    const int budget = std::min(config_.base_response_tokens, request.max_tokens);
    const int filler_words = std::max(0, budget - 2);
    std::string text;
    std::uint64_t word_state = splitmix64(h ^ 0xbb67ae8584caa73bULL);
    for (int i = 0; i < filler_words; ++i) {
        word_state = splitmix64(word_state);
        if (i > 0) text += ' ';
        text += kFillerBank[word_state % kFillerBankSize];
    }
    text += "\n#### " + std::to_string(answer);

    GenerationResponse out;
    out.text = std::move(text);
    out.model = request.model;
    out.token_count = whitespace_token_count(out.text);
    return out;
}

SimulatedCommittee simulate_committee(std::uint64_t seed, std::size_t n_agents,
                                      double target_mean_cosine, std::size_t dim,
                                      std::vector<std::string> scripted_answers) {
    require_target(target_mean_cosine);
    if (n_agents == 0 || dim == 0)
        throw std::invalid_argument("committee needs at least one agent and one dimension");
    if (!scripted_answers.empty() && scripted_answers.size() != n_agents)
        throw std::invalid_argument("scripted answers must match the committee size");

    Rng rng(mix64(seed, fnv1a64("committee")));
    std::vector<double> axis(dim);
    rng.unit_vector(axis);

    SimulatedCommittee out{Matrix(n_agents, dim), std::move(scripted_answers)};
    for (std::size_t i = 0; i < n_agents; ++i)
        cone_row(out.embeddings.row(i), axis, target_mean_cosine, rng);
    return out;
}

}  // namespace dalc

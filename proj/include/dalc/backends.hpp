#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dalc/matrix.hpp"

namespace dalc {

struct GenerationRequest {
    std::string model;
    std::string system;
    std::string prompt;
    int max_tokens = 256;
    double temperature = 0.7;
    std::uint64_t seed = 0;
};

struct GenerationResponse {
    std::string text;
    long token_count = 0;
    bool token_count_estimated = false;  // true when whitespace-estimated
    std::string model;
};

struct EmbedRequest {
    std::string model;
    std::string input;
};

struct EmbeddingResponse {
    std::vector<double> values;
    std::size_t dimension() const { return values.size(); }
};

// Backend failures that spoil one question but not the run.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

class HttpStatusError : public BackendError {
public:
    HttpStatusError(int status, const std::string& what) : BackendError(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class MalformedResponseError : public BackendError {
public:
    using BackendError::BackendError;
};

// Encoder misconfiguration; fatal for the whole run.
class DimensionMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
    virtual std::string id() const = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual EmbeddingResponse embed(const EmbedRequest& request) = 0;
    virtual std::string id() const = 0;
};

// Wire client for Ollama-convention endpoints: a generate route taking
// {model, system, prompt, options{num_predict, temperature, seed}, stream}
// and returning {response, eval_count}, and an embedding route taking
// {model, input} and returning {embeddings} (or legacy {embedding}).
// Content passes through byte-transparently in both directions.
struct HttpBackendConfig {
    std::string base_url = "http://127.0.0.1:11434";
    std::string generate_path = "/api/generate";
    std::string embed_path = "/api/embed";
    int transport_retries = 2;        // extra attempts after a transport failure
    int max_inflight = 4;             // protects a local inference server
    double timeout_seconds = 300.0;
    std::size_t expected_embedding_dim = 0;  // 0 = lock to the first response
};

class HttpBackend : public TextGenerator, public TextEmbedder {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    GenerationResponse generate(const GenerationRequest& request) override;
    EmbeddingResponse embed(const EmbedRequest& request) override;
    std::string id() const override;

private:
    class Gate;
    std::string post_json(const std::string& path, const std::string& body);
    void check_dimension(std::size_t dim);

    HttpBackendConfig config_;
    std::unique_ptr<Gate> gate_;
    std::mutex dim_mutex_;
    std::size_t locked_dim_ = 0;
};

// Deterministic in-process stand-in for both the model and the encoder.
// Generation solves simple arithmetic questions (sums the integers on the
// "Question:" line) with an optional seeded wrong-answer rate; embeddings
// live on a cone around a fixed axis so committees show the configured
// mean pairwise cosine. Pure functions of the request: thread-safe and
// identical across calls with identical inputs.
struct SimulatorConfig {
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 768;
    double target_cosine = 0.888;
    double wrong_answer_rate = 0.0;
    int base_response_tokens = 56;
};

class SimulatedBackend : public TextGenerator, public TextEmbedder {
public:
    explicit SimulatedBackend(SimulatorConfig config);

    GenerationResponse generate(const GenerationRequest& request) override;
    EmbeddingResponse embed(const EmbedRequest& request) override;
    std::string id() const override { return "simulator"; }

    const SimulatorConfig& config() const { return config_; }

private:
    SimulatorConfig config_;
    std::vector<double> axis_;  // shared cone axis, fixed at construction
};

// Synthetic committee generator for desk-scale verification: N unit rows
// drawn as normalize(sqrt(t) * u + sqrt(1 - t) * g_i) around a random unit
// axis u, so the empirical mean pairwise cosine approaches t.
struct SimulatedCommittee {
    EmbeddingMatrix embeddings;
    std::vector<std::string> answers;  // scripted per test scenario
};

SimulatedCommittee simulate_committee(std::uint64_t seed, std::size_t n_agents,
                                      double target_mean_cosine, std::size_t dim,
                                      std::vector<std::string> scripted_answers = {});

}  // namespace dalc

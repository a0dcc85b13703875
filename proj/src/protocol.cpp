#include "dalc/protocol.hpp"

#include <chrono>
#include <exception>
#include <future>
#include <set>
#include <stdexcept>
#include <utility>

#include "dalc/rng.hpp"

namespace dalc {

namespace {

const RoleProfile kBaseRoles[] = {
    {"methodical-solver",
     "You are a methodical solver. Work through the problem carefully, one step at a time, "
     "and double-check every calculation."},
    {"skeptical-verifier",
     "You are a skeptical verifier. Question the obvious approach, hunt for mistakes and "
     "edge cases, and only accept conclusions that survive scrutiny."},
    {"concise-expert",
     "You are a concise expert. Identify the essential structure of the problem and reach "
     "the answer in as few steps as possible."},
};
constexpr std::size_t kBaseRoleCount = sizeof(kBaseRoles) / sizeof(kBaseRoles[0]);

constexpr int kPhaseThink = 1;
constexpr int kPhaseAnswer = 3;

std::string think_prompt(const std::string& question) {
    return "Question: " + question +
           "\n\nReason step by step toward the answer. Keep the reasoning compact and do not "
           "state a final answer yet.";
}

struct Hint {
    std::string role;
    std::string text;
};

std::string answer_prompt(const std::string& question, const std::vector<Hint>& hints) {
    std::string prompt = "Question: " + question + "\n\n";
    if (!hints.empty()) {
        prompt += "Hints from other experts:\n";
        for (const Hint& hint : hints) prompt += "- " + hint.role + ": " + hint.text + "\n";
        prompt += "\n";
    }
    prompt += "Think it through, then state your final answer on the last line as: #### <answer>";
    return prompt;
}

std::string baseline_prompt(const std::string& question) {
    return "Question: " + question +
           "\n\nThink step by step, then state your final answer on the last line as: "
           "#### <answer>";
}

struct CallResult {
    std::optional<GenerationResponse> response;
    std::string error;         // backend failure, question-level
    std::exception_ptr fatal;  // anything else propagates
};

CallResult call_generate(TextGenerator& backend, const GenerationRequest& request) {
    CallResult out;
    try {
        out.response = backend.generate(request);
    } catch (const BackendError& e) {
        out.error = e.what();
    } catch (...) {
        out.fatal = std::current_exception();
    }
    return out;
}

std::vector<CallResult> run_generation_phase(const std::vector<TextGenerator*>& backends,
                                             const std::vector<GenerationRequest>& requests,
                                             bool parallel) {
    std::vector<CallResult> results(requests.size());
    if (parallel) {
        std::vector<std::future<CallResult>> futures;
        futures.reserve(requests.size());
        for (std::size_t i = 0; i < requests.size(); ++i)
            futures.push_back(std::async(std::launch::async, [&backends, &requests, i] {
                return call_generate(*backends[i], requests[i]);
            }));
        for (std::size_t i = 0; i < requests.size(); ++i) results[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < requests.size(); ++i)
            results[i] = call_generate(*backends[i], requests[i]);
    }
    for (const CallResult& r : results)
        if (r.fatal) std::rethrow_exception(r.fatal);
    return results;
}

// First failing agent's story, or empty when the phase fully succeeded.
std::string phase_failure(const std::vector<CallResult>& results,
                          const std::vector<AgentHandle>& committee, const char* phase) {
    for (std::size_t i = 0; i < results.size(); ++i)
        if (!results[i].response)
            return std::string(phase) + " (" + committee[i].role.name + "): " + results[i].error;
    return {};
}

void finish(QuestionOutcome& outcome,
            std::chrono::steady_clock::time_point started) {
    outcome.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

}  // namespace

std::vector<RoleProfile> default_roles(std::size_t n) {
    std::vector<RoleProfile> roles;
    roles.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RoleProfile role = kBaseRoles[i % kBaseRoleCount];
        if (i >= kBaseRoleCount)
            role.name += "-" + std::to_string(i / kBaseRoleCount + 1);
        roles.push_back(std::move(role));
    }
    return roles;
}

void ProtocolConfig::validate() const {
    if (committee_size < 2) throw std::invalid_argument("committee_size must be at least 2");
    if (think_max_tokens < 1) throw std::invalid_argument("think_max_tokens must be positive");
    if (answer_max_tokens < 1) throw std::invalid_argument("answer_max_tokens must be positive");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be nonnegative");
    if (hint_char_limit < 0) throw std::invalid_argument("hint_char_limit must be nonnegative");
    if (sc_samples < 1) throw std::invalid_argument("sc_samples must be at least 1");
    if (!(projection.tau > 0.0) || projection.tau > 1.0)
        throw std::invalid_argument("tau must lie in (0, 1]");
}

std::uint64_t derive_call_seed(std::uint64_t run_seed, std::string_view question_id,
                               int agent_index, int phase) {
    std::uint64_t seed = mix64(run_seed, fnv1a64(question_id));
    seed = mix64(seed, static_cast<std::uint64_t>(agent_index) + 1);
    return mix64(seed, static_cast<std::uint64_t>(phase) + 0x51);
}

std::string truncate_hint(std::string_view rationale, std::size_t limit) {
    std::size_t bytes = 0;
    std::size_t count = 0;
    while (bytes < rationale.size() && count < limit) {
        ++bytes;
        while (bytes < rationale.size() &&
               (static_cast<unsigned char>(rationale[bytes]) & 0xC0) == 0x80)
            ++bytes;
        ++count;
    }
    return std::string(rationale.substr(0, bytes));
}

QuestionOutcome run_dalc(const std::string& question_id, const std::string& question,
                         const std::vector<AgentHandle>& committee,
                         const EncoderHandle& encoder, const ProtocolConfig& config) {
    config.validate();
    const std::size_t n = committee.size();
    if (n < 2) throw std::invalid_argument("committee needs at least two agents");
    std::set<std::string_view> names;
    for (const AgentHandle& agent : committee)
        if (!names.insert(agent.role.name).second)
            throw std::invalid_argument("duplicate role name: " + agent.role.name);

    const auto started = std::chrono::steady_clock::now();
    QuestionOutcome outcome;
    outcome.question_id = question_id;
    outcome.agents.resize(n);
    for (std::size_t i = 0; i < n; ++i) outcome.agents[i].role = committee[i].role.name;

    std::vector<TextGenerator*> backends;
    for (const AgentHandle& agent : committee) backends.push_back(agent.backend.get());

    // Phase 1: role-conditioned rationales.
    std::vector<GenerationRequest> think_requests(n);
    for (std::size_t i = 0; i < n; ++i)
        think_requests[i] = {committee[i].model,
                             committee[i].role.system_prompt,
                             think_prompt(question),
                             config.think_max_tokens,
                             config.temperature,
                             derive_call_seed(config.seed, question_id,
                                              static_cast<int>(i), kPhaseThink)};
    auto think = run_generation_phase(backends, think_requests, config.parallel_agents);
    for (std::size_t i = 0; i < n; ++i) {
        if (!think[i].response) continue;
        outcome.agents[i].rationale = think[i].response->text;
        outcome.agents[i].think_tokens = think[i].response->token_count;
        outcome.agents[i].tokens_estimated |= think[i].response->token_count_estimated;
        outcome.total_tokens += think[i].response->token_count;
    }
    if (std::string failure = phase_failure(think, committee, "phase 1"); !failure.empty()) {
        outcome.failed = true;
        outcome.failure = std::move(failure);
        finish(outcome, started);
        return outcome;
    }

    // Rationales embedded; a dimension mismatch reported by the encoder is
    // run-fatal, any other backend failure spoils just this question.
    for (std::size_t i = 0; i < n; ++i) {
        try {
            outcome.agents[i].embedding =
                encoder.backend->embed({encoder.model, outcome.agents[i].rationale}).values;
        } catch (const DimensionMismatchError&) {
            throw;
        } catch (const BackendError& e) {
            outcome.failed = true;
            outcome.failure = "embedding (" + committee[i].role.name + "): " + e.what();
            finish(outcome, started);
            return outcome;
        }
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (outcome.agents[i].embedding.size() != outcome.agents[0].embedding.size()) {
            outcome.failed = true;
            outcome.failure = "embedding dimension mismatch across agents (" +
                              std::to_string(outcome.agents[0].embedding.size()) + " vs " +
                              std::to_string(outcome.agents[i].embedding.size()) + ")";
            finish(outcome, started);
            return outcome;
        }
    }

    // Phase 2: projection and weights, fixed before anyone re-answers.
    std::vector<std::vector<double>> rows;
    rows.reserve(n);
    for (const AgentTrace& agent : outcome.agents) rows.push_back(agent.embedding);
    const Matrix embeddings = Matrix::from_rows(rows);
    outcome.raw_diversity = diversity_report(embeddings);
    const Projected projected = apply_projection(embeddings, config.projection);
    outcome.projected_diversity = diversity_report(projected.embeddings);
    outcome.weights = diversity_weights(cosine_matrix(projected.embeddings));

    // Phase 3: re-answer, optionally with the other agents' truncated
    // rationales.
    std::vector<GenerationRequest> answer_requests(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Hint> hints;
        if (config.hints_enabled) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                hints.push_back({committee[j].role.name,
                                 truncate_hint(outcome.agents[j].rationale,
                                               static_cast<std::size_t>(config.hint_char_limit))});
            }
        }
        answer_requests[i] = {committee[i].model,
                              committee[i].role.system_prompt,
                              answer_prompt(question, hints),
                              config.answer_max_tokens,
                              config.temperature,
                              derive_call_seed(config.seed, question_id,
                                               static_cast<int>(i), kPhaseAnswer)};
    }
    auto answers = run_generation_phase(backends, answer_requests, config.parallel_agents);
    for (std::size_t i = 0; i < n; ++i) {
        if (!answers[i].response) continue;
        outcome.agents[i].answer_text = answers[i].response->text;
        outcome.agents[i].answer_tokens = answers[i].response->token_count;
        outcome.agents[i].tokens_estimated |= answers[i].response->token_count_estimated;
        outcome.agents[i].answer = canonicalize_answer(answers[i].response->text);
        outcome.total_tokens += answers[i].response->token_count;
    }
    if (std::string failure = phase_failure(answers, committee, "phase 3"); !failure.empty()) {
        outcome.failed = true;
        outcome.failure = std::move(failure);
        finish(outcome, started);
        return outcome;
    }

    std::vector<CanonicalAnswer> votes;
    votes.reserve(n);
    for (const AgentTrace& agent : outcome.agents) votes.push_back(agent.answer);
    outcome.consensus = weighted_vote(votes, outcome.weights);
    finish(outcome, started);
    return outcome;
}

QuestionOutcome run_single(const std::string& question_id, const std::string& question,
                           const AgentHandle& agent, const ProtocolConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    QuestionOutcome outcome;
    outcome.question_id = question_id;
    outcome.agents.resize(1);
    outcome.agents[0].role = agent.role.name;

    GenerationRequest request{agent.model,
                              agent.role.system_prompt,
                              baseline_prompt(question),
                              config.answer_max_tokens,
                              config.temperature,
                              derive_call_seed(config.seed, question_id, 0, kPhaseAnswer)};
    try {
        GenerationResponse response = agent.backend->generate(request);
        outcome.agents[0].answer_text = response.text;
        outcome.agents[0].answer_tokens = response.token_count;
        outcome.agents[0].tokens_estimated = response.token_count_estimated;
        outcome.agents[0].answer = canonicalize_answer(response.text);
        outcome.total_tokens = response.token_count;
        outcome.consensus = outcome.agents[0].answer;
    } catch (const BackendError& e) {
        outcome.failed = true;
        outcome.failure = std::string("generation (") + agent.role.name + "): " + e.what();
    }
    finish(outcome, started);
    return outcome;
}

QuestionOutcome run_self_consistency(const std::string& question_id,
                                     const std::string& question, const AgentHandle& agent,
                                     const ProtocolConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const std::size_t k = static_cast<std::size_t>(config.sc_samples);
    QuestionOutcome outcome;
    outcome.question_id = question_id;
    outcome.agents.resize(k);

    std::vector<TextGenerator*> backends(k, agent.backend.get());
    std::vector<GenerationRequest> requests(k);
    for (std::size_t j = 0; j < k; ++j) {
        outcome.agents[j].role = "sample-" + std::to_string(j + 1);
        requests[j] = {agent.model,
                       agent.role.system_prompt,
                       baseline_prompt(question),
                       config.answer_max_tokens,
                       config.temperature,
                       derive_call_seed(config.seed, question_id, static_cast<int>(j),
                                        kPhaseAnswer)};
    }
    auto samples = run_generation_phase(backends, requests, config.parallel_agents);
    for (std::size_t j = 0; j < k; ++j) {
        if (!samples[j].response) continue;
        outcome.agents[j].answer_text = samples[j].response->text;
        outcome.agents[j].answer_tokens = samples[j].response->token_count;
        outcome.agents[j].tokens_estimated = samples[j].response->token_count_estimated;
        outcome.agents[j].answer = canonicalize_answer(samples[j].response->text);
        outcome.total_tokens += samples[j].response->token_count;
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (!samples[j].response) {
            outcome.failed = true;
            outcome.failure =
                "sample " + std::to_string(j + 1) + ": " + samples[j].error;
            finish(outcome, started);
            return outcome;
        }
    }

    std::vector<CanonicalAnswer> votes;
    votes.reserve(k);
    for (const AgentTrace& trace : outcome.agents) votes.push_back(trace.answer);
    outcome.consensus = majority_vote(votes);
    finish(outcome, started);
    return outcome;
}

}  // namespace dalc

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dalc/backends.hpp"
#include "dalc/consensus.hpp"
#include "dalc/geometry.hpp"
#include "dalc/projection.hpp"

namespace dalc {

// Bumped whenever a prompt template changes, so transcripts from different
// binary versions are comparable. Recorded in run metadata.
inline constexpr std::string_view kPromptTemplateVersion = "dalc-prompts-v1";

struct RoleProfile {
    std::string name;
    std::string system_prompt;
};

// The three shipped role prompts; committees larger than three cycle
// through them with a numeric suffix.
std::vector<RoleProfile> default_roles(std::size_t n);

struct ProtocolConfig {
    int committee_size = 3;
    int think_max_tokens = 128;   // phase-1 rationale cap
    int answer_max_tokens = 512;  // full generations (phase 3, single, SC)
    double temperature = 0.7;
    int hint_char_limit = 300;
    ProjectionKind projection{};
    bool hints_enabled = true;
    int sc_samples = 5;
    std::uint64_t seed = 42;
    bool parallel_agents = true;  // fan agent calls out within a phase

    void validate() const;  // throws std::invalid_argument
};

struct AgentHandle {
    RoleProfile role;
    std::string model;
    std::shared_ptr<TextGenerator> backend;
};

struct EncoderHandle {
    std::string model;
    std::shared_ptr<TextEmbedder> backend;
};

struct AgentTrace {
    std::string role;
    std::string rationale;  // phase-1 text ("" for baselines)
    std::vector<double> embedding;
    std::string answer_text;
    CanonicalAnswer answer;
    long think_tokens = 0;
    long answer_tokens = 0;
    bool tokens_estimated = false;
};

struct QuestionOutcome {
    std::string question_id;
    std::vector<AgentTrace> agents;
    std::optional<DiversityReport> raw_diversity;
    std::optional<DiversityReport> projected_diversity;
    WeightVector weights;  // empty for baselines
    CanonicalAnswer consensus;
    long total_tokens = 0;
    double wall_time_s = 0.0;
    bool failed = false;
    std::string failure;
};

// Per-call seed: decorrelates questions, agents and phases while staying
// reproducible from the run seed.
std::uint64_t derive_call_seed(std::uint64_t run_seed, std::string_view question_id,
                               int agent_index, int phase);

// First `limit` Unicode scalar values of `rationale`; never splits an
// encoded character. Shorter inputs pass through unchanged.
std::string truncate_hint(std::string_view rationale, std::size_t limit);

// Full protocol for one question. Phase 1: every agent writes a short
// rationale under its role prompt and the rationales are embedded. Phase 2:
// the configured projection is applied and diversity weights are computed
// from the projected cosines (never recomputed later). Phase 3: agents
// re-answer, seeing the other agents' truncated rationales when hints are
// enabled, and the weighted vote decides. A backend failure marks the
// question failed but keeps the partial transcript; a dimension mismatch
// reported by the encoder propagates as fatal.
QuestionOutcome run_dalc(const std::string& question_id, const std::string& question,
                         const std::vector<AgentHandle>& committee,
                         const EncoderHandle& encoder, const ProtocolConfig& config);

// One neutral-prompt generation, one canonicalized answer.
QuestionOutcome run_single(const std::string& question_id, const std::string& question,
                           const AgentHandle& agent, const ProtocolConfig& config);

// k independent neutral-prompt samples, majority vote over their answers.
QuestionOutcome run_self_consistency(const std::string& question_id,
                                     const std::string& question, const AgentHandle& agent,
                                     const ProtocolConfig& config);

}  // namespace dalc

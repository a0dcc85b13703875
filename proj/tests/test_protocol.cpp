#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dalc/protocol.hpp"
#include "support/doubles.hpp"

using namespace dalc;
using doubles::FailingGenerator;
using doubles::MapEmbedder;
using doubles::ScriptedGenerator;
using doubles::ThrowingEmbedder;

namespace {

// Committee of three whose rationales embed to orthogonal axes and whose
// final answers are scripted per agent.
struct Fixture {
    std::vector<std::shared_ptr<ScriptedGenerator>> generators;
    std::vector<AgentHandle> committee;
    EncoderHandle encoder;

    Fixture(const std::vector<std::string>& answers,
            const std::vector<std::vector<double>>& embeddings) {
        auto roles = default_roles(answers.size());
        auto embedder = std::make_shared<MapEmbedder>();
        for (std::size_t i = 0; i < answers.size(); ++i) {
            const std::string rationale = "rationale from agent " + std::to_string(i);
            embedder->set(rationale, embeddings[i]);
            auto gen = std::make_shared<ScriptedGenerator>(
                std::vector<std::string>{rationale, answers[i]});
            generators.push_back(gen);
            committee.push_back({roles[i], "test-model", gen});
        }
        encoder = {"test-encoder", embedder};
    }
};

const std::vector<std::vector<double>> kOrthogonal = {
    {1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}};

ProtocolConfig sequential_config() {
    ProtocolConfig cfg;
    cfg.parallel_agents = false;
    return cfg;
}

bool same_outcome_ignoring_time(const QuestionOutcome& a, const QuestionOutcome& b) {
    if (a.question_id != b.question_id || a.failed != b.failed || a.failure != b.failure)
        return false;
    if (!(a.consensus == b.consensus) || a.weights != b.weights ||
        a.total_tokens != b.total_tokens)
        return false;
    if (a.agents.size() != b.agents.size()) return false;
    for (std::size_t i = 0; i < a.agents.size(); ++i) {
        const auto& x = a.agents[i];
        const auto& y = b.agents[i];
        if (x.role != y.role || x.rationale != y.rationale || x.embedding != y.embedding ||
            x.answer_text != y.answer_text || !(x.answer == y.answer) ||
            x.think_tokens != y.think_tokens || x.answer_tokens != y.answer_tokens)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("default_roles are unique and cover the shipped trio") {
    auto three = default_roles(3);
    REQUIRE(three.size() == 3);
    std::set<std::string> names;
    for (const auto& r : three) {
        CHECK_FALSE(r.name.empty());
        CHECK_FALSE(r.system_prompt.empty());
        names.insert(r.name);
    }
    CHECK(names.size() == 3);

    auto five = default_roles(5);
    std::set<std::string> five_names;
    for (const auto& r : five) five_names.insert(r.name);
    CHECK(five_names.size() == 5);
}

TEST_CASE("truncate_hint counts characters, not bytes") {
    const std::string ascii(100, 'x');
    CHECK(truncate_hint(ascii, 300) == ascii);
    CHECK(truncate_hint(std::string(400, 'x'), 300) == std::string(300, 'x'));
    CHECK(truncate_hint("abc", 0).empty());

    std::string accented;
    for (int i = 0; i < 400; ++i) accented += "é";
    const std::string cut = truncate_hint(accented, 300);
    CHECK(cut.size() == 600);  // two bytes per character, no split
    std::string expected;
    for (int i = 0; i < 300; ++i) expected += "é";
    CHECK(cut == expected);

    CHECK(truncate_hint("aéb", 2) == "aé");
}

TEST_CASE("derive_call_seed separates questions, agents, and phases") {
    const auto base = derive_call_seed(42, "q1", 0, 1);
    CHECK(derive_call_seed(42, "q1", 0, 1) == base);
    CHECK(derive_call_seed(43, "q1", 0, 1) != base);
    CHECK(derive_call_seed(42, "q2", 0, 1) != base);
    CHECK(derive_call_seed(42, "q1", 1, 1) != base);
    CHECK(derive_call_seed(42, "q1", 0, 3) != base);
}

TEST_CASE("ProtocolConfig validation") {
    ProtocolConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto expect_invalid = [](ProtocolConfig bad) {
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    };
    ProtocolConfig bad = cfg;
    bad.committee_size = 1;
    expect_invalid(bad);
    bad = cfg;
    bad.think_max_tokens = 0;
    expect_invalid(bad);
    bad = cfg;
    bad.answer_max_tokens = 0;
    expect_invalid(bad);
    bad = cfg;
    bad.temperature = -0.1;
    expect_invalid(bad);
    bad = cfg;
    bad.hint_char_limit = -1;
    expect_invalid(bad);
    bad = cfg;
    bad.sc_samples = 0;
    expect_invalid(bad);
    bad = cfg;
    bad.projection.tau = 0.0;
    expect_invalid(bad);
}

TEST_CASE("run_dalc unanimous committee agrees under every projection") {
    for (auto variant : {ProjectionVariant::Identity, ProjectionVariant::GramSchmidt,
                         ProjectionVariant::SvdReshape}) {
        Fixture fx({"#### 42", "#### 42", "the answer is 42"}, kOrthogonal);
        ProtocolConfig cfg = sequential_config();
        cfg.projection.variant = variant;
        auto outcome = run_dalc("q1", "what is 21 + 21?", fx.committee, fx.encoder, cfg);

        REQUIRE_FALSE(outcome.failed);
        CHECK(outcome.consensus == CanonicalAnswer{CanonicalAnswer::Kind::Numeric, "42"});
        REQUIRE(outcome.weights.size() == 3);
        double sum = 0.0;
        for (double w : outcome.weights) sum += w;
        CHECK(std::abs(sum - 1.0) < 1e-12);
        REQUIRE(outcome.raw_diversity.has_value());
        REQUIRE(outcome.projected_diversity.has_value());
        CHECK(outcome.agents.size() == 3);
    }
}

TEST_CASE("run_dalc records phase structure in prompts and seeds") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    ProtocolConfig cfg = sequential_config();
    cfg.seed = 7;
    cfg.think_max_tokens = 128;
    cfg.answer_max_tokens = 400;
    cfg.temperature = 0.7;
    auto outcome = run_dalc("q9", "what is 1 + 2?", fx.committee, fx.encoder, cfg);
    REQUIRE_FALSE(outcome.failed);

    for (std::size_t i = 0; i < 3; ++i) {
        const auto& seen = fx.generators[i]->seen;
        REQUIRE(seen.size() == 2);
        const auto& think = seen[0];
        const auto& answer = seen[1];

        CHECK(think.system == fx.committee[i].role.system_prompt);
        CHECK(think.prompt.find("Question: what is 1 + 2?") != std::string::npos);
        CHECK(think.max_tokens == 128);
        CHECK(think.temperature == doctest::Approx(0.7));
        CHECK(think.seed == derive_call_seed(7, "q9", static_cast<int>(i), 1));

        CHECK(answer.system == fx.committee[i].role.system_prompt);
        CHECK(answer.prompt.find("Question: what is 1 + 2?") != std::string::npos);
        CHECK(answer.prompt.find("####") != std::string::npos);
        CHECK(answer.max_tokens == 400);
        CHECK(answer.seed == derive_call_seed(7, "q9", static_cast<int>(i), 3));
        CHECK(answer.seed != think.seed);
    }
}

TEST_CASE("run_dalc shares truncated hints from the other agents only") {
    const std::string long_tail(500, 'z');
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    // Replace agent 0's rationale with a long one to observe truncation.
    const std::string long_rationale = "L:" + long_tail;
    fx.generators[0] = std::make_shared<ScriptedGenerator>(
        std::vector<std::string>{long_rationale, "#### 1"});
    fx.committee[0].backend = fx.generators[0];
    static_cast<MapEmbedder&>(*fx.encoder.backend).set(long_rationale, kOrthogonal[0]);

    ProtocolConfig cfg = sequential_config();
    cfg.hint_char_limit = 300;
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, cfg);
    REQUIRE_FALSE(outcome.failed);

    const std::string expected_hint = truncate_hint(long_rationale, 300);
    CHECK(expected_hint.size() == 300);

    const auto& answer0 = fx.generators[0]->seen[1];
    const auto& answer1 = fx.generators[1]->seen[1];
    CHECK(answer0.prompt.find("Hints from other experts:") != std::string::npos);
    // Own rationale never comes back as a hint.
    CHECK(answer0.prompt.find("L:") == std::string::npos);
    CHECK(answer0.prompt.find("rationale from agent 1") != std::string::npos);
    CHECK(answer0.prompt.find("rationale from agent 2") != std::string::npos);
    // Other agents see agent 0's rationale cut to the limit.
    CHECK(answer1.prompt.find(expected_hint) != std::string::npos);
    CHECK(answer1.prompt.find(long_rationale) == std::string::npos);
    // Hints carry the proposing role's name.
    CHECK(answer1.prompt.find(fx.committee[0].role.name) != std::string::npos);
}

TEST_CASE("run_dalc omits hints when disabled") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    ProtocolConfig cfg = sequential_config();
    cfg.hints_enabled = false;
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, cfg);
    REQUIRE_FALSE(outcome.failed);
    for (const auto& gen : fx.generators) {
        const auto& answer = gen->seen[1];
        CHECK(answer.prompt.find("Hints") == std::string::npos);
        CHECK(answer.prompt.find("rationale from agent") == std::string::npos);
    }
}

TEST_CASE("run_dalc weights follow the projected per-agent cosines") {
    // Two nearly parallel rationales and one oblique one.
    const double r = 1.0 / std::sqrt(2.0);
    Fixture fx({"#### 5", "#### 5", "#### 9"},
               {{1.0, 0.0, 0.0, 0.0}, {0.999, 0.0447102, 0.0, 0.0}, {r, 0.0, r, 0.0}});
    ProtocolConfig cfg = sequential_config();
    cfg.projection.variant = ProjectionVariant::Identity;
    auto outcome = run_dalc("q1", "irrelevant 5", fx.committee, fx.encoder, cfg);
    REQUIRE_FALSE(outcome.failed);

    REQUIRE(outcome.projected_diversity.has_value());
    const auto& per_agent = outcome.projected_diversity->per_agent_mean_cosine;
    REQUIRE(per_agent.size() == 3);
    double raw_sum = 0.0;
    for (double s : per_agent) raw_sum += std::max(0.0, 1.0 - s);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(outcome.weights[i] ==
              doctest::Approx(std::max(0.0, 1.0 - per_agent[i]) / raw_sum).epsilon(1e-12));

    // The two parallel agents split the vote for 5; consensus follows the
    // recorded weights exactly.
    CHECK(outcome.consensus ==
          weighted_vote({outcome.agents[0].answer, outcome.agents[1].answer,
                         outcome.agents[2].answer},
                        outcome.weights));
}

TEST_CASE("run_dalc totals tokens across both generation phases") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config());
    REQUIRE_FALSE(outcome.failed);
    long expected = 0;
    for (const auto& agent : outcome.agents) {
        CHECK(agent.think_tokens == 10);
        CHECK(agent.answer_tokens == 10);
        expected += agent.think_tokens + agent.answer_tokens;
    }
    CHECK(outcome.total_tokens == expected);
}

TEST_CASE("run_dalc keeps the partial transcript when phase 1 fails") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    fx.committee[1].backend = std::make_shared<FailingGenerator>(0);
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config());
    CHECK(outcome.failed);
    CHECK(outcome.failure.find("injected transport failure") != std::string::npos);
    CHECK(outcome.agents.size() == 3);
    CHECK_FALSE(outcome.agents[0].rationale.empty());
    CHECK(outcome.agents[1].rationale.empty());
    CHECK_FALSE(outcome.raw_diversity.has_value());
    CHECK(outcome.weights.empty());
}

TEST_CASE("run_dalc keeps diversity data when phase 3 fails") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    // Succeeds for the phase-1 rationale, fails on the phase-3 answer.
    auto failing =
        std::make_shared<FailingGenerator>(1, "rationale from agent 2");
    fx.committee[2].backend = failing;
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config());
    CHECK(outcome.failed);
    CHECK(outcome.raw_diversity.has_value());
    CHECK(outcome.projected_diversity.has_value());
    CHECK(outcome.weights.size() == 3);
    CHECK_FALSE(outcome.agents[2].rationale.empty());
    CHECK(outcome.agents[2].answer_text.empty());
}

TEST_CASE("run_dalc marks the question failed when the encoder fails") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    fx.encoder.backend = std::make_shared<ThrowingEmbedder>(ThrowingEmbedder::Mode::Transport);
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config());
    CHECK(outcome.failed);
    CHECK(outcome.failure.find("injected embed failure") != std::string::npos);
}

TEST_CASE("run_dalc propagates encoder dimension mismatches as fatal") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    fx.encoder.backend =
        std::make_shared<ThrowingEmbedder>(ThrowingEmbedder::Mode::DimensionMismatch);
    CHECK_THROWS_AS(
        run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config()),
        DimensionMismatchError);
}

TEST_CASE("run_dalc fails the question on ragged embedding sizes") {
    Fixture fx({"#### 1", "#### 2", "#### 3"},
               {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0, 0.0}});
    auto outcome = run_dalc("q1", "what is 0?", fx.committee, fx.encoder, sequential_config());
    CHECK(outcome.failed);
    CHECK(outcome.failure.find("dimension") != std::string::npos);
}

TEST_CASE("run_dalc rejects committees smaller than two") {
    Fixture fx({"#### 1", "#### 2", "#### 3"}, kOrthogonal);
    std::vector<AgentHandle> small{fx.committee[0]};
    CHECK_THROWS_AS(run_dalc("q1", "x", small, fx.encoder, sequential_config()),
                    std::invalid_argument);
}

TEST_CASE("run_dalc is deterministic and thread-schedule independent") {
    auto sim = std::make_shared<SimulatedBackend>(
        SimulatorConfig{.seed = 5, .embedding_dim = 96, .target_cosine = 0.6,
                        .wrong_answer_rate = 0.3});
    auto roles = default_roles(3);
    std::vector<AgentHandle> committee;
    for (const auto& role : roles) committee.push_back({role, "sim-model", sim});
    EncoderHandle encoder{"sim-encoder", sim};

    ProtocolConfig cfg;
    cfg.seed = 11;
    const std::string q = "Question line payload: 8 plus 3 plus 4";

    auto first = run_dalc("q7", q, committee, encoder, cfg);
    auto second = run_dalc("q7", q, committee, encoder, cfg);
    CHECK(same_outcome_ignoring_time(first, second));

    ProtocolConfig serial = cfg;
    serial.parallel_agents = false;
    auto third = run_dalc("q7", q, committee, encoder, serial);
    CHECK(same_outcome_ignoring_time(first, third));
}

TEST_CASE("run_single answers with one generation") {
    auto gen = std::make_shared<ScriptedGenerator>(std::vector<std::string>{"sum is 7\n#### 7"});
    AgentHandle agent{{"solo", "You are a careful solver."}, "m", gen};
    ProtocolConfig cfg = sequential_config();
    cfg.seed = 3;
    auto outcome = run_single("q2", "what is 3 + 4?", agent, cfg);

    REQUIRE_FALSE(outcome.failed);
    CHECK(outcome.consensus == CanonicalAnswer{CanonicalAnswer::Kind::Numeric, "7"});
    CHECK(outcome.agents.size() == 1);
    CHECK(outcome.agents[0].rationale.empty());
    CHECK(outcome.total_tokens == 10);
    CHECK_FALSE(outcome.raw_diversity.has_value());
    CHECK(outcome.weights.empty());
    REQUIRE(gen->seen.size() == 1);
    CHECK(gen->seen[0].prompt.find("Question: what is 3 + 4?") != std::string::npos);
    CHECK(gen->seen[0].max_tokens == cfg.answer_max_tokens);
}

TEST_CASE("run_single turns empty output into an empty text answer") {
    auto gen = std::make_shared<ScriptedGenerator>(std::vector<std::string>{""});
    AgentHandle agent{{"solo", "s"}, "m", gen};
    auto outcome = run_single("q2", "anything", agent, sequential_config());
    REQUIRE_FALSE(outcome.failed);
    CHECK_FALSE(outcome.consensus.is_numeric());
    CHECK(outcome.consensus.value.empty());
}

TEST_CASE("run_single marks backend failure") {
    AgentHandle agent{{"solo", "s"}, "m", std::make_shared<FailingGenerator>(0)};
    auto outcome = run_single("q2", "anything", agent, sequential_config());
    CHECK(outcome.failed);
}

TEST_CASE("run_self_consistency majority votes over k samples") {
    auto gen = std::make_shared<ScriptedGenerator>(std::vector<std::string>{
        "#### 42", "#### 42", "#### 17", "#### 42", "#### 17"});
    AgentHandle agent{{"solo", "s"}, "m", gen};
    ProtocolConfig cfg = sequential_config();
    cfg.sc_samples = 5;
    auto outcome = run_self_consistency("q3", "anything 42", agent, cfg);

    REQUIRE_FALSE(outcome.failed);
    CHECK(outcome.consensus == CanonicalAnswer{CanonicalAnswer::Kind::Numeric, "42"});
    CHECK(outcome.agents.size() == 5);
    CHECK(outcome.total_tokens == 50);

    std::set<std::uint64_t> seeds;
    for (const auto& req : gen->seen) seeds.insert(req.seed);
    CHECK(seeds.size() == 5);
}

TEST_CASE("run_self_consistency with one sample matches run_single") {
    auto sim = std::make_shared<SimulatedBackend>(SimulatorConfig{.seed = 9});
    AgentHandle agent{{"solo", "You are a careful solver."}, "m", sim};
    ProtocolConfig cfg;
    cfg.seed = 77;
    cfg.sc_samples = 1;
    auto single = run_single("q4", "Question: 6 and 6", agent, cfg);
    auto sc = run_self_consistency("q4", "Question: 6 and 6", agent, cfg);
    CHECK(single.consensus == sc.consensus);
    CHECK(single.agents[0].answer_text == sc.agents[0].answer_text);
    CHECK(single.total_tokens == sc.total_tokens);
}

TEST_CASE("run_self_consistency keeps completed samples on failure") {
    AgentHandle agent{{"solo", "s"}, "m", std::make_shared<FailingGenerator>(2, "#### 8")};
    ProtocolConfig cfg = sequential_config();
    cfg.sc_samples = 5;
    auto outcome = run_self_consistency("q3", "anything", agent, cfg);
    CHECK(outcome.failed);
    CHECK(outcome.agents.size() == 5);
    CHECK(outcome.agents[0].answer_text == "#### 8");
    CHECK(outcome.agents[2].answer_text.empty());
}

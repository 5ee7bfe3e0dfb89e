#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "pkt/types.hpp"

namespace pkt {
namespace {

TEST(Interaction, RejectsEmptyTextAndOutOfRangeDifficulty) {
    EXPECT_PKT_ERROR(Interaction("", {}, true, 0.5), ErrorKind::Data, "InvalidInteraction");
    EXPECT_PKT_ERROR(Interaction("Range", {}, true, -0.01), ErrorKind::Data, "InvalidInteraction");
    EXPECT_PKT_ERROR(Interaction("Range", {}, true, 1.01), ErrorKind::Data, "InvalidInteraction");
    EXPECT_NO_THROW(Interaction("Range", {}, true, 0.0));
    EXPECT_NO_THROW(Interaction("Range", {}, true, 1.0));
}

TEST(StudentSequence, RequiresInteractions) {
    EXPECT_PKT_ERROR(StudentSequence("s1", {}), ErrorKind::Data, "InvalidSequence");
}

TEST(StudentSequence, PrefixKeepsIdentity) {
    const StudentSequence s("s1", {Interaction("A", {}, true, 0.1), Interaction("B", {}, false, 0.9)}, Split::Test);
    const auto p = s.prefix(1);
    EXPECT_EQ(p.student_id(), "s1");
    EXPECT_EQ(p.split(), Split::Test);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.back().exercise_text(), "A");
    EXPECT_EQ(s.with_split(Split::Train).split(), Split::Train);
}

TEST(Split, RoundTrip) {
    EXPECT_EQ(parse_split(to_string(Split::Train)), Split::Train);
    EXPECT_EQ(parse_split(to_string(Split::Test)), Split::Test);
    EXPECT_PKT_ERROR(parse_split("validation"), ErrorKind::Data, "InvalidSplit");
}

TEST(ClusterId, NegativeValuesAreGeneric) {
    EXPECT_TRUE(ClusterId(-1).is_generic());
    EXPECT_TRUE(ClusterId(-7).is_generic());
    EXPECT_EQ(ClusterId(-3), ClusterId::generic());
    EXPECT_FALSE(ClusterId(0).is_generic());
    EXPECT_EQ(ClusterId(2).value(), 2);
    EXPECT_LT(ClusterId(0), ClusterId(1));
}

TEST(EmbeddingVector, NormalizesToUnitLength) {
    const std::vector<double> raw = {3.0, 4.0};
    const auto v = EmbeddingVector::normalized(raw);
    EXPECT_NEAR(v.norm(), 1.0, 1e-6);
    EXPECT_NEAR(v.values()[0], 0.6, 1e-6);
    EXPECT_NEAR(v.dot(v), 1.0, 1e-6);
}

TEST(EmbeddingVector, RejectsZeroAndNonFinite) {
    const std::vector<double> zero = {0.0, 0.0};
    EXPECT_PKT_ERROR(EmbeddingVector::normalized(zero), ErrorKind::Data, "ZeroEmbedding");
    const std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_PKT_ERROR(EmbeddingVector::normalized(bad), ErrorKind::Data, "NonFiniteEmbedding");
    EXPECT_PKT_ERROR(EmbeddingVector::from_unit({2.0f, 0.0f}), ErrorKind::Data, "DimensionMismatch");
}

TEST(EmbeddingVector, DotRejectsDimensionMismatch) {
    const std::vector<double> a = {1.0, 0.0};
    const std::vector<double> b = {1.0, 0.0, 0.0};
    EXPECT_PKT_ERROR(EmbeddingVector::normalized(a).dot(EmbeddingVector::normalized(b)), ErrorKind::Data,
                     "DimensionMismatch");
}

TEST(KeyPattern, ParsesLooselyWithinClosedSet) {
    for (const auto p : kAllKeyPatterns) EXPECT_EQ(parse_key_pattern(to_string(p)), p);
    EXPECT_EQ(parse_key_pattern("careless_slip"), KeyPattern::CarelessSlip);
    EXPECT_EQ(parse_key_pattern("DIFFICULTY-SPIKE-FAILURE"), KeyPattern::DifficultySpikeFailure);
    EXPECT_EQ(parse_key_pattern("Mastered"), std::nullopt);
    EXPECT_EQ(parse_key_pattern(""), std::nullopt);
}

TEST(Annotation, RejectsBlankFields) {
    EXPECT_PKT_ERROR(Annotation("", KeyPattern::SolidMastery, "x", "y", "z"), ErrorKind::Data, "MalformedAnnotation");
    const Annotation a("k", KeyPattern::SolidMastery, "d", "c", "s");
    EXPECT_FALSE(a.fallback());
    EXPECT_TRUE(a.as_fallback().fallback());
}

TEST(MemoryEntry, RejectsTestSplitHistories) {
    const StudentSequence h("s", {Interaction("A", {}, true, 0.2)}, Split::Test);
    const std::vector<double> e = {1.0};
    MemoryEntry entry{"0:s", "s", ClusterId(0), h, Interaction("B", {}, true, 0.5), true,
                      Annotation("k", KeyPattern::SolidMastery, "d", "c", "s"), EmbeddingVector::normalized(e)};
    EXPECT_PKT_ERROR(entry.validate(), ErrorKind::Data, "TestDataInBank");
}

TEST(SpikeConfig, Validates) {
    SpikeConfig c;
    EXPECT_NO_THROW(c.validate());
    c.streak_len = 0;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
    c = {};
    c.delta = 1.5;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
    c = {};
    c.delta_min = 0.7;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
}

TEST(PredictionRecord, Fired) {
    PredictionRecord r;
    EXPECT_FALSE(r.fired(Constraint::SpikeRule));
    r.constraints_fired.push_back(Constraint::SpikeRule);
    EXPECT_TRUE(r.fired(Constraint::SpikeRule));
    EXPECT_EQ(to_string(Constraint::SpikeRule), "SpikeRule");
}

}  // namespace
}  // namespace pkt

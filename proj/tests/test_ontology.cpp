#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "support.hpp"

using namespace usersim;
using testing_support::multiwoz;
using testing_support::sgd;
using testing_support::toy;

TEST(Ontology, MultiwozCounts) {
  const auto& o = multiwoz();
  EXPECT_EQ(o.domains().size(), 7u);
  EXPECT_EQ(o.user_intents().size(), 5u);
  EXPECT_EQ(o.user_general_intents().size(), 3u);
  EXPECT_EQ(o.user_domain_intents().size(), 2u);
}

TEST(Ontology, SgdCounts) {
  const auto& o = sgd();
  EXPECT_EQ(o.domains().size(), 20u);
  EXPECT_EQ(o.user_intents().size(), 11u);
  EXPECT_EQ(o.user_general_intents().size(), 2u);
}

TEST(Ontology, EmptyDomainsRejected) {
  auto j = Json::parse(testing_support::kToyOntology);
  j["domains"] = Json::object();
  EXPECT_THROW(load_ontology(j.dump()), ValidationError);
}

TEST(Ontology, MalformedReportsPosition) {
  try {
    load_ontology("{\n  \"name\": \"x\",\n  oops\n}");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 0u);
  }
}

TEST(Ontology, LegalValuesHotelArea) {
  auto lv = multiwoz().legal_values("hotel", "area");
  EXPECT_EQ(lv.values, (std::vector<std::string>{"north", "south", "east", "west", "centre"}));
  EXPECT_FALSE(lv.open_valued);
}

TEST(Ontology, LegalValuesOpenSlot) {
  auto lv = multiwoz().legal_values("taxi", "leave");
  EXPECT_TRUE(lv.values.empty());
  EXPECT_TRUE(lv.open_valued);
}

TEST(Ontology, UnknownSlotThrows) {
  EXPECT_THROW(multiwoz().legal_values("hotel", "colour"), Error);
  EXPECT_THROW(multiwoz().legal_values("spaceport", "area"), Error);
}

TEST(Ontology, RandomAlternativeNeverExcluded) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    auto v = multiwoz().random_alternative("hotel", "area", "north", rng);
    ASSERT_TRUE(v);
    EXPECT_NE(*v, "north");
  }
}

TEST(Ontology, RandomAlternativeUniform) {
  Rng rng(11);
  std::map<std::string, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[*multiwoz().random_alternative("hotel", "area", "north", rng)];
  ASSERT_EQ(counts.size(), 4u);
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (const auto& [v, c] : counts) EXPECT_NEAR(c, 2500, 3 * sigma) << v;
}

TEST(Ontology, RandomAlternativeUnreplaceable) {
  Rng rng(1);
  EXPECT_FALSE(toy().random_alternative("shop", "size", "one", rng));
}

TEST(Ontology, RandomAlternativeUsesCandidatePool) {
  Rng rng(1);
  EXPECT_EQ(toy().random_alternative("shop", "when", "9:00", rng), "10:00");
}

TEST(Ontology, SerializeRoundTrip) {
  for (const auto* o : {&multiwoz(), &sgd(), &toy()}) {
    auto text = serialize_ontology(*o);
    auto back = load_ontology(text);
    EXPECT_EQ(back, *o);
    EXPECT_EQ(serialize_ontology(back), text);
  }
}

TEST(Ontology, RolesDrivenByFile) {
  EXPECT_EQ(toy().user_role("tell"), IntentRole::inform);
  EXPECT_EQ(toy().user_role("ciao"), IntentRole::bye);
  EXPECT_FALSE(toy().user_role("inform"));
  EXPECT_EQ(sgd().user_role("request_alts"), IntentRole::other);
}

TEST(Ontology, InvalidDocumentsRejected) {
  auto base = Json::parse(testing_support::kToyOntology);
  auto bad_role = base;
  bad_role["user_domain_intents"][0]["role"] = "shout";
  EXPECT_THROW(load_ontology(bad_role.dump()), ValidationError);
  auto overlap = base;
  overlap["user_domain_intents"].push_back({{"name", "hello"}, {"role", "other"}});
  EXPECT_THROW(load_ontology(overlap.dump()), ValidationError);
  auto reserved = base;
  reserved["domains"]["shop"]["slots"]["colour"]["values"].push_back("dontcare");
  EXPECT_THROW(load_ontology(reserved.dump()), ValidationError);
  auto no_slots = base;
  no_slots["domains"]["park"]["slots"] = Json::object();
  EXPECT_THROW(load_ontology(no_slots.dump()), ValidationError);
}

#include <gtest/gtest.h>

#include "support.hpp"

using namespace usersim;
using testing_support::multiwoz;
using testing_support::sgd;
using testing_support::templates;

TEST(Realizer, SpecificTemplate) {
  EXPECT_EQ(realize({{"inform", "hotel", "area", "north"}}, multiwoz(), templates()), "I am looking for a hotel in the north.");
}

TEST(Realizer, EmptyList) {
  EXPECT_EQ(realize({}, multiwoz(), templates()), "Okay.");
  EXPECT_EQ(realize({}, multiwoz(), TemplateTable{}), "Okay.");
}

TEST(Realizer, JoinsSentences) {
  auto text = realize({{"request", "hotel", "addr", "?"}, {"inform", "taxi", "leave", "8:00"}}, multiwoz(), templates());
  EXPECT_EQ(text, "What is the addr? I want to leave after 8:00.");
}

TEST(Realizer, DontcareAndWildcards) {
  EXPECT_EQ(realize({{"inform", "hotel", "price", "dontcare"}}, multiwoz(), templates()), "The price does not matter to me.");
  TemplateTable t;
  t.table(Side::user)["@inform|*|*"] = "{slot}={value}";
  EXPECT_EQ(realize({{"inform", "hotel", "book_day", "monday"}}, multiwoz(), t), "book day=monday");
}

TEST(Realizer, GenericFallbackWithoutTemplates) {
  EXPECT_EQ(realize({{"inform", "hotel", "area", "north"}}, multiwoz(), TemplateTable{}), "inform hotel area north.");
}

TEST(Realizer, RejectsNonStringTemplates) {
  EXPECT_THROW(TemplateTable::load(R"({"user": {"@empty": 3}})"), ValidationError);
}

TEST(Realizer, Deterministic) {
  ActionList al{{"inform", "restaurant", "food", "thai"}, {"request", "restaurant", "phone", "?"}};
  EXPECT_EQ(realize(al, multiwoz(), templates()), realize(al, multiwoz(), templates()));
}

// Every concrete value shows up verbatim and nothing else from the lexicon leaks in.
TEST(Realizer, ZeroSlotErrorOnLegalLists) {
  for (const auto* o : {&multiwoz(), &sgd()}) {
    Rng rng(31);
    const auto lexicon = ser_lexicon(*o);
    std::vector<NlgSample> samples;
    for (int i = 0; i < 1000; ++i) {
      auto t = testing_support::random_triple(*o, rng);
      auto cg = build_graph(*o, t.goal, t.system);
      std::vector<std::size_t> idx(cg.paths().size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      ActionList al;
      const auto k = 1 + detail::uniform_index(rng, cg.max_actions());
      for (std::size_t j = 0; j < idx.size() && al.size() < k; ++j) al.push_back(cg.paths()[idx[j]].action);
      samples.push_back({al, realize(al, *o, templates()), {}});
    }
    auto r = ser(samples, lexicon);
    ASSERT_TRUE(r.rate);
    EXPECT_EQ(r.m, 0u);
    EXPECT_EQ(r.h, 0u);
    EXPECT_GT(r.n, 200u);
  }
}

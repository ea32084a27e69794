#include <gtest/gtest.h>

#include "support.hpp"

using namespace gkp;
using gkp::test::TempDir;

TEST(Choices, CanonicalNumersense) {
  const auto &c = canonical_numersense_choices();
  EXPECT_EQ(c, (std::vector<std::string>{"no", "zero", "one", "two", "three", "four", "five", "six", "seven",
                                         "eight", "nine", "ten"}));
  EXPECT_EQ(c.size(), 12u);
  EXPECT_EQ(c.front(), "no");
  EXPECT_EQ(std::set<std::string>(c.begin(), c.end()).size(), 12u);
}

TEST(LoadDataset, NumersenseLine) {
  TempDir dir;
  write_file(dir / "n.jsonl", R"({"id":"n1","text":"Most motorcycles have <mask> tires.","answer":"two"})" "\n");
  const auto ds = load_dataset(dir / "n.jsonl", Task::numersense);
  ASSERT_EQ(ds.records.size(), 1u);
  const auto &q = ds.records[0];
  EXPECT_EQ(q.choices, canonical_numersense_choices());
  ASSERT_TRUE(q.gold_index);
  EXPECT_EQ(q.choices[*q.gold_index], "two");
  EXPECT_EQ(ds.manifest.record_count, 1u);
  EXPECT_EQ(ds.manifest.digest, load_dataset(dir / "n.jsonl", Task::numersense).manifest.digest);
}

TEST(LoadDataset, Csqa2Binary) {
  TempDir dir;
  write_file(dir / "b.jsonl", R"({"id":"b1","text":"Bricks are cubes.","answer":"yes"})" "\n"
                              R"({"id":"b2","text":"Ice is hot.","answer":"false"})" "\n");
  const auto ds = load_dataset(dir / "b.jsonl", Task::csqa2);
  EXPECT_EQ(ds.records[0].choices, (std::vector<std::string>{"yes", "no"}));
  EXPECT_EQ(*ds.records[0].gold_index, 0u);
  EXPECT_EQ(*ds.records[1].gold_index, 1u);
}

TEST(LoadDataset, Errors) {
  TempDir dir;
  write_file(dir / "nomask.jsonl", R"({"id":"n1","text":"Motorcycles have tires.","answer":"two"})" "\n");
  try {
    load_dataset(dir / "nomask.jsonl", Task::numersense);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::invariant_violation);
    EXPECT_NE(std::string(e.what()).find("n1"), std::string::npos);
  }
  write_file(dir / "broken.jsonl", R"({"id":"n1","text":"a <mask>","answer":"two"})" "\n{oops\n");
  try {
    load_dataset(dir / "broken.jsonl", Task::numersense);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  write_file(dir / "dupe.jsonl", R"({"id":"x","text":"a <mask>"})" "\n" R"({"id":"x","text":"b <mask>"})" "\n");
  EXPECT_THROW(load_dataset(dir / "dupe.jsonl", Task::numersense), Error);
  EXPECT_THROW(load_dataset(dir / "absent.jsonl", Task::numersense), Error);
  write_file(dir / "csqa.jsonl", R"({"id":"c","text":"q?","choices":["a","b","c"],"answer":"a"})" "\n");
  EXPECT_THROW(load_dataset(dir / "csqa.jsonl", Task::csqa), Error);
}

TEST(LoadDataset, BracketMaskNormalized) {
  TempDir dir;
  write_file(dir / "n.jsonl", R"({"id":"n1","text":"Penguins have [M] wings.","answer":"two"})" "\n");
  EXPECT_EQ(load_dataset(dir / "n.jsonl", Task::numersense).records[0].text, "Penguins have <mask> wings.");
}

TEST(LoadDataset, RoundTripIsFixedPoint) {
  TempDir dir;
  write_file(dir / "c.jsonl", R"({"id":"c1","text":"Where do fish live?","choices":["sea","tree","sky","car","desk"],"answer":"sea","metadata":{"facts":["Fish swim."]}})" "\n"
                              R"({"id":"c2","text":"What is cold?","choices":["ice","fire","sun","lava","oven"]})" "\n");
  const auto first = load_dataset(dir / "c.jsonl", Task::csqa);
  write_file(dir / "c2.jsonl", serialize_dataset(first.records));
  const auto second = load_dataset(dir / "c2.jsonl", Task::csqa);
  EXPECT_EQ(serialize_dataset(second.records), serialize_dataset(first.records));
  EXPECT_FALSE(second.records[1].gold_index);
  for (const auto &q : second.records) EXPECT_TRUE(validate(q).empty());
}

TEST(Realize, Examples) {
  const QuestionRecord q{"n1", Task::numersense, "Most motorcycles have <mask> tires.", canonical_numersense_choices(), 3, {}};
  EXPECT_EQ(realize(q, 3), "Most motorcycles have two tires.");
  EXPECT_EQ(realize(q, 3, std::string("A motorcycle has two wheels.")),
            "A motorcycle has two wheels. Most motorcycles have two tires.");
  for (std::size_t i = 0; i < q.choices.size(); ++i)
    for (std::size_t j = i + 1; j < q.choices.size(); ++j) EXPECT_NE(realize(q, i), realize(q, j));
  QuestionRecord two = q;
  two.text = "<mask> and <mask>";
  try {
    realize(two, 0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::multiple_masks);
  }
  QuestionRecord none = q;
  none.text = "no slot";
  try {
    realize(none, 0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_mask);
  }
}

TEST(Validate, ViolationCodes) {
  const QuestionRecord ok{"n1", Task::numersense, "a <mask> b", canonical_numersense_choices(), 0, {}};
  EXPECT_TRUE(validate(ok).empty());
  QuestionRecord dup{"c", Task::custom, "q", {"a", "a"}, 0, {}};
  EXPECT_EQ(validate(dup), std::vector<std::string>{"choices-not-distinct"});
  QuestionRecord range{"c", Task::custom, "q", {"a", "b"}, 5, {}};
  EXPECT_EQ(validate(range), std::vector<std::string>{"gold-index-range"});
  QuestionRecord binary{"b", Task::csqa2, "q", {"no", "yes"}, 0, {}};
  EXPECT_EQ(validate(binary), std::vector<std::string>{"noncanonical-choices"});
}

TEST(ScoringMode, Defaults) {
  EXPECT_EQ(default_scoring_mode(Task::numersense), ScoringMode::infill);
  EXPECT_EQ(default_scoring_mode(Task::csqa), ScoringMode::continuation);
  EXPECT_EQ(default_scoring_mode(Task::qasc), ScoringMode::continuation);
  EXPECT_EQ(task_from_string("csqa2"), Task::csqa2);
  EXPECT_THROW(task_from_string("nope"), Error);
}

#include "brar/corpus.hpp"
#include "brar/error.hpp"
#include "brar/rng.hpp"

#include <doctest.h>

#include <sstream>

using namespace brar;

namespace {

const LabelSet kLabels = LabelSet::canonical();

LabelId L(const char* name) { return *kLabels.find(name); }

std::vector<Utterance> conll(const std::string& text, std::size_t t_max = 64, LoadReport* report = nullptr) {
  std::istringstream in(text);
  return read_conll(in, kLabels, t_max, report);
}

std::vector<Utterance> csv(const std::string& text, LoadReport* report = nullptr) {
  std::istringstream in(text);
  return read_conda_csv(in, kLabels, 64, report);
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("canonical label order is T C D S P O") {
  CHECK(kLabels.names() == std::vector<std::string>{"T", "C", "D", "S", "P", "O"});
  CHECK(kLabels.outside() == 5);
  CHECK_THROWS_AS(LabelSet({"T", "C", "D", "S", "P", "X"}), DataError);
  CHECK_THROWS_AS(LabelSet({"T", "T", "D", "S", "P", "O"}), DataError);
}

TEST_CASE("conll block becomes one utterance") {
  const auto u = conll("fu\tT\ngg\tS\n");
  REQUIRE(u.size() == 1);
  CHECK(u[0].tokens == std::vector<std::string>{"fu", "gg"});
  CHECK(u[0].labels == std::vector<LabelId>{L("T"), L("S")});
}

TEST_CASE("blank lines separate utterances") {
  const auto u = conll("a\tO\n\n\nb\tP\nc\tO\n\n");
  REQUIRE(u.size() == 2);
  CHECK(u[1].tokens.size() == 2);
}

TEST_CASE("empty conll file gives no utterances") { CHECK(conll("").empty()); }

TEST_CASE("three columns is an error naming the line") {
  const std::string what = message_of([] { conll("ok\tO\nbad LABEL X\n"); });
  CHECK(what.find("line 2") != std::string::npos);
  CHECK_THROWS_AS(conll("bad LABEL X\n"), DataError);
}

TEST_CASE("unknown label is an error naming the line") {
  const std::string what = message_of([] { conll("a\tO\nb\tQ\n"); });
  CHECK(what.find("line 2") != std::string::npos);
  CHECK(what.find("Q") != std::string::npos);
}

TEST_CASE("long utterances are truncated with a warning") {
  LoadReport report;
  const auto u = conll("a\tO\nb\tO\nc\tO\n", 2, &report);
  REQUIRE(u.size() == 1);
  CHECK(u[0].size() == 2);
  CHECK(report.truncated == 1);
  CHECK(report.warnings.size() == 1);
}

TEST_CASE("write_conll round-trips") {
  Rng rng(9);
  std::vector<Utterance> utts;
  for (int i = 0; i < 30; ++i) {
    Utterance u;
    const auto n = 1 + rng.below(6);
    for (std::uint64_t k = 0; k < n; ++k) {
      u.tokens.push_back("tok" + std::to_string(rng.below(20)));
      u.labels.push_back(static_cast<LabelId>(rng.below(6)));
    }
    utts.push_back(u);
  }
  std::ostringstream out;
  write_conll(out, utts, kLabels);
  const auto back = conll(out.str());
  REQUIRE(back.size() == utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    CHECK(back[i].tokens == utts[i].tokens);
    CHECK(back[i].labels == utts[i].labels);
  }
}

TEST_CASE("csv parsing handles quotes, commas and embedded newlines") {
  std::istringstream in("a,b,c\n\"x, y\",\"say \"\"hi\"\"\",\"multi\nline\"\r\nplain,,end\n");
  const auto rows = parse_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "x, y");
  CHECK(rows[1][1] == "say \"hi\"");
  CHECK(rows[1][2] == "multi\nline");
  CHECK(rows[2] == std::vector<std::string>{"plain", "", "end"});
  std::istringstream bad("a,\"open\n");
  CHECK_THROWS_AS(parse_csv(bad), DataError);
}

TEST_CASE("conda csv row becomes an utterance") {
  const auto u = csv("id,utterance,slots\n1,gg wp,S S\n");
  REQUIRE(u.size() == 1);
  CHECK(u[0].tokens == std::vector<std::string>{"gg", "wp"});
  CHECK(u[0].labels == std::vector<LabelId>{L("S"), L("S")});
}

TEST_CASE("conda csv mismatched row is rejected and the rest loads") {
  LoadReport report;
  const auto u = csv("utterance,slots\na b,T\nc d,O O\n", &report);
  REQUIRE(u.size() == 1);
  CHECK(u[0].tokens == std::vector<std::string>{"c", "d"});
  CHECK(report.rejected_rows == 1);
  CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("conda csv without the slots column is rejected") {
  CHECK_THROWS_AS(csv("utterance,labels\na,O\n"), DataError);
}

TEST_CASE("vocabulary ordering and unknown tokens") {
  const std::vector<Utterance> train{{{"gg", "gg", "wp"}, {3, 3, 5}, 0}, {{"gg"}, {3}, 0}};
  const Vocabulary v = build_vocab(train, 1);
  CHECK(v.size() == 3);
  CHECK(v.token(0) == "<unk>");
  CHECK(v.index("gg") == 1);
  CHECK(v.index("wp") == 2);
  CHECK(v.index("never") == Vocabulary::kUnk);
  const Vocabulary v2 = build_vocab(train, 2);
  CHECK(v2.size() == 2);
  CHECK(v2.index("wp") == Vocabulary::kUnk);
  CHECK(build_vocab(train, 1) == v);
}

TEST_CASE("frequency ties are broken by token text") {
  const std::vector<Utterance> train{{{"b", "a", "c", "c"}, {5, 5, 5, 5}, 0}};
  const Vocabulary v = build_vocab(train, 1);
  CHECK(v.tokens() == std::vector<std::string>{"<unk>", "c", "a", "b"});
}

TEST_CASE("label counts") {
  const LabelId T = L("T"), S = L("S"), O = L("O");
  const std::vector<Utterance> train{{{"gg", "x"}, {S, T}, 0}, {{"gg", "x"}, {S, T}, 0}, {{"gg", "x", "x"}, {S, T, O}, 0}};
  const Vocabulary v = build_vocab(train, 1);
  const LabelStats st = label_stats(train, v);
  const auto gg = st.counts.row(v.index("gg"));
  CHECK(gg(0) == 0);
  CHECK(gg(S) == 3);
  CHECK(st.total(v.index("gg")) == 3);
  const auto x = st.counts.row(v.index("x"));
  CHECK(x(T) == 3);
  CHECK(x(O) == 1);
  CHECK(st.counts.sum() == 7);

  const RowVector pg = label_distribution(st, v.index("gg"));
  CHECK(pg(S) == 1.0);
  CHECK(pg.sum() == 1.0);
  const RowVector px = label_distribution(st, v.index("x"));
  CHECK(px(T) == 0.75);
  CHECK(px(O) == 0.25);
  const RowVector pu = label_distribution(st, Vocabulary::kUnk);
  for (Index j = 0; j < 6; ++j) CHECK(pu(j) == 1.0 / 6.0);
  CHECK_THROWS_AS(label_distribution(st, 99), std::out_of_range);
}

TEST_CASE("empty training set gives an all-zero count table") {
  const Vocabulary v = build_vocab({}, 1);
  const LabelStats st = label_stats({}, v);
  CHECK(st.counts.rows() == 1);
  CHECK(st.counts.sum() == 0);
}

TEST_CASE("smoothing spreads mass") {
  const std::vector<Utterance> train{{{"gg"}, {L("S")}, 0}};
  const Vocabulary v = build_vocab(train, 1);
  const RowVector p = label_distribution(label_stats(train, v), 1, 1.0);
  CHECK(p(L("S")) == doctest::Approx(2.0 / 7.0));
  CHECK(p(L("T")) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("label distributions are normalized and count totals match positions") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Utterance> train;
    std::int64_t positions = 0;
    for (int u = 0; u < 15; ++u) {
      Utterance utt;
      const auto n = 1 + rng.below(7);
      for (std::uint64_t k = 0; k < n; ++k) {
        utt.tokens.push_back("w" + std::to_string(rng.below(12)));
        utt.labels.push_back(static_cast<LabelId>(rng.below(6)));
      }
      positions += static_cast<std::int64_t>(n);
      train.push_back(utt);
    }
    const Vocabulary v = build_vocab(train, 1 + static_cast<std::int64_t>(rng.below(2)));
    const LabelStats st = label_stats(train, v);
    CHECK(st.counts.sum() == positions);
    for (Index i = 0; i < v.size(); ++i) {
      const RowVector p = label_distribution(st, i);
      CHECK((p.array() >= 0.0).all());
      CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    }
  }
}

}  // TEST_SUITE

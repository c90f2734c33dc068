#include "brar/cli.hpp"
#include "brar/evalkit.hpp"
#include "brar/selfcheck.hpp"
#include "brar/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace brar;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Scratch directory holding a small synthetic corpus.
struct Workspace {
  fs::path dir;
  std::string train, test;

  Workspace() {
    static int counter = 0;
    dir = fs::temp_directory_path() / ("brar_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
    selfcheck::SyntheticSpec spec;
    spec.utterances = 20;
    spec.vocab = 16;
    const auto corpus = selfcheck::synthetic_corpus(spec, 6);
    train = (dir / "train.conll").string();
    test = (dir / "test.conll").string();
    std::ofstream a(train), b(test);
    write_conll(a, corpus.train, LabelSet::canonical());
    write_conll(b, corpus.held_out, LabelSet::canonical());
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const std::vector<std::string> kSmall{"--embed-dim", "6", "--tmax", "16", "--epochs", "1"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"train", "--out", "/tmp/x.brar"}).code == cli::kUsage);
  CHECK(run({"train", "--bogus"}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
  Workspace w;
  const Result r = run({"train", "--train", w.train, "--out", w.path("m.brar"), "--epochs", "0"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("epochs") != std::string::npos);
  CHECK(run({"train", "--train", w.train, "--out", w.path("m.brar"), "--attention-mode", "dot"}).code == cli::kUsage);
}

TEST_CASE("train writes a model that eval and predict accept") {
  Workspace w;
  const Result t = run(with_small({"train", "--train", w.train, "--dev", w.test, "--out", w.path("m.brar")}));
  REQUIRE(t.code == cli::kOk);
  CHECK(t.out.find("epoch 1 loss ") != std::string::npos);
  CHECK(t.out.find("dev_f1") != std::string::npos);
  CHECK(t.out.find("wrote ") != std::string::npos);

  const Result e = run({"eval", "--model", w.path("m.brar"), "--test", w.test, "--report", w.path("r.txt"),
                        "--predictions", w.path("p.txt")});
  REQUIRE(e.code == cli::kOk);
  CHECK(e.out.rfind("F1\tF1(T)\tF1(P)\tF1(S)\tF1(D)\tF1(C)\tF1(O)\n", 0) == 0);
  std::ifstream rin(w.path("r.txt"));
  const EvalReport report = read_report(rin);
  CHECK(e.out.find(format_table_row(report)) != std::string::npos);
  std::ifstream pin(w.path("p.txt"));
  const PredictionSet ps = read_predictions(pin, LabelSet::canonical());
  CHECK(score(ps.gold, ps.pred, LabelSet::canonical()) == report);

  const Result p = run({"predict", "--model", w.path("m.brar"), "--input", w.test});
  REQUIRE(p.code == cli::kOk);
  CHECK(p.out == slurp(w.path("p.txt")));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  Workspace w;
  spit(w.path("c.cfg"), "# comment\nepochs = 1\nlr = 0.05\nembed-dim = 6\ntmax = 16\n");
  REQUIRE(run({"train", "--train", w.train, "--out", w.path("a.brar"), "--config", w.path("c.cfg"), "--epochs", "2"})
              .code == cli::kOk);
  const ModelBundle m = load_model(w.path("a.brar"));
  CHECK(m.config.epochs == 2);
  CHECK(m.config.lr == 0.05);
  CHECK(m.config.weight_decay == 1e-4);
  CHECK(m.config.hidden == 5);

  spit(w.path("bad.cfg"), "learning-rate = 1\n");
  CHECK(run({"train", "--train", w.train, "--out", w.path("b.brar"), "--config", w.path("bad.cfg")}).code ==
        cli::kUsage);
  CHECK(run({"train", "--train", w.train, "--out", w.path("b.brar"), "--config", w.path("missing.cfg")}).code ==
        cli::kDataError);
}

TEST_CASE("malformed data exits 2") {
  Workspace w;
  spit(w.path("bad.conll"), "a\tO\nb\tQ\n");
  const Result r = run(with_small({"train", "--train", w.path("bad.conll"), "--out", w.path("m.brar")}));
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("line 2") != std::string::npos);
  spit(w.path("junk.brar"), "not a model\n");
  CHECK(run({"eval", "--model", w.path("junk.brar"), "--test", w.test}).code == cli::kDataError);
}

TEST_CASE("eval on a mismatched corpus still reports finite metrics") {
  Workspace w;
  REQUIRE(run(with_small({"train", "--train", w.train, "--out", w.path("m.brar")})).code == cli::kOk);
  spit(w.path("other.conll"), "never\tT\nseen\tO\n\nxyz\tC\n");
  const Result e = run({"eval", "--model", w.path("m.brar"), "--test", w.path("other.conll"), "--report",
                        w.path("r.txt")});
  CHECK(e.code == cli::kOk);
  std::ifstream in(w.path("r.txt"));
  const EvalReport r = read_report(in);
  CHECK(std::isfinite(r.overall.f1()));
  CHECK(r.tokens == 3);
}

TEST_CASE("ablate with one layer count matches a standalone train") {
  Workspace w;
  const Result a = run(with_small({"ablate", "--train", w.train, "--test", w.test, "--layers-list", "1",
                                   "--out-dir", w.path("abl")}));
  REQUIRE(a.code == cli::kOk);
  CHECK(fs::exists(w.path("abl/layers_1.brar")));
  CHECK(fs::exists(w.path("abl/layers_1.report")));
  CHECK_FALSE(fs::exists(w.path("abl/layers_2.brar")));
  CHECK(slurp(w.path("abl/ablation.tsv")).rfind("layers\tF1", 0) == 0);
  REQUIRE(run(with_small({"train", "--train", w.train, "--out", w.path("m.brar")})).code == cli::kOk);
  CHECK(slurp(w.path("abl/layers_1.brar")) == slurp(w.path("m.brar")));
  CHECK(run(with_small({"ablate", "--train", w.train, "--test", w.test, "--layers-list", "1,x", "--out-dir",
                        w.path("abl2")}))
            .code == cli::kUsage);
}

TEST_CASE("every selfcheck group notices an injected fault") {
  const selfcheck::Options fault{true};
  CHECK_FALSE(selfcheck::gradients(fault, 2, 1).passed);
  CHECK_FALSE(selfcheck::crf_oracles(fault, 5).passed);
  CHECK_FALSE(selfcheck::label_forcing(fault).passed);
  CHECK_FALSE(selfcheck::scorer(fault).passed);
  CHECK(selfcheck::crf_oracles({}, 5).passed);
  CHECK(selfcheck::label_forcing({}).passed);
  CHECK(selfcheck::scorer({}).passed);
}

TEST_CASE("selfcheck exit status") {
  const Result r = run({"selfcheck", "--inject-fault"});
  CHECK(r.code == cli::kSelfcheckFailed);
  CHECK(r.out.find("FAIL crf") != std::string::npos);
}

TEST_CASE("selfcheck passes on a correct build") {
  const Result r = run({"selfcheck"});
  INFO(r.out);
  CHECK(r.code == cli::kOk);
}

}  // TEST_SUITE

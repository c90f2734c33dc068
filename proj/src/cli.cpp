#include "brar/cli.hpp"

#include "brar/error.hpp"
#include "brar/selfcheck.hpp"
#include "brar/textio.hpp"
#include "brar/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace brar::cli {

namespace {

namespace fs = std::filesystem;

// One entry per TrainConfig field; booleans become flags.
struct ConfigFlags {
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    for (const auto& [key, value] : config_entries(TrainConfig{})) {
      CLI::Option* opt = nullptr;
      if (value == "true" || value == "false") {
        flags[key] = false;
        opt = app.add_flag("--" + key, flags[key]);
      } else {
        text[key] = value;
        opt = app.add_option("--" + key, text[key])->default_str(value);
      }
      options[key] = opt;
    }
    options["attention-mode"]->check(CLI::IsMember({"literal", "positional"}));
    options["batch-size"]->description("Only 1 is supported");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const auto flag = flags.find(key);
      set_config_value(c, key, flag != flags.end() ? (flag->second ? "true" : "false") : text.at(key));
    }
    c.validate();
    return c;
  }
};

struct TrainArgs {
  std::string train;
  std::string dev;
  std::string embeddings;
  std::string out;
  ConfigFlags config;
};

void add_train_options(CLI::App& app, TrainArgs& a) {
  app.add_option("--config", "Flat key = value file; flags given on the command line win");
  app.add_option("--dev", a.dev, "Development corpus, scored after every epoch")->check(CLI::ExistingFile);
  app.add_option("--embeddings", a.embeddings, "Pretrained vectors in word2vec text format")
      ->check(CLI::ExistingFile);
  a.config.attach(app);
}

std::vector<Utterance> load(const std::string& path, const LabelSet& labels, std::int64_t t_max,
                            std::ostream& err) {
  LoadReport report;
  auto utts = load_corpus(path, labels, static_cast<std::size_t>(t_max), &report);
  for (const auto& w : report.warnings) err << path << ": " << w << '\n';
  if (report.rejected_rows) err << path << ": rejected " << report.rejected_rows << " rows\n";
  if (report.truncated) err << path << ": truncated " << report.truncated << " utterances\n";
  return utts;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

TrainResult run_training(const TrainArgs& a, const TrainConfig& config, std::ostream& out,
                         std::ostream& err, const std::string& prefix = "") {
  const auto train_set = load(a.train, LabelSet::canonical(), config.t_max, err);
  std::vector<Utterance> dev_set;
  if (!a.dev.empty()) dev_set = load(a.dev, LabelSet::canonical(), config.t_max, err);
  TrainOptions opts;
  if (!a.embeddings.empty()) opts.vectors = a.embeddings;
  opts.on_epoch = [&](const EpochLog& log) {
    out << prefix << "epoch " << log.epoch << " loss " << fixed(log.mean_loss, 6);
    if (log.dev_f1) out << " dev_f1 " << fixed(*log.dev_f1, 4);
    out << '\n';
  };
  return train(train_set, dev_set, config, opts);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text) || !f.flush()) throw DataError("cannot write " + path.string());
}

std::string header_row() {
  std::string s;
  for (const auto& c : table_columns()) s += (s.empty() ? "" : "\t") + c;
  return s;
}

std::string report_text(const EvalReport& r) {
  std::ostringstream s;
  write_report(s, r);
  return s.str();
}

std::vector<std::int64_t> parse_layers(const std::string& list) {
  std::vector<std::int64_t> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ',')) {
    const auto v = textio::parse_int(textio::trim(item));
    if (!v || *v < 1) throw CLI::ValidationError("--layers-list", "bad layer count '" + item + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw CLI::ValidationError("--layers-list", "empty list");
  return out;
}

// Finds --config in a subcommand's arguments and splices the file's entries
// in front of them, so later command-line flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty() || (args[0] != "train" && args[0] != "ablate")) return args;
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    const auto tokens = config_tokens(path);
    from_file.insert(from_file.end(), tokens.begin(), tokens.end());
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::optional<std::pair<std::string, std::string>> kv;
    try {
      kv = textio::parse_key_value(line);
    } catch (const std::invalid_argument& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (kv) tokens.push_back("--" + kv->first + "=" + kv->second);
  }
  return tokens;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"BRAR slot tagger: Bi-LSTM, attention residual, label forcing and a CRF", "brar"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  TrainArgs targs;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write it to --out");
  train_cmd->add_option("--train", targs.train, "Training corpus (CoNLL, or CONDA .csv)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", targs.out, "Model file to write")->required();
  add_train_options(*train_cmd, targs);

  std::string model_path, test_path, report_path, pred_path;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model on a labelled corpus");
  eval_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", test_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", report_path, "Write the key = value report here");
  eval_cmd->add_option("--predictions", pred_path, "Write token/gold/pred lines here");

  std::string input_path;
  auto* predict_cmd = app.add_subcommand("predict", "Tag a corpus and write token/gold/pred lines");
  predict_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pred_path, "Output file (default: standard output)");

  TrainArgs aargs;
  std::string layers_list = "1,2,3", out_dir;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score one model per layer count");
  ablate_cmd->add_option("--train", aargs.train)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--test", test_path)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--layers-list", layers_list, "Comma-separated layer counts")->capture_default_str();
  ablate_cmd->add_option("--out-dir", out_dir)->required();
  add_train_options(*ablate_cmd, aargs);

  bool inject_fault = false;
  auto* self_cmd = app.add_subcommand("selfcheck", "Run the embedded verification groups");
  self_cmd->add_flag("--inject-fault", inject_fault)->group("");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "brar: " << e.what() << "\nRun with --help for more information.\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "brar: " << e.what() << '\n';
    return kDataError;
  }

  try {
    if (*train_cmd) {
      TrainConfig config;
      try {
        config = targs.config.resolve();
      } catch (const std::invalid_argument& e) {
        err << "brar: " << e.what() << '\n';
        return kUsage;
      }
      const TrainResult r = run_training(targs, config, out, err);
      save_model(r.model, targs.out);
      out << "wrote " << targs.out << '\n';
      return kOk;
    }

    if (*eval_cmd) {
      const ModelBundle m = load_model(model_path);
      const auto test = load(test_path, m.labels, m.config.t_max, err);
      const LabelSequences pred = predict_all(m, test);
      LabelSequences gold;
      for (const auto& u : test) gold.push_back(u.labels);
      const EvalReport report = score(gold, pred, m.labels);
      if (!report_path.empty()) write_text(report_path, report_text(report));
      if (!pred_path.empty()) {
        std::ostringstream s;
        write_predictions(s, test, pred, m.labels);
        write_text(pred_path, s.str());
      }
      out << header_row() << '\n' << format_table_row(report) << '\n';
      return kOk;
    }

    if (*predict_cmd) {
      const ModelBundle m = load_model(model_path);
      const auto input = load(input_path, m.labels, m.config.t_max, err);
      std::ostringstream s;
      write_predictions(s, input, predict_all(m, input), m.labels);
      if (pred_path.empty()) out << s.str();
      else write_text(pred_path, s.str());
      return kOk;
    }

    if (*ablate_cmd) {
      TrainConfig base;
      std::vector<std::int64_t> layers;
      try {
        base = aargs.config.resolve();
        layers = parse_layers(layers_list);
      } catch (const std::exception& e) {
        err << "brar: " << e.what() << '\n';
        return kUsage;
      }
      fs::create_directories(out_dir);
      std::ostringstream table;
      table << "layers\t" << header_row() << '\n';
      for (const std::int64_t l : layers) {
        TrainConfig config = base;
        config.layers = l;
        const std::string tag = "layers_" + std::to_string(l);
        const TrainResult r = run_training(aargs, config, out, err, tag + " ");
        save_model(r.model, fs::path(out_dir) / (tag + ".brar"));
        const auto test = load(test_path, r.model.labels, config.t_max, err);
        const EvalReport report = evaluate(r.model, test);
        write_text(fs::path(out_dir) / (tag + ".report"), report_text(report));
        table << l << '\t' << format_table_row(report) << '\n';
      }
      write_text(fs::path(out_dir) / "ablation.tsv", table.str());
      out << table.str();
      return kOk;
    }

    if (*self_cmd) {
      selfcheck::Options opts;
      opts.inject_fault = inject_fault;
      bool all = true;
      for (const auto& g : selfcheck::run_all(opts)) {
        out << (g.passed ? "PASS " : "FAIL ") << g.name << " (" << fixed(g.seconds, 2) << " s): " << g.detail
            << '\n';
        all = all && g.passed;
      }
      return all ? kOk : kSelfcheckFailed;
    }
  } catch (const NumericError& e) {
    err << "brar: numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "brar: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace brar::cli

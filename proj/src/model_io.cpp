// Model file layout (text, one record per line):
//
//   brar-model <version>
//   config <key> <value>          one line per TrainConfig field
//   labels <l1> ... <l6>
//   vocab <V>
//   <token>                       V lines, index order, starting with <unk>
//   counts <V> <c>
//   <c integers>                  V lines
//   tensor <name> <rank> <dims>   then one line per row (one line for rank 0/1)
//   ...
//   end
//
// Floats are written with 17 significant digits so reading is exact.

#include "brar/error.hpp"
#include "brar/textio.hpp"
#include "brar/trainer.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace brar {

namespace {

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (const Index d : t.shape()) out << ' ' << d;
  out << '\n';
  for (Index r = 0; r < t.rows(); ++r) {
    for (Index c = 0; c < t.cols(); ++c) out << (c ? " " : "") << textio::format_double(t(r, c));
    out << '\n';
  }
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ModelBundle& m) {
  std::vector<std::pair<std::string, const Tensor*>> out{{"embeddings", &m.embeddings.table}};
  const auto names = m.brar.names();
  const auto tensors = m.brar.tensors();
  for (std::size_t k = 0; k < names.size(); ++k) out.emplace_back(names[k], tensors[k]);
  out.emplace_back("crf.trans", &m.crf.trans);
  out.emplace_back("crf.start", &m.crf.start);
  out.emplace_back("crf.end", &m.crf.end);
  return out;
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::vector<std::string_view> fields() {
    if (!std::getline(in_, line_)) throw DataError("model file truncated after line " + std::to_string(lineno_));
    ++lineno_;
    return textio::split(line_);
  }

  std::vector<std::string_view> expect(std::string_view keyword, std::size_t count) {
    auto f = fields();
    if (f.empty() || f[0] != keyword || (count && f.size() != count))
      fail("expected '" + std::string(keyword) + "' record");
    return f;
  }

  std::int64_t integer(std::string_view s) {
    const auto v = textio::parse_int(s);
    if (!v) fail("bad integer '" + std::string(s) + "'");
    return *v;
  }

  double real(std::string_view s) {
    const auto v = textio::parse_double(s);
    if (!v) fail("bad number '" + std::string(s) + "'");
    return *v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("model file line " + std::to_string(lineno_) + ": " + what);
  }

  const std::string& line() const { return line_; }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t lineno_ = 0;
};

void read_tensor(Reader& r, const std::string& name, Tensor& target) {
  const auto head = r.expect("tensor", 0);
  if (head.size() < 3 || head[1] != name) r.fail("expected tensor '" + name + "'");
  const auto rank = r.integer(head[2]);
  if (rank != target.rank() || head.size() != static_cast<std::size_t>(3 + rank))
    r.fail("tensor '" + name + "' has wrong rank");
  std::vector<Index> dims;
  for (std::size_t k = 3; k < head.size(); ++k) dims.push_back(r.integer(head[k]));
  if (dims != target.shape())
    r.fail("tensor '" + name + "' shape disagrees with config (expected " + target.shape_string() + ")");
  for (Index row = 0; row < target.rows(); ++row) {
    const auto f = r.fields();
    if (static_cast<Index>(f.size()) != target.cols()) r.fail("tensor '" + name + "' row has wrong width");
    for (Index c = 0; c < target.cols(); ++c) target(row, c) = r.real(f[static_cast<std::size_t>(c)]);
  }
}

}  // namespace

void write_model(std::ostream& out, const ModelBundle& m) {
  out << "brar-model " << ModelBundle::kFormatVersion << '\n';
  for (const auto& [k, v] : config_entries(m.config)) out << "config " << k << ' ' << v << '\n';
  out << "labels";
  for (const auto& l : m.labels.names()) out << ' ' << l;
  out << '\n';
  out << "vocab " << m.vocab.size() << '\n';
  for (const auto& t : m.vocab.tokens()) out << t << '\n';
  out << "counts " << m.stats.counts.rows() << ' ' << m.stats.counts.cols() << '\n';
  for (Index r = 0; r < m.stats.counts.rows(); ++r) {
    for (Index c = 0; c < m.stats.counts.cols(); ++c) out << (c ? " " : "") << m.stats.counts(r, c);
    out << '\n';
  }
  for (const auto& [name, t] : named_tensors(m)) write_tensor(out, name, *t);
  out << "end\n";
}

ModelBundle read_model(std::istream& in) {
  Reader r(in);
  const auto head = r.expect("brar-model", 2);
  const auto version = r.integer(head[1]);
  if (version != ModelBundle::kFormatVersion)
    throw DataError("model format version " + std::to_string(version) + " is not supported (this build reads version " +
                    std::to_string(ModelBundle::kFormatVersion) + ")");

  ModelBundle m;
  const std::size_t config_lines = config_entries(m.config).size();
  for (std::size_t k = 0; k < config_lines; ++k) {
    const auto f = r.expect("config", 3);
    try {
      set_config_value(m.config, std::string(f[1]), std::string(f[2]));
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
  }
  try {
    m.config.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  const auto labels = r.expect("labels", LabelSet::kSize + 1);
  m.labels = LabelSet(std::vector<std::string>(labels.begin() + 1, labels.end()));

  const auto vocab_size = r.integer(r.expect("vocab", 2)[1]);
  if (vocab_size < 1) r.fail("empty vocabulary");
  std::vector<std::string> tokens;
  for (std::int64_t i = 0; i < vocab_size; ++i) {
    const auto f = r.fields();
    if (f.size() != 1) r.fail("expected one token per line");
    tokens.emplace_back(f[0]);
  }
  m.vocab = Vocabulary::from_tokens(std::move(tokens));

  const auto counts = r.expect("counts", 3);
  if (r.integer(counts[1]) != vocab_size || r.integer(counts[2]) != static_cast<std::int64_t>(LabelSet::kSize))
    r.fail("count table shape disagrees with vocabulary");
  m.stats.counts = CountMatrix::Zero(vocab_size, static_cast<Index>(LabelSet::kSize));
  for (Index row = 0; row < vocab_size; ++row) {
    const auto f = r.fields();
    if (f.size() != LabelSet::kSize) r.fail("count row has wrong width");
    for (Index c = 0; c < m.stats.counts.cols(); ++c) {
      m.stats.counts(row, c) = r.integer(f[static_cast<std::size_t>(c)]);
      if (m.stats.counts(row, c) < 0) r.fail("negative count");
    }
  }

  // Shapes come from the config; values are overwritten below.
  Rng shape_only(0);
  m.embeddings.table = Tensor::zeros(vocab_size, m.config.embed_dim);
  m.embeddings.trainable = !m.config.freeze_embeddings;
  m.brar = init_brar(m.config.shape(), shape_only);
  m.crf = CrfParams::zeros(static_cast<Index>(LabelSet::kSize));
  read_tensor(r, "embeddings", m.embeddings.table);
  const auto names = m.brar.names();
  const auto tensors = m.brar.tensors();
  for (std::size_t k = 0; k < names.size(); ++k) read_tensor(r, names[k], *tensors[k]);
  read_tensor(r, "crf.trans", m.crf.trans);
  read_tensor(r, "crf.start", m.crf.start);
  read_tensor(r, "crf.end", m.crf.end);
  r.expect("end", 1);
  return m;
}

void save_model(const ModelBundle& m, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    write_model(out, m);
    if (!out.flush()) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_model(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace brar

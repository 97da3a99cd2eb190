#include "spen/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "spen/error.hpp"
#include "spen/param_store.hpp"

namespace spen {

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

std::size_t Vocabulary::add(std::string_view token) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  index_.emplace(key, tokens_.size());
  tokens_.push_back(std::move(key));
  return tokens_.size() - 1;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

// ---------------------------------------------------------------- LabelSet

std::size_t LabelSet::add(std::string_view label) {
  std::string key(label);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  index_.emplace(key, names_.size());
  names_.push_back(std::move(key));
  return names_.size() - 1;
}

std::size_t LabelSet::index(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) {
    throw Error(ErrorKind::kFormat, "unknown label '" + std::string(label) + "'");
  }
  return it->second;
}

bool LabelSet::contains(std::string_view label) const {
  return index_.contains(std::string(label));
}

namespace {

bool is_bioes_label(std::string_view s) {
  if (s == "O") return true;
  if (s.size() < 3 || s[1] != '-') return false;
  return s[0] == 'B' || s[0] == 'I' || s[0] == 'E' || s[0] == 'S';
}

}  // namespace

std::string LabelSet::first_non_bioes() const {
  for (const auto& n : names_) {
    if (!is_bioes_label(n)) return n;
  }
  return {};
}

LabelScheme LabelSet::scheme() const {
  return !names_.empty() && first_non_bioes().empty() ? LabelScheme::kBioes
                                                      : LabelScheme::kPlain;
}

// ---------------------------------------------------------------- Dataset

std::size_t Dataset::num_tokens() const {
  std::size_t n = 0;
  for (const auto& e : examples) n += e.length();
  return n;
}

void Dataset::validate() const {
  if (labels.size() < 2) {
    throw Error(ErrorKind::kFormat, "label set needs at least 2 labels");
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    auto where = " in example " + std::to_string(i);
    if (e.tokens.empty()) throw Error(ErrorKind::kFormat, "empty sequence" + where);
    if (e.tokens.size() != e.gold.size()) {
      throw Error(ErrorKind::kFormat, "token/label length mismatch" + where);
    }
    for (auto t : e.tokens) {
      if (t >= vocab.size()) throw Error(ErrorKind::kFormat, "token out of range" + where);
    }
    for (auto g : e.gold) {
      if (g >= labels.size()) throw Error(ErrorKind::kFormat, "label out of range" + where);
    }
  }
}

// ---------------------------------------------------------------- CoNLL

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<Sentence> read_conll(const std::filesystem::path& path,
                                 const ConllOptions& opts) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path.string());

  std::vector<Sentence> out;
  Sentence cur;
  std::size_t ncols = 0;
  std::size_t label_col = 0;
  std::size_t lineno = 0;
  std::string line;
  auto flush = [&] {
    if (!cur.words.empty()) out.push_back(std::move(cur));
    cur = Sentence{};
  };
  auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(f, line)) {
    ++lineno;
    auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols[0].starts_with("-DOCSTART-")) continue;
    if (ncols == 0) {
      ncols = cols.size();
      const auto back = static_cast<std::size_t>(-static_cast<long>(opts.label_column));
      if (opts.label_column < 0 && back <= ncols) {
        label_col = ncols - back;
      } else if (opts.label_column >= 0) {
        label_col = static_cast<std::size_t>(opts.label_column);
      } else {
        label_col = ncols;
      }
      if (ncols < 2 || opts.token_column >= ncols || label_col >= ncols) {
        throw Error(ErrorKind::kFormat, where() + "need token and label columns, found " +
                                            std::to_string(ncols));
      }
    } else if (cols.size() != ncols) {
      throw Error(ErrorKind::kFormat, where() + "ragged line with " +
                                          std::to_string(cols.size()) + " columns, expected " +
                                          std::to_string(ncols));
    }
    auto word = cols[opts.token_column];
    cur.words.push_back(opts.lowercase ? lower(word) : std::string(word));
    cur.labels.emplace_back(cols[label_col]);
  }
  flush();
  if (out.empty()) {
    throw Error(ErrorKind::kFormat, path.string() + ": no sentences");
  }
  return out;
}

void write_conll(const std::filesystem::path& path,
                 std::span<const Sentence> sentences) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      f << s.words[i] << '\t' << s.labels[i] << '\n';
    }
    f << '\n';
  }
  if (!f) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Dataset load_conll(const std::filesystem::path& path, const ConllOptions& opts) {
  auto sentences = read_conll(path, opts);
  Dataset d;
  for (const auto& s : sentences) {
    for (const auto& w : s.words) d.vocab.add(w);
    for (const auto& l : s.labels) d.labels.add(l);
  }
  Dataset enc = encode_sentences(sentences, d.vocab, d.labels);
  return enc;
}

Dataset encode_sentences(std::span<const Sentence> sentences,
                         const Vocabulary& vocab, const LabelSet& labels) {
  Dataset d;
  d.vocab = vocab;
  d.labels = labels;
  d.examples.reserve(sentences.size());
  for (const auto& s : sentences) {
    Example e;
    for (const auto& w : s.words) e.tokens.push_back(vocab.lookup(w));
    for (const auto& l : s.labels) e.gold.push_back(labels.index(l));
    d.examples.push_back(std::move(e));
  }
  return d;
}

std::vector<Sentence> decode_dataset(const Dataset& data) {
  std::vector<Sentence> out;
  out.reserve(data.size());
  for (const auto& e : data.examples) {
    Sentence s;
    for (auto t : e.tokens) s.words.push_back(data.vocab.token(t));
    for (auto g : e.gold) s.labels.push_back(data.labels.name(g));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- BIOES

BioesConversion to_bioes(std::span<const std::string> bio) {
  BioesConversion out;
  const std::size_t n = bio.size();
  // Normalize to (prefix, type) with the repair rule applied.
  std::vector<char> prefix(n, 'O');
  std::vector<std::string> type(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = bio[i];
    if (l == "O") continue;
    if (l.size() < 3 || l[1] != '-' || (l[0] != 'B' && l[0] != 'I')) {
      throw Error(ErrorKind::kFormat, "not a BIO label: '" + l + "'");
    }
    type[i] = l.substr(2);
    prefix[i] = l[0];
    if (prefix[i] == 'I' && (i == 0 || prefix[i - 1] == 'O' || type[i - 1] != type[i])) {
      prefix[i] = 'B';
      ++out.repairs;
    }
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (prefix[i] == 'O') {
      out.labels[i] = "O";
      continue;
    }
    const bool continues = i + 1 < n && prefix[i + 1] == 'I' && type[i + 1] == type[i];
    char p;
    if (prefix[i] == 'B') {
      p = continues ? 'B' : 'S';
    } else {
      p = continues ? 'I' : 'E';
    }
    out.labels[i] = std::string(1, p) + "-" + type[i];
  }
  return out;
}

// ---------------------------------------------------------------- embeddings

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  EmbeddingTable table;
  table.rows = vocab.size();
  table.dim = dim;
  table.values.assign(table.rows * dim, 0.0);
  std::vector<bool> found(table.rows, false);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto cols = split_ws(line);
    if (cols.empty()) continue;
    if (cols.size() != dim + 1) {
      throw Error(ErrorKind::kFormat,
                  path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(dim) + " values, found " +
                      std::to_string(cols.size() - 1));
    }
    if (!vocab.contains(cols[0])) continue;
    const std::size_t row = vocab.lookup(cols[0]);
    for (std::size_t j = 0; j < dim; ++j) {
      const auto s = cols[j + 1];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::kFormat, path.string() + ":" + std::to_string(lineno) +
                                            ": bad number '" + std::string(s) + "'");
      }
      table.values[row * dim + j] = v;
    }
    found[row] = true;
  }

  Rng rng(seed);
  std::size_t covered = 0;
  for (std::size_t r = 0; r < table.rows; ++r) {
    if (found[r]) {
      if (r > Vocabulary::kUnk) ++covered;
      continue;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      table.values[r * dim + j] = rng.uniform(-0.1, 0.1);
    }
  }
  const std::size_t real = table.rows - 2;
  table.coverage = real == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(real);
  return table;
}

// ---------------------------------------------------------------- synthetic

void SynthSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::kConfig, "synth: " + m); };
  if (num_labels < 2) bad("need at least 2 labels");
  if (vocab_size < 1) bad("empty vocabulary");
  if (min_len < 1 || max_len < min_len) bad("invalid length range");
  if (transitions.size() != num_labels * num_labels) bad("transition matrix shape");
  if (emissions.size() != num_labels * vocab_size) bad("emission matrix shape");
  auto check_rows = [&](const std::vector<double>& m, std::size_t cols, const char* what) {
    for (std::size_t i = 0; i < num_labels; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        double v = m[i * cols + j];
        if (v < 0.0 || !std::isfinite(v)) bad(std::string(what) + " has negative entry");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) bad(std::string(what) + " row not stochastic");
    }
  };
  check_rows(transitions, num_labels, "transitions");
  check_rows(emissions, vocab_size, "emissions");
}

SynthSpec standard_synth_spec(std::size_t num_labels, std::size_t vocab_size,
                              std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed) {
  SynthSpec spec;
  spec.num_labels = num_labels;
  spec.vocab_size = vocab_size;
  spec.min_len = min_len;
  spec.max_len = max_len;
  spec.seed = seed;
  const std::size_t L = num_labels;
  const std::size_t V = vocab_size;
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x5eed);

  spec.transitions.assign(L * L, 0.02);
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t a = rng.index(L);
    std::size_t b = rng.index(L - 1);
    if (b >= a) ++b;
    spec.transitions[i * L + a] += 0.6;
    spec.transitions[i * L + b] += 0.3;
  }

  std::vector<std::size_t> perm(V);
  for (std::size_t v = 0; v < V; ++v) perm[v] = v;
  rng.shuffle(perm);
  spec.emissions.assign(L * V, 0.005);
  for (std::size_t k = 0; k < V; ++k) {
    const std::size_t v = perm[k];
    const std::size_t primary = k % L;
    spec.emissions[primary * V + v] += 1.0;
    if (rng.bernoulli(0.35)) {
      std::size_t second = rng.index(L - 1);
      if (second >= primary) ++second;
      spec.emissions[second * V + v] += 0.6;
    }
  }

  auto normalize = [](std::vector<double>& m, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += m[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) m[i * cols + j] /= s;
    }
  };
  normalize(spec.transitions, L, L);
  normalize(spec.emissions, L, V);
  return spec;
}

Dataset gen_synthetic(const SynthSpec& spec, std::size_t n) {
  spec.validate();
  const std::size_t L = spec.num_labels;
  const std::size_t V = spec.vocab_size;
  Dataset d;
  for (std::size_t v = 0; v < V; ++v) d.vocab.add("w" + std::to_string(v));
  for (std::size_t j = 0; j < L; ++j) d.labels.add("T" + std::to_string(j));

  Rng rng(spec.seed);
  d.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = spec.min_len + rng.index(spec.max_len - spec.min_len + 1);
    Example e;
    std::size_t y = rng.index(L);
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) {
        y = rng.categorical(std::span(spec.transitions).subspan(y * L, L));
      }
      const std::size_t w = rng.categorical(std::span(spec.emissions).subspan(y * V, V));
      e.gold.push_back(y);
      e.tokens.push_back(w + 2);  // past the reserved vocabulary rows
    }
    d.examples.push_back(std::move(e));
  }
  return d;
}

// ---------------------------------------------------------------- misc

bool RelaxedLabelSeq::is_stochastic(double tol) const {
  if (probs.size() != length * num_labels) return false;
  for (std::size_t t = 0; t < length; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < num_labels; ++j) {
      const double v = at(t, j);
      if (v < 0.0 || !std::isfinite(v)) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

RelaxedLabelSeq one_hot(std::span<const std::size_t> gold, std::size_t num_labels) {
  if (gold.empty()) throw Error(ErrorKind::kShape, "one_hot: empty sequence");
  RelaxedLabelSeq y;
  y.length = gold.size();
  y.num_labels = num_labels;
  y.probs.assign(gold.size() * num_labels, 0.0);
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (gold[t] >= num_labels) {
      throw Error(ErrorKind::kShape, "one_hot: label " + std::to_string(gold[t]) +
                                         " out of range for L=" + std::to_string(num_labels));
    }
    y.probs[t * num_labels + gold[t]] = 1.0;
  }
  return y;
}

std::vector<Dataset> split_dataset(const Dataset& data, std::span<const std::size_t> sizes) {
  std::vector<Dataset> out;
  std::size_t off = 0;
  for (auto n : sizes) {
    if (off + n > data.size()) throw Error(ErrorKind::kConfig, "split exceeds dataset size");
    Dataset part;
    part.vocab = data.vocab;
    part.labels = data.labels;
    part.examples.assign(data.examples.begin() + static_cast<std::ptrdiff_t>(off),
                         data.examples.begin() + static_cast<std::ptrdiff_t>(off + n));
    off += n;
    out.push_back(std::move(part));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& data,
                                                   std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorKind::kConfig, "batch size must be positive");
  std::vector<std::tuple<std::size_t, std::uint64_t, std::size_t>> keyed;
  keyed.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    keyed.emplace_back(data.examples[i].length(), rng.next(), i);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < keyed.size(); i += batch_size) {
    std::vector<std::size_t> b;
    for (std::size_t j = i; j < std::min(keyed.size(), i + batch_size); ++j) {
      b.push_back(std::get<2>(keyed[j]));
    }
    batches.push_back(std::move(b));
  }
  rng.shuffle(batches);
  return batches;
}

std::size_t majority_label(const Dataset& data) {
  std::vector<std::size_t> counts(data.labels.size(), 0);
  for (const auto& e : data.examples) {
    for (auto g : e.gold) ++counts[g];
  }
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void save_dataset_cache(const Dataset& data, const std::filesystem::path& path) {
  std::vector<BinaryEntry> entries;
  for (std::size_t i = 0; i < data.vocab.size(); ++i) {
    entries.push_back({"vocab:" + data.vocab.token(i), Shape::scalar(), {static_cast<double>(i)}});
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    entries.push_back({"label:" + data.labels.name(i), Shape::scalar(), {static_cast<double>(i)}});
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& e = data.examples[i];
    std::vector<double> tok(e.tokens.begin(), e.tokens.end());
    std::vector<double> gold(e.gold.begin(), e.gold.end());
    entries.push_back({"tokens:" + std::to_string(i), Shape::vector(tok.size()), std::move(tok)});
    entries.push_back({"gold:" + std::to_string(i), Shape::vector(gold.size()), std::move(gold)});
  }
  write_binary_entries(path, kDatasetFileTag, entries);
}

Dataset load_dataset_cache(const std::filesystem::path& path) {
  auto entries = read_binary_entries(path, kDatasetFileTag);
  Dataset d;
  d.vocab = Vocabulary();
  std::vector<std::string> vocab_tokens;
  auto as_indices = [&](const BinaryEntry& e) {
    std::vector<std::size_t> out;
    for (double v : e.values) {
      if (v < 0 || v != std::floor(v)) {
        throw Error(ErrorKind::kFormat, path.string() + ": bad index in " + e.name);
      }
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  };
  for (const auto& e : entries) {
    std::string_view name = e.name;
    if (name.starts_with("vocab:")) {
      auto idx = static_cast<std::size_t>(e.values.at(0));
      if (idx >= 2 && d.vocab.add(name.substr(6)) != idx) {
        throw Error(ErrorKind::kFormat, path.string() + ": vocabulary out of order");
      }
    } else if (name.starts_with("label:")) {
      d.labels.add(name.substr(6));
    } else if (name.starts_with("tokens:")) {
      d.examples.emplace_back().tokens = as_indices(e);
    } else if (name.starts_with("gold:")) {
      if (d.examples.empty()) throw Error(ErrorKind::kFormat, path.string() + ": gold before tokens");
      d.examples.back().gold = as_indices(e);
    } else {
      throw Error(ErrorKind::kFormat, path.string() + ": unknown entry " + e.name);
    }
  }
  d.validate();
  return d;
}

}  // namespace spen

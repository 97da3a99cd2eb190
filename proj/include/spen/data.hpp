#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spen/random.hpp"

namespace spen {

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary();

  std::size_t add(std::string_view token);
  // kUnk for out-of-vocabulary tokens.
  std::size_t lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class LabelScheme { kPlain, kBioes };

// L real labels at indices [0, L); start-of-sequence at L and end-of-sequence
// at L + 1 (used only by tag language models).
class LabelSet {
 public:
  std::size_t add(std::string_view label);
  std::size_t index(std::string_view label) const;  // throws when unknown
  bool contains(std::string_view label) const;
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::size_t size() const { return names_.size(); }
  std::size_t start_index() const { return names_.size(); }
  std::size_t end_index() const { return names_.size() + 1; }
  const std::vector<std::string>& names() const { return names_; }

  // BIOES iff every label is "O" or {B,I,E,S}-type.
  LabelScheme scheme() const;
  // First label that is not valid BIOES, or empty when all are.
  std::string first_non_bioes() const;

  bool operator==(const LabelSet& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Example {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> gold;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const Example&) const = default;
};

struct Dataset {
  Vocabulary vocab;
  LabelSet labels;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  std::size_t num_tokens() const;
  // Throws unless every example is nonempty, aligned and in range.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

// Text-level sentence as read from a column file.
struct Sentence {
  std::vector<std::string> words;
  std::vector<std::string> labels;
};

struct ConllOptions {
  std::size_t token_column = 0;
  int label_column = -1;  // negative counts from the last column
  bool lowercase = false;
};

std::vector<Sentence> read_conll(const std::filesystem::path& path,
                                 const ConllOptions& opts = {});
// Two columns, "token<TAB>label", blank line between sentences.
void write_conll(const std::filesystem::path& path,
                 std::span<const Sentence> sentences);

// Builds vocabulary and label set from the file itself.
Dataset load_conll(const std::filesystem::path& path,
                   const ConllOptions& opts = {});

// Encodes against existing vocab/labels; unknown tokens map to kUnk, unknown
// labels are an error.
Dataset encode_sentences(std::span<const Sentence> sentences,
                         const Vocabulary& vocab, const LabelSet& labels);
std::vector<Sentence> decode_dataset(const Dataset& data);

struct BioesConversion {
  std::vector<std::string> labels;
  std::size_t repairs = 0;  // I- tags that did not continue a span
};

// BIO -> BIOES. An I-x that does not continue an x span is read as B-x.
BioesConversion to_bioes(std::span<const std::string> bio);

struct EmbeddingTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // rows x dim, row-major
  double coverage = 0.0;       // fraction of vocab rows found in the file
};

// "token v1 ... vd" per line. Rows absent from the file are drawn uniformly
// from [-0.1, 0.1] using `seed`.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed);

// Hidden-Markov generative process for desk-scale corpora.
struct SynthSpec {
  std::size_t num_labels = 8;
  std::size_t vocab_size = 50;
  std::vector<double> transitions;  // L x L, row-stochastic
  std::vector<double> emissions;    // L x V, row-stochastic
  std::size_t min_len = 5;
  std::size_t max_len = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

// The corpus family used throughout the experiments: each label prefers two
// successors and owns a band of tokens, with a share of tokens ambiguous
// between two labels so that context matters.
SynthSpec standard_synth_spec(std::size_t num_labels, std::size_t vocab_size,
                              std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed);

// Token strings are "w<i>", labels "T<j>".
Dataset gen_synthetic(const SynthSpec& spec, std::size_t n);

struct RelaxedLabelSeq {
  std::size_t length = 0;
  std::size_t num_labels = 0;
  std::vector<double> probs;  // length x num_labels

  double at(std::size_t t, std::size_t j) const {
    return probs[t * num_labels + j];
  }
  bool is_stochastic(double tol = 1e-9) const;
};

RelaxedLabelSeq one_hot(std::span<const std::size_t> gold,
                        std::size_t num_labels);

// Splits into consecutive parts of the given sizes (sum must not exceed size).
std::vector<Dataset> split_dataset(const Dataset& data,
                                   std::span<const std::size_t> sizes);

// Length-grouped minibatches of example indices, batch order shuffled.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& data,
                                                   std::size_t batch_size,
                                                   Rng& rng);

// Index of the most frequent gold label (lowest index on ties).
std::size_t majority_label(const Dataset& data);

// Dataset cache in the binary parameter container (distinct header tag).
void save_dataset_cache(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_cache(const std::filesystem::path& path);

}  // namespace spen

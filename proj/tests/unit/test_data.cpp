#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spen/data.hpp"
#include "spen/error.hpp"

using namespace spen;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("CoNLL reader: columns, blank lines, DOCSTART") {
  auto path = write_temp("spen_read.conll",
                         "-DOCSTART- -X- O O\n\n"
                         "EU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\n\n"
                         "Peter NNP B-NP B-PER\n");
  auto s = read_conll(path);
  REQUIRE(s.size() == 2);
  CHECK(s[0].words == std::vector<std::string>{"EU", "rejects"});
  CHECK(s[0].labels == std::vector<std::string>{"B-ORG", "O"});
  CHECK(s[1].labels == std::vector<std::string>{"B-PER"});

  ConllOptions pos;
  pos.label_column = 1;
  pos.lowercase = true;
  auto p = read_conll(path, pos);
  CHECK(p[0].words[0] == "eu");
  CHECK(p[0].labels[1] == "VBZ");
  std::filesystem::remove(path);
}

TEST_CASE("CoNLL reader: ragged lines are rejected with the line number") {
  auto path = write_temp("spen_ragged.conll", "a X\nb Y\nc\n");
  try {
    read_conll(path);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_conll("/nonexistent/file.conll"), Error);
}

TEST_CASE("write then read is the identity") {
  std::vector<Sentence> in{{{"a", "b"}, {"X", "Y"}}, {{"c"}, {"Z"}}};
  auto path = std::filesystem::temp_directory_path() / "spen_rw.conll";
  write_conll(path, in);
  auto out = read_conll(path);
  REQUIRE(out.size() == 2);
  CHECK(out[0].words == in[0].words);
  CHECK(out[1].labels == in[1].labels);
  std::filesystem::remove(path);
}

TEST_CASE("encoding maps unknown tokens to UNK and rejects unknown labels") {
  Vocabulary v;
  v.add("a");
  LabelSet l;
  l.add("X");
  l.add("Y");
  std::vector<Sentence> s{{{"a", "zzz"}, {"X", "Y"}}};
  auto d = encode_sentences(s, v, l);
  CHECK(d.examples[0].tokens == std::vector<std::size_t>{2, Vocabulary::kUnk});
  CHECK(l.start_index() == 2);
  CHECK(l.end_index() == 3);
  std::vector<Sentence> bad{{{"a"}, {"Q"}}};
  CHECK_THROWS_AS(encode_sentences(bad, v, l), Error);
}

TEST_CASE("BIO to BIOES") {
  std::vector<std::string> bio{"B-PER", "I-PER", "O", "B-LOC", "I-ORG", "I-ORG", "I-ORG", "B-MISC"};
  auto r = to_bioes(bio);
  CHECK(r.labels == std::vector<std::string>{"B-PER", "E-PER", "O", "S-LOC", "B-ORG", "I-ORG",
                                             "E-ORG", "S-MISC"});
  CHECK(r.repairs == 1);
  CHECK(to_bioes(std::vector<std::string>{"I-X"}).labels[0] == "S-X");
  CHECK_THROWS_AS(to_bioes(std::vector<std::string>{"Z-X"}), Error);
}

TEST_CASE("label scheme detection") {
  LabelSet l;
  for (auto n : {"O", "B-PER", "E-PER", "S-LOC"}) l.add(n);
  CHECK(l.scheme() == LabelScheme::kBioes);
  l.add("NN");
  CHECK(l.scheme() == LabelScheme::kPlain);
  CHECK(l.first_non_bioes() == "NN");
}

TEST_CASE("embeddings: file rows are copied, missing rows drawn in range") {
  Vocabulary v;
  v.add("cat");
  v.add("dog");
  auto path = write_temp("spen_emb.txt", "cat 0.5 -0.25\nbird 1 1\n");
  auto t = load_embeddings(path, v, 2, 3);
  CHECK(t.rows == v.size());
  CHECK(t.values[2 * 2] == 0.5);
  CHECK(t.values[2 * 2 + 1] == -0.25);
  for (double x : std::span(t.values).subspan(3 * 2, 2)) CHECK(std::abs(x) <= 0.1);
  CHECK(t.coverage == doctest::Approx(0.5));
  auto bad = write_temp("spen_emb_bad.txt", "cat 0.5\n");
  CHECK_THROWS_AS(load_embeddings(bad, v, 2, 3), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}

TEST_CASE("synthetic corpus: empirical statistics match the generating process") {
  auto spec = standard_synth_spec(4, 12, 5, 20, 9);
  spec.validate();
  auto d = gen_synthetic(spec, 4000);
  d.validate();
  const std::size_t L = 4, V = 12;

  std::vector<double> trans(L * L, 0), rows(L, 0), emit(L * V, 0), seen(L, 0);
  std::size_t min_len = 100, max_len = 0;
  for (const auto& e : d.examples) {
    min_len = std::min(min_len, e.length());
    max_len = std::max(max_len, e.length());
    for (std::size_t t = 0; t < e.length(); ++t) {
      emit[e.gold[t] * V + e.tokens[t] - 2] += 1;
      seen[e.gold[t]] += 1;
      if (t > 0) {
        trans[e.gold[t - 1] * L + e.gold[t]] += 1;
        rows[e.gold[t - 1]] += 1;
      }
    }
  }
  CHECK(min_len == 5);
  CHECK(max_len == 20);
  // Several standard errors of a binomial proportion with >= 1000 draws.
  for (std::size_t i = 0; i < L; ++i) {
    REQUIRE(rows[i] > 1000);
    for (std::size_t j = 0; j < L; ++j) {
      const double p = spec.transitions[i * L + j];
      const double se = std::sqrt(p * (1 - p) / rows[i]);
      CHECK(std::abs(trans[i * L + j] / rows[i] - p) <= 5 * se + 1e-3);
    }
    for (std::size_t v = 0; v < V; ++v) {
      const double p = spec.emissions[i * V + v];
      const double se = std::sqrt(p * (1 - p) / seen[i]);
      CHECK(std::abs(emit[i * V + v] / seen[i] - p) <= 5 * se + 1e-3);
    }
  }
}

TEST_CASE("synthetic corpus is a pure function of the seed") {
  auto a = gen_synthetic(standard_synth_spec(8, 50, 5, 20, 1), 50);
  auto b = gen_synthetic(standard_synth_spec(8, 50, 5, 20, 1), 50);
  auto c = gen_synthetic(standard_synth_spec(8, 50, 5, 20, 2), 50);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("batches partition the data and group by length") {
  auto d = gen_synthetic(standard_synth_spec(8, 50, 5, 20, 0), 203);
  Rng rng(4);
  auto batches = make_batches(d, 32, rng);
  std::vector<int> hits(d.size(), 0);
  for (const auto& b : batches) {
    CHECK(b.size() <= 32);
    for (auto i : b) ++hits[i];
  }
  for (int h : hits) CHECK(h == 1);
  CHECK(batches.size() == 7);
}

TEST_CASE("dataset cache round-trips") {
  auto d = gen_synthetic(standard_synth_spec(5, 20, 2, 6, 3), 30);
  auto path = std::filesystem::temp_directory_path() / "spen_cache.bin";
  save_dataset_cache(d, path);
  CHECK(load_dataset_cache(path) == d);
  std::filesystem::remove(path);
}

TEST_CASE("one-hot, splits, majority label") {
  std::vector<std::size_t> gold{2, 0, 2};
  auto y = one_hot(gold, 3);
  CHECK(y.is_stochastic());
  CHECK(y.at(0, 2) == 1.0);
  CHECK(y.at(1, 2) == 0.0);
  CHECK_THROWS_AS(one_hot(std::vector<std::size_t>{3}, 3), Error);

  auto d = gen_synthetic(standard_synth_spec(4, 10, 3, 5, 0), 10);
  std::vector<std::size_t> sizes{6, 4};
  auto parts = split_dataset(d, sizes);
  CHECK(parts[0].size() == 6);
  CHECK(parts[1].examples[0] == d.examples[6]);
  std::vector<std::size_t> too_many{11};
  CHECK_THROWS_AS(split_dataset(d, too_many), Error);

  Dataset m;
  m.labels.add("A");
  m.labels.add("B");
  m.examples.push_back({{2, 2, 2}, {1, 0, 1}});
  CHECK(majority_label(m) == 1);
}

#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/synthgen.hpp"

using namespace cadsketch;
namespace fs = std::filesystem;

namespace {

std::string slurp_tree(const fs::path& root) {
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
  }
  std::string all;
  for (const auto& f : files) {
    all += f.string() + "\n";
    all += read_file(root / f);
  }
  return all;
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("random source is deterministic and streams differ") {
  RandomSource a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RandomSource c(42);
  const RandomSource s1 = c.split(1), s2 = c.split(2);
  CHECK(RandomSource(s1).next_u64() != RandomSource(s2).next_u64());
  CHECK(c.next_u64() == RandomSource(42).next_u64());
  RandomSource u(7);
  for (int i = 0; i < 1000; ++i) {
    const int k = u.uniform_int(-3, 3);
    CHECK(k >= -3);
    CHECK(k <= 3);
  }
}

TEST_CASE("samples are deterministic and self-consistent") {
  GeneratorConfig cfg;
  RandomSource r1(11), r2(11);
  for (int i = 0; i < 300; ++i) {
    const auto a = sample_sketch(cfg, r1);
    const auto b = sample_sketch(cfg, r2);
    CHECK(a.grid == b.grid);
    CHECK(a.sketch == b.sketch);
    CHECK(tokenize(a.sketch) == a.grid);
    const auto d = detokenize(a.grid);
    CHECK(d.dropped == 0);
    CHECK(d.sketch == a.sketch);
    CHECK(a.sketch.size() >= 6);
    CHECK(a.sketch.size() <= 16);
  }
}

TEST_CASE("primitive counts are uniform over 6..16") {
  GeneratorConfig cfg;
  RandomSource rng(2024);
  std::array<int, 17> hist{};
  constexpr int n = 10000;
  for (int i = 0; i < n; ++i) ++hist[sample_sketch(cfg, rng).sketch.size()];
  for (int k = 6; k <= 16; ++k) {
    const double freq = static_cast<double>(hist[k]) / n;
    CHECK(std::abs(freq - 1.0 / 11.0) < 0.02);
  }
}

TEST_CASE("generated circles and arcs stay inside the image") {
  GeneratorConfig cfg;
  cfg.type_weights = {0.0, 0.5, 0.5, 0.0};
  RandomSource rng(6);
  for (int i = 0; i < 200; ++i) {
    for (const auto& p : sample_sketch(cfg, rng).sketch.primitives) {
      if (p.kind == PrimitiveKind::Circle) {
        CHECK(p.center().x - p.radius() >= 0.0);
        CHECK(p.center().x + p.radius() <= 1.0);
        CHECK(p.center().y - p.radius() >= 0.0);
        CHECK(p.center().y + p.radius() <= 1.0);
      }
    }
  }
}

TEST_CASE("config validation") {
  auto invalid = [](GeneratorConfig cfg) {
    try {
      cfg.validate();
    } catch (const Error& e) {
      return e.code() == ErrorCode::InvalidConfig;
    }
    return false;
  };
  GeneratorConfig c;
  c.min_primitives = 0;
  CHECK(invalid(c));
  c = {};
  c.max_primitives = 17;
  CHECK(invalid(c));
  c = {};
  c.type_weights = {0.5, 0.5, 0.5, 0.0};
  CHECK(invalid(c));
  c = {};
  c.construction_probability = 1.5;
  CHECK(invalid(c));
  c = generator_from_json(to_json(GeneratorConfig{}));
  CHECK_FALSE(invalid(c));
}

TEST_CASE("splits are disjoint") {
  GeneratorConfig cfg;
  cfg.seed = 3;
  std::set<std::vector<int>> seen;
  std::size_t total = 0;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& g : generate_split(cfg, s, 3334)) {
      seen.insert(g.grid.framed_stream());
      ++total;
    }
  }
  CHECK(seen.size() == total);
}

TEST_CASE("build_corpus layout, counts and determinism") {
  const fs::path root = fs::temp_directory_path() / "cadsketch_test_corpus";
  fs::remove_all(root);
  GeneratorConfig cfg;
  cfg.seed = 17;
  CorpusOptions opts;
  opts.image_size = 64;
  const auto m = build_corpus(cfg, 5, 3, 0, root / "a", opts);
  build_corpus(cfg, 5, 3, 0, root / "b", opts);
  CHECK(slurp_tree(root / "a") == slurp_tree(root / "b"));

  CHECK(m["counts"]["train"] == 5);
  CHECK(m["counts"]["val"] == 3);
  CHECK(m["counts"]["test"] == 0);
  CHECK(line_count(root / "a" / "train.jsonl") == 5);
  CHECK(line_count(root / "a" / "val.jsonl") == 3);
  CHECK(fs::exists(root / "a" / "test.jsonl"));
  CHECK(line_count(root / "a" / "test.jsonl") == 0);
  CHECK(fs::exists(root / "a" / "manifest.json"));
  CHECK(fs::exists(root / "a" / "images" / "train" / "4.pgm"));
  CHECK(fs::exists(root / "a" / "images_hd" / "val" / "2.pgm"));

  const auto train = read_dataset(root / "a" / "train.jsonl");
  const auto expected = generate_split(cfg, Split::Train, 5);
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i] == expected[i].sketch);
    CHECK(read_pgm(root / "a" / "images" / "train" / (std::to_string(i) + ".pgm")) == rasterize(train[i], 64, 64));
  }

  const auto empty = build_corpus(cfg, 0, 0, 0, root / "c", opts);
  CHECK(empty["counts"]["train"] == 0);
  CHECK(read_file(root / "c" / "train.jsonl").empty());
  fs::remove_all(root);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/synthgen.hpp"
#include "cadsketch/tokens.hpp"

using namespace cadsketch;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::IoError;
}

// Reference bin rule: smallest k with v <= k/64, clamped to [0, 63].
int reference_bin(double v) {
  for (int k = 0; k < 64; ++k) {
    if (v <= k / 64.0) return k;
  }
  return 63;
}

}  // namespace

TEST_CASE("quantize matches the bin rule") {
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 63);
  CHECK(quantize(0.5) == 32);
  CHECK(quantize(-0.3) == 0);
  CHECK(quantize(7.0) == 63);
  CHECK(quantize(1.0 / 64.0) == 1);
  CHECK(quantize(1.0 / 64.0 + 1e-9) == 2);
  RandomSource rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(-0.1, 1.1);
    CHECK(quantize(v) == reference_bin(v));
  }
}

TEST_CASE("quantize is monotone and dequantize inverts it") {
  double prev = -0.2;
  for (int i = 0; i <= 2000; ++i) {
    const double v = -0.2 + i * 0.0007;
    CHECK(quantize(v) >= quantize(prev));
    prev = v;
  }
  for (int k = 0; k < 64; ++k) CHECK(quantize(dequantize(k)) == k);
  CHECK(dequantize(0) == 0.0);
  CHECK(dequantize(63) == 0.984375);
  CHECK(code_of([] { dequantize(64); }) == ErrorCode::OutOfRange);
  CHECK(code_of([] { dequantize(-1); }) == ErrorCode::OutOfRange);
  for (int i = 0; i < 1000; ++i) {
    const double v = i / 1000.0;
    CHECK(std::abs(v - dequantize(quantize(v))) < 1.0 / 64.0);
  }
  // 1.0 clamps into the top bin, a full bin width away.
  CHECK(1.0 - dequantize(quantize(1.0)) == 1.0 / 64.0);
}

TEST_CASE("tokenize examples") {
  Sketch s;
  s.primitives.push_back(Primitive::line({0, 0}, {1, 1}));
  s.primitives.push_back(Primitive::point({0.5, 0.5}, true));
  const TokenGrid g = tokenize(s);
  CHECK(g.slots[0] == TokenSlot{5, 7, 7, 70, 70, 72, 0, 0});
  CHECK(g.slots[1] == TokenSlot{6, 39, 39, 71, 0, 0, 0, 0});
  for (int i = 2; i < kMaxPrimitives; ++i) CHECK(g.slots[i] == TokenSlot{});

  const Primitive arc = Primitive::arc({0.1, 0.2}, {0.3, 0.4}, {0.5, 0.2});
  const TokenSlot a = tokenize_primitive(arc);
  CHECK(a == TokenSlot{3, 7 + quantize(0.1), 7 + quantize(0.2), 7 + quantize(0.3), 7 + quantize(0.4),
                       7 + quantize(0.5), 7 + quantize(0.2), 72});
  const TokenSlot c = tokenize_primitive(Primitive::circle({0.5, 0.5}, 0.25));
  CHECK(c == TokenSlot{4, 39, 39, 23, 72, 0, 0, 0});
}

TEST_CASE("empty sketch framing") {
  const TokenGrid g = tokenize(Sketch{});
  const auto stream = g.framed_stream();
  REQUIRE(stream.size() == 18u * 8u);
  CHECK(stream[0] == token::kStart);
  CHECK(stream[17 * 8] == token::kEnd);
  for (std::size_t i = 8; i < 17 * 8; ++i) CHECK(stream[i] == 0);
  CHECK(TokenGrid::from_framed_stream(stream) == g);
  auto bad = stream;
  bad[0] = token::kEnd;
  CHECK(code_of([&] { TokenGrid::from_framed_stream(bad); }) == ErrorCode::OutOfRange);
}

TEST_CASE("too many primitives") {
  Sketch s;
  for (int i = 0; i < 17; ++i) s.primitives.push_back(Primitive::point({0.1, 0.1}));
  CHECK(code_of([&] { tokenize(s); }) == ErrorCode::TooManyPrimitives);
}

TEST_CASE("detokenize drops invalid slots") {
  TokenGrid g;
  g.slots[0] = {5, 7, 7, 7, 7, 72, 0, 0};      // degenerate line
  g.slots[1] = {4, 7, 7, 100, 72, 0, 0, 0};    // token out of vocabulary
  g.slots[2] = {5, 10, 10, 20, 20, 72, 0, 0};  // valid
  g.slots[3] = {9, 10, 10, 20, 20, 72, 0, 0};  // bad type
  g.slots[4] = {5, 10, 10, 20, 20, 5, 0, 0};   // missing construction token
  g.slots[5] = {6, 10, 10, 71, 3, 0, 0, 0};    // non-zero trailing position
  g.slots[6] = {4, 40, 40, 7, 72, 0, 0, 0};    // radius bin 0 decodes to the minimum radius
  g.slots[7] = {3, 10, 10, 10, 10, 20, 20, 72};  // coincident arc points
  const auto r = detokenize(g);
  CHECK(r.sketch.size() == 2);
  CHECK(r.dropped == 6);
  CHECK(r.status[0] == SlotStatus::Degenerate);
  CHECK(r.status[1] == SlotStatus::BadParameter);
  CHECK(r.status[2] == SlotStatus::Valid);
  CHECK(r.status[3] == SlotStatus::BadType);
  CHECK(r.status[4] == SlotStatus::BadConstruction);
  CHECK(r.status[5] == SlotStatus::BadPadding);
  CHECK(r.status[6] == SlotStatus::Valid);
  CHECK(r.sketch.primitives[1].radius() == dequantize(1));
  CHECK(r.status[7] == SlotStatus::Degenerate);
  CHECK(r.status[8] == SlotStatus::Empty);
  CHECK(r.sketch.primitives[0] == Primitive::line({dequantize(3), dequantize(3)}, {dequantize(13), dequantize(13)}));
}

TEST_CASE("round trip over a generated corpus") {
  GeneratorConfig cfg;
  cfg.seed = 5;
  RandomSource rng(5);
  for (int i = 0; i < 500; ++i) {
    Sketch s = sample_sketch(cfg, rng).sketch;
    // Perturb inside each bin so the comparison is not trivially exact.
    for (auto& p : s.primitives) {
      for (double& v : p.values()) v = std::max(0.0, v - rng.uniform(0.0, 0.99 / 64.0));
    }
    const auto back = detokenize(tokenize(s));
    REQUIRE(back.dropped == 0);
    REQUIRE(back.sketch.size() == s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto& a = s.primitives[j];
      const auto& b = back.sketch.primitives[j];
      CHECK(a.kind == b.kind);
      CHECK(a.construction == b.construction);
      for (std::size_t k = 0; k < a.values().size(); ++k) CHECK(std::abs(a.values()[k] - b.values()[k]) < 1.0 / 64.0);
    }
  }
}

TEST_CASE("detokenize is idempotent on arbitrary grids") {
  RandomSource rng(9);
  for (int n = 0; n < 300; ++n) {
    TokenGrid g;
    for (auto& slot : g.slots) {
      slot[0] = rng.uniform_int(0, 6);
      for (int t = 1; t < 8; ++t) slot[t] = rng.bernoulli(0.3) ? 0 : rng.uniform_int(0, 72);
    }
    const auto once = detokenize(g);
    const auto twice = detokenize(tokenize(once.sketch));
    CHECK(twice.dropped == 0);
    CHECK(twice.sketch == once.sketch);
  }
}

TEST_CASE("normalize_sketch") {
  Sketch square;
  square.primitives = {Primitive::line({0, 0}, {10, 0}), Primitive::line({10, 0}, {10, 10}),
                       Primitive::line({10, 10}, {0, 10}), Primitive::line({0, 10}, {0, 0})};
  const Sketch n = normalize_sketch(square, 0.05);
  CHECK(n.primitives[0].params[0] == doctest::Approx(0.05));
  CHECK(n.primitives[0].params[1] == doctest::Approx(0.05));
  CHECK(n.primitives[1].params[2] == doctest::Approx(0.95));
  CHECK(n.primitives[1].params[3] == doctest::Approx(0.95));
  const Sketch again = normalize_sketch(n, 0.05);
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (int k = 0; k < 4; ++k) CHECK(again.primitives[i].params[k] == doctest::Approx(n.primitives[i].params[k]));
  }

  Sketch line;
  line.primitives = {Primitive::line({0, 0}, {4, 0})};
  const Sketch l = normalize_sketch(line, 0.0);
  CHECK(l.primitives[0].params[0] == doctest::Approx(0.0));
  CHECK(l.primitives[0].params[1] == doctest::Approx(0.5));
  CHECK(l.primitives[0].params[2] == doctest::Approx(1.0));
  CHECK(l.primitives[0].params[3] == doctest::Approx(0.5));

  Sketch circle;
  circle.primitives = {Primitive::circle({5, 5}, 2)};
  const Sketch c = normalize_sketch(circle, 0.0);
  CHECK(c.primitives[0].params[0] == doctest::Approx(0.5));
  CHECK(c.primitives[0].params[2] == doctest::Approx(0.5));

  Sketch dot;
  dot.primitives = {Primitive::point({1, 1})};
  CHECK(code_of([&] { normalize_sketch(dot, 0.1); }) == ErrorCode::ZeroExtent);
}

TEST_CASE("dataset JSONL round trip and errors") {
  GeneratorConfig cfg;
  cfg.seed = 2;
  std::vector<Sketch> data;
  for (const auto& g : generate_split(cfg, Split::Train, 20)) data.push_back(g.sketch);
  CHECK(parse_dataset_text(serialize_dataset(data)) == data);
  CHECK(parse_dataset_text("").empty());

  const auto dir = std::filesystem::temp_directory_path() / "cadsketch_test_dataset";
  std::filesystem::create_directories(dir);
  write_dataset(data, dir / "d.jsonl");
  CHECK(read_dataset(dir / "d.jsonl") == data);

  const std::string good = sketch_to_json_line(data[0]);
  const std::string spline = R"({"primitives":[{"kind":"spline","params":[0,0],"construction":false}]})";
  try {
    parse_dataset_text(good + "\n" + spline + "\n");
    FAIL("expected UnknownKind");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownKind);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(code_of([] { parse_dataset_text("{not json\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { sketch_from_json_line(R"({"primitives":[{"kind":"line","params":[0,0]}]})"); }) ==
        ErrorCode::MalformedLine);
  std::filesystem::remove_all(dir);
}

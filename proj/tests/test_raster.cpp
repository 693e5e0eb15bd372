#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/metrics.hpp"
#include "cadsketch/raster.hpp"
#include "cadsketch/synthgen.hpp"

using namespace cadsketch;

namespace {

Sketch one(const Primitive& p) {
  Sketch s;
  s.primitives.push_back(p);
  return s;
}

SketchImage flip_h(const SketchImage& img) {
  SketchImage out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, img.width - 1 - c);
  }
  return out;
}

SketchImage flip_v(const SketchImage& img) {
  SketchImage out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(img.height - 1 - r, c);
  }
  return out;
}

}  // namespace

TEST_CASE("horizontal line covers one row") {
  const SketchImage img = rasterize(one(Primitive::line({0.25, 0.5}, {0.75, 0.5})));
  int count = 0;
  int min_col = 1000, max_col = -1;
  for (int r = 0; r < 128; ++r) {
    for (int c = 0; c < 128; ++c) {
      if (img.at(r, c) == 1.0f) {
        CHECK(r == 64);
        min_col = std::min(min_col, c);
        max_col = std::max(max_col, c);
        ++count;
      } else {
        CHECK(img.at(r, c) == 0.0f);
      }
    }
  }
  CHECK(min_col == 32);
  CHECK(max_col == 95);
  CHECK(count == 64);
}

TEST_CASE("empty sketch renders black") {
  const SketchImage img = rasterize(Sketch{});
  CHECK(img.foreground_count() == 0);
  CHECK(img.width == 128);
}

TEST_CASE("centered circle is mirror symmetric") {
  const SketchImage img = rasterize(one(Primitive::circle({0.5, 0.5}, 0.25)), 129, 129);
  CHECK(img == flip_h(img));
  CHECK(img == flip_v(img));
  CHECK(img.foreground_count() > 100);
}

TEST_CASE("point is a 3x3 block and every primitive draws something") {
  const SketchImage img = rasterize(one(Primitive::point({0.5, 0.5})));
  CHECK(img.foreground_count() == 9);
  GeneratorConfig cfg;
  RandomSource rng(4);
  for (int i = 0; i < 200; ++i) {
    for (const auto& p : sample_sketch(cfg, rng).sketch.primitives) CHECK(rasterize(one(p)).foreground_count() >= 1);
  }
}

TEST_CASE("arc strokes are connected and pass through the mid point") {
  const Vec2 a{0.2, 0.5}, m{0.5, 0.2}, b{0.8, 0.5};
  const SketchImage img = rasterize(one(Primitive::arc(a, m, b)));
  CHECK(img.at(static_cast<int>(std::lround(0.2 * 127)), static_cast<int>(std::lround(0.5 * 127))) == 1.0f);
  // The lower half of the circle must stay empty.
  for (int r = 70; r < 128; ++r) {
    for (int c = 0; c < 128; ++c) CHECK(img.at(r, c) == 0.0f);
  }
  // Every foreground pixel has an 8-neighbour, except possibly isolated ends.
  int isolated = 0;
  for (int r = 1; r < 127; ++r) {
    for (int c = 1; c < 127; ++c) {
      if (img.at(r, c) != 1.0f) continue;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) n += (dr || dc) && img.at(r + dr, c + dc) == 1.0f;
      }
      isolated += n == 0;
    }
  }
  CHECK(isolated == 0);
}

TEST_CASE("circumcircle") {
  const auto c = circumcircle({1, 0}, {0, 1}, {-1, 0});
  REQUIRE(c.has_value());
  CHECK(c->center.x == doctest::Approx(0.0));
  CHECK(c->center.y == doctest::Approx(0.0));
  CHECK(c->radius == doctest::Approx(1.0));
  // Sweeping from angle 0 must reach pi/2 (the mid point) before pi.
  CHECK(std::abs(c->sweep) == doctest::Approx(M_PI));
  const double mid_angle = c->start_angle + c->sweep / 2;
  CHECK(std::cos(mid_angle) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::sin(mid_angle) == doctest::Approx(1.0));

  CHECK_FALSE(circumcircle({0, 0}, {0.5, 1e-12}, {1, 0}).has_value());

  RandomSource rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{rng.uniform(), rng.uniform()}, q{rng.uniform(), rng.uniform()}, r{rng.uniform(), rng.uniform()};
    const auto cc = circumcircle(p, q, r);
    if (!cc) continue;
    for (const Vec2 v : {p, q, r}) {
      CHECK(std::abs(std::hypot(v.x - cc->center.x, v.y - cc->center.y) - cc->radius) < 1e-9 * std::max(1.0, cc->radius));
    }
  }
}

TEST_CASE("pyramid") {
  SketchImage constant(128, 128, 0.375f);
  const auto pc = build_pyramid(constant);
  REQUIRE(pc.levels.size() == 5);
  const int dims[] = {128, 64, 32, 16, 8};
  for (int s = 0; s < 5; ++s) {
    CHECK(pc.levels[s].width == dims[s]);
    CHECK(pc.levels[s].height == dims[s]);
    for (float v : pc.levels[s].pixels) CHECK(v == 0.375f);
  }

  SketchImage single(128, 128);
  single.at(37, 90) = 1.0f;
  const auto ps = build_pyramid(single);
  int nonzero = 0;
  for (float v : ps.levels[4].pixels) {
    if (v != 0.0f) {
      ++nonzero;
      CHECK(v == doctest::Approx(1.0 / 256.0));
    }
  }
  CHECK(nonzero == 1);
  CHECK(ps.levels[4].at(37 / 16, 90 / 16) > 0.0f);

  GeneratorConfig cfg;
  RandomSource rng(1);
  const SketchImage img = rasterize(sample_sketch(cfg, rng).sketch);
  const auto p = build_pyramid(img);
  CHECK(p.levels[0] == img);
  for (const auto& level : p.levels) CHECK(std::abs(level.mean() - img.mean()) < 1e-5);

  try {
    build_pyramid(SketchImage(120, 128));
    FAIL("expected IndivisibleDims");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndivisibleDims);
  }
}

TEST_CASE("hand-drawn synthesis") {
  GeneratorConfig cfg;
  RandomSource rng(8);
  HanddrawConfig zero;
  zero.translation_sigma = 0;
  zero.rotation_sigma_deg = 0;
  zero.gp_amplitude = 0;
  double cd_sum = 0;
  for (int i = 0; i < 100; ++i) {
    const Sketch s = sample_sketch(cfg, rng).sketch;
    const SketchImage precise = rasterize(s);
    CHECK(synthesize_handdrawn(s, zero) == precise);
    HanddrawConfig hd;
    hd.seed = 100 + i;
    const SketchImage a = synthesize_handdrawn(s, hd);
    CHECK(a == synthesize_handdrawn(s, hd));
    const double cd = eval::metric_chamfer(a, precise).value;
    CHECK(cd > 0.0);
    // CD is in squared pixels; the bound is on the root-mean-square pixel offset.
    CHECK(std::sqrt(cd) < 5.0);
    cd_sum += cd;
  }
  MESSAGE("mean hand-drawn chamfer " << cd_sum / 100);
}

TEST_CASE("PGM round trip and failures") {
  SketchImage img(32, 16);
  RandomSource rng(2);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  const SketchImage back = decode_pgm(encode_pgm(img));
  REQUIRE(back.width == 32);
  REQUIRE(back.height == 16);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0f / 255.0f);

  const std::string zeros = encode_pgm(SketchImage(16, 16));
  CHECK(zeros.substr(zeros.size() - 256) == std::string(256, '\0'));
  CHECK(zeros.substr(0, 2) == "P5");

  const auto dir = std::filesystem::temp_directory_path() / "cadsketch_test_pgm";
  std::filesystem::create_directories(dir);
  write_pgm(img, dir / "a.pgm");
  CHECK(read_pgm(dir / "a.pgm") == back);
  std::filesystem::remove_all(dir);

  auto code = [](const std::string& bytes) {
    try {
      decode_pgm(bytes);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::OutOfRange;
  };
  const std::string full = encode_pgm(img);
  CHECK(code(full.substr(0, full.size() - 10)) == ErrorCode::IoError);
  CHECK(code("P5\n32") == ErrorCode::MalformedHeader);
  CHECK(code("P2\n1 1\n255\n0") == ErrorCode::MalformedHeader);
  CHECK(code("") == ErrorCode::MalformedHeader);
}

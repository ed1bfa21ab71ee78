#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dwellmap/error.hpp"
#include "dwellmap/raster.hpp"
#include "temp_dir.hpp"

using namespace dwellmap;

TEST_CASE("PNG encoding round-trips and is deterministic") {
  RgbaImage img(37, 11);
  for (std::int64_t y = 0; y < img.height(); ++y) {
    for (std::int64_t x = 0; x < img.width(); ++x) {
      std::uint8_t* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(x * 7);
      p[1] = static_cast<std::uint8_t>(y * 23);
      p[2] = static_cast<std::uint8_t>(x ^ y);
      p[3] = static_cast<std::uint8_t>((x + y) % 2 ? 127 : 0);
    }
  }
  const std::string png = encode_png(img);
  CHECK(png.substr(1, 3) == "PNG");
  CHECK(encode_png(img) == png);
  CHECK(decode_png(png) == img);
}

TEST_CASE("fill and default pixels") {
  RgbaImage img(2, 2);
  CHECK(img.pixel(1, 1)[3] == 0);
  img.fill(1, 2, 3, 4);
  CHECK(img.pixel(1, 0)[2] == 3);
  CHECK(img.data().size() == 16);
}

TEST_CASE("decoding garbage fails") {
  CHECK_THROWS_AS(decode_png("not a png"), Error);
  CHECK_THROWS_AS(decode_png(""), Error);
}

TEST_CASE("write_png writes the encoded bytes") {
  dwellmap::testing::TempDir dir;
  RgbaImage img(3, 4);
  img.fill(255, 0, 0, 127);
  write_png(dir.path() / "out.png", img);
  std::ifstream in(dir.path() / "out.png", std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == encode_png(img));
}

TEST_CASE("base64 matches the standard alphabet") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode(std::string("\xff\xfe", 2)) == "//4=");
}

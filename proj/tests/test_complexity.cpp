#include <doctest.h>

#include <sstream>
#include <string>

#include "commands.hpp"
#include "complexity.hpp"

using namespace swinchex;

namespace {

std::uint64_t msa_by_hand(std::uint64_t h, std::uint64_t w, std::uint64_t c) {
  return 4 * h * w * c * c + 2 * (h * w) * (h * w) * c;
}

std::uint64_t wmsa_by_hand(std::uint64_t h, std::uint64_t w, std::uint64_t c, std::uint64_t m) {
  return 4 * h * w * c * c + 2 * m * m * h * w * c;
}

}  // namespace

TEST_SUITE("complexity-calc") {

TEST_CASE("global attention cost examples") {
  CHECK(omega_msa({7, 7, 1, 0}) == 4998u);
  CHECK(omega_msa({1, 1, 1, 0}) == 6u);
  const std::uint64_t a = omega_msa({4, 4, 3, 0}) - 4 * 16 * 9;
  const std::uint64_t b = omega_msa({8, 4, 3, 0}) - 4 * 32 * 9;
  CHECK(b == 4 * a);
}

TEST_CASE("window attention cost examples") {
  CHECK(omega_wmsa({56, 56, 192, 7}) == 521428992u);
  CHECK(4ull * 56 * 56 * 192 * 192 == 462422016u);
  CHECK(omega_wmsa({56, 56, 192, 7}) - 462422016u == 59006976u);
  CHECK(omega_wmsa({7, 7, 96, 7}) == omega_msa({7, 7, 96, 0}));
  const std::uint64_t base = omega_wmsa({8, 8, 16, 4});
  CHECK(omega_wmsa({16, 8, 16, 4}) == 2 * base);
  CHECK(omega_wmsa({16, 16, 16, 4}) == 4 * base);
}

TEST_CASE("windowed cost never exceeds global cost") {
  for (std::uint64_t h : {4u, 8u, 12u, 16u})
    for (std::uint64_t m : {1u, 2u, 4u}) {
      if (h % m) continue;
      const ComplexityQuery q{h, h, 8, m};
      CHECK(omega_wmsa(q) <= omega_msa(q));
      CHECK((omega_wmsa(q) == omega_msa(q)) == (m * m == h * h));
      CHECK(omega_msa(q) == msa_by_hand(h, h, 8));
      CHECK(omega_wmsa(q) == wmsa_by_hand(h, h, 8, m));
    }
}

TEST_CASE("instrumented counts equal the formulas") {
  for (std::uint64_t h : {4u, 8u, 12u})
    for (std::uint64_t c : {4u, 8u, 16u}) {
      const ComplexityQuery q{h, h, c, 4};
      CHECK(measure_attention_macs(q, AttentionMode::windowed) == omega_wmsa(q));
      CHECK(measure_attention_macs(q, AttentionMode::global) == omega_msa(q));
    }
  const ComplexityQuery single{4, 4, 8, 4};
  CHECK(measure_attention_macs(single, AttentionMode::windowed) ==
        measure_attention_macs(single, AttentionMode::global));
  CHECK(measure_attention_macs({8, 8, 8, 4}, AttentionMode::windowed, 2) == omega_wmsa({8, 8, 8, 4}));
}

TEST_CASE("complexity table layout") {
  const std::string csv = complexity_csv({8, 6}, {4}, {4}, true);
  std::istringstream in(csv);
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "h,w,C,M,omega_msa,omega_wmsa,measured_global,measured_windowed");
  CHECK(row == "8,8,4,4," + std::to_string(omega_msa({8, 8, 4, 0})) + "," +
                   std::to_string(omega_wmsa({8, 8, 4, 4})) + "," + std::to_string(omega_msa({8, 8, 4, 0})) +
                   "," + std::to_string(omega_wmsa({8, 8, 4, 4})));
  CHECK_FALSE(std::getline(in, extra));  // 6 is not divisible by 4
  CHECK(complexity_csv({7}, {96}, {7}, false).find(",NA,NA") != std::string::npos);
}

}  // TEST_SUITE

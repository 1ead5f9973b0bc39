/*
 * Copyright (c) 2026, The stflow Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "stflow/attention_graph.hpp"
#include "stflow/tensor_io.hpp"

using namespace stflow;
using fixture::layer;

namespace {

AttentionStack cross_only() {
  AttentionStack s;
  s.layout = {1, 1, 2};
  s.text_tokens = fixture::text(2);
  s.layers.push_back(layer("c", LayerKind::cross, {{{0.6f, 0.4f}, {0.1f, 0.9f}}}));
  return s;
}

std::uint64_t manifest_length(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 8, 8);
  return len;
}

nlohmann::json manifest_of(const std::vector<std::uint8_t>& bytes) {
  const auto len = manifest_length(bytes);
  return nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
}

std::vector<std::uint8_t> with_manifest(const std::vector<std::uint8_t>& bytes, const nlohmann::json& m) {
  // re-encode with a same-length manifest so offsets stay valid
  std::string text = m.dump();
  const auto len = manifest_length(bytes);
  REQUIRE(text.size() <= len);
  text.append(len - text.size(), ' ');
  auto out = bytes;
  std::memcpy(out.data() + 16, text.data(), text.size());
  return out;
}

FormatErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_stack(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return FormatErrorKind::io;
}

}  // namespace

TEST_CASE("container layout for a single cross layer") {
  const auto bytes = encode_stack(cross_only());
  REQUIRE(bytes.size() > 16);
  CHECK(std::memcmp(bytes.data(), "ATNS", 4) == 0);
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);
  const auto len = manifest_length(bytes);
  const std::size_t payload_at = (16 + len + 63) / 64 * 64;
  CHECK(bytes.size() == payload_at + 16);
  for (std::size_t i = 16 + len; i < payload_at; ++i) CHECK(bytes[i] == 0);
  float w[4];
  std::memcpy(w, bytes.data() + payload_at, 16);
  CHECK(w[0] == 0.6f);
  CHECK(w[3] == 0.9f);

  const auto m = manifest_of(bytes);
  CHECK(m["text_tokens"].size() == 2);
  CHECK(m["layout"]["width"] == 2);
  CHECK(m["layers"][0]["kind"] == "cross");
  CHECK(m["layers"][0]["dtype"] == "f32");
  CHECK(m["layers"][0]["offset"] == payload_at);
}

TEST_CASE("round trip is exact and idempotent") {
  const auto s = cross_only();
  const auto bytes = encode_stack(s);
  const auto back = decode_stack(bytes);
  CHECK(back == s);
  CHECK(back.layers[0].weights == std::vector<float>{0.6f, 0.4f, 0.1f, 0.9f});
  CHECK(encode_stack(back) == bytes);

  std::stringstream io;
  CHECK(write_stack(s, io) == bytes.size());
  CHECK(read_stack(io) == s);
}

TEST_CASE("random stacks survive write and read bit-exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = fixture::random_valid_stack(seed, {2, 2, 3}, 3,
                                               {LayerKind::cross, LayerKind::self_temporal, LayerKind::self_spatial},
                                               1 + static_cast<int>(seed % 3));
    const auto back = decode_stack(encode_stack(s));
    REQUIRE(back.layers.size() == s.layers.size());
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const auto& a = s.layers[l].weights;
      const auto& b = back.layers[l].weights;
      REQUIRE(a.size() == b.size());
      CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("writer refuses invalid stacks") {
  AttentionStack empty;
  empty.text_tokens = fixture::text(1);
  try {
    encode_stack(empty);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatErrorKind::invalid_stack);
    CHECK(std::string(e.what()) == "at least one layer required");
  }
}

TEST_CASE("malformed containers fail with their error class") {
  const auto good = encode_stack(cross_only());

  auto bad = good;
  bad[0] = 'X';
  CHECK(decode_error(bad) == FormatErrorKind::bad_magic);
  try {
    decode_stack(bad);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()) == "bad magic");
  }

  bad = good;
  bad.resize(bad.size() - 4);
  CHECK(decode_error(bad) == FormatErrorKind::truncated);
  try {
    decode_stack(bad);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()) == "payload truncated");
  }

  bad = good;
  bad[4] = 2;
  CHECK(decode_error(bad) == FormatErrorKind::unsupported_version);

  bad = good;
  bad.push_back(0);
  CHECK(decode_error(bad) == FormatErrorKind::size_mismatch);

  bad = std::vector<std::uint8_t>(good.begin(), good.begin() + 10);
  CHECK(decode_error(bad) == FormatErrorKind::truncated);

  bad = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
  CHECK(decode_error(bad) == FormatErrorKind::bad_value);

  bad = good;
  const float big = 1.5f;
  std::memcpy(bad.data() + bad.size() - 4, &big, 4);
  CHECK(decode_error(bad) == FormatErrorKind::bad_value);

  bad = good;
  bad[16] = '#';
  CHECK(decode_error(bad) == FormatErrorKind::bad_manifest);

  auto m = manifest_of(good);
  m["layers"][0]["dtype"] = "f16";
  CHECK(decode_error(with_manifest(good, m)) == FormatErrorKind::bad_manifest);

  m = manifest_of(good);
  m["layers"][0]["kind"] = "mlp";
  CHECK(decode_error(with_manifest(good, m)) == FormatErrorKind::bad_manifest);

  m = manifest_of(good);
  m["layers"][0]["offset"] = m["layers"][0]["offset"].get<int>() + 4;
  CHECK(decode_error(with_manifest(good, m)) == FormatErrorKind::size_mismatch);

  m = manifest_of(good);
  m["layers"][0]["query_tokens"] = 3;
  CHECK_THROWS_AS(decode_stack(with_manifest(good, m)), FormatError);

  CHECK_THROWS_AS(read_stack_file("/nonexistent/dir/x.atns"), FormatError);
}

TEST_CASE("validation rules") {
  auto s = cross_only();
  CHECK(validate_stack(s).ok);

  s.layers[0].weights = {0.6f, 0.6f, 0.1f, 0.9f};
  auto r = validate_stack(s);
  CHECK_FALSE(r.ok);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].rule == "row.sum");
  CHECK(r.violations[0].layer == 0);
  CHECK(r.violations[0].message.rfind("row sum 1.2 exceeds tolerance", 0) == 0);

  s = cross_only();
  s.text_tokens = fixture::text(3);
  r = validate_stack(s);
  CHECK_FALSE(r.ok);
  bool found = false;
  for (const auto& v : r.violations) found = found || v.message == "cross key count mismatch";
  CHECK(found);

  s = cross_only();
  s.layers[0].kind = LayerKind::self_spatial;
  r = validate_stack(s);
  CHECK_FALSE(r.ok);
  CHECK(r.violations[0].message == "no text injection point");

  s = cross_only();
  s.layers[0].weights.pop_back();
  r = validate_stack(s);
  CHECK_FALSE(r.ok);
  CHECK(r.violations[0].rule == "shape.size");

  s = cross_only();
  s.layers[0].weights[0] = std::numeric_limits<float>::quiet_NaN();
  r = validate_stack(s);
  CHECK_FALSE(r.ok);
  CHECK(r.violations[0].rule == "weight.range");

  s = cross_only();
  s.layers[0].weights = {0.6004f, 0.4f, 0.1f, 0.9f};
  CHECK(validate_stack(s).ok);

  AttentionStack nothing;
  r = validate_stack(nothing);
  CHECK_FALSE(r.ok);
  CHECK(r.ok == r.violations.empty());
}

TEST_CASE("valid stacks always build a capacity graph") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int f = 1 + static_cast<int>(seed % 3);
    const auto s = fixture::random_valid_stack(
        seed, {f, 2, 2}, 2 + static_cast<int>(seed % 3),
        {LayerKind::self_temporal, LayerKind::cross, LayerKind::self_spatial, LayerKind::cross}, 2);
    REQUIRE(validate_stack(s).ok);
    CHECK_NOTHROW(build_capacity_graph(s));
  }
}

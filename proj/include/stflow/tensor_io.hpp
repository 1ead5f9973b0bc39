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

#pragma once

// Attention stacks and the ATNS v1 container.
//
// Layout of an ATNS v1 file:
//   [0, 4)    magic "ATNS"
//   [4, 8)    version, u32 little-endian (= 1)
//   [8, 16)   manifest length in bytes, u64 little-endian
//   [16, ..)  UTF-8 JSON manifest
//   payloads  raw f32 little-endian [heads, query_tokens, key_tokens], each at
//             the absolute, 64-byte aligned "offset" recorded in the manifest,
//             zero padding in between.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stflow {

enum class LayerKind { self_spatial, self_temporal, cross };

std::string_view to_string(LayerKind kind);
/// Throws std::invalid_argument for unknown names.
LayerKind parse_layer_kind(std::string_view name);

inline bool is_self(LayerKind k) { return k != LayerKind::cross; }

/// Video token index = frame * (height * width) + y * width + x.
struct TokenLayout {
  int frames = 1;
  int height = 1;
  int width = 1;

  int spatial_tokens() const { return height * width; }
  int video_tokens() const { return frames * height * width; }
  bool operator==(const TokenLayout&) const = default;
};

/// Per-head post-softmax attention weights of one layer, [heads, Q, K].
struct AttentionLayer {
  std::string name;
  LayerKind kind = LayerKind::self_spatial;
  int heads = 1;
  int query_tokens = 0;
  int key_tokens = 0;
  std::vector<float> weights;

  float at(int h, int q, int k) const {
    return weights[(static_cast<std::size_t>(h) * query_tokens + q) * key_tokens + k];
  }
  float& at(int h, int q, int k) {
    return weights[(static_cast<std::size_t>(h) * query_tokens + q) * key_tokens + k];
  }
  std::size_t expected_size() const {
    return static_cast<std::size_t>(heads) * query_tokens * key_tokens;
  }
  bool operator==(const AttentionLayer&) const = default;
};

struct AttentionStack {
  std::vector<AttentionLayer> layers;
  std::vector<std::string> text_tokens;
  TokenLayout layout;

  int text_count() const { return static_cast<int>(text_tokens.size()); }
  int video_count() const { return layout.video_tokens(); }
  bool operator==(const AttentionStack&) const = default;
};

inline constexpr double kRowSumTolerance = 1e-3;

struct Violation {
  int layer = -1;  // -1 for stack-level rules
  std::string rule;
  std::string message;
};

struct StackValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
};

/// Checks every stack invariant. Never throws.
StackValidationReport validate_stack(const AttentionStack& stack);

enum class FormatErrorKind {
  bad_magic,
  unsupported_version,
  truncated,
  size_mismatch,
  bad_value,
  bad_manifest,
  invalid_stack,
  io,
};

std::string_view to_string(FormatErrorKind kind);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline constexpr std::uint32_t kAtnsVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

/// Serialises a valid stack; refuses invalid ones. Returns bytes written.
std::size_t write_stack(const AttentionStack& stack, std::ostream& out);
std::vector<std::uint8_t> encode_stack(const AttentionStack& stack);
void write_stack_file(const AttentionStack& stack, const std::filesystem::path& path);

AttentionStack read_stack(std::istream& in);
AttentionStack decode_stack(std::span<const std::uint8_t> bytes);
AttentionStack read_stack_file(const std::filesystem::path& path);

}  // namespace stflow

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

#include "stflow/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace stflow {

using nlohmann::json;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::self_spatial: return "self_spatial";
    case LayerKind::self_temporal: return "self_temporal";
    case LayerKind::cross: return "cross";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "self_spatial") return LayerKind::self_spatial;
  if (name == "self_temporal") return LayerKind::self_temporal;
  if (name == "cross") return LayerKind::cross;
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::bad_magic: return "bad_magic";
    case FormatErrorKind::unsupported_version: return "unsupported_version";
    case FormatErrorKind::truncated: return "truncated";
    case FormatErrorKind::size_mismatch: return "size_mismatch";
    case FormatErrorKind::bad_value: return "bad_value";
    case FormatErrorKind::bad_manifest: return "bad_manifest";
    case FormatErrorKind::invalid_stack: return "invalid_stack";
    case FormatErrorKind::io: return "io";
  }
  return "unknown";
}

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void validate_layer(const AttentionStack& stack, int index, std::vector<Violation>& out) {
  const AttentionLayer& layer = stack.layers[static_cast<std::size_t>(index)];
  auto add = [&](std::string rule, std::string message) {
    out.push_back({index, std::move(rule), std::move(message)});
  };
  if (layer.heads < 1 || layer.query_tokens < 1 || layer.key_tokens < 1) {
    add("shape.positive", "heads, query_tokens and key_tokens must be positive");
    return;
  }
  if (layer.weights.size() != layer.expected_size()) {
    add("shape.size", "weights hold " + std::to_string(layer.weights.size()) + " values, shape needs " +
                          std::to_string(layer.expected_size()));
    return;
  }
  if (layer.query_tokens != stack.video_count())
    add("video.count", "query count " + std::to_string(layer.query_tokens) + " differs from video token count " +
                           std::to_string(stack.video_count()));
  if (layer.kind == LayerKind::cross) {
    if (layer.key_tokens != stack.text_count()) add("cross.keys", "cross key count mismatch");
  } else if (layer.key_tokens != layer.query_tokens) {
    add("self.keys", "self key count mismatch");
  }

  bool range_reported = false;
  bool sum_reported = false;
  const auto keys = static_cast<std::size_t>(layer.key_tokens);
  for (int h = 0; h < layer.heads; ++h) {
    for (int q = 0; q < layer.query_tokens; ++q) {
      const float* row = &layer.weights[(static_cast<std::size_t>(h) * static_cast<std::size_t>(layer.query_tokens) +
                                         static_cast<std::size_t>(q)) * keys];
      double part[4] = {0.0, 0.0, 0.0, 0.0};
      bool in_range = true;
      std::size_t k = 0;
      for (; k + 4 <= keys; k += 4) {
        for (std::size_t u = 0; u < 4; ++u) {
          in_range &= row[k + u] >= 0.0f && row[k + u] <= 1.0f;
          part[u] += row[k + u];
        }
      }
      for (; k < keys; ++k) {
        in_range &= row[k] >= 0.0f && row[k] <= 1.0f;
        part[0] += row[k];
      }
      const double sum = (part[0] + part[1]) + (part[2] + part[3]);
      bool row_finite = true;
      if (!in_range) {
        for (k = 0; k < keys; ++k) {
          const float w = row[k];
          if (w >= 0.0f && w <= 1.0f) continue;
          row_finite = row_finite && std::isfinite(w);
          if (!range_reported) {
            add("weight.range", "weight " + format_number(w) + " at head " + std::to_string(h) + " row " +
                                    std::to_string(q) + " is NaN or outside [0,1]");
            range_reported = true;
          }
        }
      }
      if (row_finite && std::abs(sum - 1.0) > kRowSumTolerance && !sum_reported) {
        add("row.sum", "row sum " + format_number(sum) + (sum > 1.0 ? " exceeds" : " falls below") +
                           " tolerance (head " + std::to_string(h) + " row " + std::to_string(q) + ")");
        sum_reported = true;
      }
    }
  }
}

}  // namespace

StackValidationReport validate_stack(const AttentionStack& stack) {
  StackValidationReport report;
  auto& v = report.violations;
  if (stack.layers.empty()) v.push_back({-1, "layers.empty", "at least one layer required"});
  if (stack.layout.frames < 1 || stack.layout.height < 1 || stack.layout.width < 1)
    v.push_back({-1, "layout.positive", "layout dimensions must be positive"});
  if (stack.text_tokens.empty()) v.push_back({-1, "text.empty", "at least one text token required"});
  bool has_cross = false;
  for (const auto& layer : stack.layers) has_cross = has_cross || layer.kind == LayerKind::cross;
  if (!stack.layers.empty() && !has_cross) v.push_back({-1, "cross.missing", "no text injection point"});
  for (int i = 0; i < static_cast<int>(stack.layers.size()); ++i) validate_layer(stack, i, v);
  report.ok = v.empty();
  return report;
}

namespace {

static_assert(std::endian::native == std::endian::little, "ATNS I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'T', 'N', 'S'};
constexpr std::size_t kHeaderBytes = 16;

std::size_t align_up(std::size_t v) { return (v + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment; }

std::string build_manifest(const AttentionStack& stack, const std::vector<std::uint64_t>& offsets) {
  json layers = json::array();
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const auto& l = stack.layers[i];
    layers.push_back({{"name", l.name},
                      {"kind", std::string(to_string(l.kind))},
                      {"heads", l.heads},
                      {"query_tokens", l.query_tokens},
                      {"key_tokens", l.key_tokens},
                      {"offset", offsets[i]},
                      {"dtype", "f32"}});
  }
  json manifest = {{"text_tokens", stack.text_tokens},
                   {"layout",
                    {{"frames", stack.layout.frames}, {"height", stack.layout.height}, {"width", stack.layout.width}}},
                   {"layers", layers}};
  return manifest.dump();
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  T value;
  std::memcpy(&value, bytes.data() + at, sizeof(T));
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_stack(const AttentionStack& stack) {
  const auto report = validate_stack(stack);
  if (!report.ok) throw FormatError(FormatErrorKind::invalid_stack, report.violations.front().message);

  // Offsets depend on the manifest length, which depends on the offsets'
  // digits; iterate to the fixed point (lengths only grow, so this settles).
  std::vector<std::uint64_t> offsets(stack.layers.size(), 0);
  std::string manifest;
  for (;;) {
    manifest = build_manifest(stack, offsets);
    std::size_t cursor = kHeaderBytes + manifest.size();
    std::vector<std::uint64_t> next;
    for (const auto& l : stack.layers) {
      cursor = align_up(cursor);
      next.push_back(cursor);
      cursor += l.weights.size() * sizeof(float);
    }
    if (next == offsets) break;
    offsets = std::move(next);
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kAtnsVersion);
  put_le<std::uint64_t>(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    out.resize(offsets[i], 0);
    const auto& w = stack.layers[i].weights;
    const auto* raw = reinterpret_cast<const std::uint8_t*>(w.data());
    out.insert(out.end(), raw, raw + w.size() * sizeof(float));
  }
  return out;
}

std::size_t write_stack(const AttentionStack& stack, std::ostream& out) {
  const auto bytes = encode_stack(stack);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::io, "write failed");
  return bytes.size();
}

void write_stack_file(const AttentionStack& stack, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot open " + path.string() + " for writing");
  write_stack(stack, out);
}

AttentionStack decode_stack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0)
      throw FormatError(FormatErrorKind::bad_magic, "bad magic");
    throw FormatError(FormatErrorKind::truncated, "header truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(FormatErrorKind::bad_magic, "bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kAtnsVersion)
    throw FormatError(FormatErrorKind::unsupported_version, "unsupported version " + std::to_string(version));
  const auto manifest_len = get_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - kHeaderBytes) throw FormatError(FormatErrorKind::truncated, "manifest truncated");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + kHeaderBytes,
                           bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + manifest_len));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::bad_manifest, std::string("manifest parse error: ") + e.what());
  }

  AttentionStack stack;
  std::vector<std::uint64_t> offsets;
  try {
    stack.text_tokens = manifest.at("text_tokens").get<std::vector<std::string>>();
    const auto& layout = manifest.at("layout");
    stack.layout = {layout.at("frames").get<int>(), layout.at("height").get<int>(), layout.at("width").get<int>()};
    for (const auto& entry : manifest.at("layers")) {
      AttentionLayer layer;
      layer.name = entry.at("name").get<std::string>();
      layer.kind = parse_layer_kind(entry.at("kind").get<std::string>());
      layer.heads = entry.at("heads").get<int>();
      layer.query_tokens = entry.at("query_tokens").get<int>();
      layer.key_tokens = entry.at("key_tokens").get<int>();
      if (entry.at("dtype").get<std::string>() != "f32")
        throw FormatError(FormatErrorKind::bad_manifest, "unsupported dtype " + entry.at("dtype").dump());
      if (layer.heads < 1 || layer.query_tokens < 1 || layer.key_tokens < 1)
        throw FormatError(FormatErrorKind::bad_manifest, "non-positive tensor shape in layer " + layer.name);
      offsets.push_back(entry.at("offset").get<std::uint64_t>());
      stack.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::bad_manifest, std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrorKind::bad_manifest, e.what());
  }

  std::size_t cursor = kHeaderBytes + manifest_len;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    auto& layer = stack.layers[i];
    const std::uint64_t offset = offsets[i];
    const std::size_t count = layer.expected_size();
    const std::size_t nbytes = count * sizeof(float);
    if (offset % kPayloadAlignment != 0 || offset < cursor)
      throw FormatError(FormatErrorKind::size_mismatch,
                        "payload offset " + std::to_string(offset) + " of layer " + layer.name + " is misplaced");
    if (offset > bytes.size() || nbytes > bytes.size() - offset)
      throw FormatError(FormatErrorKind::truncated, "payload truncated");
    layer.weights.resize(count);
    std::memcpy(layer.weights.data(), bytes.data() + offset, nbytes);
    for (float w : layer.weights) {
      if (!(w >= 0.0f && w <= 1.0f))
        throw FormatError(FormatErrorKind::bad_value, "NaN or out-of-range weight in layer " + layer.name);
    }
    cursor = offset + nbytes;
  }
  if (cursor != bytes.size())
    throw FormatError(FormatErrorKind::size_mismatch,
                      std::to_string(bytes.size() - cursor) + " trailing bytes after the last payload");
  return stack;
}

AttentionStack read_stack(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatErrorKind::io, "read failed");
  return decode_stack(bytes);
}

AttentionStack read_stack_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  return read_stack(in);
}

}  // namespace stflow

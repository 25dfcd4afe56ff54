#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "probe/net.hpp"

namespace probe {

using Json = nlohmann::json;

// NetworkSpec <-> JSON (layer list with kind + dimensions).
Json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const Json& j);

// Named-segment checkpoint container: 8-byte magic "PROBEPV1", a segment
// table, then little-endian 64-bit reals. ParamVector checkpoints store
// "<layer>/<role>" entries; model checkpoints add "<layer>/bn-mean" and
// "<layer>/bn-var" running statistics.
void save_checkpoint(const std::string& path, const ParamVector& params,
                     const BnState* bn = nullptr);
ParamVector load_checkpoint(const std::string& path, const NetworkSpec& spec,
                            BnState* bn = nullptr);

// 64-bit FNV-1a over bytes, rendered as 16 hex digits.
std::string fnv1a_hex(const void* data, std::size_t size);

// Content hash of a config document: canonical JSON (sorted keys) hashed with
// FNV-1a. Key-order permutations of the same document hash identically.
std::string config_hash(const Json& config);

// Fingerprint of a parameter vector (used to tag NTK slices).
std::string param_fingerprint(const ParamVector& params);

// Minimal CSV writer: quotes nothing, callers pass printable cells.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

}  // namespace probe

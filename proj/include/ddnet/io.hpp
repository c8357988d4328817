#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ddnet/routenet.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

/// Checkpoint = <base>.bin (all tensors back to back, little-endian f64) plus
/// <base>.json (format version, names, shapes, free-form config).
void save_checkpoint(const std::string& base, const std::vector<Tensor>& tensors,
                     const std::vector<std::string>& names, const nlohmann::json& config);

std::vector<Tensor> load_checkpoint(const std::string& base, nlohmann::json* config_out = nullptr,
                                    std::vector<std::string>* names_out = nullptr);

nlohmann::json norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

/// Routing dataset container: inputs, labels, and the cached branch errors.
void save_route_dataset(const std::vector<RouteSample>& rs, const std::string& path);
std::vector<RouteSample> load_route_dataset(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ddnet

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "onset/evaluation.hpp"
#include "onset/imputation.hpp"

namespace onset {

/// Shortest text that parses back to the same double (17 significant digits).
std::string format_real(double value);
double parse_real(std::string_view text);

struct ModelMeta {
  std::vector<std::string> variables;
  int window_length = 0;
  int stride = 1;
  int horizon = 21;
};

struct ModelFile {
  TrainedModel model;
  ModelMeta meta;
};

std::string serialize_model(const TrainedModel& model, const ModelMeta& meta);
ModelFile parse_model(std::string_view text);

void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const ModelMeta& meta);
ModelFile load_model(const std::filesystem::path& path);

std::string serialize_bmc_model(const BmcModel& model);
BmcModel parse_bmc_model(std::string_view text);

/// Any fitted imputer, with its kind tag.
std::string serialize_imputer(const Imputer& imputer, const std::vector<std::string>& variables);
std::unique_ptr<Imputer> parse_imputer_file(std::string_view text, const ImputeOptions& options = {});

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace onset

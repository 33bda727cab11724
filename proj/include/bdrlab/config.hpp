#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bdrlab/dataset.hpp"
#include "bdrlab/trainer.hpp"

namespace bdrlab {

enum class Generator { Gaussian, Rings, Idx };

std::string to_string(Generator generator);
Generator parse_generator(const std::string& text);

struct DatasetSpec {
  Generator generator = Generator::Gaussian;
  std::size_t classes = 8;
  std::size_t per_class = 120;
  std::size_t dim = 16;        // gaussian only
  double separation = 3.0;     // gaussian only
  double noise = 0.15;         // rings only
  std::string images;          // idx only
  std::string labels;          // idx only
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::size_t base = 4;  // B
  std::size_t step = 2;  // S
  TrainConfig train;     // memory and bdr hyper-parameters live here too
  std::vector<LossVariant> variants{LossVariant::CE, LossVariant::BDR};
  std::vector<std::uint64_t> seeds{0};
  std::string out = "out";

  void validate() const;
};

// Parses the sectioned key = value format described in docs/config.md.
// Errors carry the line and column of the offending token.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical text form; parse_config(serialize_config(c)) serializes back to
// the same text.
std::string serialize_config(const ExperimentConfig& config);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

// Dataset and phase stream for one seed. The dataset draw, the train/test
// split and the class order all come from the seed's "dataset" stream.
PhaseStream build_stream(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace bdrlab

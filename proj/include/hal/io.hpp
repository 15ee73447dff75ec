#pragma once

#include <map>
#include <string>
#include <vector>

#include "hal/nn.hpp"
#include "hal/types.hpp"

namespace hal {

// versioned binary container for a ModelSpec plus its Params; round-trips
// bit-exactly
void save_checkpoint(const std::string& path, const ModelSpec& spec,
                     const Params& params);
std::pair<ModelSpec, Params> load_checkpoint(const std::string& path);

// shortest decimal that parses back to the same double, locale-free
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// flat key=value lines; '#' comments and blank lines ignored
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace hal

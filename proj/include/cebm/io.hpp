#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cebm/param.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// CSV: UTF-8, header row, '.' decimals, '\n' terminated.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

std::string format_double(double v);

// Checkpoint: one file holding a single-line JSON manifest (tensor names,
// shapes, byte offsets, plus free-form metadata) followed by one blob of
// little-endian float64 in manifest order.
struct Checkpoint {
    std::map<std::string, ParameterVector> groups;  // e.g. "theta", "xi", "adam_theta.m"
    std::string metadata_json = "{}";
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace cebm

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hitgeo/cmp.hpp"
#include "hitgeo/nets.hpp"

namespace hitgeo {

// Versioned on-disk formats. Files ending in ".txt" use the human-readable
// text layout; every other extension gets the compact binary layout.
//   dataset     magic "HITGEO-DS",   version 1
//   environment magic "HITGEO-ENV",  version 1
//   checkpoint  magic "HITGEO-CKPT", version 1

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

void save_env(const std::string& path, const FiniteCMP& env);
FiniteCMP load_env(const std::string& path);

void save_checkpoint(const std::string& path, const DenseNet& net,
                     const OptimizerState* opt = nullptr);
struct Checkpoint {
    DenseNet net;
    std::optional<OptimizerState> opt;
};
Checkpoint load_checkpoint(const std::string& path);

// CSV with a header row, '.' decimal separator, shortest round-trip doubles.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header, bool append = false);
    void write_row(const std::vector<std::string>& cells);
    static std::string format(double v);
    static std::string format(int v);

private:
    std::string path_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace hitgeo

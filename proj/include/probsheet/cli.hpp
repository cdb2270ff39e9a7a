#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "probsheet/bbvi.hpp"
#include "probsheet/blackbox.hpp"
#include "probsheet/graph.hpp"
#include "probsheet/smc.hpp"

namespace probsheet::cli {

// A black-box operator alias declared by a sheet file: `base` is a builtin
// (IRR or NPV); a positive noise_sd adds N(0, noise_sd) to each result and
// makes the operator stochastic.
struct BlackOpDecl {
  std::string name;
  std::string base;
  bool deterministic = true;
  double noise_sd = 0;
};

// On-disk form:
//   {"title": "...", "cells": {"A1": "=GAUSSIAN(0,1)", "A2": 3},
//    "black_ops": [{"name": "NOISY_IRR", "base": "IRR", "noise_sd": 0.01}]}
struct SheetFile {
  std::string title;
  std::map<std::string, std::string> cells;
  std::vector<BlackOpDecl> black_ops;
};

// Throws IoError on unreadable or malformed documents.
SheetFile parse_sheet_file(const std::string& text);
SheetFile read_sheet_file(const std::filesystem::path& path);

// Throws SyntaxError naming the offending cell.
Sheet parse_sheet(const SheetFile& file);

// Builtins plus the file's aliases. Throws ConfigError on bad declarations.
BlackOpRegistry make_registry(const SheetFile& file);

struct LoadedSheet {
  SheetFile file;
  BlackOpRegistry registry;
  CompiledSheet compiled;
};

LoadedSheet load_sheet(const std::filesystem::path& path);
LoadedSheet load_sheet_text(const std::string& text);

enum class Engine { Smc, Bbvi };

struct RunConfig {
  Engine engine = Engine::Smc;
  std::vector<CellRef> targets;  // empty = every latent cell
  std::uint64_t seed = 0;
  SmcConfig smc;
  BbviConfig bbvi;
  std::size_t bins = 40;
  std::size_t draws = 10000;  // posterior-predictive draws for BBVI histograms
  std::filesystem::path out = ".";
  bool verbose = false;
};

// Throws ConfigError.
void validate(const RunConfig& config, const CompiledSheet& compiled);

// Non-observed cells whose value depends on a random choice.
std::vector<CellRef> latent_cells(const CompiledSheet& compiled, const BlackOpRegistry& registry);

// Labels of the ERP applications (observation labels excluded).
std::vector<Label> latent_labels(const CompiledSheet& compiled);

// Runs the configured engine and writes its artifacts under config.out.
// Errors propagate as exceptions.
void run(const LoadedSheet& sheet, const RunConfig& config, std::ostream& out,
         std::ostream& log);

std::string describe(const LoadedSheet& sheet);

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitModel = 3;
inline constexpr int kExitNoGradient = 4;

// Entry point shared by the executable and the tests. Errors are reported on
// `err` and mapped to the exit codes above.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace probsheet::cli

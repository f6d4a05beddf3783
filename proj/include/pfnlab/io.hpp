#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pfnlab/diagnostics.hpp"
#include "pfnlab/ppd.hpp"
#include "pfnlab/predictors.hpp"
#include "pfnlab/pretrain.hpp"
#include "pfnlab/transformer.hpp"

namespace pfnlab {

/// File could not be read, written, or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSV -------------------------------------------------------------------------------

/// Header plus rows of already formatted fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// 17 significant digits ("%.17g"); parsing the text reproduces the double.
std::string format_double(double value);

void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);
/// Column values of a parsed table as doubles.
std::vector<double> csv_column(const CsvTable& table, const std::string& name);

CsvTable to_csv(const BiasVarianceReport& report);
CsvTable to_csv(const SensitivityEstimate& estimate);
CsvTable sensitivity_fit_csv(const SensitivityEstimate& estimate);
CsvTable to_csv(const LocalityProbeReport& report);
CsvTable to_csv(const TiltReport& report);
CsvTable to_csv(const SymmetrizeReport& report);
CsvTable to_csv(const OptimalityReport& report);
CsvTable to_csv(std::span<const TrainingLogRow> log);

// Parameter container --------------------------------------------------------------
//
// Little-endian binary layout:
//   8 bytes  magic "PFNPARMS"
//   u32      format version (1)
//   u32 len, bytes   family name
//   u32      array count
//   per array: u32 len, bytes name; u32 rows; u32 cols; rows*cols f64 column-major

inline constexpr char kContainerMagic[8] = {'P', 'F', 'N', 'P', 'A', 'R', 'M', 'S'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;
};

struct ParamContainer {
  std::string family;
  std::vector<NamedArray> arrays;
  const NamedArray& get(const std::string& name) const;
};

void write_container(const ParamContainer& container, const std::filesystem::path& path);
ParamContainer read_container(const std::filesystem::path& path);

using FittedParams = std::variant<WindowSmootherParams, TreeParams, EnsembleParams, TransformerParams>;

ParamContainer to_container(const FittedParams& params);
FittedParams from_container(const ParamContainer& container);

// Checksums ---------------------------------------------------------------------------

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace pfnlab

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rrm/model.hpp"

namespace rrm {

enum class DataFormat { Auto, TripletCsv, MatrixMarket };

DataFormat parse_data_format(std::string_view name);

// Triplet CSV: header `row,col,value`, 0-based indices, optional
// `# dims n m` comment. MatrixMarket: coordinate real/integer general,
// 1-based. Auto picks by the %%MatrixMarket banner. Dimensions come from the
// file, then `dims`, then the largest index seen. Duplicates are reported
// with both line numbers.
ObservedMatrix read_observations(const std::string& path, DataFormat format = DataFormat::Auto,
                                 std::optional<std::pair<Index, Index>> dims = std::nullopt);
ObservedMatrix parse_observations(std::string_view text, DataFormat format,
                                  std::optional<std::pair<Index, Index>> dims = std::nullopt);

std::string format_triplet_csv(const ObservedMatrix& y);
std::string format_matrix_market(const ObservedMatrix& y);

// Header row, then `index,f1,f2,...`. Every index in [0, count) must appear
// exactly once.
FeatureMatrix read_features(const std::string& path, Index count);
FeatureMatrix parse_features(std::string_view text, Index count);
std::string format_features(const FeatureMatrix& f);

// Pairs file: header `row,col`, 0-based.
std::vector<std::pair<Index, Index>> parse_pairs(std::string_view text);

std::string read_text(const std::string& path);
// Writes through a temporary file in the same directory and renames it.
void write_text_atomic(const std::string& path, std::string_view content);

// Little-endian IEEE doubles, standard base64 alphabet.
std::string encode_doubles(const double* data, std::size_t count);
std::vector<double> decode_doubles(std::string_view text);

struct ModelFile {
  ModelSpec spec;
  ModelState state;
  std::string metadata_json = "{}";  // free-form, echoed verbatim
};

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const ModelFile& model);
ModelFile deserialize_model(std::string_view text);

}  // namespace rrm

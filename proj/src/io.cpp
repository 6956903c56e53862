#include "rrm/io.hpp"

#include <array>
#include <bit>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <unistd.h>

#include "json.hpp"
#include "rrm/error.hpp"

namespace rrm {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Iterates lines with 1-based numbers.
template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t start = 0;
  std::size_t number = 1;
  while (start <= text.size()) {
    const std::size_t pos = text.find('\n', start);
    std::string_view line = text.substr(start, pos == std::string_view::npos ? pos : pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (pos == std::string_view::npos && line.empty()) break;
    f(number, line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
    ++number;
  }
}

[[noreturn]] void parse_fail(std::size_t line, std::size_t field, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ", field " + std::to_string(field) + ": " +
                  msg);
}

double parse_double(std::string_view s, std::size_t line, std::size_t field) {
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno == ERANGE) {
    parse_fail(line, field, "cannot parse number '" + tmp + "'");
  }
  return v;
}

Index parse_index(std::string_view s, std::size_t line, std::size_t field) {
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(tmp.c_str(), &end, 10);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno == ERANGE) {
    parse_fail(line, field, "cannot parse index '" + tmp + "'");
  }
  return static_cast<Index>(v);
}

struct RawEntry {
  Index row;
  Index col;
  double value;
  std::size_t line;
};

ObservedMatrix assemble(std::vector<RawEntry> raw, Index n, Index m) {
  std::unordered_map<std::uint64_t, std::size_t> seen;
  seen.reserve(raw.size() * 2);
  std::vector<Entry> entries;
  entries.reserve(raw.size());
  for (const RawEntry& r : raw) {
    if (r.row < 0 || r.row >= n || r.col < 0 || r.col >= m) {
      throw DataError("line " + std::to_string(r.line) + ": index (" + std::to_string(r.row) +
                      ", " + std::to_string(r.col) + ") outside declared " + std::to_string(n) +
                      "x" + std::to_string(m));
    }
    const std::uint64_t key =
        static_cast<std::uint64_t>(r.row) * static_cast<std::uint64_t>(m) +
        static_cast<std::uint64_t>(r.col);
    const auto [it, inserted] = seen.emplace(key, r.line);
    if (!inserted) {
      throw DataError("duplicate entry (" + std::to_string(r.row) + ", " + std::to_string(r.col) +
                      ") on lines " + std::to_string(it->second) + " and " +
                      std::to_string(r.line));
    }
    entries.push_back(Entry{r.row, r.col, r.value});
  }
  if (entries.empty()) throw DataError("no observations");
  return ObservedMatrix(n, m, std::move(entries));
}

ObservedMatrix parse_triplet_csv(std::string_view text,
                                 std::optional<std::pair<Index, Index>> dims) {
  std::vector<RawEntry> raw;
  bool header = false;
  std::optional<std::pair<Index, Index>> declared;
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    const std::string_view t = trim(line);
    if (t.empty()) return;
    if (t.front() == '#') {
      const auto words = split_whitespace(t.substr(1));
      if (words.size() == 3 && words[0] == "dims") {
        declared = {parse_index(words[1], no, 2), parse_index(words[2], no, 3)};
      }
      return;
    }
    const auto fields = split_fields(t, ',');
    if (!header) {
      if (fields.size() != 3 || fields[0] != "row" || fields[1] != "col" || fields[2] != "value") {
        parse_fail(no, 1, "expected header 'row,col,value'");
      }
      header = true;
      return;
    }
    if (fields.size() != 3) parse_fail(no, fields.size(), "expected 3 fields");
    raw.push_back(RawEntry{parse_index(fields[0], no, 1), parse_index(fields[1], no, 2),
                           parse_double(fields[2], no, 3), no});
  });
  if (!header) throw DataError("missing header 'row,col,value'");
  Index n = 0, m = 0;
  if (declared) {
    std::tie(n, m) = *declared;
  } else if (dims) {
    std::tie(n, m) = *dims;
  } else {
    for (const RawEntry& r : raw) {
      n = std::max(n, r.row + 1);
      m = std::max(m, r.col + 1);
    }
  }
  return assemble(std::move(raw), n, m);
}

ObservedMatrix parse_matrix_market(std::string_view text) {
  std::vector<RawEntry> raw;
  bool banner = false, sized = false;
  Index n = 0, m = 0, expected = 0;
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    const std::string_view t = trim(line);
    if (!banner) {
      const auto words = split_whitespace(t);
      if (words.size() != 5 || words[0] != "%%MatrixMarket" || words[1] != "matrix" ||
          words[2] != "coordinate" || (words[3] != "real" && words[3] != "integer") ||
          words[4] != "general") {
        parse_fail(no, 1, "expected '%%MatrixMarket matrix coordinate real|integer general'");
      }
      banner = true;
      return;
    }
    if (t.empty() || t.front() == '%') return;
    const auto words = split_whitespace(t);
    if (!sized) {
      if (words.size() != 3) parse_fail(no, words.size(), "expected size line 'rows cols entries'");
      n = parse_index(words[0], no, 1);
      m = parse_index(words[1], no, 2);
      expected = parse_index(words[2], no, 3);
      sized = true;
      return;
    }
    if (words.size() != 3) parse_fail(no, words.size(), "expected 'row col value'");
    raw.push_back(RawEntry{parse_index(words[0], no, 1) - 1, parse_index(words[1], no, 2) - 1,
                           parse_double(words[2], no, 3), no});
  });
  if (!sized) throw DataError("matrix market file has no size line");
  if (static_cast<Index>(raw.size()) != expected) {
    throw DataError("matrix market file declares " + std::to_string(expected) + " entries but has " +
                    std::to_string(raw.size()));
  }
  return assemble(std::move(raw), n, m);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Base64 with the standard alphabet and '=' padding.
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* bytes, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < len ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < len ? bytes[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(triple >> 18) & 63]);
    out.push_back(kAlphabet[(triple >> 12) & 63]);
    out.push_back(i + 1 < len ? kAlphabet[(triple >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kAlphabet[triple & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kAlphabet[k])] = k;
  if (text.size() % 4 != 0) throw DataError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t triple = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v = 0;
      if (c == '=') {
        ++pad;
      } else {
        v = lookup[static_cast<unsigned char>(c)];
        if (v < 0 || pad > 0) throw DataError("invalid base64 payload");
      }
      triple = (triple << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<unsigned char>((triple >> 16) & 255));
    if (pad < 2) out.push_back(static_cast<unsigned char>((triple >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<unsigned char>(triple & 255));
  }
  return out;
}

json matrix_json(const Matrix& a) {
  return json{{"rows", a.rows()}, {"cols", a.cols()},
              {"data", encode_doubles(a.data(), static_cast<std::size_t>(a.size()))}};
}

Matrix matrix_from(const json& j) {
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  const std::vector<double> v = decode_doubles(j.at("data").get<std::string>());
  if (static_cast<Index>(v.size()) != r * c) throw DataError("model file matrix payload size mismatch");
  Matrix a(r, c);
  std::copy(v.begin(), v.end(), a.data());
  return a;
}

json vector_json(const Vector& v) {
  return encode_doubles(v.data(), static_cast<std::size_t>(v.size()));
}

Vector vector_from(const json& j) {
  const std::vector<double> v = decode_doubles(j.get<std::string>());
  Vector out(static_cast<Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

json features_json(const std::optional<FeatureMatrix>& f) {
  if (!f) return nullptr;
  return json{{"values", matrix_json(f->values)}, {"labels", f->labels}};
}

std::optional<FeatureMatrix> features_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return FeatureMatrix(matrix_from(j.at("values")), j.at("labels").get<std::vector<std::string>>());
}

json margin_json(const Margin& m) {
  switch (m.kind()) {
    case Margin::Kind::Identity: return json{{"kind", "identity"}, {"dim", m.dim()}};
    case Margin::Kind::Metric: {
      const SideMetric& s = *m.side_metric();
      return json{{"kind", "metric"},
                  {"dim", m.dim()},
                  {"basis", matrix_json(s.basis())},
                  {"eigenvalues", vector_json(s.eigenvalues())},
                  {"null_basis", matrix_json(s.null_basis())},
                  {"warnings", s.warnings()}};
    }
    case Margin::Kind::Design: {
      const ColumnDesign& d = *m.column_design();
      return json{{"kind", "design"},
                  {"dim", m.dim()},
                  {"coarse", matrix_json(d.coarse)},
                  {"fine", matrix_json(d.fine)}};
    }
  }
  return nullptr;
}

Margin margin_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return Margin::identity(j.at("dim").get<Index>());
  if (kind == "metric") {
    const Matrix w = matrix_from(j.at("basis"));
    const Vector d = vector_from(j.at("eigenvalues"));
    const Matrix null = matrix_from(j.at("null_basis"));
    Matrix all(w.rows(), w.cols() + null.cols());
    all << w, null;
    Vector dall(all.cols());
    dall << d, Vector::Ones(null.cols());
    return Margin::metric(SideMetric::from_eigenpairs(
        all, dall, j.value("warnings", std::vector<std::string>{})));
  }
  if (kind == "design") {
    return Margin::design(ColumnDesign{matrix_from(j.at("coarse")), matrix_from(j.at("fine"))});
  }
  throw DataError("unknown margin kind '" + kind + "' in model file");
}

}  // namespace

DataFormat parse_data_format(std::string_view name) {
  if (name == "auto") return DataFormat::Auto;
  if (name == "csv" || name == "triplet-csv") return DataFormat::TripletCsv;
  if (name == "mtx" || name == "matrix-market") return DataFormat::MatrixMarket;
  throw ConfigError("unknown data format '" + std::string(name) + "' (auto, csv, mtx)");
}

ObservedMatrix parse_observations(std::string_view text, DataFormat format,
                                  std::optional<std::pair<Index, Index>> dims) {
  if (format == DataFormat::Auto) {
    format = trim(text.substr(0, 14)) == "%%MatrixMarket" ? DataFormat::MatrixMarket
                                                          : DataFormat::TripletCsv;
  }
  return format == DataFormat::MatrixMarket ? parse_matrix_market(text)
                                            : parse_triplet_csv(text, dims);
}

ObservedMatrix read_observations(const std::string& path, DataFormat format,
                                 std::optional<std::pair<Index, Index>> dims) {
  try {
    return parse_observations(read_text(path), format, dims);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string format_triplet_csv(const ObservedMatrix& y) {
  std::string out = "# dims " + std::to_string(y.rows()) + " " + std::to_string(y.cols()) +
                    "\nrow,col,value\n";
  for (Index e = 0; e < y.nnz(); ++e) {
    out += std::to_string(y.row(e)) + "," + std::to_string(y.col(e)) + "," + fmt(y.values()[e]) +
           "\n";
  }
  return out;
}

std::string format_matrix_market(const ObservedMatrix& y) {
  std::string out = "%%MatrixMarket matrix coordinate real general\n";
  out += std::to_string(y.rows()) + " " + std::to_string(y.cols()) + " " +
         std::to_string(y.nnz()) + "\n";
  for (Index e = 0; e < y.nnz(); ++e) {
    out += std::to_string(y.row(e) + 1) + " " + std::to_string(y.col(e) + 1) + " " +
           fmt(y.values()[e]) + "\n";
  }
  return out;
}

FeatureMatrix parse_features(std::string_view text, Index count) {
  std::vector<std::string> labels;
  bool header = false;
  Matrix values;
  std::vector<std::size_t> line_of(static_cast<std::size_t>(count), 0);
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') return;
    const auto fields = split_fields(t, ',');
    if (!header) {
      if (fields.size() < 1) parse_fail(no, 1, "empty header");
      for (std::size_t k = 1; k < fields.size(); ++k) labels.emplace_back(fields[k]);
      values = Matrix::Zero(count, static_cast<Index>(labels.size()));
      header = true;
      return;
    }
    if (fields.size() != labels.size() + 1) {
      parse_fail(no, fields.size(), "expected " + std::to_string(labels.size() + 1) + " fields");
    }
    const Index idx = parse_index(fields[0], no, 1);
    if (idx < 0 || idx >= count) {
      parse_fail(no, 1, "index " + std::to_string(idx) + " outside [0, " + std::to_string(count) + ")");
    }
    auto& prev = line_of[static_cast<std::size_t>(idx)];
    if (prev != 0) {
      throw DataError("feature index " + std::to_string(idx) + " repeated on lines " +
                      std::to_string(prev) + " and " + std::to_string(no));
    }
    prev = no;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      values(idx, static_cast<Index>(k - 1)) = parse_double(fields[k], no, k + 1);
    }
  });
  if (!header) throw DataError("feature file has no header");
  for (Index i = 0; i < count; ++i) {
    if (line_of[static_cast<std::size_t>(i)] == 0) {
      throw DataError("feature file has no row for index " + std::to_string(i));
    }
  }
  return FeatureMatrix(std::move(values), std::move(labels));
}

FeatureMatrix read_features(const std::string& path, Index count) {
  try {
    return parse_features(read_text(path), count);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string format_features(const FeatureMatrix& f) {
  std::string out = "index";
  for (Index k = 0; k < f.values.cols(); ++k) {
    out += ",";
    out += k < static_cast<Index>(f.labels.size()) ? f.labels[static_cast<std::size_t>(k)]
                                                   : "f" + std::to_string(k);
  }
  out += "\n";
  for (Index i = 0; i < f.values.rows(); ++i) {
    out += std::to_string(i);
    for (Index k = 0; k < f.values.cols(); ++k) out += "," + fmt(f.values(i, k));
    out += "\n";
  }
  return out;
}

std::vector<std::pair<Index, Index>> parse_pairs(std::string_view text) {
  std::vector<std::pair<Index, Index>> out;
  bool header = false;
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') return;
    const auto fields = split_fields(t, ',');
    if (!header) {
      if (fields.size() < 2 || fields[0] != "row" || fields[1] != "col") {
        parse_fail(no, 1, "expected header 'row,col'");
      }
      header = true;
      return;
    }
    if (fields.size() < 2) parse_fail(no, fields.size(), "expected 'row,col'");
    out.emplace_back(parse_index(fields[0], no, 1), parse_index(fields[1], no, 2));
  });
  if (!header) throw DataError("pairs file has no header 'row,col'");
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(static_cast<long long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

std::string encode_doubles(const double* data, std::size_t count) {
  static_assert(std::endian::native == std::endian::little, "payload encoding assumes little endian");
  return base64_encode(reinterpret_cast<const unsigned char*>(data), count * sizeof(double));
}

std::vector<double> decode_doubles(std::string_view text) {
  const std::vector<unsigned char> bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0) throw DataError("base64 payload is not a list of doubles");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string serialize_model(const ModelFile& model) {
  const ModelSpec& s = model.spec;
  const ModelState& st = model.state;
  json j;
  j["format"] = "rrm-model";
  j["version"] = kModelFormatVersion;
  j["dims"] = {s.rows(), s.cols()};
  j["loss"] = std::string(loss_name(s.loss.kind));
  j["theta_max"] = s.loss.theta_max ? json(*s.loss.theta_max) : json(nullptr);
  j["lambda_gamma"] = s.lambda_gamma;
  j["lambda_alpha"] = s.lambda_alpha;
  j["lambda_beta"] = s.lambda_beta;
  j["offsets"] = {{"intercept", s.offsets.intercept},
                  {"row_effects", s.offsets.row_effects},
                  {"col_effects", s.offsets.col_effects},
                  {"row_features", features_json(s.offsets.row_features)},
                  {"col_features", features_json(s.offsets.col_features)}};
  j["row_margin"] = margin_json(s.row_margin);
  j["col_margin"] = margin_json(s.col_margin);
  j["state"] = {{"mu", encode_doubles(&st.mu, 1)},
                {"alpha", vector_json(st.alpha)},
                {"beta", vector_json(st.beta)},
                {"row_coef", vector_json(st.row_coef)},
                {"col_coef", vector_json(st.col_coef)},
                {"gamma1",
                 {{"left", matrix_json(st.gamma1.left)},
                  {"sigma", vector_json(st.gamma1.sigma)},
                  {"right", matrix_json(st.gamma1.right)}}},
                {"gamma2", matrix_json(st.gamma2)},
                {"gamma3", matrix_json(st.gamma3)}};
  j["metadata"] = json::parse(model.metadata_json.empty() ? "{}" : model.metadata_json);
  return j.dump(1) + "\n";
}

ModelFile deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "rrm-model") throw DataError("not an rrm model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported model file version " + std::to_string(version));
    }
    ModelFile mf;
    ModelSpec& s = mf.spec;
    s.loss.kind = parse_loss_kind(j.at("loss").get<std::string>());
    if (!j.at("theta_max").is_null()) s.loss.theta_max = j.at("theta_max").get<double>();
    s.lambda_gamma = j.at("lambda_gamma").get<double>();
    s.lambda_alpha = j.at("lambda_alpha").get<double>();
    s.lambda_beta = j.at("lambda_beta").get<double>();
    const json& o = j.at("offsets");
    s.offsets.intercept = o.at("intercept").get<bool>();
    s.offsets.row_effects = o.at("row_effects").get<bool>();
    s.offsets.col_effects = o.at("col_effects").get<bool>();
    s.offsets.row_features = features_from(o.at("row_features"));
    s.offsets.col_features = features_from(o.at("col_features"));
    s.row_margin = margin_from(j.at("row_margin"));
    s.col_margin = margin_from(j.at("col_margin"));
    const json& st = j.at("state");
    ModelState& x = mf.state;
    x.mu = decode_doubles(st.at("mu").get<std::string>()).at(0);
    x.alpha = vector_from(st.at("alpha"));
    x.beta = vector_from(st.at("beta"));
    x.row_coef = vector_from(st.at("row_coef"));
    x.col_coef = vector_from(st.at("col_coef"));
    x.gamma1.left = matrix_from(st.at("gamma1").at("left"));
    x.gamma1.sigma = vector_from(st.at("gamma1").at("sigma"));
    x.gamma1.right = matrix_from(st.at("gamma1").at("right"));
    x.gamma2 = matrix_from(st.at("gamma2"));
    x.gamma3 = matrix_from(st.at("gamma3"));
    mf.metadata_json = j.value("metadata", json::object()).dump();
    s.validate();
    check_state(s, x);
    return mf;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace rrm

#include <nci/dataset_io.hpp>

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace nci {

namespace {

constexpr std::array<char, 8> kMagic{'N', 'C', 'I', 'D', 'A', 'T', 'A', '1'};
constexpr int kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("dataset: truncated header length");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_block(std::ostream& out, const Matrix& m) {
  std::vector<char> buf(static_cast<std::size_t>(m.size()) * 4);
  std::size_t at = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j)));
      for (int k = 0; k < 4; ++k) buf[at++] = static_cast<char>((bits >> (8 * k)) & 0xff);
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Matrix get_block(std::istream& in, Index rows, Index cols) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols) * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw IoError("dataset: truncated payload");
  }
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(buf[at++]) << (8 * k);
      m(i, j) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return m;
}

}  // namespace

void write_dataset(std::ostream& out, const std::vector<Sample>& samples) {
  const Index m = samples.empty() ? 0 : samples.front().x.rows();
  const Index d = samples.empty() ? 0 : samples.front().x.cols();
  nlohmann::json header;
  header["version"] = kVersion;
  header["n"] = samples.size();
  header["m"] = m;
  header["d"] = d;
  auto labels = nlohmann::json::array();
  auto graphs = nlohmann::json::array();
  auto funcs = nlohmann::json::array();
  for (const auto& s : samples) {
    if (s.x.rows() != m || s.y.rows() != m || s.x.cols() != d || s.y.cols() != d) {
      throw DimensionError("write_dataset: samples differ in shape");
    }
    labels.push_back(s.label);
    graphs.push_back(std::string(graph_name(s.graph)));
    funcs.push_back(std::string(function_name(s.func)));
  }
  header["labels"] = std::move(labels);
  header["graphs"] = std::move(graphs);
  header["funcs"] = std::move(funcs);
  const std::string text = header.dump();

  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : samples) {
    put_block(out, s.x);
    put_block(out, s.y);
  }
  if (!out) throw IoError("write_dataset: stream write failed");
}

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_dataset: cannot open " + path.string());
  write_dataset(out, samples);
}

std::vector<Sample> read_dataset(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("dataset: bad magic");
  const std::uint32_t len = get_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw IoError("dataset: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset: malformed header: ") + e.what());
  }
  std::vector<Sample> out;
  try {
    if (header.at("version").get<int>() != kVersion) throw IoError("dataset: unsupported version");
    const auto n = header.at("n").get<std::size_t>();
    const auto m = header.at("m").get<Index>();
    const auto d = header.at("d").get<Index>();
    const auto& labels = header.at("labels");
    const auto& graphs = header.at("graphs");
    const auto& funcs = header.at("funcs");
    if (labels.size() != n || graphs.size() != n || funcs.size() != n) {
      throw IoError("dataset: header arrays disagree with n");
    }
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.label = labels[i].get<int>();
      s.graph = graph_from_name(graphs[i].get<std::string>());
      s.func = function_from_name(funcs[i].get<std::string>());
      s.x = get_block(in, m, d);
      s.y = get_block(in, m, d);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("dataset: ") + e.what());
  }
  return out;
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_dataset: cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace nci

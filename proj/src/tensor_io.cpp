#include "flaming/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flaming/errors.hpp"

namespace flaming {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'L', 'M', 'T', 'E', 'N', 'S', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

static_assert(std::endian::native == std::endian::little, "tensor files are written in native little-endian order");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& value) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

}  // namespace

void write_flmt(const std::filesystem::path& path, const Shape& shape, std::span<const float> values) {
  if (shape_numel(shape) != values.size()) throw DimensionError("write_flmt: payload does not match shape");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) put<std::uint64_t>(os, e);
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!os) throw IoError("write failed for " + path.string());
}

FloatArray read_flmt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor file " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("bad magic in tensor file " + path.string());
  }
  std::uint32_t rank = 0;
  if (!get(is, rank) || rank == 0 || rank > 16) throw IoError("bad rank in tensor file " + path.string());
  FloatArray out;
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint64_t e = 0;
    if (!get(is, e) || e == 0) throw IoError("bad extent in tensor file " + path.string());
    total *= e;
    if (total > kMaxElements) throw IoError("tensor file too large: " + path.string());
    out.shape.push_back(static_cast<std::size_t>(e));
  }
  out.values.resize(static_cast<std::size_t>(total));
  const auto bytes = static_cast<std::streamsize>(total * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(out.values.data()), bytes)) {
    throw IoError("truncated payload in tensor file " + path.string());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in tensor file " + path.string());
  return out;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::vector<float> values(tensor.data().begin(), tensor.data().end());
  write_flmt(path, tensor.shape(), values);
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto raw = read_flmt(path);
  return Tensor(raw.shape, std::vector<double>(raw.values.begin(), raw.values.end()));
}

void write_named_tensors(const std::filesystem::path& dir, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.tsv", std::ios::trunc);
  if (!index) throw IoError("cannot write " + (dir / "index.tsv").string());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, tensor] = tensors[i];
    if (name.find_first_of("\t\n") != std::string::npos) throw ContractError("tensor name contains a tab or newline");
    const std::string file = "t" + std::to_string(i) + ".flmt";
    write_tensor(dir / file, tensor);
    index << name << '\t' << file << '\n';
  }
  if (!index) throw IoError("write failed for " + (dir / "index.tsv").string());
}

std::vector<std::pair<std::string, Tensor>> read_named_tensors(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.tsv");
  if (!index) throw IoError("missing checkpoint index " + (dir / "index.tsv").string());
  std::vector<std::pair<std::string, Tensor>> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw SchemaError("malformed index line in " + (dir / "index.tsv").string());
    out.emplace_back(line.substr(0, tab), read_tensor(dir / line.substr(tab + 1)));
  }
  return out;
}

}  // namespace flaming

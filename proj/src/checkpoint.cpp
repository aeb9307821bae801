#include "spikegate/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace spikegate {
namespace {

constexpr std::array<char, 4> kMagic{'S', 'G', 'K', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
  return true;
}

std::uint32_t need_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(is, v)) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& params) {
  os.write(kMagic.data(), kMagic.size());
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (Index e : p.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (Index i = 0; i < p.tensor.numel(); ++i) put_u32(os, std::bit_cast<std::uint32_t>(p.tensor[i]));
  }
  if (!os) throw FormatError("failed writing checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, params);
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("checkpoint: bad magic");
  std::vector<NamedTensor> out;
  std::uint32_t name_len = 0;
  while (get_u32(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("checkpoint truncated in parameter name");
    const std::uint32_t rank = need_u32(is, "rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(need_u32(is, "extent"));
    Tensor::Vector values(numel(shape));
    for (Index i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(need_u32(is, "data"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (is.gcount() != 0) throw FormatError("checkpoint has trailing bytes");
  return out;
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_checkpoint(is);
}

void restore_parameters(const std::vector<NamedTensor>& params, const std::vector<NamedTensor>& loaded) {
  for (const auto& p : params) {
    const NamedTensor* match = nullptr;
    for (const auto& l : loaded) {
      if (l.name == p.name) {
        match = &l;
        break;
      }
    }
    if (match == nullptr) throw FormatError("checkpoint lacks parameter " + p.name);
    if (match->tensor.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " has shape " + to_string(match->tensor.shape()) +
                        ", expected " + to_string(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    target.mutable_values() = match->tensor.values();
  }
}

}  // namespace spikegate

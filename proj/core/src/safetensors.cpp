#include "eduqg/safetensors.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "eduqg/error.hpp"
#include "eduqg/io.hpp"

namespace eduqg {
namespace {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes a little-endian host");

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F64") return 8;
  if (dtype == "F32") return 4;
  if (dtype == "F16" || dtype == "BF16") return 2;
  throw SchemaError("unsupported safetensors dtype " + dtype);
}

double half_to_double(std::uint16_t h) {
  const std::uint32_t sign = (h >> 15) & 1U;
  const std::uint32_t exponent = (h >> 10) & 0x1FU;
  const std::uint32_t mantissa = h & 0x3FFU;
  double value = 0.0;
  if (exponent == 0) {
    value = std::ldexp(static_cast<double>(mantissa), -24);
  } else if (exponent == 31) {
    value = mantissa == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  } else {
    value = std::ldexp(static_cast<double>(mantissa | 0x400U), static_cast<int>(exponent) - 25);
  }
  return sign != 0 ? -value : value;
}

}  // namespace

SafeTensors SafeTensors::read(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  if (blob.size() < 8) {
    throw SchemaError(path.string() + ": truncated safetensors file");
  }
  std::uint64_t header_size = 0;
  std::memcpy(&header_size, blob.data(), 8);
  if (header_size > blob.size() - 8) {
    throw SchemaError(path.string() + ": header size exceeds file");
  }
  Json header;
  try {
    header = Json::parse(blob.substr(8, header_size));
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": bad safetensors header: " + e.what());
  }
  SafeTensors out;
  out.data_ = blob.substr(8 + header_size);
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [key, value] : entry.items()) {
        out.metadata_[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
      continue;
    }
    TensorRecord rec;
    try {
      rec.dtype = entry.at("dtype").get<std::string>();
      rec.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2) {
        throw SchemaError("data_offsets must have two entries");
      }
      rec.begin = offsets[0];
      rec.end = offsets[1];
    } catch (const Json::exception& e) {
      throw SchemaError(fmt::format("{}: tensor {}: {}", path.string(), name, e.what()));
    }
    std::size_t count = 1;
    for (const auto dim : rec.shape) {
      count *= static_cast<std::size_t>(dim);
    }
    if (rec.end < rec.begin || rec.end > out.data_.size() || rec.end - rec.begin != count * dtype_size(rec.dtype)) {
      throw SchemaError(fmt::format("{}: tensor {}: offsets inconsistent with shape", path.string(), name));
    }
    out.tensors_.emplace(name, std::move(rec));
  }
  return out;
}

std::vector<double> SafeTensors::values(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw SchemaError("missing tensor " + name);
  }
  const TensorRecord& rec = it->second;
  const char* src = data_.data() + rec.begin;
  const std::size_t width = dtype_size(rec.dtype);
  const std::size_t count = (rec.end - rec.begin) / width;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (rec.dtype == "F64") {
      std::memcpy(&out[i], src + i * 8, 8);
    } else if (rec.dtype == "F32") {
      float f = 0;
      std::memcpy(&f, src + i * 4, 4);
      out[i] = f;
    } else if (rec.dtype == "BF16") {
      std::uint16_t h = 0;
      std::memcpy(&h, src + i * 2, 2);
      const std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
      out[i] = std::bit_cast<float>(bits);
    } else {
      std::uint16_t h = 0;
      std::memcpy(&h, src + i * 2, 2);
      out[i] = half_to_double(h);
    }
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const std::vector<NamedMatrix>& tensors,
                       const std::map<std::string, std::string>& metadata) {
  Json header = Json::object();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    const auto bytes = static_cast<std::size_t>(t.value->size()) * sizeof(double);
    Json shape = t.as_vector ? Json::array({t.value->size()}) : Json::array({t.value->rows(), t.value->cols()});
    header[t.name] = Json{{"dtype", "F64"}, {"shape", shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!metadata.empty()) {
    header["__metadata__"] = metadata;
  }
  std::string text = header.dump();
  while ((text.size() + 8) % 8 != 0) {
    text.push_back(' ');
  }
  std::string blob(8, '\0');
  const std::uint64_t size = text.size();
  std::memcpy(blob.data(), &size, 8);
  blob += text;
  blob.reserve(blob.size() + offset);
  for (const auto& t : tensors) {
    blob.append(reinterpret_cast<const char*>(t.value->data()), static_cast<std::size_t>(t.value->size()) * sizeof(double));
  }
  write_file_atomic(path, blob);
}

}  // namespace eduqg

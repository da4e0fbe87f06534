#include "wsol/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wsol/config.hpp"
#include "wsol/error.hpp"

namespace wsol {
namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

template <typename Named>
void append_directory(Json& dir, const Named& list, const char* group, std::size_t& offset) {
  for (const auto& t : list) {
    dir.push_back({{"name", t.name}, {"group", group}, {"shape", t.tensor->shape()}, {"offset", offset}});
    offset += static_cast<std::size_t>(t.tensor->size());
  }
}

}  // namespace

std::string encode_checkpoint(const Network& net, const Json& lineage) {
  const auto params = parameters(net);
  const auto bufs = buffers(net);
  Json header;
  header["model"] = to_json(net.config);
  header["init_seed"] = net.init_seed;
  header["lineage"] = lineage;
  Json dir = Json::array();
  std::size_t count = 0;
  append_directory(dir, params, "parameter", count);
  append_directory(dir, bufs, "buffer", count);
  header["tensors"] = std::move(dir);
  header["value_count"] = count;

  const std::string text = header.dump();
  std::string out(kCheckpointMagic, kMagicLen);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * count);
  auto write_values = [&out](const auto& list) {
    for (const auto& t : list) {
      for (double v : t.tensor->flat()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  };
  write_values(params);
  write_values(bufs);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    throw CodecError("checkpoint: missing WSOL-CKPT-v1 magic");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagicLen);
  const std::size_t body = kMagicLen + 8;
  if (header_len > bytes.size() - body) throw CodecError("checkpoint: truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(body, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CodecError(std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint ck;
  try {
    const ModelConfig cfg = model_config_from_json(header.at("model"));
    ck.net = build_network(cfg, header.at("init_seed").get<std::uint64_t>());
    ck.lineage = header.value("lineage", Json::object());
    const std::size_t count = header.at("value_count").get<std::size_t>();
    const std::size_t data = body + header_len;
    if (bytes.size() - data != 8 * count) throw CodecError("checkpoint: payload size does not match directory");

    auto params = parameters(ck.net);
    auto bufs = buffers(ck.net);
    const Json& dir = header.at("tensors");
    if (dir.size() != params.size() + bufs.size()) throw CodecError("checkpoint: tensor directory does not match model");
    for (std::size_t i = 0; i < dir.size(); ++i) {
      const Json& entry = dir[i];
      Tensord& t = *(i < params.size() ? params[i].tensor : bufs[i - params.size()].tensor);
      const std::string& name = i < params.size() ? params[i].name : bufs[i - params.size()].name;
      if (entry.at("name").get<std::string>() != name) {
        throw CodecError("checkpoint: expected tensor " + name + ", found " + entry.at("name").get<std::string>());
      }
      if (entry.at("shape").get<Shape>() != t.shape()) throw CodecError("checkpoint: shape mismatch for " + name);
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      if (offset + static_cast<std::size_t>(t.size()) > count) throw CodecError("checkpoint: offset out of range for " + name);
      for (Index k = 0; k < t.size(); ++k) {
        t[k] = std::bit_cast<double>(get_u64(bytes, data + 8 * (offset + static_cast<std::size_t>(k))));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CodecError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CodecError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Network& net, const Json& lineage, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(net, lineage);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace wsol

#include "polydiff/weights_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "polydiff/errors.hpp"

namespace polydiff {

static_assert(std::endian::native == std::endian::little);

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kMagic = {'D', 'P', 'C', 'W'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

void append_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void append_floats(std::string& out, const Eigen::Ref<const VecX<float>>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), sizeof(float) * v.size());
}

class BlobReader {
 public:
  BlobReader(const std::string& bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  VecX<float> floats(std::int64_t count) {
    need(sizeof(float) * static_cast<std::size_t>(count));
    VecX<float> v(count);
    std::memcpy(v.data(), bytes_.data() + pos_, sizeof(float) * static_cast<std::size_t>(count));
    pos_ += sizeof(float) * static_cast<std::size_t>(count);
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw StageError("weights file truncated");
  }
  const std::string& bytes_;
  std::size_t pos_;
};

json descriptor_for(CondUnet<float>& net, bool with_opt, std::int64_t opt_step) {
  json tensors = json::array();
  for (int i = 0; i < net.params().count(); ++i) {
    const auto& t = net.params().at(i);
    tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  json buffers = json::array();
  for (const auto& [name, vec] : net.buffers())
    buffers.push_back({{"name", name}, {"size", vec->size()}});
  json desc = {{"arch", "cond_unet"},
               {"base_width", net.config().base_width},
               {"in_channels", net.config().in_channels},
               {"context_dim", net.config().context_dim},
               {"side", net.config().side},
               {"tensors", tensors},
               {"buffers", buffers}};
  if (with_opt) desc["adam_step"] = opt_step;
  return desc;
}

struct ParsedFile {
  json desc;
  std::string bytes;
  std::size_t blob_offset = 0;
};

ParsedFile read_and_verify(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot open weights file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 16) throw StageError("weights file truncated");
  static const auto table = make_crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i + 4 < bytes.size(); ++i)
    crc = table[(crc ^ static_cast<unsigned char>(bytes[i])) & 0xFFu] ^ (crc >> 8);
  crc ^= 0xFFFFFFFFu;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc != stored) throw StageError("weights file checksum mismatch");

  BlobReader r(bytes, 0);
  if (r.raw(4) != std::string(kMagic.data(), 4)) throw StageError("not a weights file");
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion)
    throw StageError("unsupported weights version " + std::to_string(version));
  const std::uint32_t json_len = r.u32();
  json desc;
  try {
    desc = json::parse(r.raw(json_len));
  } catch (const json::exception& e) {
    throw StageError(std::string("bad weights descriptor: ") + e.what());
  }
  if (desc.value("arch", "") != "cond_unet") throw StageError("unknown architecture in weights");
  return {std::move(desc), std::move(bytes), r.pos()};
}

NetConfig config_from(const json& desc) {
  NetConfig cfg;
  cfg.base_width = desc.at("base_width").get<int>();
  cfg.in_channels = desc.at("in_channels").get<int>();
  cfg.context_dim = desc.at("context_dim").get<int>();
  cfg.side = desc.at("side").get<int>();
  return cfg;
}

}  // namespace

std::uint32_t crc32_bytes(const unsigned char* data, std::size_t n) {
  static const auto table = make_crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void save_weights(const std::filesystem::path& path, CondUnet<float>& net,
                  const Adam<float>* opt) {
  const bool with_opt = opt != nullptr && opt->step_count() > 0;
  const std::string desc =
      descriptor_for(net, with_opt, with_opt ? opt->step_count() : 0).dump();

  std::string out;
  out.append(kMagic.data(), 4);
  append_u32(out, kWeightsVersion);
  append_u32(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;
  for (int i = 0; i < net.params().count(); ++i) append_floats(out, net.params().at(i).value);
  for (const auto& [name, vec] : net.buffers()) append_floats(out, *vec);
  if (with_opt) {
    for (const VecX<float>& m : opt->first_moments()) append_floats(out, m);
    for (const VecX<float>& v : opt->second_moments()) append_floats(out, v);
  }
  append_u32(out, crc32_bytes(reinterpret_cast<const unsigned char*>(out.data()), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw StageError("cannot write weights file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw StageError("short write to weights file: " + path.string());
}

NetConfig peek_weights_config(const std::filesystem::path& path) {
  return config_from(read_and_verify(path).desc);
}

void load_weights(const std::filesystem::path& path, CondUnet<float>& net, Adam<float>* opt) {
  ParsedFile file = read_and_verify(path);
  if (config_from(file.desc) != net.config())
    throw StageError("weights architecture does not match the network");

  const json& tensors = file.desc.at("tensors");
  if (static_cast<int>(tensors.size()) != net.params().count())
    throw StageError("weights tensor count mismatch");

  BlobReader r(file.bytes, file.blob_offset);
  for (int i = 0; i < net.params().count(); ++i) {
    auto& t = net.params().at(i);
    const json& entry = tensors.at(static_cast<std::size_t>(i));
    if (entry.at("name").get<std::string>() != t.name ||
        entry.at("shape").get<std::vector<int>>() != t.shape)
      throw StageError("weights tensor mismatch at " + t.name);
    t.value = r.floats(t.value.size());
  }
  const json& buffers = file.desc.at("buffers");
  auto net_buffers = net.buffers();
  if (buffers.size() != net_buffers.size()) throw StageError("weights buffer count mismatch");
  for (std::size_t i = 0; i < net_buffers.size(); ++i) {
    const json& entry = buffers.at(i);
    if (entry.at("name").get<std::string>() != net_buffers[i].first ||
        entry.at("size").get<std::int64_t>() != net_buffers[i].second->size())
      throw StageError("weights buffer mismatch at " + net_buffers[i].first);
    *net_buffers[i].second = r.floats(net_buffers[i].second->size());
  }
  if (file.desc.contains("adam_step")) {
    if (opt != nullptr) {
      opt->first_moments().resize(static_cast<std::size_t>(net.params().count()));
      opt->second_moments().resize(static_cast<std::size_t>(net.params().count()));
      for (int i = 0; i < net.params().count(); ++i)
        opt->first_moments()[static_cast<std::size_t>(i)] =
            r.floats(net.params().at(i).value.size());
      for (int i = 0; i < net.params().count(); ++i)
        opt->second_moments()[static_cast<std::size_t>(i)] =
            r.floats(net.params().at(i).value.size());
      opt->set_step_count(file.desc.at("adam_step").get<std::int64_t>());
    } else {
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i < net.params().count(); ++i) r.floats(net.params().at(i).value.size());
    }
  }
  // Everything before the checksum must be consumed exactly.
  if (r.pos() != file.bytes.size() - 4) throw StageError("weights file has trailing bytes");
}

}  // namespace polydiff

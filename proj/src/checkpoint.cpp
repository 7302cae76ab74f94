#include "streampoint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian and this code writes raw memory");

namespace streampoint::net {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'S', '3', 'R', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}
}  // namespace

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
    std::vector<ArchiveEntry> sorted = archive.entries;
    std::sort(sorted.begin(), sorted.end(),
              [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].name == sorted[i - 1].name)
            throw ContractError("write_archive: duplicate entry " + sorted[i].name);

    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& e : sorted) {
        std::uint64_t expect = 1;
        for (int d : e.shape) expect *= static_cast<std::uint64_t>(d);
        if (expect != e.data.size())
            throw ShapeError("write_archive: shape/data mismatch for " + e.name);
        std::uint64_t nbytes = e.data.size() * 4;
        manifest.push_back(
            {{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    json header{{"meta", archive.meta}, {"params", manifest}};
    std::string htext = header.dump();

    std::vector<std::uint8_t> bytes;
    bytes.reserve(12 + htext.size() + offset);
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    put_u32(bytes, kVersion);
    put_u32(bytes, static_cast<std::uint32_t>(htext.size()));
    bytes.insert(bytes.end(), htext.begin(), htext.end());
    for (const auto& e : sorted) {
        std::size_t at = bytes.size();
        bytes.resize(at + e.data.size() * 4);
        std::memcpy(bytes.data() + at, e.data.data(), e.data.size() * 4);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw IoError("write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    auto len = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<std::uint8_t> bytes(len);
    if (len) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
    if (!f) throw IoError("read failed: " + path.string());

    if (len < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("archive: bad magic");
    if (get_u32(bytes.data() + 4) != kVersion) throw FormatError("archive: unsupported version");
    std::uint32_t hlen = get_u32(bytes.data() + 8);
    if (12 + static_cast<std::size_t>(hlen) > len) throw FormatError("archive: truncated header");

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    } catch (const json::exception& e) {
        throw FormatError("archive: bad header json: " + std::string(e.what()));
    }

    TensorArchive out;
    out.meta = header.value("meta", json::object());
    const std::size_t payload_start = 12 + hlen;
    const std::size_t payload_len = len - payload_start;
    std::uint64_t expected_total = 0;
    json manifest;
    try {
        manifest = header.at("params");
    } catch (const json::exception&) {
        throw FormatError("archive: header has no params manifest");
    }
    for (const auto& m : manifest) {
        ArchiveEntry e;
        std::uint64_t offset = 0, nbytes = 0;
        try {
            e.name = m.at("name").get<std::string>();
            e.shape = m.at("shape").get<std::vector<int>>();
            offset = m.at("offset").get<std::uint64_t>();
            nbytes = m.at("nbytes").get<std::uint64_t>();
        } catch (const json::exception& ex) {
            throw FormatError("archive: bad manifest entry: " + std::string(ex.what()));
        }
        if (offset != expected_total)
            throw FormatError("archive: non-contiguous payload for " + e.name);
        std::uint64_t expect = 1;
        for (int d : e.shape) {
            if (d < 0) throw FormatError("archive: negative dimension for " + e.name);
            expect *= static_cast<std::uint64_t>(d);
        }
        if (nbytes != expect * 4 || nbytes % 4)
            throw FormatError("archive: manifest size mismatch for " + e.name);
        expected_total += nbytes;
        if (expected_total > payload_len) throw FormatError("archive: truncated payload");
        e.data.resize(nbytes / 4);
        std::memcpy(e.data.data(), bytes.data() + payload_start + offset, nbytes);
        out.entries.push_back(std::move(e));
    }
    if (expected_total != payload_len)
        throw FormatError("archive: payload length mismatch (manifest says " +
                          std::to_string(expected_total) + ", file has " +
                          std::to_string(payload_len) + ")");
    return out;
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"patch", cfg.patch},
                {"width", cfg.width},
                {"enc_depth", cfg.enc_depth},
                {"dec_depth", cfg.dec_depth},
                {"n_heads", cfg.n_heads},
                {"mlp_ratio", cfg.mlp_ratio},
                {"head_conv_hidden", cfg.head_conv_hidden},
                {"pose_hidden", cfg.pose_hidden},
                {"alpha", cfg.alpha},
                {"mutual_first_two", cfg.mutual_first_two},
                {"default_policy", cfg.default_policy}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    try {
        cfg.patch = j.at("patch").get<int>();
        cfg.width = j.at("width").get<int>();
        cfg.enc_depth = j.at("enc_depth").get<int>();
        cfg.dec_depth = j.at("dec_depth").get<int>();
        cfg.n_heads = j.at("n_heads").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError("model config: " + std::string(e.what()));
    }
    cfg.mlp_ratio = j.value("mlp_ratio", 4);
    cfg.head_conv_hidden = j.value("head_conv_hidden", 32);
    cfg.pose_hidden = j.value("pose_hidden", 64);
    cfg.alpha = j.value("alpha", 0.2);
    cfg.mutual_first_two = j.value("mutual_first_two", false);
    cfg.default_policy = j.value("default_policy", std::string("causal"));
    cfg.validate();
    return cfg;
}

}  // namespace streampoint::net
